#include "lingrad/linrange.hpp"

#include "lingrad/errors.hpp"

#include <cmath>
#include <string>

namespace lingrad {

NonlinearMeasurement nonlinear_measurement(const StateTrajectory& traj_old,
                                           const StateTrajectory& traj_new,
                                           const TangentSolution& tan) {
  if (traj_old.size() != traj_new.size() || tan.vpsi.size() != traj_old.size())
    throw ConfigError("nonlinear measurement: trajectories and tangent differ in depth");
  if (traj_old.block_outputs != traj_new.block_outputs)
    throw ConfigError("nonlinear measurement: trajectories come from different topologies");
  NonlinearMeasurement m;
  double sum = 0.0;
  for (std::size_t i : traj_old.block_outputs) {
    if (traj_old[i].size() != traj_new[i].size() || tan.vpsi[i].size() != traj_old[i].size())
      throw ConfigError("nonlinear measurement: width mismatch at state " + std::to_string(i));
    const double denom = tan.vpsi[i].norm();
    if (!(denom >= kTangentNormFloor)) {
      m.skipped_layers.push_back(i);
      continue;
    }
    const double r = (traj_new[i] - traj_old[i] - tan.vpsi[i]).norm() / denom;
    m.layers.push_back(i);
    m.per_layer.push_back(r);
    sum += r;
  }
  if (m.layers.empty())
    throw DegenerateDirection("nonlinear measurement: tangent is zero on every layer");
  m.epsilon = sum / static_cast<double>(m.layers.size());
  return m;
}

TangentSolution compute_tangent(const Network& net, const StateTrajectory& traj,
                                const PerturbationDirection& dir, double psi,
                                const TangentOptions& opts) {
  if (opts.mode == TangentMode::Exact) return tangent_exact(net, traj, dir, psi);
  return tangent_fd(net, traj, dir, psi, opts.delta);
}

NonlinearMeasurement measure_for_update(const Network& net, const Vector& x,
                                        const PerturbationDirection& dir, double psi,
                                        const TangentOptions& opts) {
  if (!(psi > 0.0)) throw ConfigError("measure_for_update: psi must be positive");
  if (dir.is_zero()) throw DegenerateDirection("measure_for_update: direction is zero");
  const auto traj_old = forward(net, x);
  const auto tan = compute_tangent(net, traj_old, dir, psi, opts);
  const auto traj_new = forward(perturbed(net, dir, psi), x);
  return nonlinear_measurement(traj_old, traj_new, tan);
}

double linear_range_stepsize(double psi, double epsilon, double epsilon_star) {
  if (!(psi > 0.0) || !(epsilon_star > 0.0) || !(epsilon >= 0.0))
    throw ConfigError("linear_range_stepsize: need psi > 0, eps >= 0, eps* > 0");
  if (epsilon == 0.0)
    throw MeasureTooSmall("nonlinear measurement is zero at psi = " + std::to_string(psi));
  return psi * epsilon_star / epsilon;
}

RangeEstimate estimate_linear_range(const std::function<double(double psi)>& measure,
                                    double psi, double epsilon_star) {
  RangeEstimate est;
  for (int attempt = 0; attempt <= kMaxEscalations; ++attempt) {
    const double eps = measure(psi);
    try {
      est.psi_star = linear_range_stepsize(psi, eps, epsilon_star);
      est.psi_measured = psi;
      est.epsilon = eps;
      est.retries = attempt;
      return est;
    } catch (const MeasureTooSmall&) {
      psi *= kEscalationFactor;
    }
  }
  throw EscalationExhausted("nonlinear measurement stayed zero after " +
                            std::to_string(kMaxEscalations) + " stepsize escalations");
}

}  // namespace lingrad
