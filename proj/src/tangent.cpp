#include "lingrad/tangent.hpp"

#include "lingrad/errors.hpp"

#include <string>

namespace lingrad {

namespace {

void check_trajectory(const Network& net, const StateTrajectory& traj) {
  if (traj.size() != net.num_layers() + 1)
    throw ConfigError("trajectory has " + std::to_string(traj.size()) + " states, network needs " +
                      std::to_string(net.num_layers() + 1));
}

}  // namespace

Vector TangentSolution::v(std::size_t i) const {
  if (psi == 0.0) throw ConfigError("tangent solution with psi = 0 cannot be rescaled");
  return vpsi.at(i) / psi;
}

TangentSolution tangent_exact(const Network& net, const StateTrajectory& traj,
                              const PerturbationDirection& dir, double psi) {
  check_trajectory(net, traj);
  check_shape(net, dir);
  TangentSolution tan;
  tan.psi = psi;
  tan.vpsi.reserve(traj.size());
  tan.vpsi.push_back(Vector::Zero(traj[0].size()));
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto jac = layer_jacobian(net, traj, i);
    const Layer& l = net.layer(i);
    const auto& d = dir.layers[i];
    // Lambda (W v psi + sum_k S_k v_k psi + (Sigma u + sum_k Sigma_k u_k + beta) psi)
    Vector s = l.params.W * tan.vpsi[i] + psi * (d.Sigma * traj[i] + d.beta);
    for (std::size_t k = 0; k < l.skips.size(); ++k) {
      const auto from = l.skips[k].from;
      s.noalias() += l.skips[k].W * tan.vpsi[from];
      s.noalias() += psi * (d.skip_sigma[k] * traj[from]);
    }
    tan.vpsi.push_back(jac.lambda().cwiseProduct(s));
  }
  return tan;
}

TangentSolution tangent_fd(const Network& net, const StateTrajectory& traj_old,
                           const PerturbationDirection& dir, double psi, double delta) {
  if (!(delta > 0.0)) throw ConfigError("finite-difference delta must be positive");
  check_trajectory(net, traj_old);
  const auto traj_new = forward(perturbed(net, dir, delta), traj_old[0]);
  TangentSolution tan;
  tan.psi = psi;
  tan.vpsi.reserve(traj_old.size());
  const double scale = psi / delta;
  tan.vpsi.push_back(Vector::Zero(traj_old[0].size()));
  for (std::size_t i = 1; i < traj_old.size(); ++i)
    tan.vpsi.push_back((traj_new[i] - traj_old[i]) * scale);
  return tan;
}

std::vector<Vector> homogeneous_tangent(const Network& net, const StateTrajectory& traj,
                                        std::size_t l, const Vector& w) {
  check_trajectory(net, traj);
  if (l > net.num_layers()) throw ConfigError("homogeneous tangent: start index out of range");
  if (w.size() != traj[l].size()) throw ConfigError("homogeneous tangent: wrong initial length");
  std::vector<Vector> out(traj.size());
  out[l] = w;
  for (std::size_t i = l; i < net.num_layers(); ++i) {
    const auto jac = layer_jacobian(net, traj, i);
    Vector next = jac.state_action(out[i]);
    const Layer& layer = net.layer(i);
    for (std::size_t k = 0; k < layer.skips.size(); ++k) {
      const auto from = layer.skips[k].from;
      if (from >= l) next.noalias() += jac.skip_action(k, out[from]);
    }
    out[i + 1] = std::move(next);
  }
  return out;
}

Propagator propagator(const Network& net, const StateTrajectory& traj, std::size_t l,
                      std::size_t i) {
  check_trajectory(net, traj);
  if (l > i) throw ConfigError("propagator: need l <= i");
  if (i > net.num_layers()) throw ConfigError("propagator: index out of range");
  const auto m_l = traj[l].size();
  Propagator p{Matrix(traj[i].size(), m_l), l, i};
  for (Eigen::Index k = 0; k < m_l; ++k) {
    const auto w = homogeneous_tangent(net, traj, l, Vector::Unit(m_l, k));
    p.D.col(k) = w[i];
  }
  return p;
}

TangentSolution tangent_duhamel(const Network& net, const StateTrajectory& traj,
                                const PerturbationDirection& dir) {
  check_trajectory(net, traj);
  check_shape(net, dir);
  const std::size_t depth = net.num_layers();
  // Inhomogeneous terms f_{s,l} sigma_l, entering state l+1.
  std::vector<Vector> sources;
  sources.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l)
    sources.push_back(layer_jacobian(net, traj, l).param_action(dir.layers[l]));

  TangentSolution tan;
  tan.psi = 1.0;
  tan.vpsi.push_back(Vector::Zero(traj[0].size()));
  for (std::size_t i = 1; i <= depth; ++i) {
    Vector v = Vector::Zero(traj[i].size());
    for (std::size_t l = 0; l < i; ++l) v.noalias() += propagator(net, traj, l + 1, i).D * sources[l];
    tan.vpsi.push_back(std::move(v));
  }
  return tan;
}

double sensitivity_tangent(const ObjectiveGradients& grads, const TangentSolution& tan,
                           const PerturbationDirection& dir) {
  if (grads.dJ_du.size() != tan.vpsi.size())
    throw ConfigError("sensitivity_tangent: gradients and tangent have different depths");
  double total = 0.0;
  bool any_state_term = false;
  for (std::size_t i = 0; i < tan.vpsi.size(); ++i) {
    if (grads.dJ_du[i].size() != tan.vpsi[i].size())
      throw ConfigError("sensitivity_tangent: length mismatch at state " + std::to_string(i));
    if (grads.dJ_du[i].isZero(0.0)) continue;
    any_state_term = true;
    total += grads.dJ_du[i].dot(tan.vpsi[i]);
  }
  if (any_state_term) {
    if (tan.psi == 0.0) throw ConfigError("sensitivity_tangent: psi = 0, cannot recover v");
    total /= tan.psi;
  }
  for (std::size_t i = 0; i < grads.dJ_ds.size() && i < dir.layers.size(); ++i) {
    if (!grads.dJ_ds[i]) continue;
    PerturbationDirection a, b;
    a.layers.push_back(*grads.dJ_ds[i]);
    b.layers.push_back(dir.layers[i]);
    total += a.dot(b);
  }
  return total;
}

}  // namespace lingrad
