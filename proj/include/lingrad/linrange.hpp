#pragma once

#include "lingrad/direction.hpp"
#include "lingrad/net.hpp"
#include "lingrad/tangent.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace lingrad {

struct NonlinearMeasurement {
  double epsilon = 0.0;
  std::vector<std::size_t> layers;     // state indices that entered the mean
  std::vector<double> per_layer;       // ||u_new - u_old - v psi|| / ||v psi|| for `layers`
  std::vector<std::size_t> skipped_layers;  // zero tangent norm
};

// Tangent norms below this are treated as zero and the layer is skipped.
inline constexpr double kTangentNormFloor = 1e-300;

// eps = mean over primary states i >= 1 of ||u_new,i - u_old,i - v_i psi|| / ||v_i psi||
// (l2 norms). For residual networks only block outputs are primary.
// Throws DegenerateDirection when every counted layer has a zero tangent.
NonlinearMeasurement nonlinear_measurement(const StateTrajectory& traj_old,
                                           const StateTrajectory& traj_new,
                                           const TangentSolution& tan);

enum class TangentMode { Exact, FiniteDifference };

struct TangentOptions {
  TangentMode mode = TangentMode::Exact;
  double delta = 1e-6;  // finite-difference step
};

TangentSolution compute_tangent(const Network& net, const StateTrajectory& traj,
                                const PerturbationDirection& dir, double psi,
                                const TangentOptions& opts);

// Forward at s, tangent, forward at s + dir * psi, then the measurement.
// Does not modify `net`.
NonlinearMeasurement measure_for_update(const Network& net, const Vector& x,
                                        const PerturbationDirection& dir, double psi,
                                        const TangentOptions& opts = {});

// psi* = psi * eps_star / eps. Throws MeasureTooSmall when eps == 0.
double linear_range_stepsize(double psi, double epsilon, double epsilon_star);

struct RangeEstimate {
  double psi_star = 0.0;
  double psi_measured = 0.0;  // stepsize at which the accepted measurement ran
  double epsilon = 0.0;
  int retries = 0;
};

inline constexpr int kMaxEscalations = 5;
inline constexpr double kEscalationFactor = 10.0;

// Measures at psi; while the measurement is exactly zero retries at 10x the
// stepsize, up to kMaxEscalations times, then throws EscalationExhausted.
RangeEstimate estimate_linear_range(const std::function<double(double psi)>& measure,
                                    double psi, double epsilon_star);

}  // namespace lingrad
