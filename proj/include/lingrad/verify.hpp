#pragma once

#include "lingrad/direction.hpp"
#include "lingrad/linrange.hpp"
#include "lingrad/net.hpp"
#include "lingrad/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lingrad {

// One row of the identity suite. `residual` is the worst value observed over
// all instances of the check; the check passes when residual <= tolerance.
struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::size_t instances = 0;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  // Test hook: flips the sign of the adjoint sensitivity so the equivalence
  // check must fail.
  bool inject_sign_flip = false;
};

// Random dense logistic network with depth in [min_layers, max_layers] and
// widths in [min_width, max_width], parameters standard normal.
Network random_test_network(Rng& rng, std::size_t min_layers, std::size_t max_layers,
                            std::size_t min_width, std::size_t max_width);

// Three residual blocks of two layers each, width 6, with skip weights from
// every earlier state of the block.
Network toy_residual_network(Rng& rng, std::size_t blocks = 3, std::size_t width = 6);

// Individual checks. `count` is the number of random instances.
CheckResult check_tangent_adjoint_equivalence(std::uint64_t seed, std::size_t count,
                                              bool flip_sign = false);
CheckResult check_tangent_duhamel(std::uint64_t seed, std::size_t count);
CheckResult check_adjoint_duhamel(std::uint64_t seed, std::size_t count);
CheckResult check_propagator_transpose(std::uint64_t seed, std::size_t count);
// Worst |err(delta)/err(delta/2) - 2| over delta in {1e-3, 1e-4, 1e-5}.
CheckResult check_fd_convergence(std::uint64_t seed, std::size_t count);
CheckResult check_backprop_vs_fd(std::uint64_t seed, std::size_t count);
CheckResult check_sensitivity_vs_fd(std::uint64_t seed, std::size_t count);
CheckResult check_steepest_sign(std::uint64_t seed, std::size_t count);
// Worst |eps(psi)/eps(psi/2) - 2| with psi one decade below the 0.3-linear
// range, on 50-50-50-50 dense nets.
CheckResult check_epsilon_linearity(std::uint64_t seed, std::size_t count);
CheckResult check_residual_consistency(std::uint64_t seed, std::size_t count);
// Worst relative difference between exact and fd(1e-6) tangents on residual nets.
CheckResult check_residual_tangent(std::uint64_t seed, std::size_t count);
// Same ratio on width-50 three-block residual nets with fd(1e-6) tangents.
CheckResult check_residual_epsilon_linearity(std::uint64_t seed, std::size_t count);

// Stepsize at which eps reaches `target` along the steepest direction for
// input x, found by fixed-point iteration psi <- psi * target / eps.
double linear_range_of(const Network& net, const Vector& x, const PerturbationDirection& dir,
                       double target, const TangentOptions& opts = {}, int iterations = 12);

std::vector<CheckResult> run_verification(const VerifyOptions& opts);

}  // namespace lingrad
