#include "lingrad/verify.hpp"

#include "lingrad/adjoint.hpp"
#include "lingrad/errors.hpp"
#include "lingrad/linrange.hpp"
#include "lingrad/tangent.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace lingrad {

namespace {

enum Stream : std::uint64_t {
  kEquivalence = 100,
  kTangentDuhamel,
  kAdjointDuhamel,
  kTranspose,
  kFdConvergence,
  kBackprop,
  kSensitivityFd,
  kSteepest,
  kEpsLinearity,
  kResidualConsistency,
  kResidualTangent,
  kResidualEps,
};

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Vector normal_vector(Rng& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& e : v) e = rng.normal();
  return v;
}

Vector uniform_vector(Rng& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& e : v) e = rng.uniform();
  return v;
}

// Quadratic pull of every state towards a random centre, plus a small
// weight-decay term on each layer's parameters so J_s is exercised too.
ObjectiveSpec random_general_objective(const Network& net, Rng& rng) {
  std::vector<std::optional<ObjectiveTerm>> terms;
  for (std::size_t i = 0; i <= net.num_layers(); ++i) {
    const Vector centre = uniform_vector(rng, net.width(i));
    const double weight = 0.5 + rng.uniform();
    const double decay = 0.01 * rng.uniform();
    ObjectiveTerm t;
    t.value = [=](const Vector& u, const Layer* layer) {
      double v = 0.5 * weight * (u - centre).squaredNorm();
      if (layer) v += 0.5 * decay * (layer->params.W.squaredNorm() + layer->params.b.squaredNorm());
      return v;
    };
    t.du = [=](const Vector& u, const Layer*) -> Vector { return weight * (u - centre); };
    t.ds = [=](const Vector&, const Layer& layer) {
      LayerDirection d{decay * layer.params.W, decay * layer.params.b, {}};
      for (const auto& s : layer.skips) d.skip_sigma.push_back(Matrix::Zero(s.W.rows(), s.W.cols()));
      return d;
    };
    terms.push_back(std::move(t));
  }
  return ObjectiveSpec::general(std::move(terms));
}

double relative(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

static_assert(std::numeric_limits<long double>::digits > std::numeric_limits<double>::digits,
              "the finite-difference oracle needs an extended long double");

// Quadratic objective 0.5 ||u_I - y||^2 of a dense net with parameters moved by
// psi * dir, evaluated in long double with its own forward pass. Central
// differences at delta = 1e-6 then carry ~1e-13 roundoff instead of ~1e-10.
long double objective_along(const Network& net, const Vector& x, const Vector& y,
                            const PerturbationDirection& dir, long double psi) {
  using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  LVector u = x.cast<long double>();
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto& layer = net.layer(i);
    if (!layer.skips.empty()) throw ConfigError("extended-precision oracle handles dense nets only");
    const auto& d = dir.layers[i];
    const auto W = (layer.params.W.cast<long double>() + psi * d.Sigma.cast<long double>()).eval();
    const auto b = (layer.params.b.cast<long double>() + psi * d.beta.cast<long double>()).eval();
    LVector z = W * u + b;
    if (layer.activation == Activation::Logistic)
      for (auto& e : z) e = 1.0L / (1.0L + std::exp(-e));
    u = std::move(z);
  }
  return 0.5L * (u - y.cast<long double>()).squaredNorm();
}

double central_difference(const Network& net, const Vector& x, const Vector& y,
                          const PerturbationDirection& dir, double delta) {
  const long double d = delta;
  return static_cast<double>((objective_along(net, x, y, dir, d) -
                              objective_along(net, x, y, dir, -d)) / (2.0L * d));
}

CheckResult finish(std::string name, double residual, double tol, std::size_t n) {
  return CheckResult{std::move(name), residual, tol, residual <= tol, n};
}

PerturbationDirection unit_direction(const Network& net, std::size_t flat_index) {
  auto d = PerturbationDirection::zeros_like(net);
  std::size_t k = flat_index;
  for (auto& l : d.layers) {
    if (k < static_cast<std::size_t>(l.Sigma.size())) {
      const auto cols = static_cast<std::size_t>(l.Sigma.cols());
      l.Sigma(static_cast<Eigen::Index>(k / cols), static_cast<Eigen::Index>(k % cols)) = 1.0;
      return d;
    }
    k -= static_cast<std::size_t>(l.Sigma.size());
    if (k < static_cast<std::size_t>(l.beta.size())) {
      l.beta(static_cast<Eigen::Index>(k)) = 1.0;
      return d;
    }
    k -= static_cast<std::size_t>(l.beta.size());
    for (auto& s : l.skip_sigma) {
      if (k < static_cast<std::size_t>(s.size())) {
        const auto cols = static_cast<std::size_t>(s.cols());
        s(static_cast<Eigen::Index>(k / cols), static_cast<Eigen::Index>(k % cols)) = 1.0;
        return d;
      }
      k -= static_cast<std::size_t>(s.size());
    }
  }
  throw ConfigError("parameter index out of range");
}

double tangent_error(const TangentSolution& a, const TangentSolution& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.vpsi.size(); ++i) sq += (a.vpsi[i] - b.vpsi[i]).squaredNorm();
  return std::sqrt(sq);
}

// Narrow nets with standard-normal weights saturate and leave eps visibly
// curved a decade below its 0.3 level; width 50 keeps it linear there.
constexpr std::array<std::size_t, 4> kLinearityWidths{50, 50, 50, 50};

// Largest per-state relative difference ||a_i - b_i|| / ||b_i||, skipping zero states.
double layerwise_relative(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double nb = b[i].norm();
    if (nb == 0.0) {
      worst = std::max(worst, a[i].norm() == 0.0 ? 0.0 : INFINITY);
      continue;
    }
    worst = std::max(worst, (a[i] - b[i]).norm() / nb);
  }
  return worst;
}

PerturbationDirection steepest_for(const Network& net, const Vector& x, const Vector& y) {
  const auto traj = forward(net, x);
  const auto grads = objective_gradients(ObjectiveSpec::quadratic(y), net, traj);
  return steepest_direction(adjoint_solve(net, traj, grads), net, traj);
}

double epsilon_ratio(const Network& net, const Vector& x, const PerturbationDirection& dir,
                     const TangentOptions& opts) {
  const double psi = linear_range_of(net, x, dir, 0.3, opts) / 10.0;
  const double e1 = measure_for_update(net, x, dir, psi, opts).epsilon;
  const double e2 = measure_for_update(net, x, dir, psi / 2.0, opts).epsilon;
  return e1 / e2;
}

}  // namespace

Network random_test_network(Rng& rng, std::size_t min_layers, std::size_t max_layers,
                            std::size_t min_width, std::size_t max_width) {
  const std::size_t depth = uniform_size(rng, min_layers, max_layers);
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i <= depth; ++i) widths.push_back(uniform_size(rng, min_width, max_width));
  return random_dense_network(widths, rng);
}

Network toy_residual_network(Rng& rng, std::size_t blocks, std::size_t width) {
  Network net;
  const auto w = static_cast<Eigen::Index>(width);
  auto params = [&] {
    LayerParams p{Matrix(w, w), Vector(w)};
    for (Eigen::Index r = 0; r < w; ++r)
      for (Eigen::Index c = 0; c < w; ++c) p.W(r, c) = rng.normal();
    for (auto& e : p.b) e = rng.normal();
    return p;
  };
  for (std::size_t b = 0; b < blocks; ++b) {
    ResidualBlock block;
    block.layers = {params(), params()};
    Matrix skip(w, w);
    for (Eigen::Index r = 0; r < w; ++r)
      for (Eigen::Index c = 0; c < w; ++c) skip(r, c) = rng.normal();
    block.skips = {{}, {SkipWeight{0, skip}}};
    net.add_residual_block(block);
  }
  return net;
}

double linear_range_of(const Network& net, const Vector& x, const PerturbationDirection& dir,
                       double target, const TangentOptions& opts, int iterations) {
  double psi = 1.0 / std::sqrt(std::max(dir.squared_norm(), 1e-300));
  for (int k = 0; k < iterations; ++k) {
    const double eps = measure_for_update(net, x, dir, psi, opts).epsilon;
    if (eps == 0.0) {
      psi *= 10.0;
      continue;
    }
    // Damped so that strongly nonlinear regions do not overshoot.
    psi *= std::clamp(target / eps, 0.1, 10.0);
  }
  return psi;
}

CheckResult check_tangent_adjoint_equivalence(std::uint64_t seed, std::size_t count,
                                              bool flip_sign) {
  Rng rng = Rng::derive(seed, kEquivalence);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 6, 3, 20);
    const Vector x = normal_vector(rng, net.input_width());
    const auto spec = n % 2 == 0 ? ObjectiveSpec::quadratic(uniform_vector(rng, net.output_width()))
                                 : random_general_objective(net, rng);
    const auto dir = PerturbationDirection::random_like(net, rng);
    const double psi = 0.1 + rng.uniform();
    const auto traj = forward(net, x);
    const auto grads = objective_gradients(spec, net, traj);
    const double st = sensitivity_tangent(grads, tangent_exact(net, traj, dir, psi), dir);
    double sa = sensitivity_adjoint(adjoint_solve(net, traj, grads), net, traj, grads, dir);
    if (flip_sign) sa = -sa;
    worst = std::max(worst, std::abs(st - sa) / std::max(1.0, std::abs(st)));
  }
  return finish("tangent_adjoint_equivalence", worst, 1e-10, count);
}

CheckResult check_tangent_duhamel(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kTangentDuhamel);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 6, 3, 20);
    const auto traj = forward(net, normal_vector(rng, net.input_width()));
    const auto dir = PerturbationDirection::random_like(net, rng);
    worst = std::max(worst, layerwise_relative(tangent_duhamel(net, traj, dir).vpsi,
                                               tangent_exact(net, traj, dir, 1.0).vpsi));
  }
  return finish("tangent_duhamel_vs_recursion", worst, 1e-12, count);
}

CheckResult check_adjoint_duhamel(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kAdjointDuhamel);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 6, 3, 20);
    const auto traj = forward(net, normal_vector(rng, net.input_width()));
    const auto spec = random_general_objective(net, rng);
    const auto grads = objective_gradients(spec, net, traj);
    auto duh = adjoint_duhamel(net, traj, grads).av;
    auto rec = adjoint_solve(net, traj, grads).av;
    duh.pop_back();  // terminal zero
    rec.pop_back();
    worst = std::max(worst, layerwise_relative(duh, rec));
  }
  return finish("adjoint_duhamel_vs_recursion", worst, 1e-12, count);
}

CheckResult check_propagator_transpose(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kTranspose);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 6, 3, 20);
    const auto traj = forward(net, normal_vector(rng, net.input_width()));
    for (std::size_t i = 0; i <= net.num_layers(); ++i)
      for (std::size_t l = 0; l <= i; ++l) {
        const Matrix forward_d = propagator(net, traj, l, i).D;
        const Matrix reverse_d = adjoint_propagator(net, traj, i, l);
        const double scale = std::max(1.0, forward_d.cwiseAbs().maxCoeff());
        worst = std::max(worst, (forward_d - reverse_d).cwiseAbs().maxCoeff() / scale);
      }
  }
  return finish("propagator_transpose", worst, 1e-13, count);
}

CheckResult check_fd_convergence(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kFdConvergence);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 5, 3, 12);
    const auto traj = forward(net, normal_vector(rng, net.input_width()));
    const auto dir = PerturbationDirection::random_like(net, rng);
    const auto exact = tangent_exact(net, traj, dir, 1.0);
    for (double delta : {1e-3, 1e-4, 1e-5}) {
      const double e1 = tangent_error(tangent_fd(net, traj, dir, 1.0, delta), exact);
      const double e2 = tangent_error(tangent_fd(net, traj, dir, 1.0, delta / 2.0), exact);
      worst = std::max(worst, std::abs(e1 / e2 - 2.0));
    }
  }
  return finish("fd_tangent_first_order", worst, 0.3, count);
}

CheckResult check_backprop_vs_fd(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kBackprop);
  constexpr double kDelta = 1e-6;
  // Entries below this are compared absolutely, well above the oracle's roundoff.
  constexpr double kFloor = 1e-6;
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 4, 3, 10);
    const Vector x = normal_vector(rng, net.input_width());
    const Vector y = uniform_vector(rng, net.output_width());
    const auto traj = forward(net, x);
    const auto grads = objective_gradients(ObjectiveSpec::quadratic(y), net, traj);
    const auto g = gradient_backprop(adjoint_solve(net, traj, grads), net, traj).flatten();
    for (int k = 0; k < 50; ++k) {
      const auto idx = static_cast<std::size_t>(rng.below(g.size()));
      const double fd = central_difference(net, x, y, unit_direction(net, idx), kDelta);
      worst = std::max(worst, relative(g[idx], fd, kFloor));
    }
  }
  return finish("backprop_vs_fd", worst, 1e-6, count);
}

CheckResult check_sensitivity_vs_fd(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kSensitivityFd);
  constexpr double kDelta = 1e-6;
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 5, 3, 12);
    const Vector x = normal_vector(rng, net.input_width());
    const Vector y = uniform_vector(rng, net.output_width());
    auto dir = PerturbationDirection::random_like(net, rng);
    dir *= 1.0 / std::sqrt(dir.squared_norm());
    const auto traj = forward(net, x);
    const auto grads = objective_gradients(ObjectiveSpec::quadratic(y), net, traj);
    const double st = sensitivity_tangent(grads, tangent_exact(net, traj, dir, 1.0), dir);
    const double sa = sensitivity_adjoint(adjoint_solve(net, traj, grads), net, traj, grads, dir);
    const double fd = central_difference(net, x, y, dir, kDelta);
    worst = std::max({worst, relative(st, fd, 1e-6), relative(sa, fd, 1e-6)});
  }
  return finish("sensitivity_vs_fd", worst, 1e-6, count);
}

CheckResult check_steepest_sign(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kSteepest);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_test_network(rng, 2, 6, 3, 20);
    const auto traj = forward(net, normal_vector(rng, net.input_width()));
    const auto grads = objective_gradients(
        ObjectiveSpec::quadratic(uniform_vector(rng, net.output_width())), net, traj);
    const auto adj = adjoint_solve(net, traj, grads);
    const auto dir = steepest_direction(adj, net, traj);
    const double s = sensitivity_adjoint(adj, net, traj, grads, dir);
    const double expected = -dir.squared_norm();
    double r = relative(s, expected, 1e-300);
    if (s > 0.0 || (expected < 0.0 && s == 0.0)) r = INFINITY;
    worst = std::max(worst, r);
  }
  return finish("steepest_descent_sign", worst, 1e-10, count);
}

CheckResult check_epsilon_linearity(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kEpsLinearity);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = random_dense_network(kLinearityWidths, rng);
    const Vector x = normal_vector(rng, net.input_width());
    const auto dir = steepest_for(net, x, uniform_vector(rng, net.output_width()));
    worst = std::max(worst, std::abs(epsilon_ratio(net, x, dir, {}) - 2.0));
  }
  return finish("epsilon_linearity", worst, 0.2, count);
}

CheckResult check_residual_consistency(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kResidualConsistency);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network dense = random_test_network(rng, 2, 5, 3, 12);
    ResidualBlock block;
    for (std::size_t i = 0; i < dense.num_layers(); ++i) {
      block.layers.push_back(dense.layer(i).params);
      std::vector<SkipWeight> skips;
      for (std::size_t j = 0; j < i; ++j)
        skips.push_back(SkipWeight{j, Matrix::Zero(dense.width(i + 1), dense.width(j))});
      block.skips.push_back(std::move(skips));
    }
    Network res;
    res.add_residual_block(block);
    const Vector x = normal_vector(rng, dense.input_width());
    const auto a = forward(dense, x);
    const auto b = forward(res, x);
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, (a[i] - b[i]).cwiseAbs().maxCoeff());
  }
  return finish("residual_zero_skip_equals_dense", worst, 0.0, count);
}

CheckResult check_residual_tangent(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kResidualTangent);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = toy_residual_network(rng);
    const auto traj = forward(net, normal_vector(rng, net.input_width()));
    const auto dir = PerturbationDirection::random_like(net, rng);
    const auto exact = tangent_exact(net, traj, dir, 1.0);
    const auto fd = tangent_fd(net, traj, dir, 1.0, 1e-6);
    std::vector<Vector> a(exact.vpsi.begin() + 1, exact.vpsi.end());
    std::vector<Vector> b(fd.vpsi.begin() + 1, fd.vpsi.end());
    worst = std::max(worst, layerwise_relative(b, a));
  }
  return finish("residual_tangent_exact_vs_fd", worst, 1e-4, count);
}

CheckResult check_residual_epsilon_linearity(std::uint64_t seed, std::size_t count) {
  Rng rng = Rng::derive(seed, kResidualEps);
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Network net = toy_residual_network(rng, 3, kLinearityWidths.front());
    const Vector x = normal_vector(rng, net.input_width());
    const auto dir = steepest_for(net, x, uniform_vector(rng, net.output_width()));
    const TangentOptions fd{TangentMode::FiniteDifference, 1e-6};
    worst = std::max(worst, std::abs(epsilon_ratio(net, x, dir, fd) - 2.0));
  }
  return finish("residual_epsilon_linearity", worst, 0.2, count);
}

std::vector<CheckResult> run_verification(const VerifyOptions& opts) {
  const auto s = opts.seed;
  return {
      check_tangent_adjoint_equivalence(s, 100, opts.inject_sign_flip),
      check_tangent_duhamel(s, 100),
      check_adjoint_duhamel(s, 100),
      check_propagator_transpose(s, 20),
      check_fd_convergence(s, 20),
      check_backprop_vs_fd(s, 10),
      check_sensitivity_vs_fd(s, 20),
      check_steepest_sign(s, 20),
      check_epsilon_linearity(s, 20),
      check_residual_consistency(s, 10),
      check_residual_tangent(s, 10),
      check_residual_epsilon_linearity(s, 10),
  };
}

}  // namespace lingrad
