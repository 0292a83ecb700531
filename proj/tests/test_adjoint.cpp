#include "lingrad/adjoint.hpp"
#include "lingrad/errors.hpp"
#include "lingrad/tangent.hpp"
#include "lingrad/verify.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace lingrad;

namespace {

struct Instance {
  Network net;
  Vector x;
  Vector y;
  StateTrajectory traj;
  ObjectiveGradients grads;
};

Instance make_instance(std::uint64_t seed, std::vector<std::size_t> widths) {
  Rng rng(seed);
  Instance in;
  in.net = random_dense_network(widths, rng);
  in.x = oracle::normal_vector(rng, widths.front());
  in.y = oracle::uniform_vector(rng, widths.back());
  in.traj = forward(in.net, in.x);
  in.grads = objective_gradients(ObjectiveSpec::quadratic(in.y), in.net, in.traj);
  return in;
}

ObjectiveGradients zero_gradients(const StateTrajectory& traj) {
  ObjectiveGradients g;
  for (const auto& u : traj.states) g.dJ_du.push_back(Vector::Zero(u.size()));
  g.dJ_ds.resize(traj.size() - 1);
  return g;
}

// Quadratic pull of every state towards a random centre, plus weight decay on
// every layer so that J_s is nonzero.
ObjectiveSpec general_objective(const Network& net, Rng& rng) {
  std::vector<std::optional<ObjectiveTerm>> terms;
  for (std::size_t i = 0; i <= net.num_layers(); ++i) {
    const Vector centre = oracle::uniform_vector(rng, net.width(i));
    const double decay = 0.01 * (1.0 + rng.uniform());
    ObjectiveTerm t;
    t.value = [=](const Vector& u, const Layer* layer) {
      double v = 0.5 * (u - centre).squaredNorm();
      if (layer) {
        v += 0.5 * decay * (layer->params.W.squaredNorm() + layer->params.b.squaredNorm());
        for (const auto& s : layer->skips) v += 0.5 * decay * s.W.squaredNorm();
      }
      return v;
    };
    t.du = [=](const Vector& u, const Layer*) -> Vector { return u - centre; };
    t.ds = [=](const Vector&, const Layer& layer) {
      LayerDirection d{decay * layer.params.W, decay * layer.params.b, {}};
      for (const auto& s : layer.skips) d.skip_sigma.push_back(decay * s.W);
      return d;
    };
    terms.push_back(std::move(t));
  }
  return ObjectiveSpec::general(std::move(terms));
}

bool all_zero(const AdjointSolution& a) {
  for (const auto& v : a.av)
    if (!v.isZero(0.0)) return false;
  return true;
}

double relative(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

TEST_SUITE("adjoint") {

TEST_CASE("adjoint solution has a zero terminal condition") {
  const auto in = make_instance(1, {4, 6, 3});
  const auto adj = adjoint_solve(in.net, in.traj, in.grads);
  REQUIRE(adj.av.size() == in.net.num_layers() + 2);
  CHECK(adj.av.back().isZero(0.0));
  CHECK(adj.av[in.net.num_layers()] == in.grads.dJ_du.back());
}

TEST_CASE("zero sources give a zero adjoint") {
  const auto in = make_instance(2, {4, 6, 3});
  CHECK(all_zero(adjoint_solve(in.net, in.traj, zero_gradients(in.traj))));
  const auto at_target = objective_gradients(ObjectiveSpec::quadratic(in.traj.output()), in.net, in.traj);
  CHECK(all_zero(adjoint_solve(in.net, in.traj, at_target)));
  CHECK(all_zero(adjoint_duhamel(in.net, in.traj, zero_gradients(in.traj))));
}

TEST_CASE("adjoint at state 1 is the output gradient pulled back by the propagator") {
  const auto in = make_instance(3, {5, 7, 6, 4});
  const auto adj = adjoint_solve(in.net, in.traj, in.grads);
  const Matrix D = propagator(in.net, in.traj, 1, 3).D;
  const Vector expected = D.transpose() * in.grads.dJ_du[3];
  CHECK((adj.av[1] - expected).norm() <= 1e-12 * expected.norm());
}

TEST_CASE("adjoint sensitivity") {
  const auto in = make_instance(4, {5, 8, 6, 3});
  Rng rng(4);
  const auto adj = adjoint_solve(in.net, in.traj, in.grads);
  const auto dir = PerturbationDirection::random_like(in.net, rng);
  SUBCASE("zero direction") {
    CHECK(sensitivity_adjoint(adj, in.net, in.traj, in.grads, PerturbationDirection::zeros_like(in.net)) ==
          0.0);
  }
  SUBCASE("equals the tangent formula") {
    const double sa = sensitivity_adjoint(adj, in.net, in.traj, in.grads, dir);
    const double st = sensitivity_tangent(in.grads, tangent_exact(in.net, in.traj, dir, 1.0), dir);
    CHECK(std::abs(sa - st) <= 1e-10 * std::max(1.0, std::abs(st)));
  }
  SUBCASE("matches a central difference of the objective") {
    const double sa = sensitivity_adjoint(adj, in.net, in.traj, in.grads, dir);
    const double fd = oracle::directional_derivative(in.net, in.x, in.y, dir);
    CHECK(std::abs(sa - fd) <= 1e-6 * std::abs(fd));
  }
}

TEST_CASE("tangent and adjoint sensitivities agree for objectives on every state and parameter") {
  Rng rng(5);
  for (int n = 0; n < 30; ++n) {
    const Network net = random_test_network(rng, 2, 6, 3, 20);
    const auto traj = forward(net, oracle::normal_vector(rng, net.input_width()));
    const auto grads = objective_gradients(general_objective(net, rng), net, traj);
    const auto dir = PerturbationDirection::random_like(net, rng);
    const double st = sensitivity_tangent(grads, tangent_exact(net, traj, dir, 1.0), dir);
    const double sa = sensitivity_adjoint(adjoint_solve(net, traj, grads), net, traj, grads, dir);
    CHECK(std::abs(sa - st) <= 1e-10 * std::max(1.0, std::abs(st)));
  }
}

TEST_CASE("backprop gradient") {
  SUBCASE("zero at the target") {
    const auto in = make_instance(6, {4, 5, 3});
    const auto grads = objective_gradients(ObjectiveSpec::quadratic(in.traj.output()), in.net, in.traj);
    CHECK(gradient_backprop(adjoint_solve(in.net, in.traj, grads), in.net, in.traj).is_zero());
  }
  SUBCASE("scalar one-layer net") {
    Network net;
    net.add_dense(oracle::params({{0.8}}, {-0.3}));
    const double x = 1.7, y = 0.2;
    const auto traj = forward(net, Vector::Constant(1, x));
    const auto grads = objective_gradients(ObjectiveSpec::quadratic(Vector::Constant(1, y)), net, traj);
    const auto g = gradient_backprop(adjoint_solve(net, traj, grads), net, traj);
    const double u1 = oracle::sigmoid(0.8 * x - 0.3);
    const double slope = u1 * (1.0 - u1);
    CHECK(g.layers[0].Sigma(0, 0) == doctest::Approx((u1 - y) * slope * x).epsilon(1e-14));
    CHECK(g.layers[0].beta(0) == doctest::Approx((u1 - y) * slope).epsilon(1e-14));
  }
  SUBCASE("50 random entries match central differences") {
    const auto in = make_instance(7, {6, 9, 8, 5});
    Rng rng(7);
    const auto g = gradient_backprop(adjoint_solve(in.net, in.traj, in.grads), in.net, in.traj);
    const auto flat = g.flatten();
    for (int k = 0; k < 50; ++k) {
      const auto idx = static_cast<std::size_t>(rng.below(flat.size()));
      std::vector<double> unit(flat.size(), 0.0);
      unit[idx] = 1.0;
      auto e = PerturbationDirection::zeros_like(in.net);
      std::size_t off = 0;
      for (auto& l : e.layers) {
        for (Eigen::Index r = 0; r < l.Sigma.rows(); ++r)
          for (Eigen::Index c = 0; c < l.Sigma.cols(); ++c) l.Sigma(r, c) = unit[off++];
        for (auto& b : l.beta) b = unit[off++];
      }
      const double fd = oracle::directional_derivative(in.net, in.x, in.y, e);
      CHECK(relative(flat[idx], fd, 1e-6) <= 1e-6);
    }
  }
}

TEST_CASE("steepest direction") {
  const auto in = make_instance(8, {5, 7, 4});
  const auto adj = adjoint_solve(in.net, in.traj, in.grads);
  SUBCASE("zero adjoint gives a zero direction") {
    const auto zero = adjoint_solve(in.net, in.traj, zero_gradients(in.traj));
    CHECK(steepest_direction(zero, in.net, in.traj).is_zero());
  }
  SUBCASE("negated gradient") {
    const auto g = gradient_backprop(adj, in.net, in.traj).flatten();
    const auto d = steepest_direction(adj, in.net, in.traj).flatten();
    REQUIRE(g.size() == d.size());
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(d[k] == -g[k]);
  }
  SUBCASE("descends at the rate of the squared gradient norm") {
    Rng rng(8);
    for (int n = 0; n < 20; ++n) {
      const Network net = random_test_network(rng, 2, 5, 3, 15);
      const auto traj = forward(net, oracle::normal_vector(rng, net.input_width()));
      const auto grads = objective_gradients(
          ObjectiveSpec::quadratic(oracle::uniform_vector(rng, net.output_width())), net, traj);
      const auto a = adjoint_solve(net, traj, grads);
      const auto dir = steepest_direction(a, net, traj);
      const double s = sensitivity_adjoint(a, net, traj, grads, dir);
      CHECK(s < 0.0);
      CHECK(std::abs(s + dir.squared_norm()) <= 1e-10 * dir.squared_norm());
    }
  }
}

TEST_CASE("adjoint Duhamel form") {
  SUBCASE("only the last source gives av_I = J_uI") {
    const auto in = make_instance(9, {4, 5, 3});
    const auto duh = adjoint_duhamel(in.net, in.traj, in.grads);
    CHECK(duh.av[2] == in.grads.dJ_du[2]);
  }
  SUBCASE("matches the recursion on a 5-layer net with sources everywhere") {
    Rng rng(10);
    const std::vector<std::size_t> widths{6, 8, 7, 9, 5, 4};
    const Network net = random_dense_network(widths, rng);
    const auto traj = forward(net, oracle::normal_vector(rng, 6));
    const auto grads = objective_gradients(general_objective(net, rng), net, traj);
    const auto rec = adjoint_solve(net, traj, grads);
    const auto duh = adjoint_duhamel(net, traj, grads);
    for (std::size_t l = 0; l <= net.num_layers(); ++l)
      CHECK((duh.av[l] - rec.av[l]).norm() <= 1e-12 * rec.av[l].norm());
  }
}

TEST_CASE("reverse-assembled propagator equals the forward one") {
  Rng rng(11);
  for (int n = 0; n < 10; ++n) {
    const Network net = random_test_network(rng, 2, 5, 2, 12);
    const auto traj = forward(net, oracle::normal_vector(rng, net.input_width()));
    for (std::size_t l = 0; l <= net.num_layers(); ++l)
      for (std::size_t i = l; i <= net.num_layers(); ++i) {
        const Matrix fwd = propagator(net, traj, l, i).D;
        const Matrix rev = adjoint_propagator(net, traj, i, l);
        REQUIRE(fwd.rows() == rev.rows());
        REQUIRE(fwd.cols() == rev.cols());
        CHECK((fwd - rev).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, fwd.cwiseAbs().maxCoeff()));
      }
  }
}

TEST_CASE("residual adjoint agrees with the residual tangent") {
  Rng rng(12);
  for (int n = 0; n < 5; ++n) {
    const Network net = toy_residual_network(rng);
    const auto traj = forward(net, oracle::normal_vector(rng, net.input_width()));
    const auto grads = objective_gradients(general_objective(net, rng), net, traj);
    const auto dir = PerturbationDirection::random_like(net, rng);
    const double st = sensitivity_tangent(grads, tangent_exact(net, traj, dir, 1.0), dir);
    const double sa = sensitivity_adjoint(adjoint_solve(net, traj, grads), net, traj, grads, dir);
    CHECK(std::abs(sa - st) <= 1e-10 * std::max(1.0, std::abs(st)));
  }
}

}  // TEST_SUITE
