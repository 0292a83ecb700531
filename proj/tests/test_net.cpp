#include "lingrad/data.hpp"
#include "lingrad/errors.hpp"
#include "lingrad/net.hpp"
#include "lingrad/trainer.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace lingrad;

namespace {

Network single_layer(LayerParams p, Activation a = Activation::Logistic) {
  Network net;
  net.add_dense(std::move(p), a);
  return net;
}

// Identity layer whose output is exactly `out` regardless of input.
Network constant_output(std::initializer_list<double> out) {
  const auto m = static_cast<Eigen::Index>(out.size());
  LayerParams p{Matrix::Zero(m, 1), Vector(m)};
  Eigen::Index k = 0;
  for (double v : out) p.b(k++) = v;
  return single_layer(std::move(p), Activation::Identity);
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("forward of a zero layer is one half everywhere") {
  const Network net = single_layer(LayerParams{Matrix::Zero(4, 3), Vector::Zero(4)});
  const auto traj = forward(net, Vector::Constant(3, 7.5));
  REQUIRE(traj.size() == 2);
  for (double v : traj[1]) CHECK(v == 0.5);
}

TEST_CASE("forward of a scalar layer at ln 3") {
  const Network net = single_layer(oracle::params({{1.0}}, {std::log(3.0)}));
  const auto traj = forward(net, Vector::Zero(1));
  CHECK(traj[1](0) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("forward matches an independent loop implementation") {
  const std::vector<std::size_t> widths{4, 6, 3};
  const auto task = generate_teacher_dataset(widths, 1, 1, 17);
  const Network net = initial_network(widths, 5);
  const Vector& x = task.train.samples[0].x;
  const auto traj = forward(net, x);
  const auto ref = oracle::forward(net, x);
  CHECK(traj[0] == x);
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < ref[i].size(); ++j)
      CHECK(std::abs(traj[i](static_cast<Eigen::Index>(j)) - ref[i][j]) <= 1e-14);
}

TEST_CASE("forward rejects a wrong input length and reports non-finite states") {
  Rng rng(3);
  const std::vector<std::size_t> widths{3, 4, 2};
  const Network net = random_dense_network(widths, rng);
  CHECK_THROWS_AS(forward(net, Vector::Zero(4)), ConfigError);
  Vector x = Vector::Zero(3);
  x(1) = std::numeric_limits<double>::quiet_NaN();
  try {
    forward(net, x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.layer() == 0);
  }
}

TEST_CASE("forward is bit-identical across calls") {
  Rng rng(11);
  const std::vector<std::size_t> widths{8, 12, 12, 5};
  const Network net = random_dense_network(widths, rng);
  const Vector x = oracle::normal_vector(rng, 8);
  const auto a = forward(net, x);
  const auto b = forward(net, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("logistic states stay strictly inside (0, 1)") {
  Rng rng(12);
  for (int n = 0; n < 50; ++n) {
    const std::vector<std::size_t> widths{1 + rng.below(20), 1 + rng.below(20), 1 + rng.below(20)};
    const Network net = random_dense_network(widths, rng);
    const auto traj = forward(net, oracle::normal_vector(rng, widths[0]));
    for (std::size_t i = 1; i < traj.size(); ++i)
      for (double v : traj[i]) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
  }
}

TEST_CASE("logistic clamps beyond |z| = 40 within 1e-17 of the exact value") {
  CHECK(logistic(50.0) == 1.0);
  CHECK(logistic(-50.0) == 0.0);
  CHECK(logistic(0.0) == 0.5);
  for (double z : {40.5, 45.0, 700.0}) {
    CHECK(std::abs(logistic(z) - oracle::sigmoid(z)) < 1e-17);
    CHECK(std::abs(logistic(-z) - oracle::sigmoid(-z)) < 1e-17);
  }
}

TEST_CASE("layer_apply examples") {
  CHECK(layer_apply(oracle::params({{0.0}}, {0.0}), Vector::Constant(1, 7.0))(0) == 0.5);
  Vector u(2);
  u << 0.3, -0.3;
  CHECK(layer_apply(oracle::params({{1.0, 1.0}}, {0.0}), u)(0) == 0.5);
  CHECK(layer_apply(oracle::params({{2.0}}, {-1.0}), Vector::Ones(1))(0) ==
        doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK_THROWS_AS(layer_apply(oracle::params({{2.0}}, {-1.0}), Vector::Ones(2)), ConfigError);
}

TEST_CASE("layer Jacobian slopes") {
  SUBCASE("one half gives one quarter") {
    Layer layer{LayerParams{Matrix::Zero(3, 2), Vector::Zero(3)}, {}, Activation::Logistic, LayerKind::Dense};
    const Vector u_in = Vector::Ones(2);
    const Vector u_out = layer_apply(layer.params, u_in);
    const auto jac = layer_jacobian(layer, u_in, u_out);
    for (double l : jac.lambda()) CHECK(l == 0.25);
  }
  SUBCASE("saturation gives slopes near zero") {
    Layer layer{oracle::params({{30.0}, {-30.0}}, {0.0, 0.0}), {}, Activation::Logistic, LayerKind::Dense};
    const Vector u_in = Vector::Ones(1);
    const Vector u_out = layer_apply(layer.params, u_in);
    const auto jac = layer_jacobian(layer, u_in, u_out);
    for (double l : jac.lambda()) CHECK(l < 1e-12);
  }
}

TEST_CASE("assembled state Jacobian matches central differences of layer_apply") {
  Rng rng(21);
  for (int n = 0; n < 20; ++n) {
    const std::vector<std::size_t> widths{2 + rng.below(10), 2 + rng.below(10), 2 + rng.below(10)};
    const Network net = random_dense_network(widths, rng);
    const auto traj = forward(net, oracle::normal_vector(rng, widths[0]));
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
      const auto jac = layer_jacobian(net, traj, i);
      const Matrix J = jac.state_matrix();
      for (double l : jac.lambda()) {
        CHECK(l > 0.0);
        CHECK(l <= 0.25);
      }
      for (Eigen::Index k = 0; k < J.cols(); ++k) {
        const Vector col = jac.state_action(Vector::Unit(J.cols(), k));
        CHECK((col - J.col(k)).cwiseAbs().maxCoeff() == 0.0);
        const Vector& u = traj[i];
        const double delta = 1e-6;
        Vector up = u, um = u;
        up(k) += delta;
        um(k) -= delta;
        const Vector fd = (layer_apply(net.layer(i).params, up) - layer_apply(net.layer(i).params, um)) /
                          (2.0 * delta);
        CHECK((fd - col).cwiseAbs().maxCoeff() <= 1e-6);
      }
    }
  }
}

TEST_CASE("quadratic objective value") {
  SUBCASE("zero at the target") {
    const Network net = constant_output({0.2, 0.7});
    const auto traj = forward(net, Vector::Zero(1));
    CHECK(objective_value(ObjectiveSpec::quadratic(traj.output()), net, traj) == 0.0);
  }
  SUBCASE("unit miss gives one half") {
    const Network net = constant_output({1.0, 0.0});
    const auto traj = forward(net, Vector::Zero(1));
    CHECK(objective_value(ObjectiveSpec::quadratic(Vector::Zero(2)), net, traj) == 0.5);
  }
  SUBCASE("matches an independent sum on length 10") {
    Rng rng(31);
    const std::vector<std::size_t> widths{5, 10};
    const Network net = random_dense_network(widths, rng);
    const Vector x = oracle::normal_vector(rng, 5);
    const Vector y = oracle::uniform_vector(rng, 10);
    const auto traj = forward(net, x);
    const double ref = oracle::half_squared_distance(oracle::forward(net, x).back(), y);
    CHECK(std::abs(objective_value(ObjectiveSpec::quadratic(y), net, traj) - ref) <= 1e-14);
  }
  SUBCASE("target length mismatch") {
    const Network net = constant_output({1.0, 0.0});
    const auto traj = forward(net, Vector::Zero(1));
    CHECK_THROWS_AS(objective_value(ObjectiveSpec::quadratic(Vector::Zero(3)), net, traj), ConfigError);
  }
}

TEST_CASE("quadratic objective gradients") {
  SUBCASE("zero at the target") {
    const Network net = constant_output({0.2, 0.7});
    const auto traj = forward(net, Vector::Zero(1));
    const auto g = objective_gradients(ObjectiveSpec::quadratic(traj.output()), net, traj);
    CHECK(g.dJ_du.back().isZero(0.0));
  }
  SUBCASE("scalar difference") {
    const Network net = constant_output({0.9});
    const auto traj = forward(net, Vector::Zero(1));
    const auto g = objective_gradients(ObjectiveSpec::quadratic(Vector::Constant(1, 0.4)), net, traj);
    CHECK(g.dJ_du.back()(0) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("only the last state carries a gradient and matches finite differences") {
    Rng rng(32);
    const std::vector<std::size_t> widths{4, 7, 6};
    const Network net = random_dense_network(widths, rng);
    const auto traj = forward(net, oracle::normal_vector(rng, 4));
    const Vector y = oracle::uniform_vector(rng, 6);
    const auto spec = ObjectiveSpec::quadratic(y);
    const auto g = objective_gradients(spec, net, traj);
    REQUIRE(g.dJ_du.size() == 3);
    CHECK(g.dJ_du[0].isZero(0.0));
    CHECK(g.dJ_du[1].isZero(0.0));
    for (const auto& ds : g.dJ_ds) CHECK_FALSE(ds.has_value());
    for (Eigen::Index k = 0; k < 6; ++k) {
      const double fd = oracle::central_difference(
          [&](double d) {
            StateTrajectory moved = traj;
            moved.states.back()(k) += d;
            return objective_value(spec, net, moved);
          },
          1e-6);
      CHECK(std::abs(fd - g.dJ_du.back()(k)) <= 1e-8);
    }
  }
}

TEST_CASE("residual block with only the chain weights reproduces the dense recursion") {
  Rng rng(41);
  const std::vector<std::size_t> widths{5, 6, 6, 4};
  const Network dense = random_dense_network(widths, rng);
  ResidualBlock block;
  for (std::size_t i = 0; i < dense.num_layers(); ++i) {
    block.layers.push_back(dense.layer(i).params);
    std::vector<SkipWeight> skips;
    for (std::size_t j = 0; j < i; ++j)
      skips.push_back(SkipWeight{j, Matrix::Zero(static_cast<Eigen::Index>(widths[i + 1]),
                                                 static_cast<Eigen::Index>(widths[j]))});
    block.skips.push_back(std::move(skips));
  }
  Network res;
  res.add_residual_block(block);
  CHECK(res.has_residual());
  REQUIRE(res.block_outputs().size() == 1);
  CHECK(res.block_outputs()[0] == 3);
  const Vector x = oracle::normal_vector(rng, 5);
  const auto a = forward(dense, x);
  const auto b = forward(res, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("residual skip shapes are validated") {
  ResidualBlock block;
  block.layers = {LayerParams{Matrix::Zero(3, 3), Vector::Zero(3)},
                  LayerParams{Matrix::Zero(3, 3), Vector::Zero(3)}};
  block.skips = {{}, {SkipWeight{0, Matrix::Zero(3, 2)}}};
  Network net;
  CHECK_THROWS_AS(net.add_residual_block(block), ConfigError);
}

TEST_CASE("dense layers must chain") {
  Network net;
  net.add_dense(LayerParams{Matrix::Zero(3, 2), Vector::Zero(3)});
  CHECK_THROWS_AS(net.add_dense(LayerParams{Matrix::Zero(2, 4), Vector::Zero(2)}), ConfigError);
  CHECK_THROWS_AS(net.add_dense(LayerParams{Matrix::Zero(2, 3), Vector::Zero(3)}), ConfigError);
}

TEST_CASE("network checkpoints round-trip") {
  Rng rng(51);
  const std::vector<std::size_t> widths{3, 5, 5};
  Network net = random_dense_network(widths, rng);
  ResidualBlock block;
  for (int t = 0; t < 2; ++t) {
    LayerParams p{Matrix(5, 5), Vector(5)};
    for (auto& e : p.W.reshaped()) e = rng.normal();
    for (auto& e : p.b) e = rng.normal();
    block.layers.push_back(p);
  }
  Matrix skip(5, 5);
  for (auto& e : skip.reshaped()) e = rng.normal();
  block.skips = {{}, {SkipWeight{0, skip}}};
  net.add_residual_block(block);

  const auto bytes = encode_network(net);
  REQUIRE(bytes.size() > 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LRN1");
  const Network back = decode_network(bytes);
  REQUIRE(back.num_layers() == net.num_layers());
  CHECK(std::vector<std::size_t>(back.block_outputs().begin(), back.block_outputs().end()) ==
        std::vector<std::size_t>(net.block_outputs().begin(), net.block_outputs().end()));
  const Vector x = oracle::normal_vector(rng, 3);
  const auto a = forward(net, x);
  const auto b = forward(back, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  SUBCASE("truncation and bad magic are format errors") {
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(decode_network(cut), FormatError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_network(bad), FormatError);
  }
}

}  // TEST_SUITE
