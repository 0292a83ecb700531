#pragma once

#include "lingrad/rng.hpp"
#include "lingrad/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lingrad {

enum class Activation : std::uint8_t { Logistic = 0, Identity = 1 };

// Logistic function, clamped to its asymptotes for |z| > 40.
double logistic(double z);

struct LayerParams {
  Matrix W;  // m_out x m_in
  Vector b;  // m_out
};

// Extra input to a residual-block layer from an earlier state of the same
// block. `from` is a global state index.
struct SkipWeight {
  std::size_t from = 0;
  Matrix W;  // m_out x width(from)
};

enum class LayerKind : std::uint8_t { Dense = 0, Residual = 1 };

// One step u_{i+1} = g(W u_i + sum_k skips[k].W u_{skips[k].from} + b).
struct Layer {
  LayerParams params;
  std::vector<SkipWeight> skips;
  Activation activation = Activation::Logistic;
  LayerKind kind = LayerKind::Dense;

  std::size_t in_width() const { return static_cast<std::size_t>(params.W.cols()); }
  std::size_t out_width() const { return static_cast<std::size_t>(params.W.rows()); }
};

// A residual block in local indexing: local state 0 is the block input and
// layers[t] maps local state t to t+1. skips[t] lists additional inputs to
// layers[t] from local states j < t (SkipWeight::from is local here).
struct ResidualBlock {
  std::vector<LayerParams> layers;
  std::vector<std::vector<SkipWeight>> skips;
};

// Layered network viewed as a discrete dynamical system u_{i+1} = f_i(u_i, s_i).
//
// Residual blocks are flattened into consecutive layers; only block outputs
// (and the output of every dense layer) are "primary" states, which is what
// the nonlinear measurement averages over.
class Network {
 public:
  Network() = default;

  void add_dense(LayerParams params, Activation activation = Activation::Logistic);
  void add_residual_block(const ResidualBlock& block,
                          Activation activation = Activation::Logistic);

  // Number of layers I; there are I+1 states.
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t width(std::size_t state) const;
  std::size_t input_width() const { return width(0); }
  std::size_t output_width() const { return width(num_layers()); }

  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& layer(std::size_t i) { return layers_.at(i); }
  std::span<const Layer> layers() const { return layers_; }

  // Primary state indices in increasing order, excluding the input state 0.
  std::span<const std::size_t> block_outputs() const { return block_outputs_; }
  bool has_residual() const;

  // Throws ConfigError when shapes do not chain or entries are not finite.
  void validate() const;

  // Flattened parameter count: row-major W, then b, then skip matrices.
  std::size_t parameter_count() const;

 private:
  std::vector<Layer> layers_;
  std::vector<std::size_t> block_outputs_;
};

// Network with dense logistic layers of the given widths, parameters i.i.d.
// standard normal drawn from `rng` in layer order (W row-major, then b).
Network random_dense_network(std::span<const std::size_t> widths, Rng& rng);

struct StateTrajectory {
  std::vector<Vector> states;              // u_0 .. u_I
  std::vector<std::size_t> block_outputs;  // copied from the network

  std::size_t size() const { return states.size(); }
  const Vector& operator[](std::size_t i) const { return states[i]; }
  const Vector& output() const { return states.back(); }
};

StateTrajectory forward(const Network& net, const Vector& x);

// g(W u + b) for a plain layer.
Vector layer_apply(const LayerParams& p, const Vector& u,
                   Activation activation = Activation::Logistic);

// Jacobian actions of one layer at a recorded state. Holds pointers into the
// trajectory it was built from; the trajectory must outlive it.
class LayerJacobian {
 public:
  LayerJacobian(const Layer& layer, Vector lambda, const Vector* u_in,
                std::vector<const Vector*> skip_inputs);

  // Diagonal of Lambda: g'(z) for every output neuron.
  const Vector& lambda() const { return lambda_; }

  // f_u v = Lambda W v (main input).
  Vector state_action(const Vector& v) const;
  // Lambda S_k v for skip input k.
  Vector skip_action(std::size_t k, const Vector& v) const;
  // f_s sigma = Lambda (Sigma u_in + sum_k Sigma_k u_k + beta).
  Vector param_action(const LayerDirection& d) const;

  // Row-vector products a^T f_u and a^T (Lambda S_k), returned as columns.
  Vector state_adjoint(const Vector& a) const;
  Vector skip_adjoint(std::size_t k, const Vector& a) const;

  // Dense Lambda W.
  Matrix state_matrix() const;

  const Layer& layer() const { return *layer_; }

 private:
  const Layer* layer_;
  Vector lambda_;
  const Vector* u_in_;
  std::vector<const Vector*> skip_inputs_;
};

// Jacobian of a plain layer from its input and output. u_in must outlive the result.
LayerJacobian layer_jacobian(const Layer& layer, const Vector& u_in, const Vector& u_out);

// Jacobian of layer i of `net` at trajectory `traj`.
LayerJacobian layer_jacobian(const Network& net, const StateTrajectory& traj, std::size_t i);

// Per-state objective term J_i(u_i, s_i). `layer` is null for the last state,
// which has no outgoing parameters.
struct ObjectiveTerm {
  std::function<double(const Vector& u, const Layer* layer)> value;
  std::function<Vector(const Vector& u, const Layer* layer)> du;
  // Optional; absent means J_i does not depend on s_i.
  std::function<LayerDirection(const Vector& u, const Layer& layer)> ds;
};

class ObjectiveSpec {
 public:
  enum class Kind { Quadratic, General };

  // J = scale * 1/2 sum_j (u_I^j - y^j)^2.
  static ObjectiveSpec quadratic(Vector target, double scale = 1.0);
  // J = sum_i J_i(u_i, s_i); terms[i] may be empty. terms.size() must be I+1.
  static ObjectiveSpec general(std::vector<std::optional<ObjectiveTerm>> terms);

  Kind kind() const { return kind_; }
  const Vector& target() const { return target_; }
  double scale() const { return scale_; }
  const std::vector<std::optional<ObjectiveTerm>>& terms() const { return terms_; }

 private:
  Kind kind_ = Kind::Quadratic;
  Vector target_;
  double scale_ = 1.0;
  std::vector<std::optional<ObjectiveTerm>> terms_;
};

struct ObjectiveGradients {
  std::vector<Vector> dJ_du;                        // J_ui as columns, i = 0..I
  std::vector<std::optional<LayerDirection>> dJ_ds;  // J_si, i = 0..I-1; empty = zero
};

double objective_value(const ObjectiveSpec& spec, const Network& net,
                       const StateTrajectory& traj);
ObjectiveGradients objective_gradients(const ObjectiveSpec& spec, const Network& net,
                                       const StateTrajectory& traj);

// Network checkpoint ("LRN1"), see docs/formats.md.
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);
std::vector<std::uint8_t> encode_network(const Network& net);
Network decode_network(std::span<const std::uint8_t> bytes);

}  // namespace lingrad
