#include "lingrad/net.hpp"

#include "lingrad/errors.hpp"

#include <cmath>
#include <string>

namespace lingrad {

namespace {

std::string shape(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

double activate(Activation a, double z) {
  return a == Activation::Logistic ? logistic(z) : z;
}

Vector activation_slope(Activation a, const Vector& out) {
  if (a == Activation::Identity) return Vector::Ones(out.size());
  return out.array() * (1.0 - out.array());
}

}  // namespace

double logistic(double z) {
  if (z > 40.0) return 1.0;
  if (z < -40.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-z));
}

void Network::add_dense(LayerParams params, Activation activation) {
  if (params.W.rows() != params.b.size())
    throw ConfigError("dense layer: W is " + shape(params.W.rows(), params.W.cols()) +
                      " but b has length " + std::to_string(params.b.size()));
  if (!layers_.empty() && static_cast<std::size_t>(params.W.cols()) != output_width())
    throw ConfigError("dense layer " + std::to_string(layers_.size()) + ": input width " +
                      std::to_string(params.W.cols()) + " does not match previous width " +
                      std::to_string(output_width()));
  layers_.push_back(Layer{std::move(params), {}, activation, LayerKind::Dense});
  block_outputs_.push_back(layers_.size());
}

void Network::add_residual_block(const ResidualBlock& block, Activation activation) {
  if (block.layers.empty()) throw ConfigError("residual block has no layers");
  if (!block.skips.empty() && block.skips.size() != block.layers.size())
    throw ConfigError("residual block: skips must be empty or one list per layer");
  const std::size_t base = layers_.size();
  std::vector<std::size_t> local_widths;
  local_widths.push_back(static_cast<std::size_t>(block.layers.front().W.cols()));
  if (!layers_.empty() && local_widths[0] != output_width())
    throw ConfigError("residual block input width " + std::to_string(local_widths[0]) +
                      " does not match previous width " + std::to_string(output_width()));
  std::vector<Layer> staged;
  for (std::size_t t = 0; t < block.layers.size(); ++t) {
    const auto& p = block.layers[t];
    if (p.W.rows() != p.b.size())
      throw ConfigError("residual layer " + std::to_string(t) + ": W/b row mismatch");
    if (static_cast<std::size_t>(p.W.cols()) != local_widths[t])
      throw ConfigError("residual layer " + std::to_string(t) + ": input width mismatch");
    Layer layer{p, {}, activation, LayerKind::Residual};
    if (!block.skips.empty()) {
      for (const auto& skip : block.skips[t]) {
        if (skip.from >= t)
          throw ConfigError("residual layer " + std::to_string(t) +
                            ": skip source must be an earlier state of the block");
        if (static_cast<std::size_t>(skip.W.cols()) != local_widths[skip.from] ||
            skip.W.rows() != p.W.rows())
          throw ConfigError("residual layer " + std::to_string(t) + ": skip weight from " +
                            std::to_string(skip.from) + " has shape " +
                            shape(skip.W.rows(), skip.W.cols()));
        layer.skips.push_back(SkipWeight{base + skip.from, skip.W});
      }
    }
    local_widths.push_back(static_cast<std::size_t>(p.W.rows()));
    staged.push_back(std::move(layer));
  }
  for (auto& l : staged) layers_.push_back(std::move(l));
  block_outputs_.push_back(layers_.size());
}

std::size_t Network::width(std::size_t state) const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  if (state > layers_.size()) throw ConfigError("state index out of range");
  return state == 0 ? layers_[0].in_width() : layers_[state - 1].out_width();
}

bool Network::has_residual() const {
  for (const auto& l : layers_)
    if (l.kind == LayerKind::Residual) return true;
  return false;
}

void Network::validate() const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.params.W.rows() != l.params.b.size())
      throw ConfigError("layer " + std::to_string(i) + ": W/b row mismatch");
    if (i > 0 && l.in_width() != layers_[i - 1].out_width())
      throw ConfigError("layer " + std::to_string(i) + ": widths do not chain");
    if (!l.params.W.allFinite() || !l.params.b.allFinite())
      throw ConfigError("layer " + std::to_string(i) + ": non-finite parameter");
    for (const auto& s : l.skips) {
      if (s.from >= i) throw ConfigError("layer " + std::to_string(i) + ": bad skip source");
      if (static_cast<std::size_t>(s.W.cols()) != width(s.from) || s.W.rows() != l.params.W.rows())
        throw ConfigError("layer " + std::to_string(i) + ": skip weight shape mismatch");
      if (!s.W.allFinite())
        throw ConfigError("layer " + std::to_string(i) + ": non-finite skip weight");
    }
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += static_cast<std::size_t>(l.params.W.size() + l.params.b.size());
    for (const auto& s : l.skips) n += static_cast<std::size_t>(s.W.size());
  }
  return n;
}

Network random_dense_network(std::span<const std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("need at least two widths");
  Network net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto rows = static_cast<Eigen::Index>(widths[i + 1]);
    const auto cols = static_cast<Eigen::Index>(widths[i]);
    LayerParams p{Matrix(rows, cols), Vector(rows)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) p.W(r, c) = rng.normal();
    for (Eigen::Index r = 0; r < rows; ++r) p.b(r) = rng.normal();
    net.add_dense(std::move(p));
  }
  return net;
}

StateTrajectory forward(const Network& net, const Vector& x) {
  if (net.num_layers() == 0) throw ConfigError("network has no layers");
  if (static_cast<std::size_t>(x.size()) != net.input_width())
    throw ConfigError("input has length " + std::to_string(x.size()) + ", network expects " +
                      std::to_string(net.input_width()));
  StateTrajectory traj;
  traj.states.reserve(net.num_layers() + 1);
  traj.states.push_back(x);
  traj.block_outputs.assign(net.block_outputs().begin(), net.block_outputs().end());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Layer& l = net.layer(i);
    Vector z = l.params.W * traj.states[i] + l.params.b;
    for (const auto& s : l.skips) z.noalias() += s.W * traj.states[s.from];
    Vector u = z.unaryExpr([a = l.activation](double v) { return activate(a, v); });
    if (!u.allFinite()) throw NumericError(i, "non-finite state");
    traj.states.push_back(std::move(u));
  }
  return traj;
}

Vector layer_apply(const LayerParams& p, const Vector& u, Activation activation) {
  if (u.size() != p.W.cols() || p.W.rows() != p.b.size())
    throw ConfigError("layer_apply: input has length " + std::to_string(u.size()) +
                      " for W of shape " + shape(p.W.rows(), p.W.cols()));
  Vector z = p.W * u + p.b;
  return z.unaryExpr([activation](double v) { return activate(activation, v); });
}

LayerJacobian::LayerJacobian(const Layer& layer, Vector lambda, const Vector* u_in,
                             std::vector<const Vector*> skip_inputs)
    : layer_(&layer), lambda_(std::move(lambda)), u_in_(u_in),
      skip_inputs_(std::move(skip_inputs)) {}

Vector LayerJacobian::state_action(const Vector& v) const {
  return lambda_.cwiseProduct(layer_->params.W * v);
}

Vector LayerJacobian::skip_action(std::size_t k, const Vector& v) const {
  return lambda_.cwiseProduct(layer_->skips.at(k).W * v);
}

Vector LayerJacobian::param_action(const LayerDirection& d) const {
  if (d.Sigma.rows() != layer_->params.W.rows() || d.Sigma.cols() != layer_->params.W.cols() ||
      d.beta.size() != layer_->params.b.size())
    throw ConfigError("direction shape does not match layer");
  Vector s = d.Sigma * (*u_in_) + d.beta;
  for (std::size_t k = 0; k < skip_inputs_.size() && k < d.skip_sigma.size(); ++k)
    s.noalias() += d.skip_sigma[k] * (*skip_inputs_[k]);
  return lambda_.cwiseProduct(s);
}

Vector LayerJacobian::state_adjoint(const Vector& a) const {
  return layer_->params.W.transpose() * lambda_.cwiseProduct(a);
}

Vector LayerJacobian::skip_adjoint(std::size_t k, const Vector& a) const {
  return layer_->skips.at(k).W.transpose() * lambda_.cwiseProduct(a);
}

Matrix LayerJacobian::state_matrix() const {
  return lambda_.asDiagonal() * layer_->params.W;
}

LayerJacobian layer_jacobian(const Layer& layer, const Vector& u_in, const Vector& u_out) {
  if (static_cast<std::size_t>(u_in.size()) != layer.in_width() ||
      static_cast<std::size_t>(u_out.size()) != layer.out_width())
    throw ConfigError("layer_jacobian: state lengths do not match layer shape");
  if (!layer.skips.empty())
    throw ConfigError("layer_jacobian: layers with skip inputs need the full trajectory");
  return LayerJacobian(layer, activation_slope(layer.activation, u_out), &u_in, {});
}

LayerJacobian layer_jacobian(const Network& net, const StateTrajectory& traj, std::size_t i) {
  if (traj.size() != net.num_layers() + 1)
    throw ConfigError("trajectory length does not match network depth");
  const Layer& l = net.layer(i);
  std::vector<const Vector*> skip_inputs;
  skip_inputs.reserve(l.skips.size());
  for (const auto& s : l.skips) skip_inputs.push_back(&traj.states[s.from]);
  return LayerJacobian(l, activation_slope(l.activation, traj.states[i + 1]), &traj.states[i],
                       std::move(skip_inputs));
}

ObjectiveSpec ObjectiveSpec::quadratic(Vector target, double scale) {
  ObjectiveSpec s;
  s.kind_ = Kind::Quadratic;
  s.target_ = std::move(target);
  s.scale_ = scale;
  return s;
}

ObjectiveSpec ObjectiveSpec::general(std::vector<std::optional<ObjectiveTerm>> terms) {
  ObjectiveSpec s;
  s.kind_ = Kind::General;
  s.terms_ = std::move(terms);
  return s;
}

namespace {

void check_objective(const ObjectiveSpec& spec, const Network& net,
                     const StateTrajectory& traj) {
  if (traj.size() != net.num_layers() + 1)
    throw ConfigError("objective: trajectory is incomplete");
  if (spec.kind() == ObjectiveSpec::Kind::Quadratic) {
    if (static_cast<std::size_t>(spec.target().size()) != net.output_width())
      throw ConfigError("objective: target has length " + std::to_string(spec.target().size()) +
                        ", output width is " + std::to_string(net.output_width()));
  } else if (spec.terms().size() != traj.size()) {
    throw ConfigError("objective: need one (possibly empty) term per state");
  }
}

const Layer* outgoing(const Network& net, std::size_t i) {
  return i < net.num_layers() ? &net.layer(i) : nullptr;
}

}  // namespace

double objective_value(const ObjectiveSpec& spec, const Network& net,
                       const StateTrajectory& traj) {
  check_objective(spec, net, traj);
  if (spec.kind() == ObjectiveSpec::Kind::Quadratic)
    return spec.scale() * 0.5 * (traj.output() - spec.target()).squaredNorm();
  double total = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (const auto& term = spec.terms()[i]) total += term->value(traj[i], outgoing(net, i));
  return total;
}

ObjectiveGradients objective_gradients(const ObjectiveSpec& spec, const Network& net,
                                       const StateTrajectory& traj) {
  check_objective(spec, net, traj);
  ObjectiveGradients g;
  g.dJ_du.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) g.dJ_du.push_back(Vector::Zero(traj[i].size()));
  g.dJ_ds.resize(net.num_layers());
  if (spec.kind() == ObjectiveSpec::Kind::Quadratic) {
    g.dJ_du.back() = spec.scale() * (traj.output() - spec.target());
    return g;
  }
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& term = spec.terms()[i];
    if (!term) continue;
    if (term->du) {
      Vector du = term->du(traj[i], outgoing(net, i));
      if (du.size() != traj[i].size()) throw ConfigError("objective term gradient has wrong length");
      g.dJ_du[i] = std::move(du);
    }
    if (term->ds && i < net.num_layers()) g.dJ_ds[i] = term->ds(traj[i], net.layer(i));
  }
  return g;
}

}  // namespace lingrad
