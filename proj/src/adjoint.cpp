#include "lingrad/adjoint.hpp"

#include "lingrad/errors.hpp"

#include <string>

namespace lingrad {

namespace {

void check_inputs(const Network& net, const StateTrajectory& traj,
                  const ObjectiveGradients& grads) {
  if (traj.size() != net.num_layers() + 1)
    throw ConfigError("adjoint: trajectory length does not match network depth");
  if (grads.dJ_du.size() != traj.size())
    throw ConfigError("adjoint: expected " + std::to_string(traj.size()) + " state gradients");
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (grads.dJ_du[i].size() != traj[i].size())
      throw ConfigError("adjoint: state gradient length mismatch at " + std::to_string(i));
}

}  // namespace

AdjointSolution adjoint_solve(const Network& net, const StateTrajectory& traj,
                              const ObjectiveGradients& grads) {
  check_inputs(net, traj, grads);
  const std::size_t depth = net.num_layers();
  AdjointSolution adj;
  adj.av.resize(depth + 2);
  adj.av[depth + 1] = Vector::Zero(traj[depth].size());
  for (std::size_t l = 0; l <= depth; ++l) adj.av[l] = grads.dJ_du[l];
  // av[i+1] is complete once every layer >= i+1 has been visited.
  for (std::size_t i = depth; i-- > 0;) {
    const auto jac = layer_jacobian(net, traj, i);
    adj.av[i].noalias() += jac.state_adjoint(adj.av[i + 1]);
    const Layer& layer = net.layer(i);
    for (std::size_t k = 0; k < layer.skips.size(); ++k)
      adj.av[layer.skips[k].from].noalias() += jac.skip_adjoint(k, adj.av[i + 1]);
  }
  return adj;
}

double sensitivity_adjoint(const AdjointSolution& adj, const Network& net,
                           const StateTrajectory& traj, const ObjectiveGradients& grads,
                           const PerturbationDirection& dir) {
  check_inputs(net, traj, grads);
  check_shape(net, dir);
  if (adj.av.size() != net.num_layers() + 2) throw ConfigError("adjoint solution has wrong depth");
  double total = 0.0;
  for (std::size_t l = 1; l <= net.num_layers(); ++l)
    total += adj.av[l].dot(layer_jacobian(net, traj, l - 1).param_action(dir.layers[l - 1]));
  for (std::size_t l = 0; l < grads.dJ_ds.size() && l < net.num_layers(); ++l) {
    if (!grads.dJ_ds[l]) continue;
    const auto& g = *grads.dJ_ds[l];
    const auto& d = dir.layers[l];
    total += g.Sigma.cwiseProduct(d.Sigma).sum() + g.beta.dot(d.beta);
    for (std::size_t k = 0; k < g.skip_sigma.size() && k < d.skip_sigma.size(); ++k)
      total += g.skip_sigma[k].cwiseProduct(d.skip_sigma[k]).sum();
  }
  return total;
}

PerturbationDirection gradient_backprop(const AdjointSolution& adj, const Network& net,
                                        const StateTrajectory& traj,
                                        const ObjectiveGradients* grads) {
  if (traj.size() != net.num_layers() + 1 || adj.av.size() != net.num_layers() + 2)
    throw ConfigError("gradient_backprop: inconsistent depths");
  PerturbationDirection g;
  g.layers.reserve(net.num_layers());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto jac = layer_jacobian(net, traj, l);
    const Vector delta = jac.lambda().cwiseProduct(adj.av[l + 1]);
    LayerDirection ld{delta * traj[l].transpose(), delta, {}};
    for (const auto& s : net.layer(l).skips) ld.skip_sigma.push_back(delta * traj[s.from].transpose());
    if (grads && l < grads->dJ_ds.size() && grads->dJ_ds[l]) {
      const auto& js = *grads->dJ_ds[l];
      ld.Sigma += js.Sigma;
      ld.beta += js.beta;
      for (std::size_t k = 0; k < ld.skip_sigma.size() && k < js.skip_sigma.size(); ++k)
        ld.skip_sigma[k] += js.skip_sigma[k];
    }
    g.layers.push_back(std::move(ld));
  }
  return g;
}

PerturbationDirection steepest_direction(const AdjointSolution& adj, const Network& net,
                                         const StateTrajectory& traj) {
  auto d = gradient_backprop(adj, net, traj);
  d *= -1.0;
  return d;
}

std::vector<Vector> homogeneous_adjoint(const Network& net, const StateTrajectory& traj,
                                        std::size_t i, const Vector& w) {
  if (traj.size() != net.num_layers() + 1)
    throw ConfigError("homogeneous adjoint: trajectory length does not match network depth");
  if (i > net.num_layers()) throw ConfigError("homogeneous adjoint: start index out of range");
  if (w.size() != traj[i].size()) throw ConfigError("homogeneous adjoint: wrong initial length");
  std::vector<Vector> out(i + 1);
  for (std::size_t l = 0; l < i; ++l) out[l] = Vector::Zero(traj[l].size());
  out[i] = w;
  for (std::size_t k = i; k-- > 0;) {
    const auto jac = layer_jacobian(net, traj, k);
    out[k].noalias() += jac.state_adjoint(out[k + 1]);
    const Layer& layer = net.layer(k);
    for (std::size_t s = 0; s < layer.skips.size(); ++s)
      out[layer.skips[s].from].noalias() += jac.skip_adjoint(s, out[k + 1]);
  }
  return out;
}

Matrix adjoint_propagator(const Network& net, const StateTrajectory& traj, std::size_t i,
                          std::size_t l) {
  if (l > i) throw ConfigError("adjoint propagator: need l <= i");
  if (i > net.num_layers()) throw ConfigError("adjoint propagator: index out of range");
  const auto m_i = traj[i].size();
  Matrix D(m_i, traj[l].size());
  for (Eigen::Index k = 0; k < m_i; ++k)
    D.row(k) = homogeneous_adjoint(net, traj, i, Vector::Unit(m_i, k))[l].transpose();
  return D;
}

AdjointSolution adjoint_duhamel(const Network& net, const StateTrajectory& traj,
                                const ObjectiveGradients& grads) {
  check_inputs(net, traj, grads);
  const std::size_t depth = net.num_layers();
  AdjointSolution adj;
  adj.av.resize(depth + 2);
  for (std::size_t l = 0; l <= depth; ++l) adj.av[l] = Vector::Zero(traj[l].size());
  adj.av[depth + 1] = Vector::Zero(traj[depth].size());
  for (std::size_t i = 0; i <= depth; ++i) {
    if (grads.dJ_du[i].isZero(0.0)) continue;
    for (std::size_t l = 0; l <= i; ++l)
      adj.av[l].noalias() += adjoint_propagator(net, traj, i, l).transpose() * grads.dJ_du[i];
  }
  return adj;
}

}  // namespace lingrad
