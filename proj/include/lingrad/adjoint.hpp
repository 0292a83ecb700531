#pragma once

#include "lingrad/direction.hpp"
#include "lingrad/net.hpp"

#include <cstddef>
#include <vector>

namespace lingrad {

// Adjoint solution av_0 .. av_{I+1}. Each av_l is a row vector stored as a
// column; products "av_l M" are computed as M^T av_l. av_{I+1} is zero.
struct AdjointSolution {
  std::vector<Vector> av;
};

// av_{I+1} = 0, av_l = av_{l+1} f_{u,l} + J_{u,l}, in reversed layer order.
// Skip connections add av_{i+1} Lambda_i S_k to the adjoint of their source.
AdjointSolution adjoint_solve(const Network& net, const StateTrajectory& traj,
                              const ObjectiveGradients& grads);

// dJ/dpsi = sum_{l=1}^{I} av_l f_{s,l-1} sigma_{l-1} + sum_l J_{s,l} sigma_l.
double sensitivity_adjoint(const AdjointSolution& adj, const Network& net,
                           const StateTrajectory& traj, const ObjectiveGradients& grads,
                           const PerturbationDirection& dir);

// dJ/ds_l = av_{l+1} f_{s,l} (+ J_{s,l} when `grads` carries parameter terms):
// weight part (Lambda_l av_{l+1}) u_l^T, bias part Lambda_l av_{l+1}.
PerturbationDirection gradient_backprop(const AdjointSolution& adj, const Network& net,
                                        const StateTrajectory& traj,
                                        const ObjectiveGradients* grads = nullptr);

// Negated backpropagation gradient.
PerturbationDirection steepest_direction(const AdjointSolution& adj, const Network& net,
                                         const StateTrajectory& traj);

// Homogeneous adjoint started at state i with w_i = w and w_j = 0 for j > i.
// Entries after i are left empty.
std::vector<Vector> homogeneous_adjoint(const Network& net, const StateTrajectory& traj,
                                        std::size_t i, const Vector& w);

// Adjoint propagator (m_i x m_l): row vector at layer i times it gives the
// homogeneous adjoint at layer l. Assembled row by row.
Matrix adjoint_propagator(const Network& net, const StateTrajectory& traj, std::size_t i,
                          std::size_t l);

// av_l = sum_{i>=l} J_{u,i} Dhat_i^l with the adjoint propagators assembled as matrices.
AdjointSolution adjoint_duhamel(const Network& net, const StateTrajectory& traj,
                                const ObjectiveGradients& grads);

}  // namespace lingrad
