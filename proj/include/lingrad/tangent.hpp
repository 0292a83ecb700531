#pragma once

#include "lingrad/direction.hpp"
#include "lingrad/net.hpp"

#include <cstddef>
#include <vector>

namespace lingrad {

// Tangent solution stored as v_i * psi (the quantity the nonlinear measurement
// consumes). vpsi[0] is identically zero.
struct TangentSolution {
  std::vector<Vector> vpsi;
  double psi = 1.0;

  // v_i = vpsi[i] / psi; psi must be nonzero.
  Vector v(std::size_t i) const;
};

// Exact linearized recursion
//   v_0 psi = 0,  v_{i+1} psi = Lambda_i (W_i v_i psi + Sigma_i psi u_i + beta_i psi)
// plus skip terms for residual layers.
TangentSolution tangent_exact(const Network& net, const StateTrajectory& traj,
                              const PerturbationDirection& dir, double psi);

// One-sided finite difference: one extra forward pass at s + dir * delta,
// v_i psi ~= (u^delta_i - u_i) * psi / delta.
TangentSolution tangent_fd(const Network& net, const StateTrajectory& traj_old,
                           const PerturbationDirection& dir, double psi, double delta = 1e-6);

// Homogeneous tangent started at state l with w_l = w and w_j = 0 for j < l.
// Entries before l are left empty.
std::vector<Vector> homogeneous_tangent(const Network& net, const StateTrajectory& traj,
                                        std::size_t l, const Vector& w);

struct Propagator {
  Matrix D;  // m_i x m_l
  std::size_t from = 0;
  std::size_t to = 0;
};

// D_l^i, assembled column by column from homogeneous tangent solutions.
Propagator propagator(const Network& net, const StateTrajectory& traj, std::size_t l,
                      std::size_t i);

// v_i = sum_{l<i} D_{l+1}^i f_{s,l} sigma_l, returned with psi = 1.
TangentSolution tangent_duhamel(const Network& net, const StateTrajectory& traj,
                                const PerturbationDirection& dir);

// dJ/dpsi = sum_i (J_ui v_i + J_si sigma_i).
double sensitivity_tangent(const ObjectiveGradients& grads, const TangentSolution& tan,
                           const PerturbationDirection& dir);

}  // namespace lingrad
