#pragma once

#include "lingrad/net.hpp"
#include "lingrad/rng.hpp"

#include <vector>

namespace lingrad {

// Per-layer parameter direction sigma_i = (Sigma_i, beta_i [, skip Sigmas]).
// Also used for parameter gradients, which share the shape.
class PerturbationDirection {
 public:
  std::vector<LayerDirection> layers;

  static PerturbationDirection zeros_like(const Network& net);
  // Entries i.i.d. standard normal, drawn in layer order.
  static PerturbationDirection random_like(const Network& net, Rng& rng);

  PerturbationDirection& operator+=(const PerturbationDirection& other);
  PerturbationDirection& operator-=(const PerturbationDirection& other);
  PerturbationDirection& operator*=(double c);
  friend PerturbationDirection operator*(double c, PerturbationDirection d) { return d *= c; }
  friend PerturbationDirection operator+(PerturbationDirection a, const PerturbationDirection& b) {
    return a += b;
  }
  friend PerturbationDirection operator-(PerturbationDirection a, const PerturbationDirection& b) {
    return a -= b;
  }

  double dot(const PerturbationDirection& other) const;
  double squared_norm() const { return dot(*this); }
  double max_abs() const;
  bool is_zero() const { return max_abs() == 0.0; }

  // Flattened view in checkpoint order (row-major Sigma, beta, skip Sigmas).
  std::vector<double> flatten() const;
};

// Throws ConfigError unless every block matches the network's parameter shapes.
void check_shape(const Network& net, const PerturbationDirection& dir);

// Parameters s + dir * psi as a new network.
Network perturbed(const Network& net, const PerturbationDirection& dir, double psi);
// In-place s <- s + dir * psi.
void apply_update(Network& net, const PerturbationDirection& dir, double psi);

// Parameters of `net` viewed as a direction (so differences of networks are directions).
PerturbationDirection parameters_of(const Network& net);

}  // namespace lingrad
