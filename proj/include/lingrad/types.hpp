#pragma once

#include <Eigen/Dense>

#include <vector>

namespace lingrad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Perturbation (or gradient) of one layer's parameters, shaped like the
// parameters themselves: Sigma ~ W, beta ~ b, skip_sigma[k] ~ skips[k].W.
struct LayerDirection {
  Matrix Sigma;
  Vector beta;
  std::vector<Matrix> skip_sigma;
};

}  // namespace lingrad
