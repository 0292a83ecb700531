#include "lingrad/direction.hpp"

#include "lingrad/errors.hpp"

#include <algorithm>
#include <string>

namespace lingrad {

namespace {

template <class Fn>
void zip(PerturbationDirection& a, const PerturbationDirection& b, Fn fn) {
  if (a.layers.size() != b.layers.size()) throw ConfigError("direction depth mismatch");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.Sigma.rows() != y.Sigma.rows() || x.Sigma.cols() != y.Sigma.cols() ||
        x.beta.size() != y.beta.size() || x.skip_sigma.size() != y.skip_sigma.size())
      throw ConfigError("direction shape mismatch at layer " + std::to_string(i));
    fn(x.Sigma, y.Sigma);
    fn(x.beta, y.beta);
    for (std::size_t k = 0; k < x.skip_sigma.size(); ++k) fn(x.skip_sigma[k], y.skip_sigma[k]);
  }
}

}  // namespace

PerturbationDirection PerturbationDirection::zeros_like(const Network& net) {
  PerturbationDirection d;
  d.layers.reserve(net.num_layers());
  for (const auto& l : net.layers()) {
    LayerDirection ld{Matrix::Zero(l.params.W.rows(), l.params.W.cols()),
                      Vector::Zero(l.params.b.size()), {}};
    for (const auto& s : l.skips) ld.skip_sigma.push_back(Matrix::Zero(s.W.rows(), s.W.cols()));
    d.layers.push_back(std::move(ld));
  }
  return d;
}

PerturbationDirection PerturbationDirection::random_like(const Network& net, Rng& rng) {
  auto d = zeros_like(net);
  auto fill = [&rng](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
  };
  for (auto& l : d.layers) {
    fill(l.Sigma);
    fill(l.beta);
    for (auto& s : l.skip_sigma) fill(s);
  }
  return d;
}

PerturbationDirection& PerturbationDirection::operator+=(const PerturbationDirection& other) {
  zip(*this, other, [](auto& x, const auto& y) { x += y; });
  return *this;
}

PerturbationDirection& PerturbationDirection::operator-=(const PerturbationDirection& other) {
  zip(*this, other, [](auto& x, const auto& y) { x -= y; });
  return *this;
}

PerturbationDirection& PerturbationDirection::operator*=(double c) {
  for (auto& l : layers) {
    l.Sigma *= c;
    l.beta *= c;
    for (auto& s : l.skip_sigma) s *= c;
  }
  return *this;
}

double PerturbationDirection::dot(const PerturbationDirection& other) const {
  auto copy = *this;
  double total = 0.0;
  zip(copy, other, [&total](const auto& x, const auto& y) { total += x.cwiseProduct(y).sum(); });
  return total;
}

double PerturbationDirection::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    if (l.Sigma.size()) m = std::max(m, l.Sigma.cwiseAbs().maxCoeff());
    if (l.beta.size()) m = std::max(m, l.beta.cwiseAbs().maxCoeff());
    for (const auto& s : l.skip_sigma)
      if (s.size()) m = std::max(m, s.cwiseAbs().maxCoeff());
  }
  return m;
}

std::vector<double> PerturbationDirection::flatten() const {
  std::vector<double> out;
  auto put = [&out](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  };
  for (const auto& l : layers) {
    put(l.Sigma);
    out.insert(out.end(), l.beta.data(), l.beta.data() + l.beta.size());
    for (const auto& s : l.skip_sigma) put(s);
  }
  return out;
}

void check_shape(const Network& net, const PerturbationDirection& dir) {
  if (dir.layers.size() != net.num_layers())
    throw ConfigError("direction has " + std::to_string(dir.layers.size()) +
                      " layers, network has " + std::to_string(net.num_layers()));
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto& l = net.layer(i);
    const auto& d = dir.layers[i];
    bool ok = d.Sigma.rows() == l.params.W.rows() && d.Sigma.cols() == l.params.W.cols() &&
              d.beta.size() == l.params.b.size() && d.skip_sigma.size() == l.skips.size();
    for (std::size_t k = 0; ok && k < l.skips.size(); ++k)
      ok = d.skip_sigma[k].rows() == l.skips[k].W.rows() &&
           d.skip_sigma[k].cols() == l.skips[k].W.cols();
    if (!ok) throw ConfigError("direction shape does not match layer " + std::to_string(i));
  }
}

void apply_update(Network& net, const PerturbationDirection& dir, double psi) {
  check_shape(net, dir);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    auto& l = net.layer(i);
    const auto& d = dir.layers[i];
    l.params.W += psi * d.Sigma;
    l.params.b += psi * d.beta;
    for (std::size_t k = 0; k < l.skips.size(); ++k) l.skips[k].W += psi * d.skip_sigma[k];
  }
}

Network perturbed(const Network& net, const PerturbationDirection& dir, double psi) {
  Network copy = net;
  apply_update(copy, dir, psi);
  return copy;
}

PerturbationDirection parameters_of(const Network& net) {
  PerturbationDirection d;
  for (const auto& l : net.layers()) {
    LayerDirection ld{l.params.W, l.params.b, {}};
    for (const auto& s : l.skips) ld.skip_sigma.push_back(s.W);
    d.layers.push_back(std::move(ld));
  }
  return d;
}

}  // namespace lingrad
