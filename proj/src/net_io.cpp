#include "lingrad/errors.hpp"
#include "lingrad/net.hpp"

#include "binio.hpp"

#include <algorithm>

namespace lingrad {

namespace {

// Kind tags in the checkpoint.
constexpr std::uint8_t kDense = 0;
constexpr std::uint8_t kResidual = 1;
constexpr std::uint8_t kResidualBlockStart = 2;

void put_matrix(detail::ByteWriter& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

Matrix get_matrix(detail::ByteReader& r, std::uint64_t rows, std::uint64_t cols) {
  if (rows != 0 && cols > UINT64_MAX / 8 / rows) throw FormatError("checkpoint: matrix too large");
  r.need(rows * cols * 8);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_network(const Network& net) {
  detail::ByteWriter w;
  w.raw("LRN1");
  w.u64(net.num_layers());
  const auto outputs = net.block_outputs();
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Layer& l = net.layer(i);
    std::uint8_t tag = kDense;
    if (l.kind == LayerKind::Residual) {
      const bool starts = i == 0 || std::find(outputs.begin(), outputs.end(), i) != outputs.end();
      tag = starts ? kResidualBlockStart : kResidual;
    }
    w.u8(tag);
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u64(l.in_width());
    w.u64(l.out_width());
    put_matrix(w, l.params.W);
    for (Eigen::Index k = 0; k < l.params.b.size(); ++k) w.f64(l.params.b(k));
    w.u64(l.skips.size());
    for (const auto& s : l.skips) {
      w.u64(s.from);
      w.u64(static_cast<std::uint64_t>(s.W.cols()));
      put_matrix(w, s.W);
    }
  }
  return w.take();
}

Network decode_network(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "network checkpoint");
  r.expect_magic("LRN1");
  const std::uint64_t count = r.u64();
  Network net;
  ResidualBlock block;
  std::size_t block_base = 0;
  Activation block_activation = Activation::Logistic;
  bool block_has_activation = false;
  auto flush = [&] {
    if (!block.layers.empty()) net.add_residual_block(block, block_activation);
    block = {};
    block_has_activation = false;
  };
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint8_t tag = r.u8();
    const std::uint8_t act = r.u8();
    if (tag > kResidualBlockStart) throw FormatError("network checkpoint: unknown layer kind");
    if (act > static_cast<std::uint8_t>(Activation::Identity))
      throw FormatError("network checkpoint: unknown activation");
    const std::uint64_t m_in = r.u64();
    const std::uint64_t m_out = r.u64();
    LayerParams p{get_matrix(r, m_out, m_in), Vector()};
    r.need(m_out * 8);
    p.b.resize(static_cast<Eigen::Index>(m_out));
    for (Eigen::Index k = 0; k < p.b.size(); ++k) p.b(k) = r.f64();
    std::vector<SkipWeight> skips(r.u64());
    for (auto& s : skips) {
      s.from = r.u64();
      const std::uint64_t cols = r.u64();
      s.W = get_matrix(r, m_out, cols);
    }
    const auto activation = static_cast<Activation>(act);
    if (tag == kDense) {
      flush();
      if (!skips.empty()) throw FormatError("network checkpoint: dense layer with skips");
      net.add_dense(std::move(p), activation);
      continue;
    }
    if (tag == kResidualBlockStart || block.layers.empty()) {
      flush();
      block_base = net.num_layers();
    }
    if (block_has_activation && block_activation != activation)
      throw FormatError("network checkpoint: mixed activations inside a residual block");
    block_activation = activation;
    block_has_activation = true;
    for (auto& s : skips) {
      if (s.from < block_base) throw FormatError("network checkpoint: skip leaves its block");
      s.from -= block_base;
    }
    block.layers.push_back(std::move(p));
    block.skips.push_back(std::move(skips));
  }
  flush();
  if (r.remaining() != 0) throw FormatError("network checkpoint: trailing bytes");
  net.validate();
  return net;
}

void save_network(const std::string& path, const Network& net) {
  detail::write_file(path, encode_network(net));
}

Network load_network(const std::string& path) {
  return decode_network(detail::read_file(path));
}

}  // namespace lingrad
