#pragma once

#include <cstdint>
#include <random>

namespace lingrad {

// Seeded generator shared by initialization, data generation and shuffling.
//
// Stream "lingrad-rng-v1": std::mt19937_64 (bit-exact across standard
// libraries), uniforms built from the top 53 bits, normals by the Box-Muller
// transform, bounded integers by rejection. The distributions are written out
// here instead of using <random>'s, whose outputs differ between vendors.
class Rng {
 public:
  static constexpr const char* kName = "lingrad-rng-v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform in (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }
  double normal();
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);

  // Independent generator for a named sub-stream, derived with splitmix64.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <class Range>
void shuffle(Range& range, Rng& rng) {
  using std::swap;
  auto n = static_cast<std::uint64_t>(std::size(range));
  for (std::uint64_t i = n; i > 1; --i) {
    auto j = rng.below(i);
    swap(range[i - 1], range[j]);
  }
}

}  // namespace lingrad
