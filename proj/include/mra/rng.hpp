#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace mra {

/// Counter-based splittable generator.
///
/// A stream is a 64-bit key plus a counter; every draw hashes (key, counter).
/// Child streams are derived from the parent key and a name or index, so the
/// values a worker sees depend only on how its stream was derived, never on
/// scheduling. Distribution transforms are implemented here rather than taken
/// from <random> so results are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view name) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double open_uniform();  // (0, 1)
  double normal();
  double gumbel();
  int below(int n);
  int categorical(std::span<const double> probs);
  int categorical(std::span<const float> probs);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace mra
