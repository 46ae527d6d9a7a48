#include "mra/rng.hpp"

#include <cmath>
#include <numbers>

#include "mra/errors.hpp"

namespace mra {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x5eed5eed5eed5eedULL)), counter_(0) {}

Rng Rng::split(std::string_view name) const {
  return Rng(mix64(key_ ^ mix64(fnv1a(name))), 0);
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix64(key_ + mix64(index + 0x632be59bd9b4e019ULL)), 0);
}

std::uint64_t Rng::next_u64() {
  std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c * 0xd1b54a32d192ed03ULL + 1));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::open_uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = open_uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gumbel() { return -std::log(-std::log(open_uniform())); }

int Rng::below(int n) {
  if (n <= 0) throw ParameterError("Rng::below requires n > 0");
  return static_cast<int>(uniform() * n);
}

namespace {
template <class T>
int pick(Rng& rng, std::span<const T> probs) {
  if (probs.empty()) throw ParameterError("categorical over an empty support");
  double total = 0.0;
  for (T p : probs) total += p;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in rounding slack; return the last nonzero class
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return static_cast<int>(i);
  return static_cast<int>(probs.size()) - 1;
}
}  // namespace

int Rng::categorical(std::span<const double> probs) { return pick(*this, probs); }
int Rng::categorical(std::span<const float> probs) { return pick(*this, probs); }

}  // namespace mra
