#pragma once

#include <cmath>
#include <cstdint>

namespace lmdvit {

// Counter-based random stream: every draw is a pure function of (key, counter),
// so streams are reproducible across platforms and can be split without
// sharing state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  /// Independent child stream identified by `stream`.
  [[nodiscard]] CounterRng split(std::uint64_t stream) const {
    CounterRng child;
    child.key_ = mix(key_ + mix(stream + 0x632be59bd9b4e019ULL));
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ ^ mix(counter_++ * 0xd1b54a32d192ed03ULL)); }

  /// Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
  double truncated_normal(double std) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * std;
    }
  }

  /// Standard Gumbel sample.
  double gumbel() { return -std::log(-std::log(uniform())); }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace lmdvit
