#ifndef NBSLU_RANDOM_H_
#define NBSLU_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace nbslu {

// Mixes a base seed with a tag into a new 64-bit seed (splitmix64 finalizer).
uint64_t derive_seed(uint64_t seed, uint64_t tag);
uint64_t derive_seed(uint64_t seed, std::string_view tag);

// 64-bit FNV-1a.
uint64_t fnv1a(std::string_view bytes, uint64_t h = 14695981039346656037ULL);

// Thin wrapper over mt19937_64. The engine's output sequence is fixed by the
// standard, but std:: distributions are not, so the draws below are written
// out by hand to keep runs bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  // Uniform integer in [lo, hi].
  int64_t range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo) + 1));
  }
  double normal();
  // Normal(0, stddev^2) resampled until within two standard deviations.
  double truncated_normal(double stddev);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nbslu

#endif  // NBSLU_RANDOM_H_
