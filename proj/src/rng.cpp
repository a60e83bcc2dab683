#include "mtd/rng.hpp"

#include <cmath>

namespace mtd {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGamma;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double to_unit(std::uint64_t x) {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace

Vec NormalSource::normal_vector(std::uint64_t stream, std::uint64_t step,
                                int n, std::uint64_t index0) const {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(stream, step, index0 + i);
  return v;
}

Mat NormalSource::normal_matrix(std::uint64_t stream, std::uint64_t step,
                                int rows, int cols,
                                std::uint64_t index0) const {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = normal(stream, step, index0 + static_cast<std::uint64_t>(r) * cols + c);
  return m;
}

int NormalSource::uniform_int(std::uint64_t stream, std::uint64_t step, int n,
                              std::uint64_t index) const {
  int v = static_cast<int>(uniform(stream, step, index) * n);
  return v >= n ? n - 1 : v;
}

std::uint64_t SplitMixSource::cell(std::uint64_t stream, std::uint64_t step,
                                   std::uint64_t index) const {
  std::uint64_t h = splitmix64(seed_ ^ splitmix64(stream));
  h = splitmix64(h ^ splitmix64(step));
  return splitmix64(h ^ splitmix64(index));
}

double SplitMixSource::uniform(std::uint64_t stream, std::uint64_t step,
                               std::uint64_t index) const {
  return to_unit(cell(stream, step, index));
}

double SplitMixSource::normal(std::uint64_t stream, std::uint64_t step,
                              std::uint64_t index) const {
  // Box-Muller on two dedicated counters per draw.
  const std::uint64_t a = cell(stream, step, 2 * index);
  const std::uint64_t b = cell(stream, step, 2 * index + 1);
  // shift into (0, 1] so the log stays finite
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = to_unit(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_trial_seed(std::uint64_t master_seed,
                                std::uint64_t trial) {
  return splitmix64(splitmix64(master_seed) ^ (trial * kGamma + 1));
}

std::uint64_t derive_child_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag ^ 0xA5A5A5A5A5A5A5A5ULL));
}

}  // namespace mtd
