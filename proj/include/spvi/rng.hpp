#ifndef SPVI_RNG_HPP
#define SPVI_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "spvi/common.hpp"

namespace spvi {

// splitmix64 finalizer; used to derive independent stream seeds from a root
// seed and an index path, so that per-sample streams are reproducible no
// matter which thread evaluates them.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_path(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = root;
  for (std::uint64_t p : path) s = mix_seed(s, p);
  return s;
}

// One random stream. All randomness in the library flows through explicit
// streams; there is no global generator.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  RngStream derive(std::uint64_t idx) const {
    return RngStream(mix_seed(seed_, idx));
  }

  static RngStream from_path(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    return RngStream(mix_path(root, path));
  }

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Box-Muller with a cached second value; avoids the unspecified draw
  // order of std::normal_distribution across library versions.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  Vec normal_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  int rademacher() { return (gen_() & 1u) ? 1 : -1; }

  Vec rademacher_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<double>(rademacher());
    return v;
  }

  // uniform integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    return gen_() % n;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

}  // namespace spvi

#endif
