#ifndef SONOKIN_RNG_HPP
#define SONOKIN_RNG_HPP

#include <cmath>
#include <cstdint>

namespace sonokin {

// Deterministic generator. std::mt19937_64 output is pinned by the standard,
// but the std:: distributions are not, so uniform and gaussian draws are done
// by hand to keep byte-identical runs across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift64* — tiny, seedable, well distributed for simulation use
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (pairs cached).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

  /// Derive an independent stream by counter, not by draw order.
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix(master);
    h = splitmix(h ^ (a + 0x9E3779B97F4A7C15ULL));
    h = splitmix(h ^ (b + 0xBF58476D1CE4E5B9ULL));
    h = splitmix(h ^ (c + 0x94D049BB133111EBULL));
    return h;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sonokin

#endif  // SONOKIN_RNG_HPP
