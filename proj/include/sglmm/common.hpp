#ifndef SGLMM_COMMON_HPP
#define SGLMM_COMMON_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sglmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double neg_inf = -std::numeric_limits<double>::infinity();
constexpr double pos_inf = std::numeric_limits<double>::infinity();

// Exit-code taxonomy: ConfigError -> 2, DataError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct DomainError : NumericError {
  explicit DomainError(const std::string& m) : NumericError(m) {}
};
struct SingularCovarianceError : NumericError {
  double attempted_jitter = 0.0;
  explicit SingularCovarianceError(const std::string& m, double jitter)
      : NumericError(m), attempted_jitter(jitter) {}
};
struct SeparabilityError : NumericError {
  std::vector<std::vector<int>> blocks;
  SeparabilityError(const std::string& m, std::vector<std::vector<int>> b)
      : NumericError(m), blocks(std::move(b)) {}
};
struct OptimizerError : NumericError {
  std::string trace;
  OptimizerError(const std::string& m, std::string t)
      : NumericError(m), trace(std::move(t)) {}
};

// SplitMix64, used to derive independent substream seeds from (seed, tags).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
  s = splitmix64(s ^ splitmix64(a));
  s = splitmix64(s ^ splitmix64(b ^ 0x14057b7ef767814fULL));
  return s;
}

// xoshiro256++; one instance per chain keyed by (seed, stream tags) so
// concurrent chains have independent, order-insensitive streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s = splitmix64(s);
      word = s;
    }
  }
  Rng(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b = 0)
      : Rng(mix_seed(seed, stream_a, stream_b)) {}

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform on (0,1)
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller; always consumes two uniforms.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Marsaglia-Tsang; alpha > 0, unit scale.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      double u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chisq(double df) { return 2.0 * gamma(0.5 * df); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

inline double logsumexp(const std::vector<double>& v) {
  double m = neg_inf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logsumexp(const Vec& v) {
  double m = neg_inf;
  for (Eigen::Index i = 0; i < v.size(); ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// log of the arithmetic mean of exp(v). Shared by the plain GIS estimator
// and the zero-coefficient control-variate path so the two agree bitwise.
inline double log_mean_exp(const Vec& v) {
  return logsumexp(v) - std::log(static_cast<double>(v.size()));
}

}  // namespace sglmm

#endif
