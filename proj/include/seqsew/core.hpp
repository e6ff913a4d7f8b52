#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace seqsew {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error taxonomy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct UnsupportedDimension : Error {
  using Error::Error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ArgumentError(what);
}

/// Observed data in feature space: row t of `phi` is phi(x_t).
struct FeatureSequence {
  Matrix phi;
  Vector y;

  Eigen::Index rounds() const { return y.size(); }
  Eigen::Index dim() const { return phi.cols(); }
};

/// Projection of x onto [-bound, bound]. bound = 0 maps everything to 0.
inline double clip(double x, double bound) {
  if (x < -bound) return -bound;
  if (x > bound) return bound;
  return x;
}

/// Smallest integer k with 2^k >= z, for z > 0.
///
/// Uses the exponent of the floating representation, so exact powers of two
/// map to their own exponent (4 -> 2, not 3).
inline int ceil_log2(double z) {
  require(z > 0.0 && std::isfinite(z), "ceil_log2: argument must be positive and finite");
  int exponent = 0;
  const double mantissa = std::frexp(z, &exponent);  // z = mantissa * 2^exponent, mantissa in [0.5, 1)
  return mantissa == 0.5 ? exponent - 1 : exponent;
}

/// 2^ceil(log2 z) for z > 0, and 0 for z == 0. This is the squared threshold
/// of the doubling schedule.
inline double dyadic_ceiling(double z) {
  if (z <= 0.0) return 0.0;
  return std::ldexp(1.0, ceil_log2(z));
}

/// s * ln(1 + U / s) with the convention 0 * ln(1 + U/0) = 0.
inline double sparsity_log_term(double s, double U) {
  if (s <= 0.0) return 0.0;
  return s * std::log1p(U / s);
}

inline double l1_norm(const Vector& u) { return u.lpNorm<1>(); }

inline int l0_norm(const Vector& u) {
  int count = 0;
  for (Eigen::Index j = 0; j < u.size(); ++j) count += (u[j] != 0.0);
  return count;
}

/// Numerically stable log(sum(exp(v))).
inline double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return -kInf;
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// Worker count for internal parallel maps. Capped by SEQSEW_THREADS.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SEQSEW_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs body(i) for i in [0, n). Each index must be independent of the others;
/// results are then identical for any thread count. `grain` is the smallest
/// number of indices worth a thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t grain = 256) {
  const unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n / std::max<std::size_t>(grain, 1), 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &body] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Random variates are drawn from raw engine bits rather than <random>
// distributions, whose algorithms are implementation-defined; this keeps
// seeded outputs identical across standard libraries.

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform on (0, 1).
inline double uniform_open01(Rng& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

/// Standard normal via the Box-Muller transform (one variate per call).
inline double standard_normal(Rng& rng) {
  const double r = std::sqrt(-2.0 * std::log(uniform_open01(rng)));
  return r * std::cos(2.0 * M_PI * uniform01(rng));
}

/// SplitMix64 finalizer; derives independent stream seeds from (seed, a, b).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(seed) ^ a) ^ b);
}

}  // namespace seqsew
