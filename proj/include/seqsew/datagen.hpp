#pragma once

#include <seqsew/core.hpp>

#include <bit>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqsew {

// ---------------------------------------------------------------------------
// Dictionaries

enum class DictionaryKind { coordinate, fourier, random_signs };

inline std::string_view to_string(DictionaryKind kind) {
  switch (kind) {
    case DictionaryKind::coordinate: return "coordinate";
    case DictionaryKind::fourier: return "fourier";
    case DictionaryKind::random_signs: return "random_signs";
  }
  return "unknown";
}

inline DictionaryKind dictionary_from_string(std::string_view name) {
  if (name == "coordinate") return DictionaryKind::coordinate;
  if (name == "fourier") return DictionaryKind::fourier;
  if (name == "random_signs") return DictionaryKind::random_signs;
  throw ArgumentError("unknown dictionary '" + std::string(name) + "'");
}

/**
 * Base regressors phi_1..phi_d.
 *
 *  - coordinate:   x in R^d, phi_j(x) = x_j.
 *  - fourier:      x in [0, 1], phi_j(x) = sqrt(2) cos(2 pi k x) for odd j and
 *                  sqrt(2) sin(2 pi k x) for even j, k = ceil(j / 2). Orthonormal
 *                  in L2 of the uniform law on [0, 1].
 *  - random_signs: x in [0, 1], phi_j(x) = +-1 from a hash of (j, x).
 *
 * An optional normalization vector multiplies feature j by normalization_j.
 */
class Dictionary {
 public:
  Dictionary(DictionaryKind kind, int d, Vector normalization = Vector())
      : kind_(kind), d_(d), scale_(normalization.size() == 0 ? Vector::Ones(d) : std::move(normalization)) {
    require(d >= 1, "Dictionary: d must be >= 1");
    require(scale_.size() == d, "Dictionary: normalization must have length d");
    require(scale_.allFinite(), "Dictionary: normalization must be finite");
  }

  DictionaryKind kind() const { return kind_; }
  int dim() const { return d_; }
  const Vector& normalization() const { return scale_; }

  /// Length of the input vectors x.
  int input_dim() const { return kind_ == DictionaryKind::coordinate ? d_ : 1; }

  Vector operator()(const Vector& x) const {
    if (x.size() != input_dim()) {
      throw DataError("input has length " + std::to_string(x.size()) + ", dictionary expects " +
                      std::to_string(input_dim()));
    }
    if (!x.allFinite()) throw DataError("input contains non-finite values");
    Vector phi(d_);
    switch (kind_) {
      case DictionaryKind::coordinate:
        phi = x;
        break;
      case DictionaryKind::fourier:
        for (int j = 1; j <= d_; ++j) {
          const double k = std::ceil(j / 2.0);
          const double angle = 2.0 * M_PI * k * x[0];
          phi[j - 1] = std::sqrt(2.0) * (j % 2 == 1 ? std::cos(angle) : std::sin(angle));
        }
        break;
      case DictionaryKind::random_signs: {
        const auto bits = std::bit_cast<std::uint64_t>(x[0] == 0.0 ? 0.0 : x[0]);
        for (int j = 0; j < d_; ++j) phi[j] = (mix_seed(bits, static_cast<std::uint64_t>(j)) >> 63) ? 1.0 : -1.0;
        break;
      }
    }
    return phi.cwiseProduct(scale_);
  }

  /// sup_x max_j |phi_j(x)|; +inf for the unbounded coordinate kind.
  double sup_norm() const {
    const double s = scale_.cwiseAbs().maxCoeff();
    switch (kind_) {
      case DictionaryKind::coordinate: return kInf;
      case DictionaryKind::fourier: return std::sqrt(2.0) * s;
      case DictionaryKind::random_signs: return s;
    }
    return kInf;
  }

 private:
  DictionaryKind kind_;
  int d_;
  Vector scale_;
};

// ---------------------------------------------------------------------------
// Noise families

enum class NoiseKind { none, bounded, subgaussian, exp_moment, bounded_moment };

/// One of BD(B), SG(sigma2), BEM(alpha, M), BM(alpha, M), or no noise.
struct NoiseFamily {
  NoiseKind kind = NoiseKind::none;
  double B = 0.0;
  double sigma2 = 0.0;
  double alpha = 0.0;
  double M = 0.0;

  static NoiseFamily none() { return {}; }
  static NoiseFamily bounded(double B) { return {NoiseKind::bounded, B, 0.0, 0.0, 0.0}; }
  static NoiseFamily subgaussian(double sigma2) { return {NoiseKind::subgaussian, 0.0, sigma2, 0.0, 0.0}; }
  static NoiseFamily exp_moment(double alpha, double M) { return {NoiseKind::exp_moment, 0.0, 0.0, alpha, M}; }
  static NoiseFamily bounded_moment(double alpha, double M) {
    return {NoiseKind::bounded_moment, 0.0, 0.0, alpha, M};
  }

  void validate() const {
    switch (kind) {
      case NoiseKind::none: break;
      case NoiseKind::bounded: require(B > 0.0, "noise BD: B must be positive"); break;
      case NoiseKind::subgaussian: require(sigma2 > 0.0, "noise SG: sigma2 must be positive"); break;
      case NoiseKind::exp_moment:
        require(alpha > 0.0, "noise BEM: alpha must be positive");
        // A centred law has E e^{alpha |e|} > 1, so M <= 1 cannot be certified.
        require(M > 1.0, "noise BEM: M must exceed 1");
        break;
      case NoiseKind::bounded_moment:
        require(alpha > 2.0, "noise BM: alpha must exceed 2");
        require(M > 0.0, "noise BM: M must be positive");
        break;
    }
  }

  std::string name() const {
    switch (kind) {
      case NoiseKind::none: return "none";
      case NoiseKind::bounded: return "BD";
      case NoiseKind::subgaussian: return "SG";
      case NoiseKind::exp_moment: return "BEM";
      case NoiseKind::bounded_moment: return "BM";
    }
    return "unknown";
  }

  /// Laplace scale used for BEM: E e^{alpha |e|} = 1 / (1 - alpha b) = M.
  double laplace_scale() const { return (1.0 - 1.0 / M) / alpha; }

  /// Student-t degrees of freedom used for BM.
  double student_dof() const { return alpha + 2.0; }

  /// Multiplier c such that E |c T_nu|^alpha = M.
  double student_scale() const {
    const double nu = student_dof();
    const double log_moment = 0.5 * alpha * std::log(nu) + std::lgamma(0.5 * (alpha + 1.0)) +
                              std::lgamma(0.5 * (nu - alpha)) - 0.5 * std::log(M_PI) - std::lgamma(0.5 * nu);
    return std::exp((std::log(M) - log_moment) / alpha);
  }

  double draw(Rng& rng) const;
};

/// Gamma(shape, 1) variate by Marsaglia and Tsang, with the shape < 1 boost.
inline double gamma_variate(double shape, Rng& rng) {
  require(shape > 0.0, "gamma_variate: shape must be positive");
  if (shape < 1.0) return gamma_variate(shape + 1.0, rng) * std::pow(uniform_open01(rng), 1.0 / shape);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = standard_normal(rng);
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open01(rng);
    if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
  }
}

inline double NoiseFamily::draw(Rng& rng) const {
  switch (kind) {
    case NoiseKind::none: return 0.0;
    case NoiseKind::bounded: return B * (2.0 * uniform01(rng) - 1.0);
    case NoiseKind::subgaussian: return std::sqrt(sigma2) * standard_normal(rng);
    case NoiseKind::exp_moment: {
      const double magnitude = -laplace_scale() * std::log(uniform_open01(rng));
      return (rng() >> 63) ? magnitude : -magnitude;
    }
    case NoiseKind::bounded_moment: {
      const double nu = student_dof();
      const double z = standard_normal(rng);
      const double chi2 = 2.0 * gamma_variate(0.5 * nu, rng);
      return student_scale() * z / std::sqrt(chi2 / nu);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Scenarios

enum class DesignKind { iid_uniform, iid_gaussian, fixed_grid, adversarial_script };

inline std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::iid_uniform: return "iid_uniform";
    case DesignKind::iid_gaussian: return "iid_gaussian";
    case DesignKind::fixed_grid: return "fixed_grid";
    case DesignKind::adversarial_script: return "adversarial_script";
  }
  return "unknown";
}

inline DesignKind design_from_string(std::string_view name) {
  if (name == "iid_uniform") return DesignKind::iid_uniform;
  if (name == "iid_gaussian") return DesignKind::iid_gaussian;
  if (name == "fixed_grid") return DesignKind::fixed_grid;
  if (name == "adversarial_script") return DesignKind::adversarial_script;
  throw ArgumentError("unknown design '" + std::string(name) + "'");
}

/// From round `from` (1-based) on, features are multiplied by feature_scale
/// and outputs by amplitude.
struct ScriptSegment {
  int from = 1;
  double amplitude = 1.0;
  double feature_scale = 1.0;
};

struct ScenarioSpec {
  int T = 100;
  DictionaryKind dictionary = DictionaryKind::coordinate;
  int d = 1;
  Vector normalization;  // empty: all ones
  int s = -1;            // support size of u_true; -1 means "whatever u_true has"
  Vector u_true;
  DesignKind design = DesignKind::iid_uniform;
  int grid_points = 16;  // fixed_grid: number of distinct design points
  std::vector<ScriptSegment> script;
  NoiseFamily noise;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> design_seed;  // fixed_grid points; defaults to seed

  std::uint64_t grid_seed() const { return design_seed.value_or(seed); }

  Dictionary make_dictionary() const { return Dictionary(dictionary, d, normalization); }

  void validate() const {
    require(T >= 1, "scenario: T must be >= 1");
    require(d >= 1, "scenario: d must be >= 1");
    require(u_true.size() == d, "scenario: u_true must have length d");
    require(u_true.allFinite(), "scenario: u_true must be finite");
    if (s >= 0) require(l0_norm(u_true) == s, "scenario: ||u_true||_0 must equal s");
    require(grid_points >= 1, "scenario: grid_points must be >= 1");
    if (design == DesignKind::adversarial_script) {
      require(!script.empty(), "scenario: adversarial_script needs at least one segment");
      int previous = 0;
      for (const auto& seg : script) {
        require(seg.from > previous, "scenario: script segments must start at increasing rounds");
        require(std::isfinite(seg.amplitude) && std::isfinite(seg.feature_scale),
                "scenario: script amplitudes must be finite");
        previous = seg.from;
      }
      require(script.front().from == 1, "scenario: first script segment must start at round 1");
    }
    noise.validate();
    (void)make_dictionary();
  }
};

/// Draws inputs x from the scenario's design.
class DesignSampler {
 public:
  DesignSampler(const ScenarioSpec& spec, const Dictionary& dict)
      : kind_(spec.design), input_dim_(dict.input_dim()), coordinate_(dict.kind() == DictionaryKind::coordinate) {
    if (kind_ == DesignKind::fixed_grid) {
      grid_.resize(spec.grid_points, input_dim_);
      if (coordinate_) {
        Rng rng(mix_seed(spec.grid_seed(), 0x6e1d));
        for (int i = 0; i < spec.grid_points; ++i)
          for (int j = 0; j < input_dim_; ++j) grid_(i, j) = 2.0 * uniform01(rng) - 1.0;
      } else {
        for (int i = 0; i < spec.grid_points; ++i) grid_(i, 0) = (i + 0.5) / spec.grid_points;
      }
    }
  }

  /// Input for round t (1-based). Fixed grids cycle through their points.
  Vector draw(Rng& rng, int t) const {
    Vector x(input_dim_);
    switch (kind_) {
      case DesignKind::iid_uniform:
      case DesignKind::adversarial_script:
        for (int j = 0; j < input_dim_; ++j) x[j] = coordinate_ ? 2.0 * uniform01(rng) - 1.0 : uniform01(rng);
        break;
      case DesignKind::iid_gaussian:
        for (int j = 0; j < input_dim_; ++j) x[j] = standard_normal(rng);
        break;
      case DesignKind::fixed_grid:
        x = grid_.row((t - 1) % grid_.rows()).transpose();
        break;
    }
    return x;
  }

  /// Draw from the design law P^X (for fixed grids: a uniformly chosen point).
  Vector draw_fresh(Rng& rng) const {
    if (kind_ == DesignKind::fixed_grid) {
      const auto i = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(grid_.rows()));
      return grid_.row(i).transpose();
    }
    return draw(rng, 1);
  }

  const Matrix& grid() const { return grid_; }

 private:
  DesignKind kind_;
  int input_dim_;
  bool coordinate_;
  Matrix grid_;
};

/// Generated data. Row t of `x` is the input, row t of `phi` the feature
/// vector seen by the forecaster, y = f + noise.
struct Dataset {
  Matrix x;
  Matrix phi;
  Vector y;
  Vector f;
  Vector noise;

  int rounds() const { return static_cast<int>(y.size()); }
  FeatureSequence features() const { return {phi, y}; }
};

/// Segment active at round t (1-based).
inline const ScriptSegment& active_segment(const std::vector<ScriptSegment>& script, int t) {
  const ScriptSegment* current = &script.front();
  for (const auto& seg : script)
    if (seg.from <= t) current = &seg;
  return *current;
}

/// Deterministic individual sequence. For adversarial scripts, round t uses
/// features feature_scale * phi(x_t) and output amplitude * (u_true . features + noise).
inline Dataset gen_individual_sequence(const ScenarioSpec& spec) {
  spec.validate();
  const Dictionary dict = spec.make_dictionary();
  const DesignSampler design(spec, dict);
  Rng x_rng(mix_seed(spec.seed, 1));
  Rng noise_rng(mix_seed(spec.seed, 2));

  Dataset data;
  data.x.resize(spec.T, dict.input_dim());
  data.phi.resize(spec.T, spec.d);
  data.y.resize(spec.T);
  data.f.resize(spec.T);
  data.noise.resize(spec.T);
  for (int t = 1; t <= spec.T; ++t) {
    const Vector x = design.draw(x_rng, t);
    Vector phi = dict(x);
    double amplitude = 1.0;
    if (spec.design == DesignKind::adversarial_script) {
      const ScriptSegment& seg = active_segment(spec.script, t);
      phi *= seg.feature_scale;
      amplitude = seg.amplitude;
    }
    const double f = amplitude * spec.u_true.dot(phi);
    const double e = amplitude * spec.noise.draw(noise_rng);
    data.x.row(t - 1) = x.transpose();
    data.phi.row(t - 1) = phi.transpose();
    data.f[t - 1] = f;
    data.noise[t - 1] = e;
    data.y[t - 1] = f + e;
  }
  return data;
}

/// Regression function f(x) = u . phi(x).
struct LinearTruth {
  Dictionary dictionary;
  Vector u;
  double operator()(const Vector& x) const { return u.dot(dictionary(x)); }
};

struct StochasticData {
  Dataset train;
  LinearTruth truth;
  DesignSampler design;
  std::optional<Vector> feature_l2_sq;  // ||phi_j||^2_{L2(P^X)} when known in closed form
};

/// Closed-form ||phi_j||^2 under the design law, when one exists.
inline std::optional<Vector> closed_form_feature_l2(const ScenarioSpec& spec, const Dictionary& dict,
                                                    const DesignSampler& design) {
  const Vector scale2 = dict.normalization().array().square();
  if (spec.design == DesignKind::fixed_grid) {
    Vector acc = Vector::Zero(spec.d);
    const Matrix& grid = design.grid();
    for (Eigen::Index i = 0; i < grid.rows(); ++i) acc += dict(grid.row(i).transpose()).array().square().matrix();
    return Vector(acc / static_cast<double>(grid.rows()));
  }
  switch (dict.kind()) {
    case DictionaryKind::random_signs:
      if (spec.design == DesignKind::adversarial_script) return std::nullopt;
      return scale2;
    case DictionaryKind::coordinate:
      if (spec.design == DesignKind::iid_uniform) return Vector(scale2 / 3.0);
      if (spec.design == DesignKind::iid_gaussian) return scale2;
      return std::nullopt;
    case DictionaryKind::fourier:
      if (spec.design == DesignKind::iid_uniform) return scale2;
      if (spec.design == DesignKind::iid_gaussian) {
        // E[2 cos^2(2 pi k X)] = 1 + exp(-8 pi^2 k^2) for X ~ N(0, 1); minus for sin.
        Vector out(spec.d);
        for (int j = 1; j <= spec.d; ++j) {
          const double k = std::ceil(j / 2.0);
          const double damp = std::exp(-8.0 * M_PI * M_PI * k * k);
          out[j - 1] = scale2[j - 1] * (j % 2 == 1 ? 1.0 + damp : 1.0 - damp);
        }
        return out;
      }
      return std::nullopt;
  }
  return std::nullopt;
}

/// i.i.d. (or fixed-design) regression data Y = f(X) + eps with f = u_true . phi.
inline StochasticData gen_stochastic(const ScenarioSpec& spec) {
  spec.validate();
  require(spec.design != DesignKind::adversarial_script, "gen_stochastic: adversarial scripts are not stochastic");
  const Dictionary dict = spec.make_dictionary();
  DesignSampler design(spec, dict);
  Dataset train = gen_individual_sequence(spec);
  auto closed = closed_form_feature_l2(spec, dict, design);
  return {std::move(train), LinearTruth{dict, spec.u_true}, std::move(design), std::move(closed)};
}

struct FeatureL2Estimate {
  Vector value;
  Vector std_error;
};

/// Monte-Carlo estimate of ||phi_j||^2_{L2(P^X)} with its standard error.
inline FeatureL2Estimate estimate_feature_l2(const Dictionary& dict, const DesignSampler& design, int n_draws,
                                             std::uint64_t seed) {
  require(n_draws >= 2, "estimate_feature_l2: n_draws must be >= 2");
  Rng rng(mix_seed(seed, 0xf2));
  const int d = dict.dim();
  Vector mean = Vector::Zero(d), m2 = Vector::Zero(d);
  for (int i = 0; i < n_draws; ++i) {
    const Vector v = dict(design.draw_fresh(rng)).array().square();
    const Vector delta = v - mean;
    mean += delta / (i + 1.0);
    m2 += delta.cwiseProduct(v - mean);
  }
  return {mean, (m2 / (n_draws - 1.0) / n_draws).cwiseSqrt()};
}

}  // namespace seqsew
