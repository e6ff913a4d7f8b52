#pragma once

#include <seqsew/core.hpp>

#include <cmath>
#include <string>

namespace seqsew {

/**
 * Heavy-tailed product prior over R^d used by the exponentially weighted
 * forecasters. Each coordinate has density
 *
 *     (3 / tau) / (2 (1 + |u| / tau)^4),
 *
 * a symmetric law with finite variance tau^2 and infinite fourth moment. In
 * high dimension draws are approximately sparse: most coordinates are of
 * order tau, a few are much larger.
 */
class SparsityPrior {
 public:
  SparsityPrior(double tau, int dim) : tau_(tau), dim_(dim) {
    require(tau > 0.0 && std::isfinite(tau), "SparsityPrior: tau must be positive and finite");
    require(dim >= 1, "SparsityPrior: dim must be >= 1");
  }

  double tau() const { return tau_; }
  int dim() const { return dim_; }

  /// Per-coordinate log density at scalar u.
  double coordinate_log_density(double u) const {
    return std::log(1.5 / tau_) - 4.0 * std::log1p(std::abs(u) / tau_);
  }

  double log_density(const Vector& u) const {
    if (u.size() != dim_) {
      throw ArgumentError("SparsityPrior::log_density: expected length " + std::to_string(dim_) +
                          ", got " + std::to_string(u.size()));
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < u.size(); ++j) acc += coordinate_log_density(u[j]);
    return acc;
  }

  /// P(|U_j| <= x) for one coordinate.
  double magnitude_cdf(double x) const {
    if (x <= 0.0) return 0.0;
    return 1.0 - std::pow(1.0 + x / tau_, -3.0);
  }

  /// Inverse of magnitude_cdf: maps V in [0, 1) to tau ((1 - V)^(-1/3) - 1).
  double magnitude_from_uniform(double v) const {
    require(v >= 0.0 && v < 1.0, "SparsityPrior::magnitude_from_uniform: V must lie in [0, 1)");
    return tau_ * (std::pow(1.0 - v, -1.0 / 3.0) - 1.0);
  }

  /// Exact draw: random sign times an inverse-CDF magnitude, per coordinate.
  Vector sample(Rng& rng) const {
    Vector u(dim_);
    for (int j = 0; j < dim_; ++j) {
      const bool negative = (rng() >> 63) != 0;
      const double m = magnitude_from_uniform(uniform01(rng));
      u[j] = negative ? -m : m;
    }
    return u;
  }

 private:
  double tau_;
  int dim_;
};

/// The prior shifted to be centred at `center`.
class TranslatedPrior {
 public:
  TranslatedPrior(SparsityPrior base, Vector center) : base_(base), center_(std::move(center)) {
    require(center_.size() == base_.dim(), "TranslatedPrior: center length must equal prior dimension");
  }

  const SparsityPrior& base() const { return base_; }
  const Vector& center() const { return center_; }

  double log_density(const Vector& u) const { return base_.log_density(u - center_); }

  Vector sample(Rng& rng) const { return center_ + base_.sample(rng); }

 private:
  SparsityPrior base_;
  Vector center_;
};

/// 4 ||u||_0 ln(1 + ||u||_1 / (||u||_0 tau)); zero at u = 0.
///
/// Upper bound on KL(translated prior at u || prior).
inline double kl_upper_bound(const Vector& u_star, double tau) {
  require(tau > 0.0, "kl_upper_bound: tau must be positive");
  const double s = l0_norm(u_star);
  if (s == 0.0) return 0.0;
  return 4.0 * sparsity_log_term(s, l1_norm(u_star) / tau);
}

/// 4 sum_j ln(1 + |u_j| / tau). Continuous in u and never larger than
/// kl_upper_bound (concavity of the logarithm).
inline double refined_sparsity_term(const Vector& u, double tau) {
  require(tau > 0.0, "refined_sparsity_term: tau must be positive");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) acc += std::log1p(std::abs(u[j]) / tau);
  return 4.0 * acc;
}

struct TranslatedLossCheck {
  double estimate;
  double std_error;
  double exact;
};

/**
 * Compares a Monte-Carlo estimate of
 *
 *     E_{u ~ translated prior at u_star} sum_t (y_t - u . phi_t)^2
 *
 * with its closed form sum_t (y_t - u_star . phi_t)^2 + tau^2 sum_{t,j} phi_tj^2.
 *
 * Plain sampling from the translated prior has infinite variance here (the
 * prior has no fourth moment), so the estimator draws each coordinate from a
 * Cauchy law with scale tau centred at u_star and reweights. The per-coordinate
 * weight (3 pi / 2)(1 + t^2) / (1 + |t|)^4 is bounded and makes the weighted
 * integrand square-integrable.
 */
inline TranslatedLossCheck translated_loss_identity_check(const Vector& u_star, double tau,
                                                          const FeatureSequence& seq, int n_mc, Rng& rng) {
  require(n_mc >= 1, "translated_loss_identity_check: n_mc must be >= 1");
  require(tau > 0.0, "translated_loss_identity_check: tau must be positive");
  require(seq.rounds() >= 1, "translated_loss_identity_check: sequence must be nonempty");
  require(seq.dim() == u_star.size(), "translated_loss_identity_check: dimension mismatch");

  const double exact = (seq.y - seq.phi * u_star).squaredNorm() + tau * tau * seq.phi.squaredNorm();

  const Eigen::Index d = u_star.size();
  double mean = 0.0;
  double m2 = 0.0;
  Vector u(d);
  for (int i = 0; i < n_mc; ++i) {
    double weight = 1.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double t = std::tan(M_PI * (uniform_open01(rng) - 0.5));
      u[j] = u_star[j] + tau * t;
      const double a = 1.0 + std::abs(t);
      weight *= 1.5 * M_PI * (1.0 + t * t) / (a * a * a * a);
    }
    const double value = weight * (seq.y - seq.phi * u).squaredNorm();
    const double delta = value - mean;
    mean += delta / (i + 1);
    m2 += delta * (value - mean);
  }
  const double se = n_mc > 1 ? std::sqrt(m2 / (n_mc - 1) / n_mc) : kInf;
  return {mean, se, exact};
}

struct DualityCheck {
  double lhs;
  double rhs;
};

/**
 * Both sides of the Gibbs variational formula on a finite set:
 *
 *     -ln sum_i pi_i exp(-h_i)  =  min_rho { sum_i rho_i h_i + KL(rho, pi) },
 *
 * with the right side evaluated at its minimiser rho_i ∝ pi_i exp(-h_i).
 */
inline DualityCheck kl_duality_check(const Vector& weights_pi, const Vector& h) {
  require(weights_pi.size() == h.size() && weights_pi.size() > 0, "kl_duality_check: size mismatch");
  require((weights_pi.array() >= 0.0).all(), "kl_duality_check: weights must be nonnegative");
  require(std::abs(weights_pi.sum() - 1.0) <= 1e-12 * weights_pi.size(),
          "kl_duality_check: weights must sum to 1");
  require(h.allFinite(), "kl_duality_check: h must be finite");

  const Eigen::Index n = h.size();
  Vector log_terms(n);
  for (Eigen::Index i = 0; i < n; ++i)
    log_terms[i] = weights_pi[i] > 0.0 ? std::log(weights_pi[i]) - h[i] : -kInf;
  const double log_z = log_sum_exp(log_terms);
  const double lhs = -log_z;

  // rho_i = exp(log_terms_i - log_z); ln(rho_i / pi_i) = -h_i - log_z.
  double expected_h = 0.0;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights_pi[i] == 0.0) continue;
    const double rho = std::exp(log_terms[i] - log_z);
    expected_h += rho * h[i];
    kl += rho * (-h[i] - log_z);
  }
  return {lhs, expected_h + kl};
}

}  // namespace seqsew
