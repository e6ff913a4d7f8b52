#pragma once

#include <seqsew/core.hpp>
#include <seqsew/prior.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace seqsew {

enum class BackendKind { importance, chain, quadrature };

inline std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::importance: return "importance";
    case BackendKind::chain: return "chain";
    case BackendKind::quadrature: return "quadrature";
  }
  return "unknown";
}

inline BackendKind backend_from_string(std::string_view name) {
  if (name == "importance") return BackendKind::importance;
  if (name == "chain") return BackendKind::chain;
  if (name == "quadrature") return BackendKind::quadrature;
  throw ArgumentError("unknown backend '" + std::string(name) + "' (expected importance, chain or quadrature)");
}

/// Numerical settings for posterior integration.
struct BackendConfig {
  BackendKind kind = BackendKind::importance;
  int n_samples = 10000;
  int burn_in = 200;             // chain: sweeps discarded after calibration
  double proposal_scale = 1.0;   // chain: initial random-walk scale in units of tau
  double ess_floor = 0.5;        // importance: resample when ESS < ess_floor * n_samples
  int grid_points_per_dim = 2048;
  double grid_radius_multiplier = 4.0;
  double grid_radius_hint = 0.0;  // data scale max|y| / min|phi| when known, else 0
  std::uint64_t seed = 1;

  void validate() const {
    if (kind != BackendKind::quadrature) {
      require(n_samples >= 100, "BackendConfig: n_samples must be >= 100 for stochastic backends");
      require(burn_in >= 0, "BackendConfig: burn_in must be >= 0");
      require(proposal_scale > 0.0, "BackendConfig: proposal_scale must be positive");
      require(ess_floor > 0.0 && ess_floor < 1.0, "BackendConfig: ess_floor must lie in (0, 1)");
    } else {
      require(grid_points_per_dim >= 64, "BackendConfig: grid_points_per_dim must be >= 64");
      require(grid_radius_multiplier > 0.0, "BackendConfig: grid_radius_multiplier must be positive");
      require(grid_radius_hint >= 0.0, "BackendConfig: grid_radius_hint must be >= 0");
    }
  }
};

/**
 * Deterministic tensor grid for integrals against the prior in d <= 2.
 *
 * Per coordinate the nodes are u = tau sinh(a z) at the midpoints of a uniform
 * partition of z in (-1, 1), with a = asinh(R / tau). Spacing is ~ uniform
 * inside |u| < tau and geometric beyond, so one grid resolves both the
 * prior's peak at the origin and its polynomial tails. R is at least 1e5 tau,
 * which leaves prior tail mass below 1e-15 outside the grid, and is widened to
 * cover the data scale when a hint is given. Node masses are the prior density
 * times the Jacobian, renormalised to sum to one.
 */
class QuadratureGrid {
 public:
  static constexpr double kTailRadius = 1e5;  // in units of tau

  QuadratureGrid(const SparsityPrior& prior, const BackendConfig& config) {
    if (prior.dim() > 2) {
      throw UnsupportedDimension("quadrature backend supports d <= 2, got d = " + std::to_string(prior.dim()));
    }
    require(config.grid_points_per_dim >= 64, "QuadratureGrid: grid_points_per_dim must be >= 64");
    const int g = config.grid_points_per_dim;
    const double tau = prior.tau();
    const double radius =
        std::max(kTailRadius * tau, config.grid_radius_multiplier * config.grid_radius_hint);
    const double a = std::asinh(radius / tau);
    const double dz = 2.0 / g;

    Vector nodes(g), log_mass(g);
    for (int k = 0; k < g; ++k) {
      const double z = -1.0 + (k + 0.5) * dz;
      nodes[k] = tau * std::sinh(a * z);
      log_mass[k] = prior.coordinate_log_density(nodes[k]) + std::log(tau * a * std::cosh(a * z) * dz);
    }
    log_mass.array() -= log_sum_exp(log_mass);

    const int d = prior.dim();
    const Eigen::Index n = d == 1 ? g : static_cast<Eigen::Index>(g) * g;
    Matrix points(n, d);
    log_mass_.resize(n);
    if (d == 1) {
      points.col(0) = nodes;
      log_mass_ = log_mass;
    } else {
      for (int k = 0; k < g; ++k) {
        for (int l = 0; l < g; ++l) {
          const Eigen::Index i = static_cast<Eigen::Index>(k) * g + l;
          points(i, 0) = nodes[k];
          points(i, 1) = nodes[l];
          log_mass_[i] = log_mass[k] + log_mass[l];
        }
      }
    }
    points_ = std::make_shared<const Matrix>(std::move(points));
  }

  const std::shared_ptr<const Matrix>& points() const { return points_; }
  const Vector& log_mass() const { return log_mass_; }

 private:
  std::shared_ptr<const Matrix> points_;
  Vector log_mass_;
};

/// Deterministic evaluation of  ∫ integrand(u) e^{-eta loss(u)} dπ(u) / ∫ e^{-eta loss(u)} dπ(u)
/// on the quadrature grid. Exact oracle for d <= 2.
template <typename LossFn, typename IntegrandFn>
double quadrature_expectation(const SparsityPrior& prior, LossFn&& loss, double eta, IntegrandFn&& integrand,
                              const BackendConfig& config) {
  require(eta >= 0.0, "quadrature_expectation: eta must be >= 0");
  const QuadratureGrid grid(prior, config);
  const Matrix& pts = *grid.points();
  Vector logw = grid.log_mass();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Vector u = pts.row(i).transpose();
    if (eta > 0.0) logw[i] -= eta * loss(u);
  }
  const double log_z = log_sum_exp(logw);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double w = std::exp(logw[i] - log_z);
    if (w > 0.0) acc += w * integrand(Vector(pts.row(i).transpose()));
  }
  return acc;
}

/// Immutable view of the posterior at one round: enough to evaluate the
/// clipped-mean regressor at arbitrary new feature vectors.
struct CloudSnapshot {
  std::shared_ptr<const Matrix> points;
  Vector weights;  // normalized
  double threshold = 0.0;
  double offset = 0.0;

  double predict(const Vector& phi) const {
    const Matrix& pts = *points;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      if (weights[i] == 0.0) continue;
      acc += weights[i] * clip(pts.row(i).dot(phi) + offset, threshold);
    }
    return acc;
  }
};

/**
 * Weighted-particle representation of the posterior
 *
 *     p_{t+1}(du) ∝ exp(-eta_{t+1} sum_{s<=t} (y_s - [u . phi_s + c_s]_{B_s})^2) π(du)
 *
 * where B_s is the threshold in force at round s and c_s an optional constant
 * added to every linear prediction (0 except for the offset-clipping batch
 * variant). Each particle caches its cumulative clipped loss, so changing eta
 * rescales the whole exponent exactly.
 *
 * log_weight_i = log_base_i - eta * loss_i, where log_base_i is the log mass of
 * the particle under the distribution it was drawn from, relative to the prior:
 *  - importance: 0 for prior draws; eta_r * loss_i(r) after a resample-move at
 *    round r (particles then follow p_r);
 *  - quadrature: log prior mass of the grid node;
 *  - chain: eta * loss_i at the last regeneration (particles follow p_t).
 */
class PosteriorCloud {
 public:
  static PosteriorCloud init(const SparsityPrior& prior, const BackendConfig& config) {
    config.validate();
    PosteriorCloud cloud(prior, config);
    if (config.kind == BackendKind::quadrature) {
      const QuadratureGrid grid(prior, config);
      cloud.points_ = grid.points();
      cloud.log_base_ = grid.log_mass();
    } else {
      Matrix pts(config.n_samples, prior.dim());
      for (int i = 0; i < config.n_samples; ++i) pts.row(i) = prior.sample(cloud.rng_).transpose();
      cloud.points_ = std::make_shared<const Matrix>(std::move(pts));
      cloud.log_base_ = Vector::Zero(config.n_samples);
      if (config.kind == BackendKind::chain) cloud.chain_state_ = cloud.points_->row(0).transpose();
    }
    cloud.cum_loss_ = Vector::Zero(cloud.size());
    cloud.refresh_weights();
    return cloud;
  }

  /// Cloud over caller-supplied nodes with prior masses exp(log_mass); tagged
  /// as a quadrature cloud (deterministic, never resampled).
  static PosteriorCloud from_nodes(const SparsityPrior& prior, Matrix nodes, const Vector& log_mass) {
    require(nodes.cols() == prior.dim(), "PosteriorCloud::from_nodes: node dimension mismatch");
    require(nodes.rows() == log_mass.size() && nodes.rows() > 0, "PosteriorCloud::from_nodes: size mismatch");
    BackendConfig config;
    config.kind = BackendKind::quadrature;
    PosteriorCloud cloud(prior, config);
    cloud.points_ = std::make_shared<const Matrix>(std::move(nodes));
    cloud.log_base_ = log_mass.array() - log_sum_exp(log_mass);
    cloud.cum_loss_ = Vector::Zero(cloud.size());
    cloud.refresh_weights();
    return cloud;
  }

  Eigen::Index size() const { return points_ ? points_->rows() : 0; }
  int dim() const { return prior_.dim(); }
  double eta() const { return eta_; }
  BackendKind backend() const { return config_.kind; }
  const BackendConfig& config() const { return config_; }
  const SparsityPrior& prior() const { return prior_; }
  const Matrix& points() const { return *points_; }
  const Vector& cum_clipped_loss() const { return cum_loss_; }
  const Vector& log_weights() const { return log_weight_; }
  const Vector& weights() const { return weights_; }
  const Vector& log_base() const { return log_base_; }
  std::size_t rounds() const { return log_y_.size(); }
  int resample_count() const { return resamples_; }

  /// Effective sample size 1 / sum w_i^2 of the normalized weights.
  double ess() const { return 1.0 / weights_.squaredNorm(); }

  /// Weighted mean of clip(u . phi + offset, threshold). Lies in [-threshold, threshold].
  double predict(const Vector& phi, double threshold, double offset = 0.0) const {
    if (size() == 0) throw StateError("PosteriorCloud::predict: empty cloud");
    check_features(phi);
    require(threshold >= 0.0, "PosteriorCloud::predict: threshold must be >= 0");
    if (threshold == 0.0) return 0.0;
    const Matrix& pts = *points_;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      if (weights_[i] == 0.0) continue;
      acc += weights_[i] * clip(pts.row(i).dot(phi) + offset, threshold);
    }
    return std::clamp(acc, -threshold, threshold);
  }

  /// Weighted mean of a function of the particle.
  template <typename Fn>
  double expectation(Fn&& fn) const {
    const Matrix& pts = *points_;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      if (weights_[i] == 0.0) continue;
      acc += weights_[i] * fn(Vector(pts.row(i).transpose()));
    }
    return acc;
  }

  /**
   * Adds round (phi, y) with the threshold that was used for predicting it and
   * moves to inverse temperature new_eta, which may not exceed the current one.
   */
  void update(const Vector& phi, double y, double threshold_used, double new_eta, double offset = 0.0) {
    if (size() == 0) throw StateError("PosteriorCloud::update: empty cloud");
    check_features(phi);
    require(std::isfinite(y), "PosteriorCloud::update: observation must be finite");
    require(threshold_used >= 0.0, "PosteriorCloud::update: threshold must be >= 0");
    require(!(new_eta < 0.0), "PosteriorCloud::update: eta must be >= 0");
    if (new_eta > eta_) {
      throw ContractError("PosteriorCloud::update: inverse temperature may not increase (" +
                          std::to_string(eta_) + " -> " + std::to_string(new_eta) + ")");
    }

    log_phi_.insert(log_phi_.end(), phi.data(), phi.data() + phi.size());
    log_y_.push_back(y);
    log_threshold_.push_back(threshold_used);
    log_offset_.push_back(offset);

    const Matrix& pts = *points_;
    parallel_for(static_cast<std::size_t>(pts.rows()), [&](std::size_t i) {
      const double r = y - clip(pts.row(i).dot(phi) + offset, threshold_used);
      cum_loss_[i] += r * r;
    });
    eta_ = new_eta;
    ++update_counter_;

    switch (config_.kind) {
      case BackendKind::quadrature:
        refresh_weights();
        break;
      case BackendKind::importance:
        refresh_weights();
        if (ess() < config_.ess_floor * static_cast<double>(size())) resample_move();
        break;
      case BackendKind::chain:
        regenerate_chain();
        break;
    }
  }

  CloudSnapshot snapshot(double threshold, double offset = 0.0) const {
    return CloudSnapshot{points_, weights_, threshold, offset};
  }

  /// Clipped loss of an arbitrary u over the recorded rounds.
  double recorded_loss(const Vector& u) const {
    const int d = dim();
    double loss = 0.0;
    for (std::size_t s = 0; s < log_y_.size(); ++s) {
      const Eigen::Map<const Vector> phi(log_phi_.data() + s * d, d);
      const double r = log_y_[s] - clip(u.dot(phi) + log_offset_[s], log_threshold_[s]);
      loss += r * r;
    }
    return loss;
  }

 private:
  PosteriorCloud(const SparsityPrior& prior, const BackendConfig& config)
      : prior_(prior), config_(config), rng_(mix_seed(config.seed, 0x5e95e3)) {}

  void check_features(const Vector& phi) const {
    if (phi.size() != dim()) {
      throw ArgumentError("feature vector has length " + std::to_string(phi.size()) + ", expected " +
                          std::to_string(dim()));
    }
    if (!phi.allFinite()) throw DataError("feature vector contains non-finite values");
  }

  // exp(-eta * loss) with the convention (+inf) * 0 = 0.
  static double tempered(double eta, double loss) {
    if (std::isinf(eta)) return loss == 0.0 ? 0.0 : -kInf;
    return -eta * loss;
  }

  void refresh_weights() {
    const Eigen::Index n = size();
    log_weight_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) log_weight_[i] = log_base_[i] + tempered(eta_, cum_loss_[i]);
    const double log_z = log_sum_exp(log_weight_);
    if (!std::isfinite(log_z)) throw StateError("PosteriorCloud: all particle weights vanished");
    weights_ = (log_weight_.array() - log_z).exp();
  }

  // Log target density (up to a constant) of the current posterior, given a
  // particle's loss over the recorded rounds.
  double log_target_coord_delta(double u_old, double u_new) const {
    return prior_.coordinate_log_density(u_new) - prior_.coordinate_log_density(u_old);
  }

  struct SweepStats {
    std::vector<int> proposed;
    std::vector<int> accepted;
  };

  // One Metropolis sweep over coordinates of `u` (in place) targeting the
  // current posterior; `margins` and `loss` are kept consistent with u.
  void metropolis_sweep(Vector& u, std::vector<double>& margins, double& loss, const Vector& scales, Rng& rng,
                        SweepStats* stats) const {
    const int d = dim();
    const std::size_t t = log_y_.size();
    std::vector<double> trial(t);
    for (int j = 0; j < d; ++j) {
      const double step = scales[j] * standard_normal(rng);
      const double proposal = u[j] + step;
      double trial_loss = 0.0;
      for (std::size_t s = 0; s < t; ++s) {
        trial[s] = margins[s] + step * log_phi_[s * d + j];
        const double r = log_y_[s] - clip(trial[s], log_threshold_[s]);
        trial_loss += r * r;
      }
      const double log_ratio =
          log_target_coord_delta(u[j], proposal) + tempered(eta_, trial_loss) - tempered(eta_, loss);
      const bool accept = log_ratio >= 0.0 || std::log(uniform_open01(rng)) < log_ratio;
      if (stats) {
        ++stats->proposed[j];
        stats->accepted[j] += accept;
      }
      if (accept) {
        u[j] = proposal;
        margins.swap(trial);
        trial.resize(t);
        loss = trial_loss;
      }
    }
  }

  void margins_for(const Vector& u, std::vector<double>& margins, double& loss) const {
    const int d = dim();
    const std::size_t t = log_y_.size();
    margins.resize(t);
    loss = 0.0;
    for (std::size_t s = 0; s < t; ++s) {
      const Eigen::Map<const Vector> phi(log_phi_.data() + s * d, d);
      margins[s] = u.dot(phi) + log_offset_[s];
      const double r = log_y_[s] - clip(margins[s], log_threshold_[s]);
      loss += r * r;
    }
  }

  // Systematic resampling followed by one Metropolis sweep per particle. The
  // per-coordinate random-walk scale is 2.4 times the weighted spread of the
  // cloud before resampling.
  void resample_move() {
    const Eigen::Index n = size();
    const int d = dim();
    const Matrix& old = *points_;

    Vector scales(d);
    for (int j = 0; j < d; ++j) {
      const double mean = weights_.dot(old.col(j));
      const double var = weights_.dot((old.col(j).array() - mean).square().matrix());
      scales[j] = std::max(2.4 * std::sqrt(var), 1e-3 * prior_.tau());
    }

    std::vector<Eigen::Index> parent(n);
    const double step = 1.0 / static_cast<double>(n);
    double position = uniform01(rng_) * step;
    double cumulative = weights_[0];
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      while (position > cumulative && k + 1 < n) cumulative += weights_[++k];
      parent[i] = k;
      position += step;
    }

    Matrix fresh(n, d);
    Vector fresh_loss(n);
    const std::uint64_t stream = mix_seed(config_.seed, update_counter_, 0xa11ce);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      Rng local(mix_seed(stream, i));
      Vector u = old.row(parent[i]).transpose();
      std::vector<double> margins;
      double loss = 0.0;
      margins_for(u, margins, loss);
      metropolis_sweep(u, margins, loss, scales, local, nullptr);
      fresh.row(i) = u.transpose();
      fresh_loss[i] = loss;
    });

    points_ = std::make_shared<const Matrix>(std::move(fresh));
    cum_loss_ = std::move(fresh_loss);
    for (Eigen::Index i = 0; i < n; ++i) log_base_[i] = -tempered(eta_, cum_loss_[i]);
    refresh_weights();
    ++resamples_;
  }

  // Chain backend: calibrate per-coordinate random-walk scales to 20-50%
  // acceptance, burn in, then keep n_samples states (one sweep apart) as an
  // equally weighted cloud.
  void regenerate_chain() {
    const int d = dim();
    const int n = config_.n_samples;
    if (chain_scales_.size() != d) chain_scales_ = Vector::Constant(d, config_.proposal_scale * prior_.tau());

    Vector u = chain_state_;
    std::vector<double> margins;
    double loss = 0.0;
    margins_for(u, margins, loss);

    constexpr int kPilotSweeps = 50;
    constexpr int kMaxPilots = 20;
    for (int pilot = 0; pilot < kMaxPilots; ++pilot) {
      SweepStats stats{std::vector<int>(d, 0), std::vector<int>(d, 0)};
      for (int s = 0; s < kPilotSweeps; ++s) metropolis_sweep(u, margins, loss, chain_scales_, rng_, &stats);
      bool settled = true;
      for (int j = 0; j < d; ++j) {
        const double rate = static_cast<double>(stats.accepted[j]) / stats.proposed[j];
        if (rate < 0.2) {
          chain_scales_[j] *= 0.5;
          settled = false;
        } else if (rate > 0.5) {
          chain_scales_[j] *= 2.0;
          settled = false;
        }
      }
      if (settled) break;
    }
    for (int s = 0; s < config_.burn_in; ++s) metropolis_sweep(u, margins, loss, chain_scales_, rng_, nullptr);

    Matrix states(n, d);
    Vector losses(n);
    for (int i = 0; i < n; ++i) {
      metropolis_sweep(u, margins, loss, chain_scales_, rng_, nullptr);
      states.row(i) = u.transpose();
      losses[i] = loss;
    }
    chain_state_ = u;
    points_ = std::make_shared<const Matrix>(std::move(states));
    cum_loss_ = std::move(losses);
    for (int i = 0; i < n; ++i) log_base_[i] = -tempered(eta_, cum_loss_[i]);
    refresh_weights();
  }

  SparsityPrior prior_;
  BackendConfig config_;
  Rng rng_;
  std::shared_ptr<const Matrix> points_;
  Vector log_base_;
  Vector cum_loss_;
  Vector log_weight_;
  Vector weights_;
  double eta_ = kInf;

  std::vector<double> log_phi_;  // row-major, one row of length d per round
  std::vector<double> log_y_;
  std::vector<double> log_threshold_;
  std::vector<double> log_offset_;

  std::uint64_t update_counter_ = 0;
  int resamples_ = 0;
  Vector chain_state_;
  Vector chain_scales_;
};

}  // namespace seqsew
