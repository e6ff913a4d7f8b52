#pragma once

#include <seqsew/core.hpp>
#include <seqsew/datagen.hpp>
#include <seqsew/posterior.hpp>
#include <seqsew/prior.hpp>

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace seqsew {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Adaptation state reported after each prediction.
struct ForecasterState {
  double B = kNaN;    // threshold used for the current prediction
  double eta = kNaN;  // inverse temperature of the posterior used for it
  int regime = 0;
  double ess = kNaN;
};

struct RoundRecord {
  int t = 0;
  double y = 0.0;
  double yhat = 0.0;
  double loss = 0.0;
  double cumloss = 0.0;
  double B = kNaN;
  double eta = kNaN;
  int regime = 0;
  double ess = kNaN;
};

/// predict(phi) must be followed by exactly one observe(y) before the next
/// prediction; state() describes the most recent prediction.
template <typename F>
concept OnlineForecaster = requires(F f, const F cf, const Vector& phi, double y) {
  { f.predict(phi) } -> std::convertible_to<double>;
  f.observe(y);
  { cf.state() } -> std::same_as<ForecasterState>;
  { cf.dim() } -> std::convertible_to<int>;
};

namespace detail {

// Enforces the predict / observe alternation of the protocol.
class ProtocolGuard {
 public:
  void begin_predict() {
    if (pending_) throw StateError("predict called twice without observing the outcome");
    pending_ = true;
  }
  void begin_observe() {
    if (!pending_) throw StateError("observe called before predict");
    pending_ = false;
  }
  bool pending() const { return pending_; }

 private:
  bool pending_ = false;
};

}  // namespace detail

/// Exponentially weighted forecaster with fixed threshold B, inverse
/// temperature eta and prior scale tau.
class SeqSewFixed {
 public:
  SeqSewFixed(double B, double eta, double tau, int dim, const BackendConfig& backend)
      : B_(B), eta_(eta), cloud_(init_cloud(B, eta, tau, dim, backend)) {}

  double predict(const Vector& phi) {
    guard_.begin_predict();
    phi_ = phi;
    try {
      return cloud_.predict(phi, B_);
    } catch (...) {
      guard_.begin_observe();
      throw;
    }
  }

  void observe(double y) {
    guard_.begin_observe();
    cloud_.update(phi_, y, B_, eta_);
  }

  ForecasterState state() const { return {B_, eta_, 0, cloud_.ess()}; }
  int dim() const { return cloud_.dim(); }
  double tau() const { return cloud_.prior().tau(); }
  double threshold() const { return B_; }
  double eta() const { return eta_; }
  const PosteriorCloud& cloud() const { return cloud_; }
  CloudSnapshot snapshot() const { return cloud_.snapshot(B_); }

 private:
  static PosteriorCloud init_cloud(double B, double eta, double tau, int dim, const BackendConfig& backend) {
    require(B > 0.0 && std::isfinite(B), "seqsew_fixed: B must be positive");
    require(eta > 0.0 && std::isfinite(eta), "seqsew_fixed: eta must be positive");
    require(tau > 0.0 && std::isfinite(tau), "seqsew_fixed: tau must be positive");
    return PosteriorCloud::init(SparsityPrior(tau, dim), backend);
  }

  double B_;
  double eta_;
  PosteriorCloud cloud_;
  Vector phi_;
  detail::ProtocolGuard guard_;
};

/**
 * Forecaster with data-driven clipping: B_1 = 0, eta_1 = +inf, and after
 * round t
 *
 *     B_{t+1}^2 = 2^ceil(log2 max_{s<=t} y_s^2),   eta_{t+1} = 1 / (8 B_{t+1}^2).
 *
 * The posterior is always reweighted with the current eta over all past
 * clipped losses, each loss clipped at the threshold of its own round.
 *
 * `offset` shifts every linear prediction before clipping: the forecaster
 * predicts [u . phi + offset]_B. It is 0 for the plain algorithm.
 */
class SeqSewAdaptive {
 public:
  SeqSewAdaptive(double tau, int dim, const BackendConfig& backend, double offset = 0.0)
      : offset_(offset), cloud_(init_cloud(tau, dim, backend)) {
    require(std::isfinite(offset), "seqsew_adaptive: offset must be finite");
  }

  double predict(const Vector& phi) {
    guard_.begin_predict();
    phi_ = phi;
    try {
      return cloud_.predict(phi, B_, offset_);
    } catch (...) {
      guard_.begin_observe();
      throw;
    }
  }

  void observe(double y) {
    guard_.begin_observe();
    require(std::isfinite(y), "seqsew_adaptive: observation must be finite");
    max_y_sq_ = std::max(max_y_sq_, y * y);
    const double next_B_sq = dyadic_ceiling(max_y_sq_);
    const double next_B = std::sqrt(next_B_sq);
    const double next_eta = next_B_sq > 0.0 ? 1.0 / (8.0 * next_B_sq) : kInf;
    cloud_.update(phi_, y, B_, next_eta, offset_);
    B_ = next_B;
    ++rounds_;
  }

  ForecasterState state() const { return {B_, cloud_.eta(), 0, cloud_.ess()}; }
  int dim() const { return cloud_.dim(); }
  double tau() const { return cloud_.prior().tau(); }
  double threshold() const { return B_; }
  double eta() const { return cloud_.eta(); }
  double max_y_sq() const { return max_y_sq_; }
  int rounds() const { return rounds_; }
  double offset() const { return offset_; }
  const PosteriorCloud& cloud() const { return cloud_; }
  CloudSnapshot snapshot() const { return cloud_.snapshot(B_, offset_); }

 private:
  static PosteriorCloud init_cloud(double tau, int dim, const BackendConfig& backend) {
    require(tau > 0.0 && std::isfinite(tau), "seqsew_adaptive: tau must be positive");
    return PosteriorCloud::init(SparsityPrior(tau, dim), backend);
  }

  double offset_;
  double B_ = 0.0;
  double max_y_sq_ = 0.0;
  int rounds_ = 0;
  PosteriorCloud cloud_;
  Vector phi_;
  detail::ProtocolGuard guard_;
};

/// Prior scale of regime r: 1 / (exp(2^r) - 1).
inline double regime_tau(int r) {
  require(r >= 0, "regime_tau: r must be >= 0");
  return 1.0 / std::expm1(std::ldexp(1.0, r));
}

/**
 * Parameter-free forecaster. Rounds are split into regimes r = 0, 1, ...;
 * regime r ends at the first round t with gamma_t = ln(1 + sqrt(gram_t)) > 2^r,
 * where gram_t is the running sum of squared features. Each regime runs a
 * fresh SeqSewAdaptive with tau_r = 1 / (exp(2^r) - 1) on its own rounds only.
 *
 * exp(2^r) overflows for r >= 10, so regimes stop advancing at kMaxRegime.
 */
class SeqSewAuto {
 public:
  static constexpr int kMaxRegime = 9;

  SeqSewAuto(int dim, const BackendConfig& backend) : dim_(dim), backend_(backend) {
    require(dim >= 1, "seqsew_auto: dim must be >= 1");
    backend_.validate();
    regime_starts_.push_back(1);
    start_regime();
  }

  double predict(const Vector& phi) {
    if (guard_.pending()) throw StateError("predict called twice without observing the outcome");
    if (phi.size() != dim_) {
      throw ArgumentError("feature vector has length " + std::to_string(phi.size()) + ", expected " +
                          std::to_string(dim_));
    }
    if (!phi.allFinite()) throw DataError("feature vector contains non-finite values");
    const double yhat = inner_->predict(phi);
    guard_.begin_predict();
    const ForecasterState inner = inner_->state();
    last_B_ = inner.B;
    last_eta_ = inner.eta;
    last_ess_ = inner.ess;
    last_regime_ = r_;
    ++t_;
    gram_trace_ += phi.squaredNorm();
    gamma_ = std::log1p(std::sqrt(gram_trace_));
    gamma_history_.push_back(gamma_);
    ends_regime_ = gamma_ > std::ldexp(1.0, r_) && r_ < kMaxRegime;
    return yhat;
  }

  void observe(double y) {
    guard_.begin_observe();
    inner_->observe(y);
    if (ends_regime_) {
      regime_ends_.push_back(t_);
      ++r_;
      regime_starts_.push_back(t_ + 1);
      start_regime();
      ends_regime_ = false;
    }
  }

  // Describes the latest prediction, even after the observe that closed its
  // regime has already started the next one.
  ForecasterState state() const { return {last_B_, last_eta_, last_regime_, last_ess_}; }

  int dim() const { return dim_; }
  int regime() const { return r_; }
  double gram_trace() const { return gram_trace_; }
  double gamma() const { return gamma_; }
  double tau() const { return tau_; }
  const std::vector<int>& regime_starts() const { return regime_starts_; }
  const std::vector<int>& regime_ends() const { return regime_ends_; }
  const std::vector<double>& gamma_history() const { return gamma_history_; }
  const SeqSewAdaptive& inner() const { return *inner_; }

 private:
  void start_regime() {
    tau_ = regime_tau(r_);
    BackendConfig cfg = backend_;
    cfg.seed = mix_seed(backend_.seed, static_cast<std::uint64_t>(r_), 0x4e91);
    inner_.emplace(tau_, dim_, cfg);
  }

  int dim_;
  BackendConfig backend_;
  int r_ = 0;
  int t_ = 0;
  double tau_ = 0.0;
  double gram_trace_ = 0.0;
  double gamma_ = 0.0;
  bool ends_regime_ = false;
  std::vector<int> regime_starts_;
  std::vector<int> regime_ends_;
  std::vector<double> gamma_history_;
  std::optional<SeqSewAdaptive> inner_;
  detail::ProtocolGuard guard_;
  double last_B_ = 0.0;
  double last_eta_ = kInf;
  double last_ess_ = kNaN;
  int last_regime_ = 0;
};

/// Follow-the-regularized-leader least squares:
/// u_t = argmin lambda ||u||^2 + sum_{s<t} (y_s - u . phi_s)^2.
class RidgeBaseline {
 public:
  RidgeBaseline(double lambda, int dim) : lambda_(lambda), A_(Eigen::MatrixXd::Identity(dim, dim) * lambda),
                                           b_(Vector::Zero(dim)), u_(Vector::Zero(dim)) {
    require(lambda > 0.0 && std::isfinite(lambda), "ridge_baseline: regularization must be positive");
    require(dim >= 1, "ridge_baseline: dim must be >= 1");
  }

  double predict(const Vector& phi) {
    if (phi.size() != dim()) {
      throw ArgumentError("feature vector has length " + std::to_string(phi.size()) + ", expected " +
                          std::to_string(dim()));
    }
    if (!phi.allFinite()) throw DataError("feature vector contains non-finite values");
    guard_.begin_predict();
    phi_ = phi;
    return u_.dot(phi);
  }

  void observe(double y) {
    guard_.begin_observe();
    A_.noalias() += phi_ * phi_.transpose();
    b_ += y * phi_;
    u_ = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(A_).solve(b_);
  }

  ForecasterState state() const { return {}; }
  int dim() const { return static_cast<int>(b_.size()); }
  const Vector& weights() const { return u_; }

 private:
  double lambda_;
  Eigen::MatrixXd A_;
  Vector b_;
  Vector u_;
  Vector phi_;
  detail::ProtocolGuard guard_;
};

static_assert(OnlineForecaster<SeqSewFixed>);
static_assert(OnlineForecaster<SeqSewAdaptive>);
static_assert(OnlineForecaster<SeqSewAuto>);
static_assert(OnlineForecaster<RidgeBaseline>);

struct ProtocolResult {
  std::vector<RoundRecord> records;
  double cumulative_loss = 0.0;
};

/**
 * Runs the online protocol: for t = 1..T, predict from phi_t, then reveal y_t.
 * The forecaster only ever sees y_t after committing to its prediction.
 * Clipped forecasters are checked to satisfy |yhat_t| <= B_t on every round.
 */
template <OnlineForecaster F>
ProtocolResult run_protocol(F& forecaster, const FeatureSequence& seq) {
  require(seq.rounds() >= 1, "run_protocol: sequence must be nonempty");
  require(seq.phi.rows() == seq.rounds(), "run_protocol: features and outputs differ in length");
  if (seq.dim() != forecaster.dim()) {
    throw DataError("run_protocol: sequence has " + std::to_string(seq.dim()) + " features, forecaster expects " +
                    std::to_string(forecaster.dim()));
  }
  ProtocolResult result;
  result.records.reserve(static_cast<std::size_t>(seq.rounds()));
  for (Eigen::Index i = 0; i < seq.rounds(); ++i) {
    const int t = static_cast<int>(i) + 1;
    const Vector phi = seq.phi.row(i).transpose();
    const double y = seq.y[i];
    if (!phi.allFinite()) throw DataError("round " + std::to_string(t) + ": features are not finite");
    if (!std::isfinite(y)) throw DataError("round " + std::to_string(t) + ": observation is not finite");
    const double yhat = forecaster.predict(phi);
    const ForecasterState st = forecaster.state();
    if (!std::isnan(st.B) && std::abs(yhat) > st.B) {
      throw ContractError("round " + std::to_string(t) + ": prediction exceeds the clipping threshold");
    }
    forecaster.observe(y);
    const double loss = (y - yhat) * (y - yhat);
    result.cumulative_loss += loss;
    result.records.push_back({t, y, yhat, loss, result.cumulative_loss, st.B, st.eta, st.regime, st.ess});
  }
  return result;
}

/// Same protocol on raw inputs; features are computed by the dictionary and
/// failures are reported with the round index.
template <OnlineForecaster F>
ProtocolResult run_protocol(F& forecaster, const Dictionary& dict, const Matrix& inputs, const Vector& y) {
  require(inputs.rows() >= 1, "run_protocol: sequence must be nonempty");
  require(inputs.rows() == y.size(), "run_protocol: inputs and outputs differ in length");
  FeatureSequence seq{Matrix(inputs.rows(), dict.dim()), y};
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    try {
      seq.phi.row(i) = dict(inputs.row(i).transpose()).transpose();
    } catch (const Error& e) {
      throw DataError("round " + std::to_string(i + 1) + ": feature evaluation failed: " + e.what());
    }
  }
  return run_protocol(forecaster, seq);
}

}  // namespace seqsew
