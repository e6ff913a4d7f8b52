#pragma once

#include <seqsew/batch.hpp>
#include <seqsew/bounds.hpp>
#include <seqsew/datagen.hpp>
#include <seqsew/forecasters.hpp>
#include <seqsew/io.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace seqsew {

/// One configured online run with its adaptation trace.
struct RunOutcome {
  ProtocolResult protocol;
  Tuning tuning;
  BackendConfig backend;
  std::vector<int> regime_starts;  // parameter-free forecaster only
  std::vector<int> regime_ends;
  std::vector<double> gamma_history;
};

inline RunOutcome run_forecaster(const ForecasterSpec& spec, const FeatureSequence& seq, const BackendConfig& backend) {
  backend.validate();
  RunOutcome out;
  out.tuning = resolve_tuning(spec, seq);
  out.backend = backend;
  const int d = static_cast<int>(seq.dim());
  switch (spec.kind) {
    case ForecasterKind::fixed: {
      SeqSewFixed f(out.tuning.B, out.tuning.eta, out.tuning.tau, d, backend);
      out.protocol = run_protocol(f, seq);
      break;
    }
    case ForecasterKind::adaptive: {
      SeqSewAdaptive f(out.tuning.tau, d, backend);
      out.protocol = run_protocol(f, seq);
      break;
    }
    case ForecasterKind::automatic: {
      SeqSewAuto f(d, backend);
      out.protocol = run_protocol(f, seq);
      out.regime_starts = f.regime_starts();
      out.regime_ends = f.regime_ends();
      out.gamma_history = f.gamma_history();
      break;
    }
    case ForecasterKind::ridge: {
      RidgeBaseline f(spec.lambda, d);
      out.protocol = run_protocol(f, seq);
      break;
    }
  }
  return out;
}

/// Non-fatal configuration problems worth reporting to the user.
inline std::vector<std::string> tuning_warnings(const Tuning& t, const FeatureSequence& seq) {
  std::vector<std::string> out;
  if (t.forecaster != ForecasterKind::fixed) return out;
  if (t.eta > 1.0 / (8.0 * t.B * t.B) * (1.0 + 1e-12))
    out.push_back("fixed forecaster: eta exceeds 1/(8 B^2); the regret guarantee does not apply");
  if (seq.rounds() > 0 && seq.y.cwiseAbs().maxCoeff() > t.B)
    out.push_back("fixed forecaster: some observations exceed B; the regret guarantee does not apply");
  return out;
}

/// Backend seed of replay k; replay 0 reproduces the plain run.
inline BackendConfig replay_backend(const BackendConfig& base, int k) {
  BackendConfig b = base;
  if (k > 0) b.seed = mix_seed(base.seed, static_cast<std::uint64_t>(k), 0x7e9);
  return b;
}

inline Json run_summary_json(const RunOutcome& run, const FeatureSequence& seq) {
  const SequenceStats st = SequenceStats::of(seq);
  Json j;
  j["schema"] = std::string(kSummarySchema);
  j["forecaster"] = std::string(to_string(run.tuning.forecaster));
  j["backend"] = backend_to_json(run.backend);
  Json tuning;
  if (run.tuning.forecaster == ForecasterKind::fixed) {
    tuning["B"] = json_number(run.tuning.B);
    tuning["eta"] = json_number(run.tuning.eta);
  }
  if (run.tuning.forecaster == ForecasterKind::fixed || run.tuning.forecaster == ForecasterKind::adaptive)
    tuning["tau"] = json_number(run.tuning.tau);
  j["tuning"] = tuning.is_null() ? Json::object() : tuning;
  j["T"] = st.T;
  j["d"] = seq.dim();
  j["cumulative_loss"] = json_number(run.protocol.cumulative_loss);
  j["max_y_sq"] = json_number(st.max_y_sq);
  j["gram_trace"] = json_number(st.gram_trace);

  // Rounds at which the threshold, temperature or regime changed.
  Json trace = Json::array();
  const RoundRecord* prev = nullptr;
  for (const auto& r : run.protocol.records) {
    const bool same_B = prev && (prev->B == r.B || (std::isnan(prev->B) && std::isnan(r.B)));
    const bool same_eta = prev && (prev->eta == r.eta || (std::isnan(prev->eta) && std::isnan(r.eta)));
    if (!prev || !same_B || !same_eta || prev->regime != r.regime) {
      trace.push_back({{"t", r.t}, {"B_t", json_number(r.B)}, {"eta_t", json_number(r.eta)}, {"regime", r.regime}});
    }
    prev = &r;
  }
  j["adaptation_trace"] = std::move(trace);
  if (run.tuning.forecaster == ForecasterKind::automatic) {
    j["regime_starts"] = run.regime_starts;
    j["regime_ends"] = run.regime_ends;
  }
  double min_ess = kInf;
  for (const auto& r : run.protocol.records)
    if (std::isfinite(r.ess)) min_ess = std::min(min_ess, r.ess);
  j["min_ess"] = json_number(min_ess);
  return j;
}

// ---------------------------------------------------------------------------
// Bound verification over replays and witnesses

struct VerifyOutcome {
  std::vector<BoundReport> reports;
  std::vector<SparseFit> witnesses;
  std::vector<double> cumulative_losses;
};

/// Checks that every name is a known bound; throws ArgumentError otherwise.
inline void check_bound_names(const std::vector<std::string>& names) {
  require(!names.empty(), "verify: no bounds requested");
  for (const auto& n : names) {
    const auto& known = bound_names();
    if (std::find(known.begin(), known.end(), n) == known.end()) throw ArgumentError("unknown bound '" + n + "'");
  }
}

/**
 * Runs the configured forecaster `replays` times (once for quadrature) and
 * checks each bound at the best comparator of each sparsity level. A level of
 * -1 stands for s = d. B_y and B_Phi are taken as the observed max |y| and
 * Gram trace.
 */
inline VerifyOutcome verify_configured(const ForecasterSpec& spec, const FeatureSequence& seq,
                                       const BackendConfig& backend, const VerifySpec& vs) {
  check_bound_names(vs.bounds);
  const int replays = backend.kind == BackendKind::quadrature ? 1 : vs.replays;
  require(replays >= 1, "verify: replays must be >= 1");
  VerifyOutcome out;
  RunSummary summary;
  summary.backend = backend.kind;
  for (int k = 0; k < replays; ++k) {
    const RunOutcome run = run_forecaster(spec, seq, replay_backend(backend, k));
    summary.tuning = run.tuning;
    summary.cumulative_losses.push_back(run.protocol.cumulative_loss);
  }
  out.cumulative_losses = summary.cumulative_losses;

  const SequenceStats st = SequenceStats::of(seq);
  BoundInputs inputs;
  inputs.B_y = std::sqrt(st.max_y_sq);
  inputs.B_Phi = st.gram_trace;
  inputs.d = static_cast<int>(seq.dim());
  for (int level : vs.sparsity_levels) {
    const int s = level < 0 ? static_cast<int>(seq.dim()) : std::min(level, static_cast<int>(seq.dim()));
    out.witnesses.push_back(best_sparse_comparator(seq, s, vs.allow_approximate));
  }
  for (const auto& bound : vs.bounds)
    for (const auto& w : out.witnesses) out.reports.push_back(verify(summary, bound, seq, w.comparator, inputs));
  return out;
}

// ---------------------------------------------------------------------------
// Translation check of the anchored batch variant

struct ShiftCheck {
  double shift = 0.0;
  int n_eval = 0;
  bool residuals_identical = false;  // (Y_t + c) - (Y_1 + c) == Y_t - Y_1 bitwise
  bool centered_identical = false;   // f^_c - anchor_c == f^ - anchor bitwise at every point
  double max_deviation = 0.0;        // max |f^_c(x) - f^(x) - c|
  double risk = 0.0;                 // L2 risk of the unshifted estimator
};

/// Rounds y to a multiple of 2^-bits so that shifting by a dyadic c is exact.
inline Vector quantize_dyadic(const Vector& y, int bits) {
  return (y.array() * std::ldexp(1.0, bits)).round().matrix() * std::ldexp(1.0, -bits);
}

/**
 * Fits the translated variant on Y and on Y + c with the same seeds and
 * compares the two estimators at n_eval fresh inputs. Outputs are first
 * quantized to 2^-30 and c to 2^-20 so the residual sequences coincide
 * exactly; the estimators are then required to agree bit for bit after
 * removing their anchors.
 */
inline ShiftCheck remark15_shift_check(const ScenarioSpec& spec, const BackendConfig& backend, double shift,
                                       int n_eval, AnchorClipping clipping = AnchorClipping::anchored) {
  require(n_eval >= 1, "shift check: n_eval must be >= 1");
  const StochasticData data = gen_stochastic(spec);
  const double c = std::round(shift * 0x1p20) * 0x1p-20;
  const Vector y = quantize_dyadic(data.train.y, 30);
  const Vector y_shift = (y.array() + c).matrix();
  const BatchEstimator base = fit_remark15(data.train.x, y, data.truth.dictionary, backend, clipping);
  const BatchEstimator moved = fit_remark15(data.train.x, y_shift, data.truth.dictionary, backend, clipping);

  ShiftCheck out;
  out.shift = c;
  out.n_eval = n_eval;
  out.residuals_identical = true;
  for (Eigen::Index t = 0; t < y.size(); ++t)
    out.residuals_identical &= (y_shift[t] - y_shift[0]) == (y[t] - y[0]);
  out.centered_identical = true;
  Rng rng(mix_seed(spec.seed, 0x5f1));
  double acc = 0.0;
  for (int i = 0; i < n_eval; ++i) {
    const Vector x = data.design.draw_fresh(rng);
    const double a = base.centered(x), b = moved.centered(x);
    out.centered_identical &= std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
    out.max_deviation = std::max(out.max_deviation, std::abs(moved(x) - base(x) - c));
    const double r = data.truth(x) - base(x);
    acc += r * r;
  }
  out.risk = acc / n_eval;
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct FamilySweepRow {
  std::string family;
  double psi = 0.0;               // analytic bound on E[max eps^2] / T
  double measured_max_sq = 0.0;   // empirical E[max eps^2] / T
  double measured_std_error = 0.0;
  BatchExperimentResult experiment;
};

inline std::vector<NoiseFamily> default_sweep_families() {
  return {NoiseFamily::bounded(1.0), NoiseFamily::subgaussian(1.0), NoiseFamily::exp_moment(1.0, 2.0),
          NoiseFamily::bounded_moment(3.0, 1.0)};
}

/// Repeats a cor11 experiment with each noise family and sets each family's
/// psi_T next to the measured maximal second moment.
inline std::vector<FamilySweepRow> family_sweep(const ScenarioSpec& spec, const BackendConfig& backend,
                                                const BatchExperimentConfig& cfg,
                                                const std::vector<NoiseFamily>& families) {
  std::vector<FamilySweepRow> rows;
  for (const auto& fam : families) {
    ScenarioSpec s = spec;
    s.noise = fam;
    BatchExperimentConfig c = cfg;
    c.variant = RiskVariant::cor11;
    FamilySweepRow row;
    row.family = fam.name();
    row.psi = psi_bound(fam, spec.T);
    const MaxSquareEstimate m = empirical_max_sq(fam, spec.T, 200, spec.seed);
    row.measured_max_sq = m.mean / spec.T;
    row.measured_std_error = m.std_error / spec.T;
    row.experiment = run_batch_experiment(s, backend, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

struct SigmaSweepRow {
  double sigma = 0.0;
  BatchExperimentResult experiment;
};

/// Re-runs the same experiment under Gaussian noise of each standard
/// deviation. Only the data change; the estimator never sees sigma.
inline std::vector<SigmaSweepRow> sigma_sweep(const ScenarioSpec& spec, const BackendConfig& backend,
                                              const BatchExperimentConfig& cfg, const std::vector<double>& sigmas) {
  std::vector<SigmaSweepRow> rows;
  for (double sigma : sigmas) {
    require(sigma > 0.0, "sigma sweep: sigma must be positive");
    ScenarioSpec s = spec;
    s.noise = NoiseFamily::subgaussian(sigma * sigma);
    rows.push_back({sigma, run_batch_experiment(s, backend, cfg)});
  }
  return rows;
}

}  // namespace seqsew
