#pragma once

#include <seqsew/core.hpp>
#include <seqsew/posterior.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace seqsew {

/// Data-dependent quantities entering the regret bounds.
struct SequenceStats {
  int T = 0;
  double max_y_sq = 0.0;
  double gram_trace = 0.0;
  double B_T1_sq = 0.0;  // 2^ceil(log2 max_y_sq), 0 when all y vanish
  double A_T = 2.0;      // 2 + log2 ln(e + sqrt(gram_trace))

  static SequenceStats of(const FeatureSequence& seq) {
    SequenceStats st;
    st.T = static_cast<int>(seq.rounds());
    st.max_y_sq = seq.rounds() > 0 ? seq.y.cwiseAbs2().maxCoeff() : 0.0;
    st.gram_trace = seq.phi.squaredNorm();
    st.B_T1_sq = dyadic_ceiling(st.max_y_sq);
    st.A_T = 2.0 + std::log2(std::log(M_E + std::sqrt(st.gram_trace)));
    return st;
  }
};

/// A fixed linear combination u together with its norms and cumulative loss.
struct Comparator {
  Vector u;
  int l0 = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double cumulative_loss = 0.0;

  static Comparator of(const Vector& u, const FeatureSequence& seq) {
    require(u.size() == seq.dim(), "Comparator: dimension mismatch");
    return {u, l0_norm(u), l1_norm(u), u.norm(), (seq.y - seq.phi * u).squaredNorm()};
  }
};

// Regret bound right-hand sides, evaluated at a single comparator. Each uses
// the convention 0 ln(1 + U / 0) = 0 through sparsity_log_term.

inline double prop2_rhs(const Comparator& u, double eta, double tau, const SequenceStats& st) {
  require(eta > 0.0, "prop2_rhs: eta must be positive");
  require(tau > 0.0, "prop2_rhs: tau must be positive");
  return u.cumulative_loss + (4.0 / eta) * sparsity_log_term(u.l0, u.l1 / tau) + tau * tau * st.gram_trace;
}

/// Variant for approximately sparse comparators: ||u||_0 ln(1 + ||u||_1 / (||u||_0 tau))
/// is replaced by sum_j ln(1 + |u_j| / tau).
inline double prop2_refined_rhs(const Comparator& u, double eta, double tau, const SequenceStats& st) {
  require(eta > 0.0, "prop2_refined_rhs: eta must be positive");
  require(tau > 0.0, "prop2_refined_rhs: tau must be positive");
  return u.cumulative_loss + refined_sparsity_term(u.u, tau) / eta + tau * tau * st.gram_trace;
}

inline double cor3_rhs(const Comparator& u, double B_y, double B_Phi) {
  require(B_y > 0.0, "cor3_rhs: B_y must be positive");
  require(B_Phi > 0.0, "cor3_rhs: B_Phi must be positive");
  return u.cumulative_loss + 32.0 * B_y * B_y * sparsity_log_term(u.l0, std::sqrt(B_Phi) * u.l1 / (4.0 * B_y)) +
         16.0 * B_y * B_y;
}

inline double prop5_rhs(const Comparator& u, double tau, const SequenceStats& st) {
  require(tau > 0.0, "prop5_rhs: tau must be positive");
  return u.cumulative_loss + 32.0 * st.B_T1_sq * sparsity_log_term(u.l0, u.l1 / tau) +
         tau * tau * st.gram_trace + 16.0 * st.B_T1_sq;
}

inline double cor6_rhs(const Comparator& u, double B_Phi, const SequenceStats& st) {
  require(B_Phi > 0.0, "cor6_rhs: B_Phi must be positive");
  return u.cumulative_loss + 32.0 * st.B_T1_sq * sparsity_log_term(u.l0, std::sqrt(B_Phi) * u.l1) +
         16.0 * st.B_T1_sq + 1.0;
}

inline double cor7_rhs(const Comparator& u, int d, const SequenceStats& st) {
  require(d >= 1, "cor7_rhs: d must be >= 1");
  require(st.T >= 1, "cor7_rhs: T must be >= 1");
  const double dT = static_cast<double>(d) * st.T;
  return u.cumulative_loss + 32.0 * st.B_T1_sq * sparsity_log_term(u.l0, std::sqrt(dT) * u.l1) +
         st.gram_trace / dT + 16.0 * st.B_T1_sq;
}

/// Regret cap of the parameter-free forecaster over {||u||_0 <= s, ||u||_1 <= U}.
inline double cor9_rhs(double s, double U, const SequenceStats& st) {
  require(s >= 0.0, "cor9_rhs: s must be >= 0");
  require(U >= 0.0, "cor9_rhs: U must be >= 0");
  const double log_gram = std::log(M_E + std::sqrt(st.gram_trace));
  return 256.0 * st.max_y_sq * s * log_gram + 64.0 * st.max_y_sq * st.A_T * sparsity_log_term(s, U) +
         (1.0 + 38.0 * st.max_y_sq) * st.A_T;
}

inline double thm8_rhs(const Comparator& u, const SequenceStats& st) {
  return u.cumulative_loss + cor9_rhs(u.l0, u.l1, st);
}

// ---------------------------------------------------------------------------
// Comparator oracle

struct SparseFit {
  Comparator comparator;
  std::vector<int> support;
  bool approximate = false;
};

namespace detail {

inline Vector solve_on_support(const FeatureSequence& seq, const std::vector<int>& support) {
  Vector u = Vector::Zero(seq.dim());
  if (support.empty()) return u;
  Eigen::MatrixXd A(seq.rounds(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) A.col(static_cast<Eigen::Index>(k)) = seq.phi.col(support[k]);
  const Vector coef = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(A).solve(seq.y);
  for (std::size_t k = 0; k < support.size(); ++k) u[support[k]] = coef[static_cast<Eigen::Index>(k)];
  return u;
}

// Strict "a is preferred to b": smaller loss, then smaller l1, then the
// lexicographically smaller support. Losses within a relative 1e-12 tie.
inline bool better_fit(const SparseFit& a, const SparseFit& b) {
  const double la = a.comparator.cumulative_loss, lb = b.comparator.cumulative_loss;
  const double tol = 1e-12 * std::max({1.0, std::abs(la), std::abs(lb)});
  if (la < lb - tol) return true;
  if (lb < la - tol) return false;
  if (a.comparator.l1 != b.comparator.l1) return a.comparator.l1 < b.comparator.l1;
  return a.support < b.support;
}

inline void enumerate_supports(int d, int k, std::vector<std::vector<int>>& out) {
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == d - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

inline constexpr int kMaxEnumerationDim = 20;

/**
 * Minimiser of sum_t (y_t - u . phi_t)^2 over ||u||_0 <= s, by enumerating all
 * supports of size <= s with a least-squares solve on each (pseudo-inverse
 * when rank deficient). For d > 20 this refuses unless allow_approximate is
 * set, in which case greedy forward selection is used and the result is
 * marked approximate.
 */
inline SparseFit best_sparse_comparator(const FeatureSequence& seq, int s, bool allow_approximate = false) {
  const int d = static_cast<int>(seq.dim());
  require(seq.rounds() >= 1, "best_sparse_comparator: sequence must be nonempty");
  require(s >= 0 && s <= d, "best_sparse_comparator: need 0 <= s <= d");

  if (d > kMaxEnumerationDim) {
    if (!allow_approximate) {
      throw ArgumentError("best_sparse_comparator: exact enumeration is limited to d <= 20 (d = " +
                          std::to_string(d) + "); enable the approximate flag for greedy forward selection");
    }
    std::vector<int> support;
    SparseFit best{Comparator::of(Vector::Zero(d), seq), {}, true};
    for (int step = 0; step < s; ++step) {
      SparseFit round_best = best;
      bool improved = false;
      for (int j = 0; j < d; ++j) {
        if (std::find(support.begin(), support.end(), j) != support.end()) continue;
        std::vector<int> trial = support;
        trial.insert(std::upper_bound(trial.begin(), trial.end(), j), j);
        SparseFit fit{Comparator::of(detail::solve_on_support(seq, trial), seq), trial, true};
        if (!improved || detail::better_fit(fit, round_best)) {
          round_best = fit;
          improved = true;
        }
      }
      if (!improved) break;
      support = round_best.support;
      if (detail::better_fit(round_best, best)) best = round_best;
    }
    return best;
  }

  std::vector<std::vector<int>> supports{{}};
  for (int k = 1; k <= s; ++k) detail::enumerate_supports(d, k, supports);
  std::vector<SparseFit> fits(supports.size());
  parallel_for(supports.size(), [&](std::size_t i) {
    fits[i] = {Comparator::of(detail::solve_on_support(seq, supports[i]), seq), supports[i], false};
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < fits.size(); ++i)
    if (detail::better_fit(fits[i], fits[best])) best = i;
  return fits[best];
}

// ---------------------------------------------------------------------------
// Verification

enum class ForecasterKind { fixed, adaptive, automatic, ridge };

inline std::string_view to_string(ForecasterKind kind) {
  switch (kind) {
    case ForecasterKind::fixed: return "fixed";
    case ForecasterKind::adaptive: return "adaptive";
    case ForecasterKind::automatic: return "auto";
    case ForecasterKind::ridge: return "ridge";
  }
  return "unknown";
}

/// Tuning of the forecaster that produced a run.
struct Tuning {
  ForecasterKind forecaster = ForecasterKind::adaptive;
  double B = kInf;    // fixed forecaster only
  double eta = kInf;  // fixed forecaster only
  double tau = kInf;  // fixed and adaptive forecasters
};

/// Cumulative losses of reseeded replays of one configuration on one sequence.
struct RunSummary {
  std::vector<double> cumulative_losses;
  BackendKind backend = BackendKind::quadrature;
  Tuning tuning;
};

/// Constants the caller claims for the sequence; checked against the data.
struct BoundInputs {
  double B_y = 0.0;    // cor3
  double B_Phi = 0.0;  // cor3, cor6
  int d = 0;           // cor7 (defaults to the sequence dimension)
};

struct BoundReport {
  std::string bound;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double mc_allowance = 0.0;
  Vector witness_u;
  bool pass = false;
  bool ambiguous = false;  // passes only thanks to the Monte-Carlo allowance
};

inline const std::vector<std::string>& bound_names() {
  static const std::vector<std::string> names{"prop2", "prop2_refined", "cor3", "prop5",
                                              "cor6",  "cor7",          "thm8", "cor9"};
  return names;
}

namespace detail {

inline bool close_rel(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); }

inline void expect_forecaster(const std::string& bound, const Tuning& tuning, ForecasterKind kind) {
  if (tuning.forecaster != kind) {
    throw ContractError(bound + " applies to the " + std::string(to_string(kind)) + " forecaster, run used " +
                        std::string(to_string(tuning.forecaster)));
  }
}

}  // namespace detail

/**
 * Compares the mean cumulative loss of the replays with a regret bound at the
 * given witness comparator. For stochastic backends the allowance is three
 * standard errors of that mean; quadrature runs get no allowance.
 */
inline BoundReport verify(const RunSummary& run, const std::string& bound, const FeatureSequence& seq,
                          const Comparator& witness, const BoundInputs& inputs = {}) {
  require(!run.cumulative_losses.empty(), "verify: run has no replays");
  require(seq.rounds() >= 1, "verify: sequence must be nonempty");
  const SequenceStats st = SequenceStats::of(seq);
  const Tuning& tn = run.tuning;
  const int d = inputs.d > 0 ? inputs.d : static_cast<int>(seq.dim());

  double rhs = 0.0;
  if (bound == "prop2" || bound == "prop2_refined") {
    detail::expect_forecaster(bound, tn, ForecasterKind::fixed);
    if (std::sqrt(st.max_y_sq) > tn.B) throw ContractError(bound + ": observations exceed the threshold B");
    if (tn.eta > 1.0 / (8.0 * tn.B * tn.B) * (1.0 + 1e-12)) throw ContractError(bound + ": eta exceeds 1/(8B^2)");
    rhs = bound == "prop2" ? prop2_rhs(witness, tn.eta, tn.tau, st) : prop2_refined_rhs(witness, tn.eta, tn.tau, st);
  } else if (bound == "cor3") {
    detail::expect_forecaster(bound, tn, ForecasterKind::fixed);
    require(inputs.B_y > 0.0 && inputs.B_Phi > 0.0, "verify cor3: B_y and B_Phi are required");
    if (std::sqrt(st.max_y_sq) > inputs.B_y) throw ContractError("cor3: observations exceed B_y");
    if (st.gram_trace > inputs.B_Phi) throw ContractError("cor3: Gram trace exceeds B_Phi");
    if (!detail::close_rel(tn.B, inputs.B_y) || !detail::close_rel(tn.eta, 1.0 / (8.0 * inputs.B_y * inputs.B_y)) ||
        !detail::close_rel(tn.tau, std::sqrt(16.0 * inputs.B_y * inputs.B_y / inputs.B_Phi))) {
      throw ContractError("cor3: run was not tuned with B = B_y, eta = 1/(8 B_y^2), tau = sqrt(16 B_y^2 / B_Phi)");
    }
    rhs = cor3_rhs(witness, inputs.B_y, inputs.B_Phi);
  } else if (bound == "prop5") {
    detail::expect_forecaster(bound, tn, ForecasterKind::adaptive);
    rhs = prop5_rhs(witness, tn.tau, st);
  } else if (bound == "cor6") {
    detail::expect_forecaster(bound, tn, ForecasterKind::adaptive);
    require(inputs.B_Phi > 0.0, "verify cor6: B_Phi is required");
    if (st.gram_trace > inputs.B_Phi) throw ContractError("cor6: Gram trace exceeds B_Phi");
    if (!detail::close_rel(tn.tau, 1.0 / std::sqrt(inputs.B_Phi)))
      throw ContractError("cor6: run was not tuned with tau = 1/sqrt(B_Phi)");
    rhs = cor6_rhs(witness, inputs.B_Phi, st);
  } else if (bound == "cor7") {
    detail::expect_forecaster(bound, tn, ForecasterKind::adaptive);
    if (!detail::close_rel(tn.tau, 1.0 / std::sqrt(static_cast<double>(d) * st.T)))
      throw ContractError("cor7: run was not tuned with tau = 1/sqrt(dT)");
    rhs = cor7_rhs(witness, d, st);
  } else if (bound == "thm8" || bound == "cor9") {
    detail::expect_forecaster(bound, tn, ForecasterKind::automatic);
    rhs = bound == "thm8" ? thm8_rhs(witness, st) : witness.cumulative_loss + cor9_rhs(witness.l0, witness.l1, st);
  } else {
    throw ArgumentError("unknown bound '" + bound + "'");
  }

  const auto& losses = run.cumulative_losses;
  const double n = static_cast<double>(losses.size());
  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  double allowance = 0.0;
  if (run.backend != BackendKind::quadrature) {
    require(losses.size() >= 2, "verify: stochastic backends need at least two replays");
    double ss = 0.0;
    for (double l : losses) ss += (l - mean) * (l - mean);
    allowance = 3.0 * std::sqrt(ss / (n - 1.0) / n);
  }

  BoundReport report;
  report.bound = bound;
  report.lhs = mean;
  report.rhs = rhs;
  report.slack = rhs - mean;
  report.mc_allowance = allowance;
  report.witness_u = witness.u;
  report.pass = report.slack + allowance >= 0.0;
  report.ambiguous = report.pass && report.slack < 0.0;
  return report;
}

}  // namespace seqsew
