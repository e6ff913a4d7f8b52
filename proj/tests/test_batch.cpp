#include <seqsew/batch.hpp>
#include <seqsew/experiment.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace seqsew;

namespace {

BackendConfig quadrature(int grid = 2048) {
  BackendConfig b;
  b.kind = BackendKind::quadrature;
  b.grid_points_per_dim = grid;
  return b;
}

BackendConfig importance(int n = 500, std::uint64_t seed = 3) {
  BackendConfig b;
  b.kind = BackendKind::importance;
  b.n_samples = n;
  b.seed = seed;
  return b;
}

Matrix column(std::initializer_list<double> xs) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector x1(double a) { return vec({a}); }

const Dictionary kFourier2(DictionaryKind::fourier, 2);

}  // namespace

TEST(RandomDesign, SingleRoundIsFirstRegressor) {
  const auto est = fit_random_design(column({0.3}), vec({1.7}), kFourier2, quadrature());
  EXPECT_EQ(est.rounds(), 1);
  // Round 1 clips at B_1 = 0, so the only regressor is identically 0.
  for (double x : {0.0, 0.2, 0.7}) EXPECT_EQ(est(x1(x)), 0.0);
}

TEST(RandomDesign, ZeroOutputsGiveZeroEstimator) {
  Matrix x(20, 1);
  for (int t = 0; t < 20; ++t) x(t, 0) = t / 20.0;
  const auto est = fit_random_design(x, Vector::Zero(20), kFourier2, importance());
  EXPECT_EQ(est.group_count(), 0u);
  for (double a : {0.05, 0.5, 0.93}) EXPECT_EQ(est(x1(a)), 0.0);
}

TEST(RandomDesign, AverageOfPerRoundRegressors) {
  const Matrix x = column({0.1, 0.6, 0.35, 0.8});
  const Vector y = vec({1.0, -0.5, 2.0, 0.25});
  const auto est = fit_random_design(x, y, kFourier2, quadrature());

  const double tau = 1.0 / std::sqrt(2.0 * 4.0);
  SeqSewAdaptive f(tau, 2, quadrature());
  const Vector probe = kFourier2(x1(0.42));
  double acc = 0.0;
  for (int t = 0; t < 4; ++t) {
    acc += f.snapshot().predict(probe);
    f.predict(kFourier2(x.row(t).transpose()));
    f.observe(y[t]);
  }
  EXPECT_NEAR(est(x1(0.42)), acc / 4.0, 1e-12);
  EXPECT_LE(est.max_threshold(), 2.0);
}

TEST(FixedDesign, DistinctPointsReproduceOnlinePredictions) {
  const Matrix x = column({0.1, 0.6, 0.35, 0.8});
  const Vector y = vec({1.0, -0.5, 2.0, 0.25});
  const auto est = fit_fixed_design(x, y, kFourier2, quadrature());
  for (int t = 0; t < 4; ++t) EXPECT_EQ(est(x.row(t).transpose()), est.online().records[t].yhat);
  EXPECT_EQ(est(x1(0.5)), 0.0);
}

TEST(FixedDesign, DuplicatedPointAveragesItsRounds) {
  // x = a, b, a: f^(a) = (f~_1(a) + f~_3(a)) / 2, f^(b) = f~_2(b).
  const double a = 0.25, b = 0.7;
  const Matrix x = column({a, b, a});
  const Vector y = vec({1.5, -1.0, 0.5});
  const auto est = fit_fixed_design(x, y, kFourier2, quadrature());

  const double tau = 1.0 / std::sqrt(2.0 * 3.0);
  SeqSewAdaptive f(tau, 2, quadrature());
  std::vector<double> yhat;
  for (int t = 0; t < 3; ++t) {
    yhat.push_back(f.predict(kFourier2(x.row(t).transpose())));
    f.observe(y[t]);
  }
  EXPECT_EQ(yhat[0], 0.0);
  EXPECT_NEAR(est(x1(a)), 0.5 * (yhat[0] + yhat[2]), 1e-15);
  EXPECT_NEAR(est(x1(b)), yhat[1], 1e-15);
  EXPECT_NE(yhat[2], 0.0);
  EXPECT_EQ(est(x1(0.9)), 0.0);
}

TEST(FixedDesign, RiskIsExactDesignAverage) {
  const Matrix x = column({0.1, 0.6, 0.35});
  const auto est = fit_fixed_design(x, Vector::Zero(3), kFourier2, quadrature());
  const LinearTruth truth{kFourier2, vec({1.0, -0.5})};
  double want = 0.0;
  for (int t = 0; t < 3; ++t) want += std::pow(truth(x.row(t).transpose()), 2.0);
  EXPECT_NEAR(risk_fixed_design(est, truth, x), want / 3.0, 1e-15);
}

TEST(Remark15, ConstantOutputsGiveConstantEstimator) {
  Matrix x(10, 1);
  for (int t = 0; t < 10; ++t) x(t, 0) = 0.09 * t;
  const auto est = fit_remark15(x, Vector::Constant(10, 2.5), kFourier2, importance());
  EXPECT_EQ(est.anchor(), 2.5);
  EXPECT_EQ(est.max_threshold(), 0.0);
  for (double a : {0.0, 0.33, 0.8}) EXPECT_EQ(est(x1(a)), 2.5);
}

TEST(Remark15, SecondRoundPredictsFirstOutput) {
  const Matrix x = column({0.1, 0.6, 0.35, 0.8});
  const Vector y = vec({1.25, -0.5, 2.0, 0.25});
  for (auto clipping : {AnchorClipping::anchored, AnchorClipping::literal}) {
    const auto est = fit_remark15(x, y, kFourier2, quadrature(), clipping);
    EXPECT_EQ(est.rounds(), 3);
    EXPECT_EQ(est.online().records[0].B, 0.0);
    EXPECT_EQ(est.anchor() + est.online().records[0].yhat, 1.25);
  }
  EXPECT_THROW(fit_remark15(column({0.1}), vec({1.0}), kFourier2, quadrature()), ArgumentError);
}

TEST(Remark15, ShiftMovesEstimatorExactly) {
  Matrix x(40, 1);
  Vector y(40);
  Rng rng(12);
  for (int t = 0; t < 40; ++t) {
    x(t, 0) = uniform01(rng);
    y[t] = std::ldexp(std::round(std::ldexp(1.5 * kFourier2(x.row(t).transpose())[0] + standard_normal(rng), 20)), -20);
  }
  const double c = 3.25;
  const Vector y_shift = (y.array() + c).matrix();
  for (auto backend : {quadrature(256), importance(400, 9)}) {
    const auto base = fit_remark15(x, y, kFourier2, backend);
    const auto moved = fit_remark15(x, y_shift, kFourier2, backend);
    for (double a : {0.0, 0.13, 0.5, 0.77}) {
      EXPECT_EQ(moved.centered(x1(a)), base.centered(x1(a)));
      EXPECT_NEAR(moved(x1(a)) - base(x1(a)), c, 1e-13);
    }
  }
}

TEST(Remark15, ShiftCheckReportsExactness) {
  ScenarioSpec spec;
  spec.T = 60;
  spec.dictionary = DictionaryKind::fourier;
  spec.d = 2;
  spec.u_true = vec({1.0, 0.0});
  spec.noise = NoiseFamily::subgaussian(0.25);
  spec.seed = 5;
  const auto check = remark15_shift_check(spec, importance(300, 4), 3.1, 200);
  EXPECT_TRUE(check.residuals_identical);
  EXPECT_TRUE(check.centered_identical);
  EXPECT_LT(check.max_deviation, 1e-12);
  EXPECT_EQ(check.shift, std::round(3.1 * 0x1p20) * 0x1p-20);
}

TEST(RiskEvaluation, ZeroEstimatorAgainstUnitFeature) {
  Matrix x(5, 1);
  for (int t = 0; t < 5; ++t) x(t, 0) = 0.2 * t;
  const auto zero = fit_random_design(x, Vector::Zero(5), kFourier2, importance());
  ScenarioSpec spec;
  spec.dictionary = DictionaryKind::fourier;
  spec.d = 2;
  spec.u_true = vec({1.0, 0.0});
  const DesignSampler design(spec, kFourier2);
  Rng rng(8);
  const LinearTruth truth{kFourier2, spec.u_true};
  // 2 cos^2 has variance 1/2 under the uniform law.
  const int n = 40000;
  EXPECT_NEAR(risk_random_design(zero, truth, design, n, rng), 1.0, 4.0 * std::sqrt(0.5 / n));
  const LinearTruth null{kFourier2, Vector::Zero(2)};
  EXPECT_EQ(risk_random_design(zero, null, design, 10, rng), 0.0);
  EXPECT_THROW(risk_random_design(zero, truth, design, 0, rng), ArgumentError);
}

TEST(PsiBound, Examples) {
  EXPECT_NEAR(psi_bound(NoiseFamily::subgaussian(1.0), 1), 3.386294, 1e-6);
  for (int T : {1, 7, 100}) EXPECT_NEAR(psi_bound(NoiseFamily::bounded(1.0), T), 1.0 / T, 1e-15);
  EXPECT_NEAR(psi_bound(NoiseFamily::bounded_moment(4.0, 1.0), 16), 0.25, 1e-15);
  EXPECT_EQ(psi_bound(NoiseFamily::none(), 5), 0.0);
  EXPECT_THROW(psi_bound(NoiseFamily::bounded_moment(2.0, 1.0), 5), ArgumentError);
  EXPECT_THROW(psi_bound(NoiseFamily::bounded(1.0), 0), ArgumentError);
}

TEST(PsiBound, DominatesMeasuredMaxima) {
  for (const auto& fam : default_sweep_families()) {
    for (int T : {1, 10, 200}) {
      const auto m = empirical_max_sq(fam, T, 400, 17);
      EXPECT_LE(m.mean, T * psi_bound(fam, T) + 3.0 * m.std_error) << fam.name() << " T=" << T;
    }
  }
}

TEST(EmpiricalMaxSq, Examples) {
  EXPECT_EQ(empirical_max_sq(NoiseFamily::none(), 10, 100, 1).mean, 0.0);
  const auto g = empirical_max_sq(NoiseFamily::subgaussian(1.0), 1, 20000, 2);
  EXPECT_NEAR(g.mean, 1.0, 4.0 * g.std_error);
  EXPECT_LE(g.mean, 2.0 * std::log(2.0 * M_E));
  const auto b = empirical_max_sq(NoiseFamily::bounded(0.7), 50, 200, 3);
  EXPECT_LE(b.mean, 0.49);
  EXPECT_THROW(empirical_max_sq(NoiseFamily::bounded(1.0), 5, 10, 1), ArgumentError);
}

TEST(RiskBound, Thm10ZeroComparator) {
  RiskBoundInputs in;
  in.T = 50;
  in.d = 2;
  in.approx_error = 1.25;
  in.feature_sum = 2.0;
  in.expected_max_y_sq = 9.0;
  EXPECT_NEAR(risk_bound_rhs(RiskVariant::thm10, in), 1.25 + 2.0 / 100.0 + 32.0 * 9.0 / 50.0, 1e-12);
}

TEST(RiskBound, Cor12Example) {
  RiskBoundInputs in;
  in.T = 10;
  in.d = 3;
  in.approx_error = 0.0;
  in.feature_sum = 3.0;  // orthonormal features
  in.f_sup_sq = 0.0;
  in.noise = NoiseFamily::subgaussian(1.0);
  EXPECT_NEAR(risk_bound_rhs(RiskVariant::cor12, in), 0.1 + 64.0 * 2.0 * std::log(20.0 * M_E) / 10.0, 1e-12);
  in.noise = NoiseFamily::bounded(1.0);
  EXPECT_THROW(risk_bound_rhs(RiskVariant::cor12, in), ArgumentError);
}

TEST(RiskBound, Thm13MatchesThm10OnMatchedDesign) {
  RiskBoundInputs in;
  in.T = 40;
  in.d = 4;
  in.approx_error = 0.3;
  in.l0 = 2;
  in.l1 = 1.5;
  in.expected_max_y_sq = 6.0;
  in.feature_sum = 4.0;
  const double random = risk_bound_rhs(RiskVariant::thm10, in);
  in.feature_sum = 4.0 * 40;  // design sum equals T times the L2 norms
  EXPECT_NEAR(risk_bound_rhs(RiskVariant::thm13, in), random, 1e-12);
}

TEST(RiskBound, Cor11AndCor14Examples) {
  RiskBoundInputs in;
  in.T = 20;
  in.d = 1;
  in.approx_error = 0.0;
  in.feature_sum = 1.0;
  in.mean_y = 0.0;
  in.f_sup_sq = 0.0;
  in.noise = NoiseFamily::bounded(1.0);
  EXPECT_NEAR(risk_bound_rhs(RiskVariant::cor11, in), 1.0 / 20.0 + 64.0 / 20.0, 1e-12);
  in.feature_sum = 20.0;
  EXPECT_NEAR(risk_bound_rhs(RiskVariant::cor14, in), 1.0 / 20.0 + 64.0 / 20.0, 1e-12);
}

TEST(RiskBound, MissingInputsRejected) {
  RiskBoundInputs in;
  in.T = 10;
  in.d = 1;
  in.feature_sum = 1.0;
  EXPECT_THROW(risk_bound_rhs(RiskVariant::thm10, in), ArgumentError);
  in.approx_error = 0.0;
  EXPECT_THROW(risk_bound_rhs(RiskVariant::thm10, in), ArgumentError);
  EXPECT_THROW(risk_bound_rhs(RiskVariant::cor11, in), ArgumentError);
  EXPECT_THROW(risk_variant_from_string("thm99"), ArgumentError);
  EXPECT_EQ(risk_variant_from_string("cor14"), RiskVariant::cor14);
}

TEST(BatchExperiment, Thm10HoldsOnSmallQuadratureRun) {
  ScenarioSpec spec;
  spec.T = 30;
  spec.dictionary = DictionaryKind::fourier;
  spec.d = 1;
  spec.u_true = vec({0.8});
  spec.noise = NoiseFamily::subgaussian(0.25);
  spec.seed = 21;
  BatchExperimentConfig cfg;
  cfg.variant = RiskVariant::thm10;
  cfg.replications = 4;
  cfg.n_eval = 200;
  const auto res = run_batch_experiment(spec, quadrature(), cfg);
  EXPECT_TRUE(res.pass) << res.measured_risk << " vs " << res.rhs;
  EXPECT_EQ(res.risks.size(), 4u);
  EXPECT_EQ(res.amplitude_source, "measured");
  const auto again = run_batch_experiment(spec, quadrature(), cfg);
  EXPECT_EQ(again.risks, res.risks);
}

TEST(BatchExperiment, PreconditionsEnforced) {
  ScenarioSpec spec;
  spec.T = 10;
  spec.d = 1;
  spec.u_true = vec({1.0});
  spec.noise = NoiseFamily::bounded(1.0);
  BatchExperimentConfig cfg;
  cfg.variant = RiskVariant::cor11;
  EXPECT_THROW(run_batch_experiment(spec, quadrature(), cfg), ContractError);
  cfg.variant = RiskVariant::cor12;
  EXPECT_THROW(run_batch_experiment(spec, quadrature(), cfg), ContractError);
  cfg.variant = RiskVariant::thm13;
  EXPECT_THROW(run_batch_experiment(spec, quadrature(), cfg), ArgumentError);
}
