#include <seqsew/forecasters.hpp>
#include <seqsew/posterior.hpp>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

using namespace seqsew;

namespace {

BackendConfig make_backend(BackendKind kind, int n = 10000, std::uint64_t seed = 1) {
  BackendConfig b;
  b.kind = kind;
  b.n_samples = n;
  b.seed = seed;
  return b;
}

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

// ∫ f(u) π_τ(du) in one dimension by adaptive quadrature, split at the given
// breakpoints (kinks of f and the origin).
double integrate_against_prior(const std::function<double(double)>& f, double tau, std::vector<double> breaks) {
  breaks.push_back(0.0);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  const SparsityPrior p(tau, 1);
  auto g = [&](double u) { return f(u) * std::exp(p.coordinate_log_density(u)); };
  boost::math::quadrature::exp_sinh<double> tail;
  boost::math::quadrature::tanh_sinh<double> seg;
  double acc = tail.integrate([&](double s) { return g(breaks.back() + s); });
  acc += tail.integrate([&](double s) { return g(breaks.front() - s); });
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) acc += seg.integrate(g, breaks[k], breaks[k + 1]);
  return acc;
}

}  // namespace

TEST(BackendConfig, Validation) {
  BackendConfig b;
  b.n_samples = 50;
  EXPECT_THROW(b.validate(), ArgumentError);
  b = BackendConfig{};
  b.kind = BackendKind::quadrature;
  b.grid_points_per_dim = 32;
  EXPECT_THROW(b.validate(), ArgumentError);
  EXPECT_EQ(backend_from_string("chain"), BackendKind::chain);
  EXPECT_THROW(backend_from_string("langevin"), ArgumentError);
}

TEST(PosteriorInit, ImportanceHasEqualLogWeights) {
  const auto cloud = PosteriorCloud::init(SparsityPrior(0.7, 3), make_backend(BackendKind::importance, 500));
  EXPECT_EQ(cloud.size(), 500);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) EXPECT_EQ(cloud.log_weights()[i], cloud.log_weights()[0]);
  EXPECT_NEAR(cloud.weights().sum(), 1.0, 1e-12);
}

TEST(PosteriorInit, QuadratureMomentsOfPrior) {
  const auto cloud = PosteriorCloud::init(SparsityPrior(1.0, 1), make_backend(BackendKind::quadrature));
  EXPECT_NEAR(cloud.expectation([](const Vector& u) { return u[0]; }), 0.0, 1e-12);
  EXPECT_NEAR(cloud.expectation([](const Vector& u) { return u[0] * u[0]; }), 1.0, 1e-3);
  EXPECT_NEAR(cloud.weights().sum(), 1.0, 1e-12);
  EXPECT_TRUE((cloud.weights().array() >= 0.0).all());
}

TEST(PosteriorInit, QuadratureRejectsThreeDimensions) {
  EXPECT_THROW(PosteriorCloud::init(SparsityPrior(1.0, 3), make_backend(BackendKind::quadrature)),
               UnsupportedDimension);
}

TEST(PosteriorPredict, KnownValues) {
  const auto prior_cloud = PosteriorCloud::init(SparsityPrior(1.0, 1), make_backend(BackendKind::importance));
  EXPECT_EQ(prior_cloud.predict(vec1(1.0), 0.0), 0.0);
  // Prior symmetry; the clipped integrand has sd below 10, so 5 standard errors is 0.5.
  EXPECT_NEAR(prior_cloud.predict(vec1(1.0), 10.0), 0.0, 0.5);

  const auto point = PosteriorCloud::from_nodes(SparsityPrior(1.0, 1), Matrix::Constant(1, 1, 2.0), vec1(0.0));
  EXPECT_EQ(point.predict(vec1(3.0), 4.0), 4.0);
  EXPECT_THROW(point.predict(Vector::Zero(2), 1.0), ArgumentError);
}

TEST(PosteriorUpdate, ZeroThresholdLeavesWeightsUnchanged) {
  auto cloud = PosteriorCloud::init(SparsityPrior(1.0, 1), make_backend(BackendKind::quadrature, 10000));
  const Vector before = cloud.weights();
  cloud.update(vec1(1.3), 5.0, 0.0, 0.02);
  EXPECT_LT((cloud.weights() - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PosteriorUpdate, RejectsIncreasingEta) {
  auto cloud = PosteriorCloud::init(SparsityPrior(1.0, 1), make_backend(BackendKind::importance, 200));
  cloud.update(vec1(1.0), 1.0, 0.0, 0.125);
  EXPECT_THROW(cloud.update(vec1(1.0), 1.0, 1.0, 0.25), ContractError);
  EXPECT_NO_THROW(cloud.update(vec1(1.0), 1.0, 1.0, 0.125));
}

TEST(PosteriorUpdate, ZeroEtaGivesPrior) {
  auto cloud = PosteriorCloud::init(SparsityPrior(1.0, 1), make_backend(BackendKind::quadrature));
  const Vector before = cloud.weights();
  cloud.update(vec1(2.0), 3.0, 1.0, 0.0);
  cloud.update(vec1(-1.0), 0.5, 1.0, 0.0);
  EXPECT_LT((cloud.weights() - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PosteriorUpdate, ImportanceLogWeightsTrackLossBeforeResampling) {
  BackendConfig b = make_backend(BackendKind::importance, 2000, 3);
  b.ess_floor = 1e-6;
  auto cloud = PosteriorCloud::init(SparsityPrior(0.5, 2), b);
  Rng rng(6);
  double eta = 0.5;
  for (int t = 0; t < 10; ++t) {
    Vector phi(2);
    phi << uniform01(rng), uniform01(rng) - 0.5;
    eta *= 0.8;
    cloud.update(phi, uniform01(rng), 1.0, eta);
  }
  ASSERT_EQ(cloud.resample_count(), 0);
  const Vector shifted = cloud.log_weights() + eta * cloud.cum_clipped_loss();
  EXPECT_LT(shifted.maxCoeff() - shifted.minCoeff(), 1e-12);
  EXPECT_NEAR(cloud.weights().sum(), 1.0, 1e-12);
}

TEST(PosteriorUpdate, CachedLossesMatchRecordedRounds) {
  auto cloud = PosteriorCloud::init(SparsityPrior(0.5, 2), make_backend(BackendKind::importance, 300, 2));
  Rng rng(1);
  double B = 0.0;
  for (int t = 0; t < 15; ++t) {
    Vector phi(2);
    phi << 2.0 * uniform01(rng) - 1.0, uniform01(rng);
    const double y = 3.0 * (uniform01(rng) - 0.5);
    cloud.update(phi, y, B, 1.0 / (8.0 * 4.0));
    B = 2.0;
  }
  for (Eigen::Index i = 0; i < cloud.size(); i += 37) {
    EXPECT_NEAR(cloud.cum_clipped_loss()[i], cloud.recorded_loss(cloud.points().row(i).transpose()), 1e-10);
  }
}

// Five-node rectangle rule computed by hand against the same recursion.
TEST(QuadratureOracle, FivePointRectangleRule) {
  const double tau = 1.0, h = 0.5;
  Matrix nodes(5, 1);
  Vector log_mass(5);
  std::vector<double> mass(5);
  for (int k = 0; k < 5; ++k) {
    const double u = (k - 2) * h;
    nodes(k, 0) = u;
    mass[k] = 1.5 / std::pow(1.0 + std::abs(u), 4.0) * h;
    log_mass[k] = std::log(mass[k]);
  }
  auto cloud = PosteriorCloud::from_nodes(SparsityPrior(tau, 1), nodes, log_mass);
  const double phi = 1.5, y = 0.8, B = 1.0, eta = 0.125;
  cloud.update(vec1(phi), y, B, eta);

  double num = 0.0, den = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double u = (k - 2) * h;
    const double r = y - std::clamp(u * phi, -B, B);
    const double w = mass[k] * std::exp(-eta * r * r);
    den += w;
    num += w * std::clamp(u * 2.0, -B, B);
  }
  EXPECT_NEAR(cloud.predict(vec1(2.0), B), num / den, 1e-14);
}

TEST(QuadratureOracle, TrivialIntegrands) {
  BackendConfig b = make_backend(BackendKind::quadrature);
  const SparsityPrior p(1.0, 1);
  auto loss = [](const Vector& u) { return (1.0 - u[0]) * (1.0 - u[0]); };
  EXPECT_NEAR(quadrature_expectation(p, loss, 0.0, [](const Vector& u) { return clip(u[0], 2.0); }, b), 0.0, 1e-12);
  EXPECT_NEAR(quadrature_expectation(p, loss, 0.3, [](const Vector&) { return 1.0; }, b), 1.0, 1e-12);
  EXPECT_THROW(quadrature_expectation(SparsityPrior(1.0, 3), loss, 0.1, [](const Vector&) { return 1.0; }, b),
               UnsupportedDimension);
}

TEST(QuadratureOracle, AgreesWithAdaptiveQuadrature) {
  // One round with threshold 2: posterior clipped mean at a new feature.
  const double tau = 0.5, eta = 1.0 / 32.0, y = 1.7, phi = 1.2, B = 2.0, phi_new = -0.7;
  auto weight = [&](double u) {
    const double r = y - clip(u * phi, B);
    return std::exp(-eta * r * r);
  };
  const std::vector<double> breaks{-B / phi, B / phi, -B / phi_new, B / phi_new};
  const double z = integrate_against_prior(weight, tau, breaks);
  const double m = integrate_against_prior([&](double u) { return weight(u) * clip(u * phi_new, B); }, tau, breaks);

  auto cloud = PosteriorCloud::init(SparsityPrior(tau, 1), make_backend(BackendKind::quadrature));
  cloud.update(vec1(phi), y, B, eta);
  EXPECT_NEAR(cloud.predict(vec1(phi_new), B), m / z, 1e-5);
}

TEST(QuadratureOracle, GridDoublingIsStable) {
  const SparsityPrior p(0.3, 1);
  auto loss = [](const Vector& u) {
    const double r1 = 2.0 - clip(u[0] * 1.5, 4.0), r2 = -1.0 - clip(u[0] * 0.5, 4.0);
    return r1 * r1 + r2 * r2;
  };
  auto integrand = [](const Vector& u) { return clip(u[0], 4.0); };
  BackendConfig b = make_backend(BackendKind::quadrature);
  b.grid_points_per_dim = 2048;
  const double coarse = quadrature_expectation(p, loss, 1.0 / 32.0, integrand, b);
  b.grid_points_per_dim = 4096;
  const double fine = quadrature_expectation(p, loss, 1.0 / 32.0, integrand, b);
  EXPECT_LT(std::abs(coarse - fine), 1e-4);
}

TEST(QuadratureOracle, SingleUpdateImportanceAgreesWithGrid) {
  const SparsityPrior prior(1.0, 1);
  auto q = PosteriorCloud::init(prior, make_backend(BackendKind::quadrature));
  auto s = PosteriorCloud::init(prior, make_backend(BackendKind::importance, 10000, 4));
  const double B = 2.0, eta = 1.0 / 32.0;
  q.update(vec1(1.0), 1.9, B, eta);
  s.update(vec1(1.0), 1.9, B, eta);
  EXPECT_NEAR(s.predict(vec1(1.0), B), q.predict(vec1(1.0), B), 0.05 * B);
}

TEST(PosteriorDeterminism, SameSeedSamePredictions) {
  for (BackendKind kind : {BackendKind::importance, BackendKind::chain}) {
    BackendConfig b = make_backend(kind, 400, 12);
    SeqSewAdaptive f1(0.5, 2, b), f2(0.5, 2, b);
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      Vector phi(2);
      phi << uniform01(rng), 2.0 * uniform01(rng) - 1.0;
      const double y = 4.0 * (uniform01(rng) - 0.5);
      EXPECT_EQ(f1.predict(phi), f2.predict(phi));
      f1.observe(y);
      f2.observe(y);
    }
  }
}

TEST(BackendEquivalence, StochasticBackendsTrackQuadratureOracle) {
  for (int d : {1, 2}) {
    Rng rng(40 + d);
    const int T = 20;
    FeatureSequence seq{Matrix(T, d), Vector(T)};
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < d; ++j) seq.phi(t, j) = 2.0 * uniform01(rng) - 1.0;
      seq.y[t] = (t < 10 ? 1.0 : 3.0) * (seq.phi(t, 0) + 0.3 * standard_normal(rng));
    }
    BackendConfig quad = make_backend(BackendKind::quadrature);
    if (d == 2) quad.grid_points_per_dim = 256;
    SeqSewAdaptive oracle(1.0, d, quad);
    const auto ref = run_protocol(oracle, seq);
    for (BackendKind kind : {BackendKind::importance, BackendKind::chain}) {
      SeqSewAdaptive f(1.0, d, make_backend(kind, 10000, 8));
      const auto got = run_protocol(f, seq);
      for (int t = 0; t < T; ++t) {
        EXPECT_LE(std::abs(got.records[t].yhat - ref.records[t].yhat), 0.05 * std::max(ref.records[t].B, 1.0))
            << to_string(kind) << " d=" << d << " t=" << t + 1;
      }
    }
  }
}

TEST(ChainBackend, EqualWeightsAndBoundedPredictions) {
  auto cloud = PosteriorCloud::init(SparsityPrior(0.5, 1), make_backend(BackendKind::chain, 500, 5));
  cloud.update(vec1(1.0), 0.7, 0.0, 0.125);
  cloud.update(vec1(-0.5), 0.2, 1.0, 0.125);
  EXPECT_NEAR(cloud.weights().maxCoeff(), cloud.weights().minCoeff(), 1e-15);
  const double p = cloud.predict(vec1(3.0), 1.0);
  EXPECT_LE(std::abs(p), 1.0);
}
