#include <seqsew/datagen.hpp>

#include <boost/math/distributions/students_t.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace seqsew;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments sample_moments(const NoiseFamily& fam, int n, std::uint64_t seed) {
  Rng rng(seed);
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = fam.draw(rng);
    const double delta = z - m;
    m += delta / (i + 1);
    m2 += delta * (z - m);
  }
  return {m, m2 / (n - 1)};
}

}  // namespace

TEST(Dictionary, FourierIsOrthonormalOnGrid) {
  const Dictionary dict(DictionaryKind::fourier, 5);
  const int n = 4096;
  Matrix gram = Matrix::Zero(5, 5);
  for (int i = 0; i < n; ++i) {
    const Vector phi = dict(vec({(i + 0.5) / n}));
    gram += phi * phi.transpose();
  }
  gram /= n;
  EXPECT_LT((gram - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(dict.sup_norm(), std::sqrt(2.0), 1e-15);
}

TEST(Dictionary, RandomSignsAreDeterministicSigns) {
  const Dictionary dict(DictionaryKind::random_signs, 8);
  const Vector a = dict(vec({0.3})), b = dict(vec({0.3}));
  EXPECT_EQ(a, b);
  EXPECT_TRUE((a.cwiseAbs().array() == 1.0).all());
  EXPECT_EQ(dict(vec({0.0})), dict(vec({-0.0})));
}

TEST(Dictionary, Errors) {
  EXPECT_THROW(Dictionary(DictionaryKind::coordinate, 0), ArgumentError);
  const Dictionary dict(DictionaryKind::coordinate, 2, vec({1.0, 2.0}));
  EXPECT_EQ(dict(vec({1.0, 1.0})), vec({1.0, 2.0}));
  EXPECT_THROW(dict(vec({1.0})), DataError);
  EXPECT_THROW(dict(vec({1.0, std::nan("")})), DataError);
  EXPECT_THROW(dictionary_from_string("wavelet"), ArgumentError);
}

TEST(Noise, SubgaussianVariance) {
  const int n = 100000;
  const auto m = sample_moments(NoiseFamily::subgaussian(1.0), n, 4);
  EXPECT_NEAR(m.var, 1.0, 3.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m.mean, 0.0, 3.0 / std::sqrt(n));
}

TEST(Noise, BoundedStaysInRange) {
  Rng rng(5);
  const auto fam = NoiseFamily::bounded(1.0);
  for (int i = 0; i < 100000; ++i) EXPECT_LE(std::abs(fam.draw(rng)), 1.0);
}

TEST(Noise, ExpMomentMatchesDeclaredConstant) {
  const auto fam = NoiseFamily::exp_moment(1.0, 2.0);
  Rng rng(6);
  const int n = 200000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::exp(fam.alpha * std::abs(fam.draw(rng)));
    m += v;
    m2 += v * v;
  }
  m /= n;
  const double se = std::sqrt((m2 / n - m * m) / n);
  EXPECT_NEAR(m, fam.M, 4.0 * se);
  EXPECT_THROW(NoiseFamily::exp_moment(1.0, 1.0).validate(), ArgumentError);
}

TEST(Noise, BoundedMomentScaleMatchesStudentMoment) {
  // E|c T_nu|^alpha = M, checked with an independent quadrature of the t density.
  const auto fam = NoiseFamily::bounded_moment(3.0, 1.0);
  const double nu = fam.student_dof(), c = fam.student_scale();
  boost::math::students_t_distribution<double> t(nu);
  double acc = 0.0;
  const int n = 400000;
  const double upper = 400.0;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) * upper / n;
    acc += 2.0 * std::pow(c * x, fam.alpha) * boost::math::pdf(t, x) * upper / n;
  }
  EXPECT_NEAR(acc, fam.M, 1e-3);
  EXPECT_GT(nu, fam.alpha);
  EXPECT_THROW(NoiseFamily::bounded_moment(2.0, 1.0).validate(), ArgumentError);
}

TEST(Noise, GammaVariateMoments) {
  Rng rng(7);
  for (double shape : {0.5, 2.5}) {
    double m = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) m += gamma_variate(shape, rng);
    m /= n;
    EXPECT_NEAR(m, shape, 4.0 * std::sqrt(shape / n));
  }
}

TEST(IndividualSequence, ZeroTruthNoiselessGivesZeros) {
  ScenarioSpec spec;
  spec.T = 25;
  spec.d = 3;
  spec.u_true = Vector::Zero(3);
  const auto data = gen_individual_sequence(spec);
  EXPECT_EQ(data.y, Vector::Zero(25));
  EXPECT_EQ(data.rounds(), 25);
}

TEST(IndividualSequence, NoiselessCoordinateIsExact) {
  ScenarioSpec spec;
  spec.T = 25;
  spec.d = 3;
  spec.s = 1;
  spec.u_true = vec({1.5, 0.0, 0.0});
  const auto data = gen_individual_sequence(spec);
  for (int t = 0; t < 25; ++t) EXPECT_EQ(data.y[t], 1.5 * data.x(t, 0));
}

TEST(IndividualSequence, DeterministicPerSeed) {
  ScenarioSpec spec;
  spec.T = 40;
  spec.d = 2;
  spec.u_true = vec({1.0, -1.0});
  spec.noise = NoiseFamily::subgaussian(0.5);
  spec.seed = 99;
  const auto a = gen_individual_sequence(spec), b = gen_individual_sequence(spec);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.x, b.x);
  spec.seed = 100;
  EXPECT_NE(gen_individual_sequence(spec).y, a.y);
}

TEST(IndividualSequence, AmplitudeJumpRaisesMaxSquare) {
  ScenarioSpec spec;
  spec.T = 30;
  spec.d = 1;
  spec.u_true = vec({1.0});
  spec.design = DesignKind::adversarial_script;
  spec.script = {{1, 1.0, 1.0}, {20, 8.0, 1.0}};
  const auto data = gen_individual_sequence(spec);
  double before = 0.0;
  for (int t = 0; t < 19; ++t) before = std::max(before, data.y[t] * data.y[t]);
  EXPECT_LE(before, 1.0);
  EXPECT_GT(data.y.tail(11).cwiseAbs2().maxCoeff(), before);
  EXPECT_EQ(data.y[19], 8.0 * data.x(19, 0));
}

TEST(ScenarioSpec, ValidationErrors) {
  ScenarioSpec spec;
  spec.d = 2;
  spec.u_true = vec({1.0});
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.u_true = vec({1.0, 0.0});
  spec.s = 2;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.s = 1;
  spec.design = DesignKind::adversarial_script;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.script = {{2, 1.0, 1.0}};
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.script = {{1, 1.0, 1.0}, {1, 2.0, 1.0}};
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.script = {{1, 1.0, 1.0}};
  EXPECT_NO_THROW(spec.validate());
}

TEST(StochasticData, ZeroTruthGivesCenteredOutputs) {
  ScenarioSpec spec;
  spec.T = 20000;
  spec.dictionary = DictionaryKind::fourier;
  spec.d = 2;
  spec.u_true = Vector::Zero(2);
  spec.noise = NoiseFamily::bounded(1.0);
  const auto data = gen_stochastic(spec);
  EXPECT_EQ(data.train.y, data.train.noise);
  EXPECT_NEAR(data.train.y.mean(), 0.0, 4.0 * std::sqrt(1.0 / 3.0 / spec.T));
}

TEST(StochasticData, ClosedFormFeatureNormsMatchMonteCarlo) {
  for (auto [dk, des] : {std::pair{DictionaryKind::fourier, DesignKind::iid_uniform},
                         std::pair{DictionaryKind::coordinate, DesignKind::iid_uniform},
                         std::pair{DictionaryKind::coordinate, DesignKind::iid_gaussian},
                         std::pair{DictionaryKind::random_signs, DesignKind::iid_uniform}}) {
    ScenarioSpec spec;
    spec.dictionary = dk;
    spec.design = des;
    spec.d = 3;
    spec.u_true = Vector::Zero(3);
    const Dictionary dict = spec.make_dictionary();
    const DesignSampler design(spec, dict);
    const auto closed = closed_form_feature_l2(spec, dict, design);
    ASSERT_TRUE(closed.has_value());
    const auto mc = estimate_feature_l2(dict, design, 50000, 3);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR((*closed)[j], mc.value[j], 5.0 * mc.std_error[j] + 1e-12);
  }
}

TEST(StochasticData, FixedGridCycles) {
  ScenarioSpec spec;
  spec.T = 10;
  spec.dictionary = DictionaryKind::fourier;
  spec.d = 2;
  spec.u_true = vec({1.0, 0.0});
  spec.design = DesignKind::fixed_grid;
  spec.grid_points = 4;
  const auto data = gen_stochastic(spec);
  for (int t = 4; t < 10; ++t) EXPECT_EQ(data.train.x(t, 0), data.train.x(t - 4, 0));
  spec.design = DesignKind::adversarial_script;
  spec.script = {{1, 1.0, 1.0}};
  EXPECT_THROW(gen_stochastic(spec), ArgumentError);
}
