#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "rdd/detector_lab.hpp"

namespace {

using namespace rdd;

DiagonalGaussian gauss(std::vector<double> var, std::vector<double> mean = {}) {
  return DiagonalGaussian{std::move(mean), Spectrum(std::move(var))};
}

TEST(Sample, ZeroVarianceGivesTheMean) {
  const Eigen::MatrixXd x = sample(gauss({0.0, 0.0}, {1.5, -2.0}), 50, 3);
  EXPECT_TRUE((x.col(0).array() == 1.5).all());
  EXPECT_TRUE((x.col(1).array() == -2.0).all());
}

TEST(Sample, UnitVarianceConcentrates) {
  const Eigen::MatrixXd x = sample(gauss({1.0}), 10000, 5);
  const double mean = x.col(0).mean();
  const double var = (x.col(0).array() - mean).square().sum() / (x.rows() - 1.0);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Sample, DeterministicPerSeed) {
  const auto m = gauss({1.0, 2.0, 0.5});
  EXPECT_EQ(sample(m, 100, 77), sample(m, 100, 77));
  EXPECT_NE(sample(m, 100, 77), sample(m, 100, 78));
}

TEST(Sample, DrawsAreAddressable) {
  const auto m = gauss({1.0, 2.0});
  const Eigen::MatrixXd all = sample(m, 20, 9);
  CounterRng rng(9, 2 * (7 * 2 + 1));
  EXPECT_EQ(all(7, 1), std::sqrt(2.0) * rng.normal());
}

TEST(ScoreLd, HandValues) {
  const auto m = gauss({1.0});
  const double x0[] = {0.0}, x2[] = {2.0};
  EXPECT_EQ(score_ld(m, x0), 0.0);
  EXPECT_DOUBLE_EQ(score_ld(m, x2), 2.0);
}

TEST(ScoreLd, OffMeanOnZeroVarianceIsInfinite) {
  const auto m = gauss({1.0, 0.0});
  const double on[] = {0.3, 0.0}, off[] = {0.3, 0.1};
  EXPECT_TRUE(std::isfinite(score_ld(m, on)));
  EXPECT_TRUE(std::isinf(score_ld(m, off)));
}

TEST(ScoreNpd, HandValues) {
  const auto ok = gauss({1.0}), ko = gauss({2.0});
  const double x0[] = {0.0}, x2[] = {2.0};
  EXPECT_NEAR(score_npd(ok, ko, x0), 0.5 * std::log(0.5), 1e-15);
  EXPECT_NEAR(score_npd(ok, ko, x0), -0.3466, 1e-4);
  EXPECT_NEAR(score_npd(ok, ko, x2), 0.5 * (4.0 - 2.0) + 0.5 * std::log(0.5), 1e-15);
  EXPECT_NEAR(score_npd(ok, ko, x2), 0.6534, 1e-4);
}

TEST(ScoreNpd, IdenticalModelsScoreZero) {
  const auto m = gauss({1.0, 3.0}, {0.5, 0.0});
  std::mt19937_64 g(1);
  std::normal_distribution<double> d;
  for (int t = 0; t < 100; ++t) {
    const double x[] = {d(g), d(g)};
    EXPECT_EQ(score_npd(m, m, x), 0.0);
  }
}

TEST(ScoreMahalanobis, HandValues) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  const double at_mean[] = {0.0, 0.0}, x34[] = {3.0, 4.0};
  EXPECT_EQ(score_mahalanobis(mu, Eigen::MatrixXd::Identity(2, 2), at_mean), 0.0);
  EXPECT_NEAR(score_mahalanobis(mu, Eigen::MatrixXd::Identity(2, 2), x34), 25.0, 1e-12);
  Eigen::VectorXd m1 = Eigen::VectorXd::Constant(1, 1.0);
  const double x3[] = {3.0};
  EXPECT_NEAR(score_mahalanobis(m1, Eigen::MatrixXd::Constant(1, 1, 4.0), x3), 1.0, 1e-12);
}

TEST(ScoreMahalanobis, MatchesDenseSolveOnRandomSpd) {
  std::mt19937_64 g(2);
  std::normal_distribution<double> d;
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 6;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = d(g);
    const Eigen::MatrixXd cov = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd mu(n), x(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = d(g);
      x[i] = d(g);
    }
    const double want = (x - mu).dot(cov.ldlt().solve(x - mu));
    EXPECT_NEAR(score_mahalanobis(mu, cov, std::span<const double>(x.data(), n)), want, 1e-9 * (1 + want));
  }
}

TEST(ScoreMahalanobis, RejectsNonSymmetric) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(MahalanobisDetector(Eigen::VectorXd::Zero(2), c), InputError);
}

TEST(ScoreMahalanobis, SingularCovarianceIsClipped) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
  c(0, 0) = 2.0;
  c(1, 1) = 1.0;
  const MahalanobisDetector det(Eigen::VectorXd::Zero(3), c);
  EXPECT_EQ(det.clipped(), 1);
  EXPECT_NEAR(det.eigen_floor(), 1e-10 * 3.0 / 3.0, 1e-25);
  const double x[] = {0.0, 0.0, 1e-5};
  EXPECT_NEAR(det.score(x), 1e-10 / det.eigen_floor(), 1e-6);
}

TEST(Auc, HandValues) {
  const std::vector<double> a{1, 2}, b{3, 4}, c{1, 3}, d{2, 4};
  EXPECT_EQ(auc(a, b), 1.0);
  EXPECT_EQ(p_det(auc(a, b)), 1.0);
  EXPECT_EQ(auc(c, d), 0.75);
  EXPECT_DOUBLE_EQ(p_det(0.3), 0.7);
}

TEST(Auc, TiesCountHalf) {
  const std::vector<double> z(5, 0.0);
  EXPECT_EQ(auc(z, z), 0.5);
  const std::vector<double> ok{1, 2}, ko{2, 2};
  EXPECT_EQ(auc(ok, ko), 0.75);
}

TEST(Auc, RejectsEmptyAndNan) {
  const std::vector<double> e, one{1.0}, bad{std::nan("")};
  EXPECT_ANY_THROW(auc(e, one));
  EXPECT_ANY_THROW(auc(one, bad));
}

TEST(Auc, MatchesPairCountingAndIsRankInvariant) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int> v(0, 20), len(1, 40);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> ok(len(g)), ko(len(g));
    for (double& x : ok) x = v(g);
    for (double& x : ko) x = v(g) + 2;
    double pairs = 0.0;
    for (double a : ok)
      for (double b : ko) pairs += b > a ? 1.0 : (b == a ? 0.5 : 0.0);
    const double direct = pairs / (static_cast<double>(ok.size()) * static_cast<double>(ko.size()));
    const double base = auc(ok, ko);
    EXPECT_NEAR(base, direct, 1e-12);
    std::vector<double> fo = ok, fk = ko;
    for (double& x : fo) x = std::exp(0.3 * x) - 7.0;
    for (double& x : fk) x = std::exp(0.3 * x) - 7.0;
    EXPECT_EQ(auc(fo, fk), base);
    EXPECT_DOUBLE_EQ(p_det(auc(ko, ok)), p_det(base));
  }
}

TEST(EvaluateDetection, ZeroEncodingGivesChance) {
  const auto r = evaluate_detection(Spectrum({2.0, 1.0}), AnomalyModel::white(3.0), EncoderParams::zeros(2),
                                    DetectorKind::LD, 1000, 4);
  EXPECT_EQ(r.auc, 0.5);
  EXPECT_EQ(r.p_det, 0.5);
}

TEST(EvaluateDetection, AnalyticLdOracle) {
  const auto r = evaluate_detection(Spectrum({1.0}), AnomalyModel::diagonal(Spectrum({4.0})), EncoderParams({1.0}),
                                    DetectorKind::LD, 10000, 5);
  EXPECT_NEAR(r.auc, 2.0 / std::numbers::pi * std::atan(2.0), 0.015);
}

TEST(EvaluateDetection, NullModelsNearHalf) {
  const auto m = gauss({1.0, 0.5, 2.0});
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto r = evaluate_models(m, m, DetectorKind::NPD, 10000, s);
    EXPECT_LE(std::abs(r.auc - 0.5), 3.0 / std::sqrt(10000.0));
  }
}

TEST(EvaluateDetection, DeterministicPerSeed) {
  const auto a = evaluate_detection(Spectrum({2.0, 1.0}), AnomalyModel::white(1.0), EncoderParams({0.5, 0.2}),
                                    DetectorKind::NPD, 500, 6);
  const auto b = evaluate_detection(Spectrum({2.0, 1.0}), AnomalyModel::white(1.0), EncoderParams({0.5, 0.2}),
                                    DetectorKind::NPD, 500, 6);
  EXPECT_EQ(a.scores.scores_ok, b.scores.scores_ok);
  EXPECT_EQ(a.auc, b.auc);
}

TEST(EvaluateDetection, NpdNotWorseThanLd) {
  const Spectrum lam({3.0, 1.5, 0.8, 0.4});
  const AnomalyModel ko = AnomalyModel::white(1.0);
  const EncoderParams enc({0.9, 0.7, 0.5, 0.3});
  const double ld = evaluate_detection(lam, ko, enc, DetectorKind::LD, 10000, 7).p_det;
  const double npd = evaluate_detection(lam, ko, enc, DetectorKind::NPD, 10000, 7).p_det;
  EXPECT_GE(npd, ld - 3.0 / std::sqrt(10000.0));
}

TEST(ScoreSample, CsvColumns) {
  ScoreSample s;
  s.scores_ok = {1.0};
  s.scores_ko = {2.5};
  std::ostringstream os;
  s.write_csv(os);
  EXPECT_EQ(os.str(), "label,score\nok,1\nko,2.5\n");
}

TEST(BinomialError, Formula) { EXPECT_DOUBLE_EQ(binomial_std_error(0.75, 300), std::sqrt(0.75 * 0.25 / 300)); }

}  // namespace
