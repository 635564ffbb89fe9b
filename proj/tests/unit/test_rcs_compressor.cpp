#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "rdd/profiles.hpp"
#include "rdd/rcs_compressor.hpp"

namespace {

using namespace rdd;

TEST(RcsDistortion, DiscardedEnergyPlusBudget) {
  const Spectrum lam({3.0, 1.0});
  EXPECT_DOUBLE_EQ(rcs_distortion(lam, {Selection({0}), 0.02}), 1.02);
  EXPECT_DOUBLE_EQ(rcs_distortion(lam, {Selection({0, 1}), 0.02}), 0.02);
}

TEST(RcsRate, HandValues) {
  EXPECT_NEAR(rcs_rate(Spectrum({1.0, 1.0}), {Selection({0, 1}), 0.02}), std::log2(100.0), 1e-12);
  EXPECT_NEAR(std::log2(100.0), 6.6439, 1e-4);
  // lambda equal to theta_eps carries no information.
  EXPECT_EQ(rcs_rate(Spectrum({0.5, 0.5}), {Selection({0, 1}), 1.0}), 0.0);
}

TEST(RcsRate, DoublingBudgetSavesHalfBitPerComponent) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(16, 0.15));
  for (std::size_t m = 1; m <= 6; ++m) {
    const Selection s = Selection::top(m);
    const double a = rcs_rate(lam, {s, 1e-3}), b = rcs_rate(lam, {s, 2e-3});
    EXPECT_NEAR(a - b, 0.5 * static_cast<double>(m), 1e-12);
  }
}

TEST(RcsEncoder, Validation) {
  EXPECT_THROW(Selection(std::vector<std::size_t>{}), InputError);
  EXPECT_THROW(Selection({2, 1}), InputError);
  EXPECT_THROW(rcs_rate(Spectrum({1.0, 1.0}), {Selection({0, 2}), 0.1}), DimensionError);
  EXPECT_THROW(rcs_rate(Spectrum({1.0, 1.0}), {Selection({0}), 0.0}), InputError);
}

TEST(RcsEncoder, EquivalentEncoderReproducesRateAndDistortion) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(12, 0.3));
  const RcsEncoder enc{Selection({0, 3, 7, 11}), default_epsilon(lam)};
  const EncoderParams xi = rcs_equivalent_encoder(lam, enc);
  EXPECT_NEAR(rate(lam, xi), rcs_rate(lam, enc), 1e-12);
  EXPECT_NEAR(distortion(lam, xi), rcs_distortion(lam, enc), 1e-12);
}

TEST(RcsModels, WhiteAnomalyAddsThetaToIdentity) {
  const Spectrum lam({3.0, 2.0, 1.0});
  const RcsEncoder enc{Selection({0, 2}), 0.1};
  const RcsModels m = rcs_compressed_models(lam, Eigen::MatrixXd::Identity(3, 3), enc);
  EXPECT_TRUE(m.ko_covariance.isApprox((1.0 + 0.05) * Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_DOUBLE_EQ(m.ok.variances[0], 3.05);
  EXPECT_DOUBLE_EQ(m.ok.variances[1], 1.05);
}

TEST(RcsModels, SingleKeptComponent) {
  const RcsEncoder enc{Selection({1}), 0.02};
  const RcsModels m = rcs_compressed_models(Spectrum({3.0, 1.0}), AnomalyModel::white(1.0), enc);
  ASSERT_EQ(m.ok.variances.size(), 1u);
  EXPECT_DOUBLE_EQ(m.ok.variances[0], 1.02);
}

TEST(RcsModels, NonDiagonalCovarianceIsKept) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(0, 2) = c(2, 0) = 0.4;
  const RcsModels m = rcs_compressed_models(Spectrum({1.0, 1.0, 1.0}), c, {Selection({0, 2}), 0.2});
  EXPECT_DOUBLE_EQ(m.ko_covariance(0, 1), 0.4);
  EXPECT_THROW((void)m.ko_diagonal(), InputError);
  c(0, 1) = 0.3;
  EXPECT_THROW(rcs_compressed_models(Spectrum({1.0, 1.0, 1.0}), c, {Selection({0}), 0.2}), InputError);
}

TEST(Selections, ExhaustiveWhenSmall) {
  const auto s = sample_selections(3, 2, 10000, 1);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], Selection({0, 1}));
  EXPECT_EQ(s[1], Selection({0, 2}));
  EXPECT_EQ(s[2], Selection({1, 2}));
  EXPECT_EQ(binomial(32, 16), 601080390u);
  EXPECT_EQ(binomial(5, 7), 0u);
}

TEST(Selections, CappedDrawsAreDistinctAndDeterministic) {
  const auto a = sample_selections(32, 10, 500, 42);
  ASSERT_EQ(a.size(), 500u);
  std::set<Selection> uniq(a.begin(), a.end());
  EXPECT_EQ(uniq.size(), a.size());
  for (const auto& s : a) {
    EXPECT_EQ(s.size(), 10u);
    EXPECT_NO_THROW(s.validate(32));
  }
  EXPECT_EQ(a, sample_selections(32, 10, 500, 42));
  EXPECT_NE(a, sample_selections(32, 10, 500, 43));
}

TEST(Selections, DrawsCoverComponentsRoughlyUniformly) {
  const auto s = sample_selections(8, 2, 20, 5);
  std::vector<int> hits(8, 0);
  for (const auto& x : s)
    for (std::size_t j : x.indices()) ++hits[j];
  for (int h : hits) EXPECT_GT(h, 0);
}

TEST(Selections, TopComponentsMinimizeDistortion) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(10, 0.2));
  const double eps = default_epsilon(lam);
  for (std::size_t m = 1; m <= 10; ++m) {
    const double best = rcs_distortion(lam, {Selection::top(m), eps});
    for (const auto& s : sample_selections(10, m, 1000, 0)) EXPECT_GE(rcs_distortion(lam, {s, eps}), best - 1e-12);
  }
}

TEST(Selections, IdFormat) { EXPECT_EQ(Selection({0, 3, 17}).id(), "0-3-17"); }

TEST(RcsExperiment, DecompositionAndFineFlag) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(8, 0.15));
  RcsConfig cfg;
  cfg.samples = 0;
  cfg.max_selections = 20;
  cfg.seed = 3;
  const RcsTable t = rcs_experiment(lam, AnomalyModel::white(1.0), cfg);
  EXPECT_DOUBLE_EQ(t.epsilon, default_epsilon(lam));
  for (const auto& row : t.rows) {
    double discarded = 0.0;
    for (std::size_t j = 0; j < lam.size(); ++j)
      if (!row.selection.contains(j)) discarded += lam[j];
    EXPECT_NEAR(row.distortion - t.epsilon, discarded, 1e-12);
    EXPECT_TRUE(row.fine);
    EXPECT_TRUE(std::isnan(row.pdet_ld));
  }
}

TEST(RcsExperiment, MeasuredOmegaMatchesEquivalentEncoder) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(8, 0.15));
  RcsConfig cfg;
  cfg.samples = 0;
  cfg.max_selections = 30;
  const RcsTable t = rcs_experiment(lam, AnomalyModel::white(1.0), cfg);
  for (const auto& row : t.rows) {
    EXPECT_NEAR(row.omega_measured, row.omega_equivalent, 0.05 * (1.0 + row.omega_equivalent));
  }
}

TEST(RcsExperiment, DetectionIsDeterministicAcrossJobs) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(6, 0.15));
  RcsConfig cfg;
  cfg.samples = 300;
  cfg.max_selections = 5;
  cfg.seed = 11;
  cfg.m_counts = {1, 3};
  const RcsTable a = rcs_experiment(lam, AnomalyModel::white(1.0), cfg);
  cfg.jobs = 3;
  const RcsTable b = rcs_experiment(lam, AnomalyModel::white(1.0), cfg);
  std::ostringstream sa, sb;
  a.write_csv(sa);
  b.write_csv(sb);
  EXPECT_EQ(sa.str(), sb.str());
  for (const auto& row : a.rows) {
    EXPECT_GE(row.pdet_ld, 0.0);
    EXPECT_LE(row.pdet_npd, 1.0);
  }
}

TEST(RcsTable, GoldenHeader) {
  RcsTable t;
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "m_count,selection_id,rate_bits,distortion,pdet_ld,pdet_npd\n");
}

TEST(RcsExperiment, RejectsBadConfig) {
  RcsConfig cfg;
  cfg.m_counts = {9};
  EXPECT_THROW(rcs_experiment(Spectrum({1.0, 1.0}), AnomalyModel::white(1.0), cfg), InputError);
  EXPECT_THROW(rcs_experiment(Spectrum({1.0}), AnomalyModel::white(1.0), RcsConfig{}), InputError);
}

}  // namespace
