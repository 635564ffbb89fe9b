#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rdd/pareto_solver.hpp"
#include "rdd/profiles.hpp"

namespace {

using namespace rdd;

std::vector<double> vec(const RatioVector& r) { return {r.values().begin(), r.values().end()}; }

void expect_certified(const RddProblem& p, const SolveResult& res) {
  ASSERT_TRUE(res.feasible());
  const double n = static_cast<double>(p.lam_ok.size());
  for (double x : res.xis.values()) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_LE(distortion(p.lam_ok, res.xis), p.delta + 1e-8 * n);
  const RatioVector r = ratios(p.lam_ok, p.anomaly);
  const double w = p.kind == ConstraintKind::AgnosticZ ? dist_z(r, res.xis) : dist_j(r, res.xis);
  EXPECT_GE(w, p.omega - 1e-8);
  EXPECT_NEAR(res.rate_bits, rate(p.lam_ok, res.xis), 1e-9);
}

TEST(SolveRd, HandWaterFilling) {
  const SolveResult r = solve_rd(Spectrum({3.0, 1.0}), 2.0);
  EXPECT_NEAR(r.xis[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.xis[1], 0.0, 1e-15);
  EXPECT_NEAR(r.rate_bits, 0.79248, 1e-5);
  EXPECT_NEAR(r.rate_bits, 0.5 * std::log2(3.0), 1e-14);
}

TEST(SolveRd, FullBudgetIsFree) {
  const SolveResult r = solve_rd(Spectrum({3.0, 1.0}), 5.0);
  EXPECT_EQ(r.rate_bits, 0.0);
  EXPECT_EQ(r.xis[0], 0.0);
  EXPECT_EQ(r.xis[1], 0.0);
}

TEST(SolveRd, ZeroBudgetIsLossless) {
  const SolveResult r = solve_rd(Spectrum({3.0, 1.0}), 0.0);
  EXPECT_TRUE(is_infinite_rate(r.rate_bits));
  EXPECT_EQ(r.xis[0], 1.0);
  EXPECT_EQ(r.xis[1], 1.0);
}

TEST(SolveRd, RelativeDistortionNonDecreasingAndReachesOne) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(32, 0.15));
  const SolveResult r = solve_rd(lam, 10.0);
  for (std::size_t j = 1; j < lam.size(); ++j) EXPECT_LE(r.xis[j], r.xis[j - 1] + 1e-15);
  EXPECT_EQ(r.xis[lam.size() - 1], 0.0);
}

TEST(SolveZ, ZeroOmegaReducesToRd) {
  const Spectrum lam({2.0, 1.5, 0.4, 0.1});
  const RddProblem p{lam, AnomalyModel::white(1.0), 1.2, 0.0, ConstraintKind::AgnosticZ};
  const SolveResult z = solve_rdd_z(p);
  const SolveResult rd = solve_rd(lam, 1.2);
  EXPECT_EQ(z.status, SolveStatus::Optimal);
  EXPECT_NEAR(z.rate_bits, rd.rate_bits, 1e-6);
  for (std::size_t j = 0; j < lam.size(); ++j) EXPECT_NEAR(z.xis[j], rd.xis[j], 1e-6);
}

TEST(SolveZ, WhiteSourceAgainstEqualWhiteAnomalyIsInfeasible) {
  const RddProblem p{Spectrum(std::vector<double>(4, 1.0)), AnomalyModel::white(1.0), 1.0, 0.1,
                     ConstraintKind::AgnosticZ};
  const SolveResult z = solve_rdd_z(p);
  EXPECT_EQ(z.status, SolveStatus::Infeasible);
  EXPECT_NEAR(z.diagnostics.max_achievable_omega, 0.0, 1e-12);
}

TEST(SolveZ, AboveCertificateIsInfeasible) {
  const Spectrum lam({1.5, 0.5});
  const RatioVector r = ratios(lam, AnomalyModel::white(1.0));
  const double cap = max_achievable_z(lam, r, 1.0);
  const SolveResult z = solve_rdd_z({lam, AnomalyModel::white(1.0), 1.0, cap * 1.01, ConstraintKind::AgnosticZ});
  EXPECT_EQ(z.status, SolveStatus::Infeasible);
  const SolveResult ok = solve_rdd_z({lam, AnomalyModel::white(1.0), 1.0, cap * 0.99, ConstraintKind::AgnosticZ});
  EXPECT_TRUE(ok.feasible());
}

TEST(SolveZ, TwoComponentGridOracle) {
  const Spectrum lam({1.5, 0.5});
  const RddProblem p{lam, AnomalyModel::white(1.0), 1.0, 0.2, ConstraintKind::AgnosticZ};
  const SolveResult z = solve_rdd_z(p);
  expect_certified(p, z);
  const std::vector<double> l{1.5, 0.5};
  const auto grid = oracle::grid_minimum(l, vec(ratios(lam, p.anomaly)), 1.0, 0.2, oracle::Floor::Z);
  ASSERT_TRUE(grid.feasible);
  EXPECT_NEAR(z.rate_bits, grid.rate, 2e-3);
  // The exact optimum can only lie below a grid point.
  EXPECT_LE(z.rate_bits, grid.rate + 1e-9);
}

TEST(SolveZ, RequiresWhiteAnomaly) {
  const RddProblem p{Spectrum({1.0, 2.0}), AnomalyModel::diagonal(Spectrum({1.0, 1.0})), 1.0, 0.1,
                     ConstraintKind::AgnosticZ};
  EXPECT_THROW(solve_rdd_z(p), InputError);
}

TEST(SolveJ, ZeroOmegaReducesToRd) {
  const Spectrum lam({2.0, 1.5, 0.4, 0.1});
  const RddProblem p{lam, AnomalyModel::diagonal(Spectrum({1, 1, 1, 1})), 1.2, 0.0, ConstraintKind::AwareJ};
  const SolveResult j = solve_rdd_j(p);
  EXPECT_NEAR(j.rate_bits, solve_rd(lam, 1.2).rate_bits, 1e-6);
}

TEST(SolveJ, IdenticalAnomalyIsInfeasible) {
  const Spectrum lam({2.0, 0.5});
  const SolveResult j = solve_rdd_j({lam, AnomalyModel::diagonal(lam), 1.0, 0.1, ConstraintKind::AwareJ});
  EXPECT_EQ(j.status, SolveStatus::Infeasible);
}

TEST(SolveJ, TwoComponentGridOracle) {
  const Spectrum lam({1.5, 0.5});
  const RddProblem p{lam, AnomalyModel::diagonal(Spectrum({0.5, 1.5})), 1.0, 0.05, ConstraintKind::AwareJ};
  const SolveResult j = solve_rdd_j(p);
  expect_certified(p, j);
  const auto grid =
      oracle::grid_minimum({1.5, 0.5}, vec(ratios(lam, p.anomaly)), 1.0, 0.05, oracle::Floor::J);
  ASSERT_TRUE(grid.feasible);
  EXPECT_LE(j.rate_bits, grid.rate + 2e-3);
}

TEST(SolveJ, RestartsAreSeeded) {
  const Spectrum lam({2.0, 1.0, 0.6, 0.4});
  const RddProblem p{lam, AnomalyModel::diagonal(Spectrum({0.5, 1.0, 1.5, 1.0})), 1.5, 0.3, ConstraintKind::AwareJ};
  SolverConfig c;
  c.seed = 99;
  const SolveResult a = solve_rdd_j(p, c), b = solve_rdd_j(p, c);
  EXPECT_EQ(a.rate_bits, b.rate_bits);
  EXPECT_EQ(a.diagnostics.restart_index, b.diagnostics.restart_index);
}

TEST(Solvers, RandomInstancesAreCertified) {
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 2 + t % 7;
    std::vector<double> l(n), k(n);
    for (std::size_t j = 0; j < n; ++j) {
      l[j] = 0.1 + 3 * u(g);
      k[j] = 0.1 + 3 * u(g);
    }
    const Spectrum lam(l);
    const double delta = (0.2 + 0.6 * u(g)) * lam.trace();
    const AnomalyModel white = AnomalyModel::white(0.5 + u(g));
    const double cap = max_achievable_z(lam, ratios(lam, white), delta);
    const RddProblem pz{lam, white, delta, cap * (0.1 + 0.8 * u(g)), ConstraintKind::AgnosticZ};
    expect_certified(pz, solve_rdd_z(pz));
    const AnomalyModel diag = AnomalyModel::diagonal(Spectrum(k));
    const double jrd = dist_j(ratios(lam, diag), solve_rd(lam, delta).xis);
    const RddProblem pj{lam, diag, delta, jrd * (1.0 + u(g)), ConstraintKind::AwareJ};
    const SolveResult rj = solve_rdd_j(pj);
    if (rj.feasible()) expect_certified(pj, rj);
  }
}

TEST(Sweep, SingleCellEqualsSingleSolve) {
  const ProblemFamily fam{make_profile(ProfileSpec::exponential(8, 0.3)), AnomalyModel::white(1.0),
                          ConstraintKind::AgnosticZ};
  SolverConfig cfg;
  const ParetoSurface s = sweep(fam, {2.0}, {1.0}, cfg);
  ASSERT_EQ(s.points.size(), 1u);
  SolverConfig cell = cfg;
  cell.seed = derive_key(cfg.seed, {0, 0});
  const SolveResult r = solve({fam.lam_ok, fam.anomaly, 2.0, 1.0, fam.kind}, cell);
  EXPECT_EQ(s.points[0].result.rate_bits, r.rate_bits);
}

TEST(Sweep, ZeroOmegaRowIsTheRdCurve) {
  const Spectrum lam = make_profile(ProfileSpec::exponential(16, 0.2));
  const ProblemFamily fam{lam, AnomalyModel::white(1.0), ConstraintKind::AgnosticZ};
  const std::vector<double> deltas{1.0, 3.0, 6.0, 12.0};
  const ParetoSurface s = sweep(fam, deltas, {0.0}, SolverConfig{});
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    EXPECT_NEAR(s.at(i, 0).result.rate_bits, solve_rd(lam, deltas[i]).rate_bits, 1e-6);
  }
}

TEST(Sweep, CanonicalSurfaceIsMonotone) {
  const ProblemFamily fam{make_profile(ProfileSpec::exponential(32, 0.15)), AnomalyModel::white(1.0),
                          ConstraintKind::AgnosticZ};
  std::vector<double> omegas;
  for (int k = 0; k < 20; ++k) omegas.push_back(2.0 * k);
  const ParetoSurface s = sweep(fam, {2.0, 6.0, 10.0, 14.0}, omegas, SolverConfig{});
  EXPECT_TRUE(s.violations.empty());
  EXPECT_TRUE(check_monotonicity(s, 1e-6).empty());
}

TEST(Sweep, ScheduleAndWarmStartIndependent) {
  const ProblemFamily fam{make_profile(ProfileSpec::exponential(8, 0.3)),
                          AnomalyModel::diagonal(Spectrum(std::vector<double>(8, 1.0))), ConstraintKind::AwareJ};
  const std::vector<double> deltas{2.0, 4.0}, omegas{0.0, 1.0, 2.0};
  SolverConfig cfg;
  const ParetoSurface a = sweep(fam, deltas, omegas, cfg, 1);
  const ParetoSurface b = sweep(fam, deltas, omegas, cfg, 2);
  SolverConfig cold = cfg;
  cold.warm_start = false;
  const ParetoSurface c = sweep(fam, deltas, omegas, cold, 1);
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    EXPECT_EQ(a.points[k].result.rate_bits, b.points[k].result.rate_bits);
    EXPECT_NEAR(a.points[k].result.rate_bits, c.points[k].result.rate_bits, 2e-3);
  }
}

TEST(Sweep, RejectsUnsortedOrEmptyGrids) {
  const ProblemFamily fam{Spectrum({1.0, 2.0}), AnomalyModel::white(1.0), ConstraintKind::AgnosticZ};
  EXPECT_THROW(sweep(fam, {}, {0.0}, SolverConfig{}), InputError);
  EXPECT_THROW(sweep(fam, {1.0}, {1.0, 0.5}, SolverConfig{}), InputError);
}

TEST(SolverConfig, JsonRoundTripAndUnknownKeys) {
  SolverConfig c;
  c.restarts = 3;
  c.seed = 41;
  const SolverConfig back = SolverConfig::from_json(c.to_json());
  EXPECT_EQ(back.restarts, 3);
  EXPECT_EQ(back.seed, 41u);
  EXPECT_THROW(SolverConfig::from_json({{"tolerance", 1e-3}}), InputError);
  EXPECT_THROW(SolverConfig::from_json({{"restarts", 0}}), InputError);
}

}  // namespace
