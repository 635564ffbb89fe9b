#pragma once

// Rate minimization under a distortion budget and a distinguishability floor
// for Gaussian-additive encoders:
//
//   min  -(1 / 2 ln 2) sum_j ln(1 - xi_j)
//   s.t. 0 <= xi_j <= 1,  sum_j lambda_j xi_j >= tr(lambda) - delta,
//        and either |sum_j r_j xi_j| >= 2 omega ln 2          (agnostic, Z)
//        or     sum_j (r_j xi_j)^2 / (1 - r_j xi_j) >= 2 omega ln 2  (aware, J)
//
// The Z problem splits into two convex programs, one per sign of the sum.
// The J problem has a convex function bounded from below (reverse convex) and
// is handled by a penalty convex-concave procedure with multiple starts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdd/error.hpp"
#include "rdd/gaussian_core.hpp"
#include "rdd/interior_point.hpp"
#include "rdd/parallel.hpp"
#include "rdd/rng.hpp"

namespace rdd {

struct SolverConfig {
  double tol = 1e-9;
  double feas_tol = 1e-8;
  int restarts = 8;
  int max_outer_iters = 200;
  double penalty_init = 1.0;
  double penalty_growth = 5.0;
  double penalty_cap = 1e6;
  std::uint64_t seed = 0;
  bool warm_start = true;

  void validate() const {
    if (!(tol > 0.0) || !(feas_tol > 0.0)) throw InputError("SolverConfig: tolerances must be positive");
    if (restarts < 1) throw InputError("SolverConfig: restarts must be >= 1");
    if (max_outer_iters < 1) throw InputError("SolverConfig: max_outer_iters must be >= 1");
    if (!(penalty_init > 0.0) || !(penalty_growth >= 1.0) || !(penalty_cap >= penalty_init)) {
      throw InputError("SolverConfig: invalid penalty schedule");
    }
  }

  static SolverConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("SolverConfig: expected a JSON object");
    SolverConfig c;
    for (const auto& [key, value] : j.items()) {
      try {
        if (key == "tol") c.tol = value.get<double>();
        else if (key == "feas_tol") c.feas_tol = value.get<double>();
        else if (key == "restarts") c.restarts = value.get<int>();
        else if (key == "max_outer_iters") c.max_outer_iters = value.get<int>();
        else if (key == "penalty_init") c.penalty_init = value.get<double>();
        else if (key == "penalty_growth") c.penalty_growth = value.get<double>();
        else if (key == "penalty_cap") c.penalty_cap = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "warm_start") c.warm_start = value.get<bool>();
        else throw InputError("SolverConfig: unknown key '" + key + "'");
      } catch (const nlohmann::json::exception& e) {
        throw InputError("SolverConfig: bad value for '" + key + "': " + e.what());
      }
    }
    c.validate();
    return c;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"tol", tol},
            {"feas_tol", feas_tol},
            {"restarts", restarts},
            {"max_outer_iters", max_outer_iters},
            {"penalty_init", penalty_init},
            {"penalty_growth", penalty_growth},
            {"penalty_cap", penalty_cap},
            {"seed", seed},
            {"warm_start", warm_start}};
  }
};

enum class ConstraintKind { AgnosticZ, AwareJ };

inline const char* to_string(ConstraintKind k) { return k == ConstraintKind::AgnosticZ ? "agnostic_z" : "aware_j"; }

struct RddProblem {
  Spectrum lam_ok;
  AnomalyModel anomaly;
  double delta = 0.0;
  double omega = 0.0;
  ConstraintKind kind = ConstraintKind::AgnosticZ;

  void validate() const {
    if (!(delta >= 0.0)) throw InputError("RddProblem: delta must be >= 0");
    if (!(omega >= 0.0) || !std::isfinite(omega)) throw InputError("RddProblem: omega must be finite and >= 0");
    if (kind == ConstraintKind::AgnosticZ && !anomaly.is_white()) {
      throw InputError("RddProblem: the agnostic Z constraint needs a white anomaly");
    }
    if (kind == ConstraintKind::AwareJ && anomaly.is_white()) {
      throw InputError("RddProblem: the aware J constraint needs a diagonal anomaly");
    }
    (void)anomaly.expand(lam_ok.size());
  }
};

enum class SolveStatus { Optimal, Feasible, Infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct SolveDiagnostics {
  int iterations = 0;
  double c1_residual = 0.0;   // (tr - delta) - sum lambda xi; <= 0 when satisfied
  double c2_residual = 0.0;   // omega - achieved omega (bits); <= 0 when satisfied
  int branch = 0;             // Z: +1 / -1 sign branch taken
  int restart_index = -1;     // J: winning start
  double max_achievable_omega = std::numeric_limits<double>::quiet_NaN();  // Z certificate (bits)
  double best_slack = 0.0;    // J: smallest remaining slack over restarts
  std::vector<std::size_t> rate_clamped;  // components sitting on the xi upper clamp
  std::string note;
};

struct SolveResult {
  EncoderParams xis;
  double rate_bits = 0.0;
  double achieved_delta = 0.0;
  double achieved_omega = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  SolveDiagnostics diagnostics;

  [[nodiscard]] bool feasible() const { return status != SolveStatus::Infeasible; }
};

/// Upper clamp on xi inside every convex subproblem.
inline constexpr double kXiClamp = 1.0 - 1e-12;

namespace detail {

inline std::vector<std::size_t> support(const Spectrum& lam) {
  std::vector<std::size_t> s;
  for (std::size_t j = 0; j < lam.size(); ++j) {
    if (lam[j] > 0.0) s.push_back(j);
  }
  return s;
}

inline double distortion_target(const Spectrum& lam, double delta) { return lam.trace() - delta; }

inline EncoderParams scatter(std::size_t n, const std::vector<std::size_t>& idx, const Eigen::VectorXd& x) {
  std::vector<double> xi(n, 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) xi[idx[k]] = std::clamp(x[static_cast<Eigen::Index>(k)], 0.0, 1.0);
  return EncoderParams(std::move(xi));
}

inline std::vector<std::size_t> clamped(const EncoderParams& xi, const Spectrum& lam) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    if (lam[j] > 0.0 && xi[j] >= 1.0 - 1e-9) out.push_back(j);
  }
  return out;
}

inline void fill_measures(SolveResult& res, const Spectrum& lam, double delta) {
  res.rate_bits = rate(lam, res.xis);
  res.achieved_delta = distortion(lam, res.xis);
  res.diagnostics.c1_residual = res.achieved_delta - delta;
  res.diagnostics.rate_clamped = clamped(res.xis, lam);
}

/// max sign * sum r_j xi_j subject to sum lambda_j xi_j >= target, 0 <= xi <= 1.
/// Fractional knapsack: take every component that helps, then pay for the
/// remaining distortion budget with the cheapest loss per unit of lambda.
inline std::pair<double, std::vector<double>> linear_extreme(const Spectrum& lam, std::span<const double> r,
                                                             double target, double sign) {
  const std::size_t n = lam.size();
  std::vector<double> xi(n, 0.0);
  double value = 0.0, covered = 0.0;
  std::vector<std::size_t> rest;
  for (std::size_t j = 0; j < n; ++j) {
    if (lam[j] <= 0.0) continue;
    if (sign * r[j] > 0.0) {
      xi[j] = 1.0;
      value += sign * r[j];
      covered += lam[j];
    } else {
      rest.push_back(j);
    }
  }
  std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
    const double ea = sign * r[a] / lam[a], eb = sign * r[b] / lam[b];
    return ea != eb ? ea > eb : a < b;
  });
  for (std::size_t j : rest) {
    const double need = target - covered;
    if (need <= 0.0) break;
    const double take = std::min(1.0, need / lam[j]);
    xi[j] = take;
    value += sign * r[j] * take;
    covered += lam[j] * take;
  }
  if (target - covered > 1e-12 * std::max(1.0, std::abs(target))) {
    return {-std::numeric_limits<double>::infinity(), xi};
  }
  return {value, xi};
}

}  // namespace detail

/// Closed-form Gaussian rate-distortion solution (reverse water-filling).
inline SolveResult solve_rd(const Spectrum& lam_ok, double delta) {
  if (!(delta >= 0.0)) throw InputError("solve_rd: delta must be >= 0");
  const std::size_t n = lam_ok.size();
  const double total = lam_ok.trace();
  SolveResult res;
  res.status = SolveStatus::Optimal;
  if (delta >= total) {
    res.xis = EncoderParams::zeros(n);
  } else if (delta <= 0.0) {
    std::vector<double> xi(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) xi[j] = lam_ok[j] > 0.0 ? 1.0 : 0.0;
    res.xis = EncoderParams(std::move(xi));
  } else {
    std::vector<double> asc;
    for (double v : lam_ok.values()) {
      if (v > 0.0) asc.push_back(v);
    }
    std::sort(asc.begin(), asc.end());
    // Smallest i such that the water level over the top (k - i) components
    // stays below asc[i].
    double prefix = 0.0, level = 0.0;
    const std::size_t k = asc.size();
    for (std::size_t i = 0; i < k; ++i) {
      level = (delta - prefix) / static_cast<double>(k - i);
      if (level <= asc[i]) break;
      prefix += asc[i];
    }
    std::vector<double> xi(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (lam_ok[j] > 0.0) xi[j] = std::clamp(1.0 - std::min(lam_ok[j], level) / lam_ok[j], 0.0, 1.0);
    }
    res.xis = EncoderParams(std::move(xi));
  }
  detail::fill_measures(res, lam_ok, delta);
  res.achieved_omega = 0.0;
  return res;
}

/// Largest Z (bits) reachable under the box and distortion constraints; the
/// infeasibility certificate of the agnostic problem.
inline double max_achievable_z(const Spectrum& lam_ok, const RatioVector& r, double delta) {
  const double target = detail::distortion_target(lam_ok, delta);
  const double up = detail::linear_extreme(lam_ok, r.values(), target, +1.0).first;
  const double down = detail::linear_extreme(lam_ok, r.values(), target, -1.0).first;
  return std::max(up, down) * kHalfNatsToBits;
}

namespace detail {

inline ipm::Problem rate_problem(const Spectrum& lam, const std::vector<std::size_t>& idx, double target,
                                 int extra_rows, bool with_slack, double slack_weight) {
  const auto nv = static_cast<Eigen::Index>(idx.size() + (with_slack ? 1 : 0));
  ipm::Problem p;
  p.vars.resize(static_cast<std::size_t>(nv));
  for (std::size_t k = 0; k < idx.size(); ++k) p.vars[k] = {ipm::Term::NegLog1m, 1.0, 0.0, kXiClamp};
  if (with_slack) {
    p.vars.back() = {ipm::Term::Linear, slack_weight, 0.0, std::numeric_limits<double>::infinity()};
  }
  const bool c1_active = target > 0.0;
  const auto rows = static_cast<Eigen::Index>((c1_active ? 1 : 0) + extra_rows);
  p.A = Eigen::MatrixXd::Zero(rows, nv);
  p.b = Eigen::VectorXd::Zero(rows);
  if (c1_active) {
    for (std::size_t k = 0; k < idx.size(); ++k) p.A(0, static_cast<Eigen::Index>(k)) = lam[idx[k]];
    p.b[0] = target;
  }
  return p;
}

/// Interior point solve from the box center, falling back to `start` when the
/// centered run does not converge. Boundary starts slow Mehrotra steps down.
inline ipm::Result solve_subproblem(const ipm::Problem& p, const ipm::Options& opt, std::span<const double> start) {
  ipm::Result sol = ipm::solve(p, opt);
  if (!sol.converged() && !start.empty()) {
    ipm::Result alt = ipm::solve(p, opt, start);
    alt.iterations += sol.iterations;
    if (alt.converged() || alt.gap < sol.gap) sol = std::move(alt);
  }
  return sol;
}

inline SolveResult lossless_corner(const Spectrum& lam, double delta) {
  SolveResult res = solve_rd(lam, 0.0);
  fill_measures(res, lam, delta);
  return res;
}

}  // namespace detail

/// Agnostic problem: two convex branches, lower-rate feasible branch wins.
inline SolveResult solve_rdd_z(const RddProblem& problem, const SolverConfig& cfg = {}) {
  problem.validate();
  cfg.validate();
  const Spectrum& lam = problem.lam_ok;
  const std::size_t n = lam.size();
  const RatioVector r = ratios(lam, problem.anomaly);
  const double need = 2.0 * problem.omega * std::numbers::ln2;
  const double target = detail::distortion_target(lam, problem.delta);
  const auto idx = detail::support(lam);

  auto finish = [&](SolveResult res, int branch) {
    detail::fill_measures(res, lam, problem.delta);
    res.achieved_omega = dist_z(r, res.xis);
    res.diagnostics.c2_residual = problem.omega - res.achieved_omega;
    res.diagnostics.branch = branch;
    return res;
  };
  auto certified = [&](const SolveResult& res) {
    return res.diagnostics.c1_residual <= 1e-8 * static_cast<double>(n) &&
           res.diagnostics.c2_residual <= 1e-8;
  };

  const double cert = max_achievable_z(lam, r, problem.delta);
  SolveResult infeasible;
  infeasible.xis = EncoderParams::zeros(n);
  infeasible.status = SolveStatus::Infeasible;
  infeasible.diagnostics.max_achievable_omega = cert;

  if (idx.empty() || problem.delta <= 1e-12 * std::max(1.0, lam.trace())) {
    // Every budget-meeting encoder keeps all components: only xi = 1 remains.
    SolveResult res = finish(detail::lossless_corner(lam, problem.delta), 0);
    res.diagnostics.max_achievable_omega = cert;
    if (res.diagnostics.c2_residual > 1e-8) {
      infeasible.diagnostics.note = "lossless corner does not reach omega";
      return infeasible;
    }
    res.status = SolveStatus::Optimal;
    res.diagnostics.note = "delta = 0: lossless corner";
    return res;
  }

  {
    // The water-filling point solves the problem without the Z floor; if it
    // already meets the floor it is optimal.
    SolveResult rd = solve_rd(lam, problem.delta);
    const double s = z_signed_sum(r, rd.xis);
    if (std::abs(s) >= need) {
      rd = finish(std::move(rd), s >= 0.0 ? +1 : -1);
      rd.status = SolveStatus::Optimal;
      rd.diagnostics.max_achievable_omega = cert;
      rd.diagnostics.note = "Z floor inactive at the water-filling solution";
      return rd;
    }
  }

  std::optional<SolveResult> best;
  int total_iters = 0;
  for (const double sign : {+1.0, -1.0}) {
    const double reach = detail::linear_extreme(lam, r.values(), target, sign).first;
    if (reach < need - cfg.feas_tol) continue;
    ipm::Problem p = detail::rate_problem(lam, idx, target, 1, false, 0.0);
    const auto row = p.rows() - 1;
    for (std::size_t k = 0; k < idx.size(); ++k) p.A(row, static_cast<Eigen::Index>(k)) = sign * r[idx[k]];
    p.b[row] = need;
    const SolveResult rd = solve_rd(lam, std::max(problem.delta, 0.0));
    std::vector<double> start(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) start[k] = rd.xis[idx[k]];
    ipm::Result sol = detail::solve_subproblem(p, {cfg.tol, 1e-12, 400}, start);
    ipm::polish_kkt(p, sol);
    total_iters += sol.iterations;
    SolveResult res;
    res.xis = detail::scatter(n, idx, sol.x);
    res = finish(std::move(res), sign > 0 ? +1 : -1);
    // Sign branch must hold on the signed sum, not only on its magnitude.
    const double signed_sum = sign * z_signed_sum(r, res.xis);
    if (signed_sum < need - 1e-8 * 2.0 * std::numbers::ln2 || !certified(res)) continue;
    res.status = sol.converged() ? SolveStatus::Optimal : SolveStatus::Feasible;
    if (!best) {
      best = std::move(res);
      continue;
    }
    const double dr = res.rate_bits - best->rate_bits;
    const bool tie = std::abs(dr) <= cfg.tol;
    if (dr < -cfg.tol || (tie && std::abs(z_signed_sum(r, res.xis)) > std::abs(z_signed_sum(r, best->xis)))) {
      best = std::move(res);
    }
  }
  if (!best) {
    infeasible.diagnostics.iterations = total_iters;
    infeasible.diagnostics.c2_residual = problem.omega - cert;
    infeasible.diagnostics.note = "both sign branches infeasible: max achievable Z below omega";
    return infeasible;
  }
  best->diagnostics.iterations = total_iters;
  best->diagnostics.max_achievable_omega = cert;
  if (!best->diagnostics.rate_clamped.empty()) best->diagnostics.note = "rate effectively infinite on clamped components";
  return *best;
}

namespace detail {

struct CcpOutcome {
  EncoderParams xis;
  double rate_bits = kInfiniteRate;
  double slack = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Penalty convex-concave procedure from one start. The J function is
/// replaced by its tangent plane at the current iterate; the tangent lies
/// below the convex function, so a subproblem point with zero slack is
/// feasible for the true constraint.
inline CcpOutcome ccp_run(const Spectrum& lam, const std::vector<std::size_t>& idx, std::span<const double> r_full,
                          double target, double need, std::vector<double> x, const SolverConfig& cfg) {
  const std::size_t m = idx.size();
  std::vector<double> r(m);
  for (std::size_t k = 0; k < m; ++k) r[k] = r_full[idx[k]];
  for (double& v : x) v = std::clamp(v, 0.0, 1.0 - 1e-6);

  CcpOutcome out;
  double tau = cfg.penalty_init;
  double prev_rate = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_outer_iters; ++it) {
    const double g0 = j_sum(r, x);
    const std::vector<double> grad = j_sum_gradient(r, x);
    ipm::Problem p = rate_problem(lam, idx, target, 1, true, tau);
    const auto row = p.rows() - 1;
    double rhs = need - g0;
    for (std::size_t k = 0; k < m; ++k) {
      p.A(row, static_cast<Eigen::Index>(k)) = grad[k];
      rhs += grad[k] * x[k];
    }
    p.A(row, static_cast<Eigen::Index>(m)) = 1.0;
    p.b[row] = rhs;
    std::vector<double> start(x);
    start.push_back(std::max(need - g0, 0.0) + 1.0);
    const ipm::Result sol = solve_subproblem(p, {std::min(cfg.tol, 1e-9), 1e-12, 400}, start);
    out.iterations += sol.iterations;
    for (std::size_t k = 0; k < m; ++k) x[k] = std::clamp(sol.x[static_cast<Eigen::Index>(k)], 0.0, kXiClamp);
    const double slack = std::max(0.0, sol.x[static_cast<Eigen::Index>(m)]);
    double nats2 = 0.0;
    for (double v : x) nats2 -= std::log1p(-v);
    const double rate_now = nats2 * kHalfNatsToBits;
    out.slack = slack;
    out.rate_bits = rate_now;
    if (slack < cfg.feas_tol && std::abs(prev_rate - rate_now) < cfg.tol * (1.0 + rate_now)) break;
    prev_rate = rate_now;
    tau = std::min(tau * cfg.penalty_growth, cfg.penalty_cap);
  }
  out.xis = EncoderParams(std::vector<double>(lam.size(), 0.0));
  std::vector<double> full(lam.size(), 0.0);
  for (std::size_t k = 0; k < m; ++k) full[idx[k]] = x[k];
  out.xis = EncoderParams(std::move(full));
  return out;
}

/// Raises xi along xi' = 1 - t (1 - xi) until the distortion budget is met.
inline std::vector<double> meet_budget(const Spectrum& lam, const std::vector<std::size_t>& idx,
                                       std::vector<double> x, double target) {
  double covered = 0.0, room = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    covered += lam[idx[k]] * x[k];
    room += lam[idx[k]] * (1.0 - x[k]);
  }
  if (covered >= target || room <= 0.0) return x;
  const double t = std::clamp(1.0 - (target - covered) / room, 0.0, 1.0);
  for (double& v : x) v = 1.0 - t * (1.0 - v);
  return x;
}

}  // namespace detail

/// Aware problem, solved heuristically. Optimal only when the water-filling
/// solution already satisfies the J floor (then it is the global optimum);
/// otherwise Feasible (not certified) or Infeasible.
inline SolveResult solve_rdd_j(const RddProblem& problem, const SolverConfig& cfg = {},
                               const EncoderParams* warm = nullptr) {
  problem.validate();
  cfg.validate();
  const Spectrum& lam = problem.lam_ok;
  const std::size_t n = lam.size();
  const RatioVector r = ratios(lam, problem.anomaly);
  const double need = 2.0 * problem.omega * std::numbers::ln2;
  const double target = detail::distortion_target(lam, problem.delta);
  const auto idx = detail::support(lam);

  auto finish = [&](SolveResult res) {
    detail::fill_measures(res, lam, problem.delta);
    res.achieved_omega = dist_j(r, res.xis);
    res.diagnostics.c2_residual = problem.omega - res.achieved_omega;
    return res;
  };

  SolveResult rd = solve_rd(lam, problem.delta);
  bool rd_in_domain = true;
  for (std::size_t j = 0; j < n; ++j) rd_in_domain = rd_in_domain && r[j] * rd.xis[j] < 1.0;
  if (rd_in_domain) {
    rd = finish(std::move(rd));
    if (rd.diagnostics.c2_residual <= 0.0) {
      rd.status = SolveStatus::Optimal;
      rd.diagnostics.restart_index = 0;
      rd.diagnostics.note = "J floor inactive at the water-filling solution";
      return rd;
    }
  }
  SolveResult infeasible;
  infeasible.xis = EncoderParams::zeros(n);
  infeasible.status = SolveStatus::Infeasible;
  if (idx.empty() || problem.delta <= 1e-12 * std::max(1.0, lam.trace())) {
    infeasible.diagnostics.note = "lossless corner outside the J domain or below omega";
    return infeasible;
  }

  auto sub = [&](const EncoderParams& e) {
    std::vector<double> x(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) x[k] = e[idx[k]];
    return x;
  };
  std::vector<std::vector<double>> starts;
  starts.push_back(sub(rd.xis));
  if (warm && warm->size() == n) starts.push_back(sub(*warm));
  for (const double sign : {+1.0, -1.0}) {
    auto ext = detail::linear_extreme(lam, r.values(), target, sign).second;
    starts.push_back(sub(EncoderParams(std::move(ext))));
  }
  CounterRng rng(derive_key(cfg.seed, {0x4a, static_cast<std::uint64_t>(n)}));
  while (static_cast<int>(starts.size()) < cfg.restarts) {
    std::vector<double> x(idx.size());
    for (double& v : x) v = rng.uniform();
    starts.push_back(detail::meet_budget(lam, idx, std::move(x), target));
  }
  if (static_cast<int>(starts.size()) > cfg.restarts) starts.resize(static_cast<std::size_t>(cfg.restarts));

  std::optional<SolveResult> best;
  double best_slack = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const detail::CcpOutcome run = detail::ccp_run(lam, idx, r.values(), target, need, starts[s], cfg);
    total_iters += run.iterations;
    best_slack = std::min(best_slack, run.slack);
    SolveResult res;
    res.xis = run.xis;
    try {
      res = finish(std::move(res));
    } catch (const DomainError&) {
      continue;
    }
    if (res.diagnostics.c1_residual > 1e-8 * static_cast<double>(n) || res.diagnostics.c2_residual > 1e-8) continue;
    res.status = SolveStatus::Feasible;
    res.diagnostics.restart_index = static_cast<int>(s);
    if (!best || res.rate_bits < best->rate_bits - cfg.tol) best = std::move(res);
  }
  if (!best) {
    infeasible.diagnostics.iterations = total_iters;
    infeasible.diagnostics.best_slack = best_slack;
    infeasible.diagnostics.c2_residual = best_slack * kHalfNatsToBits;
    infeasible.diagnostics.note = "all restarts ended with positive slack (heuristic infeasibility)";
    return infeasible;
  }
  best->diagnostics.iterations = total_iters;
  best->diagnostics.best_slack = best_slack;
  if (!best->diagnostics.rate_clamped.empty()) best->diagnostics.note = "rate effectively infinite on clamped components";
  return *best;
}

inline SolveResult solve(const RddProblem& problem, const SolverConfig& cfg = {},
                         const EncoderParams* warm = nullptr) {
  return problem.kind == ConstraintKind::AgnosticZ ? solve_rdd_z(problem, cfg) : solve_rdd_j(problem, cfg, warm);
}

// ---------------------------------------------------------------------------
// Sweeps

struct ProblemFamily {
  Spectrum lam_ok;
  AnomalyModel anomaly;
  ConstraintKind kind = ConstraintKind::AgnosticZ;
};

struct ParetoPoint {
  std::size_t delta_index = 0;
  std::size_t omega_index = 0;
  double delta = 0.0;
  double omega = 0.0;
  SolveResult result;
};

struct ParetoSurface {
  std::vector<double> delta_grid;
  std::vector<double> omega_grid;
  std::vector<ParetoPoint> points;  // delta-major: index = i * omega_grid.size() + k
  std::vector<std::string> violations;

  [[nodiscard]] const ParetoPoint& at(std::size_t i, std::size_t k) const { return points[i * omega_grid.size() + k]; }
};

namespace detail {

inline void require_sorted_grid(const std::vector<double>& g, const char* name) {
  if (g.empty()) throw InputError(std::string("sweep: ") + name + " grid is empty");
  for (std::size_t i = 1; i < g.size(); ++i) {
    if (!(g[i] > g[i - 1])) throw InputError(std::string("sweep: ") + name + " grid must be strictly ascending");
  }
}

}  // namespace detail

/// Post-hoc check of the rate monotonicity of a solved grid. Violations larger
/// than `tol` bits are returned as human-readable strings.
inline std::vector<std::string> check_monotonicity(const ParetoSurface& s, double tol) {
  std::vector<std::string> out;
  const std::size_t nd = s.delta_grid.size(), nw = s.omega_grid.size();
  auto describe = [](const char* what, const ParetoPoint& a, const ParetoPoint& b) {
    return std::string(what) + " between (delta=" + std::to_string(a.delta) + ", omega=" + std::to_string(a.omega) +
           ") and (delta=" + std::to_string(b.delta) + ", omega=" + std::to_string(b.omega) + ")";
  };
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t k = 1; k < nw; ++k) {
      const auto& a = s.at(i, k - 1);
      const auto& b = s.at(i, k);
      if (!a.result.feasible() && b.result.feasible()) out.push_back(describe("feasibility gain with larger omega", a, b));
      if (a.result.feasible() && b.result.feasible() && b.result.rate_bits < a.result.rate_bits - tol) {
        out.push_back(describe("rate decreased with larger omega", a, b));
      }
    }
  }
  for (std::size_t k = 0; k < nw; ++k) {
    for (std::size_t i = 1; i < nd; ++i) {
      const auto& a = s.at(i - 1, k);
      const auto& b = s.at(i, k);
      if (a.result.feasible() && !b.result.feasible()) out.push_back(describe("feasibility loss with larger delta", a, b));
      if (a.result.feasible() && b.result.feasible() && b.result.rate_bits > a.result.rate_bits + tol) {
        out.push_back(describe("rate increased with larger delta", a, b));
      }
    }
  }
  return out;
}

/// Solves every (delta, omega) cell. Rows are independent and may run on
/// `jobs` threads; within a row the aware solver may warm-start from the
/// previous omega, which keeps results independent of the schedule.
inline ParetoSurface sweep(const ProblemFamily& family, const std::vector<double>& delta_grid,
                           const std::vector<double>& omega_grid, const SolverConfig& cfg, int jobs = 1,
                           double monotonicity_tol = 1e-6) {
  detail::require_sorted_grid(delta_grid, "delta");
  detail::require_sorted_grid(omega_grid, "omega");
  cfg.validate();
  ParetoSurface surface;
  surface.delta_grid = delta_grid;
  surface.omega_grid = omega_grid;
  surface.points.resize(delta_grid.size() * omega_grid.size());

  auto run_row = [&](std::size_t i) {
    std::optional<EncoderParams> warm;
    for (std::size_t k = 0; k < omega_grid.size(); ++k) {
      SolverConfig cell = cfg;
      cell.seed = derive_key(cfg.seed, {i, k});
      RddProblem p{family.lam_ok, family.anomaly, delta_grid[i], omega_grid[k], family.kind};
      ParetoPoint& pt = surface.points[i * omega_grid.size() + k];
      pt.delta_index = i;
      pt.omega_index = k;
      pt.delta = delta_grid[i];
      pt.omega = omega_grid[k];
      pt.result = solve(p, cell, cfg.warm_start && warm ? &*warm : nullptr);
      if (pt.result.feasible()) warm = pt.result.xis;
    }
  };

  parallel_for(delta_grid.size(), jobs, run_row);
  surface.violations = check_monotonicity(surface, monotonicity_tol);
  return surface;
}

}  // namespace rdd
