#pragma once

// Primal-dual interior point method for
//
//   minimize   sum_i f_i(x_i)
//   subject to A x >= b,  lower <= x <= upper,
//
// where each f_i is either w_i * (-ln(1 - x_i)) or w_i * x_i. The Hessian of
// the objective is diagonal and A has only a handful of rows, so each Newton
// step on the KKT system is solved through a Woodbury update of a diagonal
// matrix, O(n m^2 + m^3) per iteration. Mehrotra predictor-corrector steps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rdd/error.hpp"

namespace rdd::ipm {

enum class Term { NegLog1m, Linear };

struct Variable {
  Term term = Term::NegLog1m;
  double weight = 1.0;
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

struct Problem {
  std::vector<Variable> vars;
  Eigen::MatrixXd A;  // rows x vars.size()
  Eigen::VectorXd b;

  [[nodiscard]] std::size_t size() const { return vars.size(); }
  [[nodiscard]] Eigen::Index rows() const { return A.rows(); }
};

struct Options {
  double tol = 1e-9;  // complementarity gap
  double feas_tol = 1e-11;
  int max_iters = 200;
  double dual_tol = 1e-7;  // stationarity residual relative to the gradient scale
};

enum class Status { Converged, MaxIterations, NumericalFailure };

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd row_duals;
  Status status = Status::MaxIterations;
  int iterations = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;

  [[nodiscard]] bool converged() const { return status == Status::Converged; }
};

inline double objective(const Problem& p, const Eigen::VectorXd& x) {
  double f = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& v = p.vars[i];
    const auto xi = x[static_cast<Eigen::Index>(i)];
    f += v.term == Term::NegLog1m ? -v.weight * std::log1p(-xi) : v.weight * xi;
  }
  return f;
}

namespace detail {

struct Iterate {
  Eigen::VectorXd x, s, z, zl, zu;
};

struct Direction {
  Eigen::VectorXd dx, ds, dz, dzl, dzu;
};

inline double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, const std::vector<bool>* mask) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  }
  return a;
}

}  // namespace detail

/// Solves the problem from an optional starting point (pushed strictly inside
/// the box). Rows of A may be infeasible at the start.
inline Result solve(const Problem& p, const Options& opt = {}, std::span<const double> start = {}) {
  using Eigen::Index;
  using Eigen::VectorXd;
  const Index n = static_cast<Index>(p.size());
  const Index m = p.rows();
  if (p.A.cols() != n || p.b.size() != m) throw DimensionError("ipm::solve: constraint shape mismatch");

  std::vector<bool> has_lo(static_cast<std::size_t>(n)), has_up(static_cast<std::size_t>(n));
  VectorXd lo(n), up(n);
  for (Index i = 0; i < n; ++i) {
    const auto& v = p.vars[static_cast<std::size_t>(i)];
    if (!(v.upper > v.lower)) throw InputError("ipm::solve: empty box for a variable");
    if (v.term == Term::NegLog1m && !(v.upper < 1.0)) throw InputError("ipm::solve: -log(1-x) needs upper < 1");
    has_lo[static_cast<std::size_t>(i)] = std::isfinite(v.lower);
    has_up[static_cast<std::size_t>(i)] = std::isfinite(v.upper);
    lo[i] = v.lower;
    up[i] = v.upper;
  }

  detail::Iterate it;
  it.x.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    double x0 = start.empty() ? 0.5 : start[k];
    if (!std::isfinite(x0)) x0 = 0.5;
    if (has_lo[k] && has_up[k]) {
      const double width = up[i] - lo[i];
      const double margin = std::min(1e-2, 0.25) * width;
      x0 = std::clamp(x0, lo[i] + margin, up[i] - margin);
    } else if (has_lo[k]) {
      x0 = std::max(x0, lo[i] + 1.0);
    } else if (has_up[k]) {
      x0 = std::min(x0, up[i] - 1.0);
    }
    it.x[i] = x0;
  }
  it.s = (p.A * it.x - p.b).cwiseMax(1.0);
  it.z = VectorXd::Ones(m);
  it.zl = VectorXd::Zero(n);
  it.zu = VectorXd::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (has_lo[k]) it.zl[i] = 1.0;
    if (has_up[k]) it.zu[i] = 1.0;
  }
  int pairs = static_cast<int>(m);
  for (Index i = 0; i < n; ++i) {
    pairs += has_lo[static_cast<std::size_t>(i)] ? 1 : 0;
    pairs += has_up[static_cast<std::size_t>(i)] ? 1 : 0;
  }

  VectorXd grad(n), hess(n), xl(n), xu(n);
  auto refresh = [&] {
    for (Index i = 0; i < n; ++i) {
      const auto& v = p.vars[static_cast<std::size_t>(i)];
      if (v.term == Term::NegLog1m) {
        const double q = 1.0 - it.x[i];
        grad[i] = v.weight / q;
        hess[i] = v.weight / (q * q);
      } else {
        grad[i] = v.weight;
        hess[i] = 0.0;
      }
      xl[i] = has_lo[static_cast<std::size_t>(i)] ? it.x[i] - lo[i] : 1.0;
      xu[i] = has_up[static_cast<std::size_t>(i)] ? up[i] - it.x[i] : 1.0;
    }
  };

  Result res;
  struct Snapshot {
    VectorXd x, z;
    double gap, primal, dual;
    int iter;
  };
  std::optional<Snapshot> best;
  double best_merit = std::numeric_limits<double>::infinity();
  const double b_scale = 1.0 + (m > 0 ? p.b.cwiseAbs().maxCoeff() : 0.0);

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    refresh();
    const VectorXd rd = grad - p.A.transpose() * it.z - it.zl + it.zu;
    const VectorXd rp = p.A * it.x - p.b - it.s;
    double comp = it.s.dot(it.z);
    for (Index i = 0; i < n; ++i) comp += xl[i] * it.zl[i] + xu[i] * it.zu[i];
    const double mu = pairs > 0 ? comp / pairs : 0.0;

    const double grad_scale = 1.0 + grad.cwiseAbs().maxCoeff();
    res.iterations = iter;
    res.gap = comp;
    res.primal_residual = m > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
    res.dual_residual = rd.cwiseAbs().maxCoeff() / grad_scale;
    if (res.gap <= opt.tol && res.dual_residual <= opt.dual_tol && res.primal_residual <= opt.feas_tol * b_scale) {
      res.status = Status::Converged;
      break;
    }
    const double merit = std::max({res.gap / opt.tol, res.dual_residual / opt.dual_tol,
                                   res.primal_residual / (opt.feas_tol * b_scale)});
    if (merit < best_merit) {
      best_merit = merit;
      best = {it.x, it.z, res.gap, res.primal_residual, res.dual_residual, iter};
    }

    // Reduced system (D + A^T W A) dx = rhs with D diagonal, W = Z / S.
    VectorXd d = hess;
    for (Index i = 0; i < n; ++i) d[i] += it.zl[i] / xl[i] + it.zu[i] / xu[i];
    const VectorXd w = it.z.cwiseQuotient(it.s);
    const VectorXd dinv = d.cwiseInverse();
    Eigen::MatrixXd small = (p.A * dinv.asDiagonal() * p.A.transpose());
    small.diagonal() += w.cwiseInverse();
    const Eigen::LDLT<Eigen::MatrixXd> small_ldlt(small);
    if (m > 0 && small_ldlt.info() != Eigen::Success) {
      res.status = Status::NumericalFailure;
      break;
    }
    auto woodbury = [&](const VectorXd& rhs) -> VectorXd {
      VectorXd y = dinv.cwiseProduct(rhs);
      if (m == 0) return y;
      const VectorXd t = small_ldlt.solve(p.A * y);
      return y - dinv.cwiseProduct(p.A.transpose() * t);
    };
    // Two rounds of iterative refinement against (D + A^T W A): the diagonal
    // spans many orders of magnitude near the bounds.
    auto solve_reduced = [&](const VectorXd& rhs) -> VectorXd {
      VectorXd x = woodbury(rhs);
      if (m == 0) return x;
      for (int k = 0; k < 2; ++k) {
        const VectorXd res = rhs - d.cwiseProduct(x) - p.A.transpose() * w.cwiseProduct(p.A * x);
        x += woodbury(res);
      }
      return x;
    };

    auto direction = [&](const VectorXd& rs, const VectorXd& rl, const VectorXd& ru) {
      detail::Direction dir;
      VectorXd rhs = -rd - p.A.transpose() * (rs + it.z.cwiseProduct(rp)).cwiseQuotient(it.s);
      for (Index i = 0; i < n; ++i) rhs[i] += -rl[i] / xl[i] + ru[i] / xu[i];
      dir.dx = solve_reduced(rhs);
      dir.ds = p.A * dir.dx + rp;
      dir.dz = -(rs + it.z.cwiseProduct(dir.ds)).cwiseQuotient(it.s);
      dir.dzl = VectorXd::Zero(n);
      dir.dzu = VectorXd::Zero(n);
      for (Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (has_lo[k]) dir.dzl[i] = -(rl[i] + it.zl[i] * dir.dx[i]) / xl[i];
        if (has_up[k]) dir.dzu[i] = -(ru[i] - it.zu[i] * dir.dx[i]) / xu[i];
      }
      return dir;
    };
    auto step_length = [&](const detail::Direction& dir) {
      double a = std::min(detail::max_step(it.s, dir.ds, nullptr), detail::max_step(it.z, dir.dz, nullptr));
      a = std::min(a, detail::max_step(xl, dir.dx, &has_lo));
      a = std::min(a, detail::max_step(xu, -dir.dx, &has_up));
      a = std::min(a, detail::max_step(it.zl, dir.dzl, &has_lo));
      a = std::min(a, detail::max_step(it.zu, dir.dzu, &has_up));
      return a;
    };

    // Predictor.
    VectorXd rs = it.s.cwiseProduct(it.z);
    VectorXd rl = xl.cwiseProduct(it.zl);
    VectorXd ru = xu.cwiseProduct(it.zu);
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (!has_lo[k]) rl[i] = 0.0;
      if (!has_up[k]) ru[i] = 0.0;
    }
    const detail::Direction aff = direction(rs, rl, ru);
    const double a_aff = step_length(aff);
    double comp_aff = (it.s + a_aff * aff.ds).dot(it.z + a_aff * aff.dz);
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (has_lo[k]) comp_aff += (xl[i] + a_aff * aff.dx[i]) * (it.zl[i] + a_aff * aff.dzl[i]);
      if (has_up[k]) comp_aff += (xu[i] - a_aff * aff.dx[i]) * (it.zu[i] + a_aff * aff.dzu[i]);
    }
    const double mu_aff = pairs > 0 ? comp_aff / pairs : 0.0;
    const double ratio = mu > 0.0 ? std::clamp(mu_aff / mu, 0.0, 1.0) : 0.0;
    const double sigma = ratio * ratio * ratio;
    // Centering target never drops far below the requested gap: beyond it the
    // barrier Hessian only loses conditioning.
    const double target_mu = std::max(sigma * mu, 0.1 * opt.tol / std::max(pairs, 1));

    // Corrector.
    rs += aff.ds.cwiseProduct(aff.dz) - VectorXd::Constant(m, target_mu);
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (has_lo[k]) rl[i] += aff.dx[i] * aff.dzl[i] - target_mu;
      if (has_up[k]) ru[i] += -aff.dx[i] * aff.dzu[i] - target_mu;
    }
    const detail::Direction dir = direction(rs, rl, ru);
    const double a = std::min(1.0, 0.995 * step_length(dir));
    if (!(a > 0.0) || !dir.dx.allFinite()) {
      res.status = Status::NumericalFailure;
      break;
    }
    it.x += a * dir.dx;
    it.s += a * dir.ds;
    it.z += a * dir.dz;
    it.zl += a * dir.dzl;
    it.zu += a * dir.dzu;
    res.iterations = iter + 1;
  }

  if (res.status != Status::Converged && best) {
    // Not converged: fall back to the iterate closest to the stopping test.
    res.x = best->x;
    res.row_duals = best->z;
    res.gap = best->gap;
    res.primal_residual = best->primal;
    res.dual_residual = best->dual;
    return res;
  }
  res.x = it.x;
  res.row_duals = it.z;
  return res;
}

/// KKT polish for problems whose variables are all w * (-ln(1 - x)) on
/// [0, upper]. For row duals y the stationary point is
/// x_j(y) = clamp(1 - w_j / (A^T y)_j, 0, upper_j); Newton's method on the
/// active rows A_i x(y) = b_i removes the residual complementarity left by the
/// interior point iterates, which matters at degenerate vertices. Returns
/// false (leaving `res` untouched) when the polished point is not better.
inline bool polish_kkt(const Problem& p, Result& res, double feas_tol = 1e-12) {
  using Eigen::Index;
  using Eigen::VectorXd;
  const Index n = static_cast<Index>(p.size());
  const Index m = p.rows();
  if (m == 0 || !res.x.allFinite() || res.row_duals.size() != m) return false;
  for (const auto& v : p.vars) {
    if (v.term != Term::NegLog1m || v.lower != 0.0) return false;
  }
  const VectorXd slack0 = p.A * res.x - p.b;
  std::vector<bool> active(static_cast<std::size_t>(m));
  VectorXd y = res.row_duals;
  for (Index i = 0; i < m; ++i) {
    active[static_cast<std::size_t>(i)] = std::abs(slack0[i]) <= 1e-6 * (1.0 + std::abs(p.b[i]));
    if (!active[static_cast<std::size_t>(i)]) y[i] = 0.0;
  }
  auto primal = [&](const VectorXd& dual, std::vector<bool>& free) {
    const VectorXd a = p.A.transpose() * dual;
    VectorXd x(n);
    for (Index j = 0; j < n; ++j) {
      const auto& v = p.vars[static_cast<std::size_t>(j)];
      const double raw = a[j] > 0.0 ? 1.0 - v.weight / a[j] : 0.0;
      x[j] = std::clamp(raw, 0.0, v.upper);
      free[static_cast<std::size_t>(j)] = raw > 0.0 && raw < v.upper;
    }
    return std::pair{x, a};
  };
  std::vector<bool> free(static_cast<std::size_t>(n));
  VectorXd x;
  for (int it = 0; it < 60; ++it) {
    auto [xx, a] = primal(y, free);
    x = xx;
    std::vector<Index> act;
    for (Index i = 0; i < m; ++i) {
      if (active[static_cast<std::size_t>(i)]) act.push_back(i);
    }
    if (act.empty()) break;
    const auto k = static_cast<Index>(act.size());
    VectorXd h(k);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(k, k);
    double worst = 0.0;
    for (Index r = 0; r < k; ++r) {
      h[r] = p.A.row(act[static_cast<std::size_t>(r)]).dot(x) - p.b[act[static_cast<std::size_t>(r)]];
      worst = std::max(worst, std::abs(h[r]) / (1.0 + std::abs(p.b[act[static_cast<std::size_t>(r)]])));
    }
    if (worst <= 1e-15) break;
    for (Index j = 0; j < n; ++j) {
      if (!free[static_cast<std::size_t>(j)]) continue;
      const double wj = p.vars[static_cast<std::size_t>(j)].weight / (a[j] * a[j]);
      for (Index r = 0; r < k; ++r) {
        for (Index c = 0; c < k; ++c) {
          jac(r, c) += p.A(act[static_cast<std::size_t>(r)], j) * p.A(act[static_cast<std::size_t>(c)], j) * wj;
        }
      }
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) return false;
    const VectorXd step = lu.solve(h);
    bool dropped = false;
    for (Index r = 0; r < k; ++r) {
      const Index i = act[static_cast<std::size_t>(r)];
      y[i] -= step[r];
      if (y[i] < 0.0) {
        y[i] = 0.0;
        active[static_cast<std::size_t>(i)] = false;
        dropped = true;
      }
    }
    if (dropped) continue;
  }
  auto [xp, ap] = primal(y, free);
  const VectorXd slack = p.A * xp - p.b;
  for (Index i = 0; i < m; ++i) {
    if (slack[i] < -feas_tol * (1.0 + std::abs(p.b[i]))) return false;
  }
  if (objective(p, xp) > objective(p, res.x) + 1e-12 * (1.0 + std::abs(objective(p, res.x)))) return false;
  res.x = xp;
  res.row_duals = y;
  return true;
}

}  // namespace rdd::ipm
