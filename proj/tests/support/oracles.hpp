#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the library's solver paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace rdd::oracle {

inline constexpr double kLn2 = 0.69314718055994530942;

// Scalar loops over raw vectors, written from the defining formulas.

inline double distortion(const std::vector<double>& lam, const std::vector<double>& xi) {
  double d = 0.0;
  for (std::size_t j = 0; j < lam.size(); ++j) d += lam[j] - lam[j] * xi[j];
  return d;
}

inline double rate(const std::vector<double>& lam, const std::vector<double>& xi) {
  // 1/2 sum log2(lambda / theta) with theta = lambda (1 - xi).
  double bits = 0.0;
  for (std::size_t j = 0; j < lam.size(); ++j) {
    if (lam[j] == 0.0) continue;
    const double theta = lam[j] * (1.0 - xi[j]);
    if (theta == 0.0) return std::numeric_limits<double>::infinity();
    bits += 0.5 * std::log2(lam[j] / theta);
  }
  return bits;
}

inline double z(const std::vector<double>& r, const std::vector<double>& xi) {
  double s = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * xi[j];
  return std::fabs(s) / (2.0 * kLn2);
}

inline double j(const std::vector<double>& r, const std::vector<double>& xi) {
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double p = r[k] * xi[k];
    s += p * p / (1.0 - p);
  }
  return s / (2.0 * kLn2);
}

inline double ko_variance(double lam_ok, double lam_ko, double xi) {
  // keep = 1 - theta / lambda equals xi exactly; rebuilding it from theta
  // would cancel catastrophically for small xi.
  const double theta = lam_ok * (1.0 - xi);
  const double keep = xi;
  return keep * keep * lam_ko + keep * theta;
}

// Minimum of the rate over the grid {0, h, 2h, ..., 1}^n.
//
// Leading coordinates are enumerated exhaustively; for the last one the rate
// is increasing, so the minimum is the smallest feasible value. Its feasible
// set is computed from the constraint in closed form and the candidates are
// then re-checked by direct evaluation. With `Last::Continuous` the last
// coordinate takes that smallest feasible value exactly instead of rounding
// it up to the grid.

enum class Floor { Z, J };
enum class Last { Grid, Continuous };

struct GridResult {
  double rate = std::numeric_limits<double>::infinity();
  std::vector<double> xi;
  bool feasible = false;
};

namespace detail {

inline bool feasible(const std::vector<double>& lam, const std::vector<double>& r, const std::vector<double>& xi,
                     double delta, double omega, Floor floor, double slop = 1e-12) {
  if (distortion(lam, xi) > delta + slop) return false;
  if (floor == Floor::Z) return z(r, xi) >= omega - slop;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] * xi[k] >= 1.0) return false;
  }
  return j(r, xi) >= omega - slop;
}

}  // namespace detail

inline GridResult grid_minimum(const std::vector<double>& lam, const std::vector<double>& r, double delta,
                               double omega, Floor floor, double step = 1e-3,
                               Last mode = Last::Grid) {
  const std::size_t n = lam.size();
  const long steps = std::lround(1.0 / step);
  GridResult best;
  std::vector<long> idx(n - 1, 0);
  std::vector<double> xi(n, 0.0);
  const double need = 2.0 * kLn2 * omega;
  const std::size_t last = n - 1;

  auto try_last = [&](double t) {
    if (mode == Last::Continuous) {
      xi[last] = std::clamp(t, 0.0, 1.0);
      if (!detail::feasible(lam, r, xi, delta, omega, floor, 1e-10)) return false;
      const double rt = rate(lam, xi);
      if (rt < best.rate) {
        best.rate = rt;
        best.xi = xi;
        best.feasible = true;
      }
      return true;
    }
    long k = static_cast<long>(std::ceil(t * steps - 1e-9));
    k = std::clamp(k, 0L, steps);
    for (long c : {k - 1, k, k + 1}) {
      if (c < 0 || c > steps) continue;
      xi[last] = static_cast<double>(c) / static_cast<double>(steps);
      if (detail::feasible(lam, r, xi, delta, omega, floor)) {
        const double rt = rate(lam, xi);
        if (rt < best.rate) {
          best.rate = rt;
          best.xi = xi;
          best.feasible = true;
        }
        return true;
      }
    }
    return false;
  };

  for (;;) {
    double covered = 0.0, s = 0.0, g = 0.0;
    bool in_domain = true;
    for (std::size_t k = 0; k < last; ++k) {
      xi[k] = static_cast<double>(idx[k]) / static_cast<double>(steps);
      covered += lam[k] * xi[k];
      s += r[k] * xi[k];
      const double p = r[k] * xi[k];
      if (p >= 1.0) in_domain = false;
      else g += p * p / (1.0 - p);
    }
    // Distortion: lam_last * t >= trace - delta - covered.
    double trace = 0.0;
    for (double v : lam) trace += v;
    const double t_c1 = std::max(0.0, (trace - delta - covered) / lam[last]);
    const double rl = r[last];
    if (t_c1 <= 1.0 + 1e-12 && in_domain) {
      if (!try_last(t_c1)) {
        double t2 = 2.0;
        if (floor == Floor::Z) {
          if (rl != 0.0) t2 = std::max((need - s) / rl, (-need - s) / rl);
        } else {
          // h(t) = (rl t)^2 / (1 - rl t) is non-decreasing in t on [0, 1];
          // solve h = need - g, i.e. p^2 + c p - c = 0 with p = rl t.
          const double c = need - g;
          if (rl != 0.0 && c > 0.0) {
            const double root = rl > 0.0 ? (-c + std::sqrt(c * c + 4.0 * c)) / 2.0
                                         : (-c - std::sqrt(c * c + 4.0 * c)) / 2.0;
            t2 = root / rl;
          }
        }
        if (t2 <= 1.0 + 1e-9) try_last(std::max(t_c1, t2));
      }
    }
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] > steps) idx[d++] = 0;
    if (d == idx.size()) break;
  }
  return best;
}

/// Continuous-last search repeated with every coordinate in the last slot.
inline GridResult grid_minimum_any_last(const std::vector<double>& lam, const std::vector<double>& r, double delta,
                                        double omega, Floor floor, double step = 1e-3) {
  GridResult best;
  const std::size_t n = lam.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    std::swap(perm[c], perm[n - 1]);
    std::vector<double> pl(n), pr(n);
    for (std::size_t k = 0; k < n; ++k) {
      pl[k] = lam[perm[k]];
      pr[k] = r[perm[k]];
    }
    GridResult g = grid_minimum(pl, pr, delta, omega, floor, step, Last::Continuous);
    if (g.feasible && g.rate < best.rate) {
      best = g;
      for (std::size_t k = 0; k < n; ++k) best.xi[perm[k]] = g.xi[k];
    }
  }
  return best;
}

}  // namespace rdd::oracle
