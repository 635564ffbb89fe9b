#pragma once

// Closed-form quantities of the Gaussian rate-distortion-distinguishability
// framework: distortion, rate, the agnostic distinguishability Z, the aware
// distinguishability J and the compressed-source variances, all as pure
// functions of the normal spectrum, the anomaly and the normalized encoder
// degrees of freedom xi.
//
// Logarithms are natural internally and converted to bits at the boundary.

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rdd/error.hpp"

namespace rdd {

/// Rate of an encoder that keeps some component with positive variance
/// losslessly. Propagated as +inf; never clamped.
inline constexpr double kInfiniteRate = std::numeric_limits<double>::infinity();

inline bool is_infinite_rate(double rate_bits) { return std::isinf(rate_bits) && rate_bits > 0; }

/// 1 / (2 ln 2): converts a sum of natural-log terms into bits.
inline constexpr double kHalfNatsToBits = 1.0 / (2.0 * std::numbers::ln2);

/// Per-component variances of a diagonal Gaussian covariance.
class Spectrum {
 public:
  Spectrum() = default;
  explicit Spectrum(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InputError("Spectrum: at least one component required");
    for (double v : values_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InputError("Spectrum: variances must be finite and non-negative");
      }
    }
  }

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] double operator[](std::size_t j) const { return values_[j]; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] double trace() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

  /// Non-increasing and trace-normalized to n.
  [[nodiscard]] bool is_canonical(double tol = 1e-9) const {
    for (std::size_t j = 1; j < values_.size(); ++j) {
      if (values_[j] > values_[j - 1]) return false;
    }
    return std::abs(trace() - static_cast<double>(size())) <= tol * static_cast<double>(size());
  }

 private:
  std::vector<double> values_;
};

struct WhiteAnomaly {
  double alpha;
};

struct DiagonalAnomaly {
  Spectrum lambdas;
};

/// Covariance of the anomalous source: white (alpha * I) or diagonal.
class AnomalyModel {
 public:
  static AnomalyModel white(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("AnomalyModel: alpha must be > 0");
    return AnomalyModel(WhiteAnomaly{alpha});
  }
  static AnomalyModel diagonal(Spectrum lambdas) { return AnomalyModel(DiagonalAnomaly{std::move(lambdas)}); }

  [[nodiscard]] bool is_white() const { return std::holds_alternative<WhiteAnomaly>(kind_); }
  [[nodiscard]] double alpha() const {
    if (is_white()) return std::get<WhiteAnomaly>(kind_).alpha;
    const auto& l = std::get<DiagonalAnomaly>(kind_).lambdas;
    return l.trace() / static_cast<double>(l.size());
  }

  /// Per-component anomalous variances for an n-dimensional source.
  [[nodiscard]] Spectrum expand(std::size_t n) const {
    if (is_white()) return Spectrum(std::vector<double>(n, std::get<WhiteAnomaly>(kind_).alpha));
    const auto& l = std::get<DiagonalAnomaly>(kind_).lambdas;
    detail::require_same_length(l.size(), n, "AnomalyModel::expand");
    return l;
  }

 private:
  explicit AnomalyModel(std::variant<WhiteAnomaly, DiagonalAnomaly> kind) : kind_(std::move(kind)) {}
  std::variant<WhiteAnomaly, DiagonalAnomaly> kind_;
};

/// Normalized degrees of freedom xi_j = 1 - theta_j / lambda_j, each in [0, 1].
class EncoderParams {
 public:
  EncoderParams() = default;
  explicit EncoderParams(std::vector<double> xis) : xis_(std::move(xis)) {
    for (double x : xis_) {
      if (!(x >= 0.0 && x <= 1.0)) throw InputError("EncoderParams: xi must lie in [0, 1]");
    }
  }
  static EncoderParams zeros(std::size_t n) { return EncoderParams(std::vector<double>(n, 0.0)); }
  static EncoderParams ones(std::size_t n) { return EncoderParams(std::vector<double>(n, 1.0)); }

  [[nodiscard]] std::size_t size() const { return xis_.size(); }
  [[nodiscard]] double operator[](std::size_t j) const { return xis_[j]; }
  [[nodiscard]] std::span<const double> values() const { return xis_; }

 private:
  std::vector<double> xis_;
};

/// r_j = 1 - lambda^ko_j / lambda^ok_j. Zero-variance normal components carry
/// r_j = 0: they are excluded from every distinguishability sum.
class RatioVector {
 public:
  RatioVector() = default;
  explicit RatioVector(std::vector<double> rs) : rs_(std::move(rs)) {
    for (double r : rs_) {
      if (!(r <= 1.0)) throw InputError("RatioVector: r_j must be <= 1");
    }
  }
  [[nodiscard]] std::size_t size() const { return rs_.size(); }
  [[nodiscard]] double operator[](std::size_t j) const { return rs_[j]; }
  [[nodiscard]] std::span<const double> values() const { return rs_; }

 private:
  std::vector<double> rs_;
};

inline RatioVector ratios(const Spectrum& lam_ok, const AnomalyModel& anomaly) {
  const Spectrum lam_ko = anomaly.expand(lam_ok.size());
  std::vector<double> rs(lam_ok.size(), 0.0);
  for (std::size_t j = 0; j < rs.size(); ++j) {
    if (lam_ok[j] > 0.0) rs[j] = 1.0 - lam_ko[j] / lam_ok[j];
  }
  return RatioVector(std::move(rs));
}

/// D = sum_j lambda_j (1 - xi_j). Trace-free, so valid for any spectrum.
inline double distortion(const Spectrum& lam_ok, const EncoderParams& enc) {
  detail::require_same_length(lam_ok.size(), enc.size(), "distortion");
  double d = 0.0;
  for (std::size_t j = 0; j < lam_ok.size(); ++j) d += lam_ok[j] * (1.0 - enc[j]);
  return d;
}

/// Mutual information in bits. Returns kInfiniteRate when some xi_j = 1 with
/// lambda_j > 0. Zero-variance components contribute nothing.
inline double rate(const Spectrum& lam_ok, const EncoderParams& enc) {
  detail::require_same_length(lam_ok.size(), enc.size(), "rate");
  double nats2 = 0.0;
  for (std::size_t j = 0; j < lam_ok.size(); ++j) {
    if (lam_ok[j] <= 0.0) continue;
    if (enc[j] >= 1.0) return kInfiniteRate;
    nats2 -= std::log1p(-enc[j]);
  }
  return nats2 * kHalfNatsToBits;
}

/// Signed sum sum_j r_j xi_j; Z is its magnitude in bits.
inline double z_signed_sum(const RatioVector& r, const EncoderParams& enc) {
  detail::require_same_length(r.size(), enc.size(), "dist_z");
  double s = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * enc[j];
  return s;
}

inline double dist_z(const RatioVector& r, const EncoderParams& enc) {
  return std::abs(z_signed_sum(r, enc)) * kHalfNatsToBits;
}

/// g(xi) = sum_j (r_j xi_j)^2 / (1 - r_j xi_j), so that J = g / (2 ln 2).
/// Throws DomainError at the pole r_j xi_j >= 1.
inline double j_sum(std::span<const double> r, std::span<const double> xi) {
  detail::require_same_length(r.size(), xi.size(), "dist_j");
  double g = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double p = r[j] * xi[j];
    if (p >= 1.0) {
      throw DomainError("dist_j: r_j * xi_j >= 1 at component " + std::to_string(j) +
                        " (zero anomalous variance kept losslessly)");
    }
    g += p * p / (1.0 - p);
  }
  return g;
}

/// dg/dxi_j = r_j * p (2 - p) / (1 - p)^2 with p = r_j xi_j.
inline std::vector<double> j_sum_gradient(std::span<const double> r, std::span<const double> xi) {
  detail::require_same_length(r.size(), xi.size(), "j_sum_gradient");
  std::vector<double> grad(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double p = r[j] * xi[j];
    if (p >= 1.0) throw DomainError("j_sum_gradient: r_j * xi_j >= 1");
    const double q = 1.0 - p;
    grad[j] = r[j] * p * (2.0 - p) / (q * q);
  }
  return grad;
}

inline double dist_j(const RatioVector& r, const EncoderParams& enc) {
  return j_sum(r.values(), enc.values()) * kHalfNatsToBits;
}

struct CompressedVariances {
  Spectrum ok;
  Spectrum ko;
};

/// Variances of the reconstructions of the normal and anomalous sources under
/// a Gaussian-additive encoder with theta_j = lambda_j (1 - xi_j).
inline CompressedVariances compressed_variances(const Spectrum& lam_ok, const AnomalyModel& anomaly,
                                                const EncoderParams& enc) {
  detail::require_same_length(lam_ok.size(), enc.size(), "compressed_variances");
  const Spectrum lam_ko = anomaly.expand(lam_ok.size());
  std::vector<double> ok(lam_ok.size()), ko(lam_ok.size());
  for (std::size_t j = 0; j < lam_ok.size(); ++j) {
    const double xi = enc[j];
    const double theta = lam_ok[j] * (1.0 - xi);
    ok[j] = lam_ok[j] * xi;
    ko[j] = xi * (lam_ko[j] * xi + theta);
  }
  return {Spectrum(std::move(ok)), Spectrum(std::move(ko))};
}

/// Z in bits between two independent zero-mean Gaussians, written through the
/// variance ratios u_j = var_ko / var_ok. Components constant in both sources
/// are skipped.
inline double z_from_variances(const Spectrum& var_ok, const Spectrum& var_ko) {
  detail::require_same_length(var_ok.size(), var_ko.size(), "z_from_variances");
  double s = 0.0;
  for (std::size_t j = 0; j < var_ok.size(); ++j) {
    if (var_ok[j] <= 0.0) {
      if (var_ko[j] > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    s += 1.0 - var_ko[j] / var_ok[j];
  }
  return std::abs(s) * kHalfNatsToBits;
}

/// J in bits through u_j: (1 / 2 ln 2) sum_j (u_j - 1)^2 / u_j.
inline double j_from_variances(const Spectrum& var_ok, const Spectrum& var_ko) {
  detail::require_same_length(var_ok.size(), var_ko.size(), "j_from_variances");
  double s = 0.0;
  for (std::size_t j = 0; j < var_ok.size(); ++j) {
    if (var_ok[j] <= 0.0 && var_ko[j] <= 0.0) continue;
    if (var_ok[j] <= 0.0 || var_ko[j] <= 0.0) return std::numeric_limits<double>::infinity();
    const double u = var_ko[j] / var_ok[j];
    s += (u - 1.0) * (u - 1.0) / u;
  }
  return s * kHalfNatsToBits;
}

}  // namespace rdd
