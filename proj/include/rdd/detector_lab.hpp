#pragma once

// Monte-Carlo evaluation of detectors on compressed Gaussian sources:
// sampling, likelihood / likelihood-ratio / Mahalanobis scores, and the
// threshold-free AUC and P_det figures of merit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rdd/error.hpp"
#include "rdd/gaussian_core.hpp"
#include "rdd/rng.hpp"

namespace rdd {

/// Independent Gaussian components. An empty mean vector means zero mean.
struct DiagonalGaussian {
  std::vector<double> means;
  Spectrum variances;

  [[nodiscard]] std::size_t size() const { return variances.size(); }
  [[nodiscard]] double mean(std::size_t j) const { return means.empty() ? 0.0 : means[j]; }
  void validate() const {
    if (!means.empty()) detail::require_same_length(means.size(), variances.size(), "DiagonalGaussian");
  }
};

enum class DetectorKind { LD, NPD, Mahalanobis };

inline const char* to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::LD: return "ld";
    case DetectorKind::NPD: return "npd";
    case DetectorKind::Mahalanobis: return "mahalanobis";
  }
  return "?";
}

struct ScoreSample {
  std::vector<double> scores_ok;
  std::vector<double> scores_ko;
  DetectorKind detector = DetectorKind::LD;
  std::uint64_t seed = 0;

  void write_csv(std::ostream& os) const {
    os << "label,score\n";
    os.precision(17);
    for (double s : scores_ok) os << "ok," << s << '\n';
    for (double s : scores_ko) os << "ko," << s << '\n';
  }
};

/// `count` draws as the rows of a matrix. Component j of draw i consumes
/// counters 2 (i n + j) and 2 (i n + j) + 1 of the stream `seed`, so any
/// subset of draws can be regenerated independently.
inline Eigen::MatrixXd sample(const DiagonalGaussian& model, std::size_t count, std::uint64_t seed) {
  model.validate();
  if (count < 1) throw InputError("sample: count must be >= 1");
  const std::size_t n = model.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double sd = std::sqrt(model.variances[j]);
      double v = model.mean(j);
      if (sd > 0.0) {
        CounterRng rng(seed, 2 * (i * n + j));
        v += sd * rng.normal();
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return out;
}

/// sum_j (x_j - mu_j)^2 / (2 sigma_j^2). A zero-variance component contributes
/// nothing at its mean and +inf anywhere else.
inline double score_ld(const DiagonalGaussian& ok, std::span<const double> x) {
  detail::require_same_length(ok.size(), x.size(), "score_ld");
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - ok.mean(j);
    const double v = ok.variances[j];
    if (v <= 0.0) {
      if (d != 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    s += d * d / (2.0 * v);
  }
  return s;
}

/// log f_ko(x) - log f_ok(x). Components constant in both models are skipped;
/// a component constant in one model only decides the score outright.
inline double score_npd(const DiagonalGaussian& ok, const DiagonalGaussian& ko, std::span<const double> x) {
  detail::require_same_length(ok.size(), x.size(), "score_npd");
  detail::require_same_length(ko.size(), x.size(), "score_npd");
  constexpr double inf = std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double dok = x[j] - ok.mean(j);
    const double dko = x[j] - ko.mean(j);
    const double vok = ok.variances[j], vko = ko.variances[j];
    if (vok <= 0.0 && vko <= 0.0) continue;
    if (vok <= 0.0) {
      if (dok != 0.0) return inf;
      return -inf;
    }
    if (vko <= 0.0) {
      if (dko != 0.0) return -inf;
      return inf;
    }
    s += 0.5 * (dok * dok / vok - dko * dko / vko) + 0.5 * std::log(vok / vko);
  }
  return s;
}

/// (x - mu)^T Sigma^+ (x - mu) through an eigendecomposition of Sigma.
/// Eigenvalues below 1e-10 tr(Sigma) / n are raised to that floor.
class MahalanobisDetector {
 public:
  MahalanobisDetector(Eigen::VectorXd mean, const Eigen::MatrixXd& cov) : mean_(std::move(mean)) {
    const Eigen::Index n = cov.rows();
    if (cov.cols() != n || mean_.size() != n) throw DimensionError("MahalanobisDetector: shape mismatch");
    if (n == 0) throw InputError("MahalanobisDetector: empty covariance");
    const double scale = 1.0 + cov.cwiseAbs().maxCoeff();
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw InputError("MahalanobisDetector: covariance is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw InputError("MahalanobisDetector: eigendecomposition failed");
    floor_ = 1e-10 * std::max(cov.trace(), 0.0) / static_cast<double>(n);
    if (!(floor_ > 0.0)) floor_ = std::numeric_limits<double>::min();
    basis_ = eig.eigenvectors();
    inv_values_ = eig.eigenvalues();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (inv_values_[k] < floor_) {
        inv_values_[k] = floor_;
        ++clipped_;
      }
      inv_values_[k] = 1.0 / inv_values_[k];
    }
  }

  [[nodiscard]] double score(std::span<const double> x) const {
    detail::require_same_length(static_cast<std::size_t>(mean_.size()), x.size(), "MahalanobisDetector::score");
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd proj = basis_.transpose() * (v - mean_);
    return proj.cwiseAbs2().dot(inv_values_);
  }

  [[nodiscard]] double score(const Eigen::VectorXd& x) const { return score(std::span<const double>(x.data(), x.size())); }

  /// Number of eigenvalues raised to the floor.
  [[nodiscard]] int clipped() const { return clipped_; }
  [[nodiscard]] double eigen_floor() const { return floor_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd inv_values_;
  double floor_ = 0.0;
  int clipped_ = 0;
};

inline double score_mahalanobis(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, std::span<const double> x) {
  return MahalanobisDetector(mean, cov).score(x);
}

/// P(s_ko > s_ok) + 0.5 P(s_ko = s_ok) via midranks of the pooled scores.
inline double auc(std::span<const double> scores_ok, std::span<const double> scores_ko) {
  if (scores_ok.empty() || scores_ko.empty()) throw InputError("auc: both score lists must be non-empty");
  const std::size_t n_ok = scores_ok.size(), n_ko = scores_ko.size(), total = n_ok + n_ko;
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(total);
  for (double s : scores_ok) pooled.emplace_back(s, false);
  for (double s : scores_ko) pooled.emplace_back(s, true);
  for (const auto& [s, ko] : pooled) {
    if (std::isnan(s)) throw InputError("auc: NaN score");
  }
  std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Twice the rank sum keeps midranks integral.
  unsigned long long twice_rank_ko = 0;
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    std::size_t ko_in_tie = 0;
    while (j < total && pooled[j].first == pooled[i].first) {
      ko_in_tie += pooled[j].second ? 1 : 0;
      ++j;
    }
    // Ranks i+1 .. j, midrank (i + 1 + j) / 2.
    twice_rank_ko += static_cast<unsigned long long>(ko_in_tie) * (i + 1 + j);
    i = j;
  }
  const double u = static_cast<double>(twice_rank_ko) / 2.0 - static_cast<double>(n_ko) * (n_ko + 1) / 2.0;
  return u / (static_cast<double>(n_ok) * static_cast<double>(n_ko));
}

inline double auc(const ScoreSample& s) { return auc(s.scores_ok, s.scores_ko); }

inline double p_det(double auc_value) { return std::max(auc_value, 1.0 - auc_value); }

/// Binomial standard error of an estimated probability from `count` trials.
inline double binomial_std_error(double p, std::size_t count) {
  if (count == 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(count));
}

struct DetectionResult {
  double auc = 0.5;
  double p_det = 0.5;
  double std_error = 0.0;
  std::size_t samples = 0;
  ScoreSample scores;
};

/// Scores every row of `draws` with the chosen detector.
inline std::vector<double> score_rows(const Eigen::MatrixXd& draws, DetectorKind kind, const DiagonalGaussian& ok,
                                      const DiagonalGaussian& ko) {
  std::vector<double> out(static_cast<std::size_t>(draws.rows()));
  std::vector<double> row(static_cast<std::size_t>(draws.cols()));
  std::optional<MahalanobisDetector> maha;
  if (kind == DetectorKind::Mahalanobis) {
    Eigen::VectorXd mu(draws.cols());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(draws.cols(), draws.cols());
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      mu[j] = ok.mean(static_cast<std::size_t>(j));
      cov(j, j) = ok.variances[static_cast<std::size_t>(j)];
    }
    maha.emplace(mu, cov);
  }
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < draws.cols(); ++j) row[static_cast<std::size_t>(j)] = draws(i, j);
    double s = 0.0;
    switch (kind) {
      case DetectorKind::LD: s = score_ld(ok, row); break;
      case DetectorKind::NPD: s = score_npd(ok, ko, row); break;
      case DetectorKind::Mahalanobis: s = maha->score(row); break;
    }
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

/// Samples N compressed normal and N compressed anomalous vectors, scores
/// them and reports AUC and P_det. Streams are keyed on (seed, source).
inline DetectionResult evaluate_models(const DiagonalGaussian& ok, const DiagonalGaussian& ko, DetectorKind kind,
                                       std::size_t count, std::uint64_t seed) {
  const Eigen::MatrixXd x_ok = sample(ok, count, derive_key(seed, {0}));
  const Eigen::MatrixXd x_ko = sample(ko, count, derive_key(seed, {1}));
  DetectionResult r;
  r.scores.detector = kind;
  r.scores.seed = seed;
  r.scores.scores_ok = score_rows(x_ok, kind, ok, ko);
  r.scores.scores_ko = score_rows(x_ko, kind, ok, ko);
  r.auc = auc(r.scores);
  r.p_det = p_det(r.auc);
  r.samples = count;
  r.std_error = binomial_std_error(r.p_det, count);
  return r;
}

inline DetectionResult evaluate_detection(const Spectrum& lam_ok, const AnomalyModel& anomaly,
                                          const EncoderParams& enc, DetectorKind kind, std::size_t count,
                                          std::uint64_t seed) {
  const CompressedVariances v = compressed_variances(lam_ok, anomaly, enc);
  return evaluate_models(DiagonalGaussian{{}, v.ok}, DiagonalGaussian{{}, v.ko}, kind, count, seed);
}

}  // namespace rdd
