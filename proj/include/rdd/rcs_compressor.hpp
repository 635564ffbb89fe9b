#pragma once

// Random Component Selection: keep an m-subset of the KLT components of the
// normal source and quantize each kept component finely, modeled as
// independent additive Gaussian noise of variance eps / m.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rdd/detector_lab.hpp"
#include "rdd/error.hpp"
#include "rdd/gaussian_core.hpp"
#include "rdd/parallel.hpp"
#include "rdd/rng.hpp"

namespace rdd {

class Selection {
 public:
  Selection() = default;
  explicit Selection(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
    if (indices_.empty()) throw InputError("Selection: at least one component required");
    for (std::size_t k = 1; k < indices_.size(); ++k) {
      if (!(indices_[k] > indices_[k - 1])) throw InputError("Selection: indices must be strictly increasing");
    }
  }

  [[nodiscard]] std::size_t size() const { return indices_.size(); }
  [[nodiscard]] const std::vector<std::size_t>& indices() const { return indices_; }
  [[nodiscard]] bool contains(std::size_t j) const { return std::binary_search(indices_.begin(), indices_.end(), j); }

  void validate(std::size_t n) const {
    if (indices_.empty() || indices_.back() >= n) throw DimensionError("Selection: index out of range");
  }

  /// Stable 64-bit key of the index tuple.
  [[nodiscard]] std::uint64_t hash() const {
    std::uint64_t k = mix64(indices_.size());
    for (std::size_t j : indices_) k = mix64(k ^ (j + 0x9e3779b97f4a7c15ULL));
    return k;
  }

  /// Indices joined with '-', e.g. "0-3-7".
  [[nodiscard]] std::string id() const {
    std::string s;
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (k) s += '-';
      s += std::to_string(indices_[k]);
    }
    return s;
  }

  static Selection top(std::size_t m) {
    std::vector<std::size_t> v(m);
    for (std::size_t k = 0; k < m; ++k) v[k] = k;
    return Selection(std::move(v));
  }

  friend bool operator==(const Selection&, const Selection&) = default;
  friend auto operator<=>(const Selection& a, const Selection& b) { return a.indices_ <=> b.indices_; }

 private:
  std::vector<std::size_t> indices_;
};

struct RcsEncoder {
  Selection selection;
  double epsilon = 0.0;  // total quantization distortion

  [[nodiscard]] double theta_eps() const { return epsilon / static_cast<double>(selection.size()); }

  void validate(std::size_t n) const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InputError("RcsEncoder: epsilon must be > 0");
    selection.validate(n);
  }

  /// theta_eps below every normal variance: no kept component is fully lost.
  [[nodiscard]] bool fine(const Spectrum& lam_ok) const {
    double smallest = std::numeric_limits<double>::infinity();
    for (double v : lam_ok.values()) smallest = std::min(smallest, v);
    return theta_eps() < smallest;
  }
};

/// Default fine-quantization budget: lambda_{n-1} / 100.
inline double default_epsilon(const Spectrum& lam_ok) {
  double smallest = std::numeric_limits<double>::infinity();
  for (double v : lam_ok.values()) smallest = std::min(smallest, v);
  return smallest / 100.0;
}

/// Discarded energy plus the quantization budget.
inline double rcs_distortion(const Spectrum& lam_ok, const RcsEncoder& enc) {
  enc.validate(lam_ok.size());
  double d = enc.epsilon;
  for (std::size_t j = 0; j < lam_ok.size(); ++j) {
    if (!enc.selection.contains(j)) d += lam_ok[j];
  }
  return d;
}

/// Kept components whose variance does not exceed theta_eps; they add no rate.
inline std::vector<std::size_t> rcs_clamped(const Spectrum& lam_ok, const RcsEncoder& enc) {
  std::vector<std::size_t> out;
  for (std::size_t j : enc.selection.indices()) {
    if (lam_ok[j] <= enc.theta_eps()) out.push_back(j);
  }
  return out;
}

/// 1/2 sum_{j in m} log2(lambda_j / theta_eps), in bits.
inline double rcs_rate(const Spectrum& lam_ok, const RcsEncoder& enc) {
  enc.validate(lam_ok.size());
  const double theta = enc.theta_eps();
  double bits = 0.0;
  for (std::size_t j : enc.selection.indices()) {
    if (lam_ok[j] > theta) bits += 0.5 * std::log2(lam_ok[j] / theta);
  }
  return bits;
}

/// Gaussian-additive encoder with the same distortion and rate: xi_j =
/// 1 - theta_eps / lambda_j on kept components, 0 elsewhere.
inline EncoderParams rcs_equivalent_encoder(const Spectrum& lam_ok, const RcsEncoder& enc) {
  enc.validate(lam_ok.size());
  std::vector<double> xi(lam_ok.size(), 0.0);
  for (std::size_t j : enc.selection.indices()) {
    if (lam_ok[j] > enc.theta_eps()) xi[j] = 1.0 - enc.theta_eps() / lam_ok[j];
  }
  return EncoderParams(std::move(xi));
}

/// Models of the kept coefficients plus quantization noise, over the |m| kept
/// components (the reconstruction is zero outside m):
///   ok: diag(lambda_ok_m) + theta_eps I,  ko: [Sigma_ko]_m + theta_eps I.
struct RcsModels {
  DiagonalGaussian ok;
  Eigen::MatrixXd ko_covariance;

  /// The ko model when its covariance is diagonal.
  [[nodiscard]] DiagonalGaussian ko_diagonal() const {
    const Eigen::Index m = ko_covariance.rows();
    std::vector<double> v(static_cast<std::size_t>(m));
    for (Eigen::Index k = 0; k < m; ++k) {
      for (Eigen::Index c = 0; c < m; ++c) {
        if (c != k && ko_covariance(k, c) != 0.0) throw InputError("RcsModels: ko covariance is not diagonal");
      }
      v[static_cast<std::size_t>(k)] = ko_covariance(k, k);
    }
    return DiagonalGaussian{{}, Spectrum(std::move(v))};
  }
};

inline RcsModels rcs_compressed_models(const Spectrum& lam_ok, const Eigen::MatrixXd& cov_ko, const RcsEncoder& enc) {
  const std::size_t n = lam_ok.size();
  if (cov_ko.rows() != static_cast<Eigen::Index>(n) || cov_ko.cols() != static_cast<Eigen::Index>(n)) {
    throw DimensionError("rcs_compressed_models: anomalous covariance must be n x n");
  }
  if ((cov_ko - cov_ko.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov_ko.cwiseAbs().maxCoeff())) {
    throw InputError("rcs_compressed_models: anomalous covariance is not symmetric");
  }
  enc.validate(n);
  const auto& m = enc.selection.indices();
  const auto k = static_cast<Eigen::Index>(m.size());
  const double theta = enc.theta_eps();
  std::vector<double> ok(m.size());
  Eigen::MatrixXd ko(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    ok[static_cast<std::size_t>(a)] = lam_ok[m[static_cast<std::size_t>(a)]] + theta;
    for (Eigen::Index b = 0; b < k; ++b) {
      ko(a, b) = cov_ko(static_cast<Eigen::Index>(m[static_cast<std::size_t>(a)]),
                        static_cast<Eigen::Index>(m[static_cast<std::size_t>(b)]));
    }
    ko(a, a) += theta;
  }
  return {DiagonalGaussian{{}, Spectrum(std::move(ok))}, std::move(ko)};
}

inline RcsModels rcs_compressed_models(const Spectrum& lam_ok, const AnomalyModel& anomaly, const RcsEncoder& enc) {
  const Spectrum lam_ko = anomaly.expand(lam_ok.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lam_ok.size()),
                                              static_cast<Eigen::Index>(lam_ok.size()));
  for (std::size_t j = 0; j < lam_ok.size(); ++j) cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = lam_ko[j];
  return rcs_compressed_models(lam_ok, cov, enc);
}

/// C(n, m), saturating at the largest uint64.
inline std::uint64_t binomial(std::size_t n, std::size_t m) {
  if (m > n) return 0;
  m = std::min(m, n - m);
  unsigned __int128 c = 1;
  for (std::size_t k = 1; k <= m; ++k) {
    c = c * (n - m + k) / k;
    if (c > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(c);
}

/// min(C(n, m), cap) distinct m-subsets of {0..n-1}: every subset in
/// lexicographic order when C(n, m) <= cap, otherwise uniform draws without
/// replacement from the stream `seed`.
inline std::vector<Selection> sample_selections(std::size_t n, std::size_t m, std::uint64_t cap, std::uint64_t seed) {
  if (m < 1 || m > n) throw InputError("sample_selections: need 1 <= m <= n");
  if (cap < 1) throw InputError("sample_selections: cap must be >= 1");
  std::vector<Selection> out;
  const std::uint64_t total = binomial(n, m);
  if (total <= cap) {
    std::vector<std::size_t> c(m);
    for (std::size_t k = 0; k < m; ++k) c[k] = k;
    for (;;) {
      out.emplace_back(c);
      std::size_t k = m;
      while (k > 0 && c[k - 1] == n - m + k - 1) --k;
      if (k == 0) break;
      ++c[k - 1];
      for (std::size_t t = k; t < m; ++t) c[t] = c[t - 1] + 1;
    }
    return out;
  }
  CounterRng rng(derive_key(seed, {n, m}));
  std::set<Selection> seen;
  out.reserve(static_cast<std::size_t>(cap));
  while (out.size() < cap) {
    // Floyd's algorithm for one uniform m-subset.
    std::set<std::size_t> pick;
    for (std::size_t j = n - m; j < n; ++j) {
      const auto t = static_cast<std::size_t>(rng.below(j + 1));
      if (!pick.insert(t).second) pick.insert(j);
    }
    Selection s(std::vector<std::size_t>(pick.begin(), pick.end()));
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

struct RcsConfig {
  std::vector<std::size_t> m_counts;  // empty: 1..n
  std::uint64_t max_selections = 10000;
  double epsilon = 0.0;  // <= 0: lambda_{n-1} / 100
  std::size_t samples = 10000;  // per source for each P_det; 0 skips detection
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct RcsRow {
  std::size_t m_count = 0;
  Selection selection;
  double rate_bits = 0.0;
  double distortion = 0.0;
  double pdet_ld = std::numeric_limits<double>::quiet_NaN();
  double pdet_npd = std::numeric_limits<double>::quiet_NaN();
  double omega_equivalent = 0.0;  // Z of the equivalent Gaussian-additive encoder (bits)
  double omega_measured = 0.0;    // Z between the compressed ok and ko models (bits)
  bool fine = true;
};

struct RcsTable {
  std::vector<RcsRow> rows;
  double epsilon = 0.0;
  RcsConfig config;

  static constexpr const char* kCsvHeader = "m_count,selection_id,rate_bits,distortion,pdet_ld,pdet_npd";

  void write_csv(std::ostream& os) const {
    os << kCsvHeader << '\n';
    os.precision(17);
    for (const auto& r : rows) {
      os << r.m_count << ',' << r.selection.id() << ',' << r.rate_bits << ',' << r.distortion << ',' << r.pdet_ld << ','
         << r.pdet_npd << '\n';
    }
  }

  [[nodiscard]] nlohmann::json sidecar() const {
    nlohmann::json j;
    j["epsilon"] = epsilon;
    j["max_selections"] = config.max_selections;
    j["samples"] = config.samples;
    j["seed"] = config.seed;
    j["selection_sampling"] = "uniform m-subsets without replacement; exhaustive when C(n,m) <= max_selections";
    std::vector<std::size_t> ms;
    for (const auto& r : rows) {
      if (ms.empty() || ms.back() != r.m_count) ms.push_back(r.m_count);
    }
    j["m_counts"] = ms;
    std::size_t coarse = 0;
    for (const auto& r : rows) coarse += r.fine ? 0 : 1;
    j["rows"] = rows.size();
    j["rows_not_fine"] = coarse;
    return j;
  }
};

inline RcsTable rcs_experiment(const Spectrum& lam_ok, const AnomalyModel& anomaly, const RcsConfig& cfg) {
  const std::size_t n = lam_ok.size();
  if (n < 2) throw InputError("rcs_experiment: n >= 2 required");
  if (cfg.max_selections < 1) throw InputError("rcs_experiment: max_selections must be >= 1");
  RcsTable table;
  table.config = cfg;
  table.epsilon = cfg.epsilon > 0.0 ? cfg.epsilon : default_epsilon(lam_ok);
  if (!(table.epsilon > 0.0)) throw InputError("rcs_experiment: epsilon rule gives 0 (zero-variance component)");
  std::vector<std::size_t> ms = cfg.m_counts;
  if (ms.empty()) {
    for (std::size_t m = 1; m <= n; ++m) ms.push_back(m);
  }
  for (std::size_t m : ms) {
    if (m < 1 || m > n) throw InputError("rcs_experiment: m_count out of range");
    for (auto& s : sample_selections(n, m, cfg.max_selections, cfg.seed)) {
      RcsRow row;
      row.m_count = m;
      row.selection = std::move(s);
      table.rows.push_back(std::move(row));
    }
  }

  const RatioVector r = ratios(lam_ok, anomaly);
  auto evaluate = [&](RcsRow& row) {
    const RcsEncoder enc{row.selection, table.epsilon};
    row.rate_bits = rcs_rate(lam_ok, enc);
    row.distortion = rcs_distortion(lam_ok, enc);
    row.fine = enc.fine(lam_ok);
    row.omega_equivalent = dist_z(r, rcs_equivalent_encoder(lam_ok, enc));
    const RcsModels models = rcs_compressed_models(lam_ok, anomaly, enc);
    const DiagonalGaussian ko = models.ko_diagonal();
    row.omega_measured = z_from_variances(models.ok.variances, ko.variances);
    if (cfg.samples == 0) return;
    const std::uint64_t key = derive_key(cfg.seed, {row.m_count, row.selection.hash()});
    row.pdet_ld = evaluate_models(models.ok, ko, DetectorKind::LD, cfg.samples, key).p_det;
    row.pdet_npd = evaluate_models(models.ok, ko, DetectorKind::NPD, cfg.samples, key).p_det;
  };

  parallel_for(table.rows.size(), cfg.jobs, [&](std::size_t i) { evaluate(table.rows[i]); });
  return table;
}

}  // namespace rdd
