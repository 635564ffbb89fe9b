#pragma once

// JPEG-shaped grayscale pipeline: 8x8 blockwise DCT, per-coefficient uniform
// quantization of the mean-removed coefficients, dequantization and IDCT.
// The quantization table comes from the agnostic RDD solution over the
// empirical coefficient variances; detection uses a Mahalanobis detector on
// compressed-block coefficients and the rate is the empirical entropy of the
// quantized symbols.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rdd/dct.hpp"
#include "rdd/detector_lab.hpp"
#include "rdd/error.hpp"
#include "rdd/gaussian_core.hpp"
#include "rdd/idx.hpp"
#include "rdd/parallel.hpp"
#include "rdd/pareto_solver.hpp"
#include "rdd/rng.hpp"

namespace rdd::jpeg {

using dct::Block;
using Symbols = std::array<std::int32_t, 64>;

struct Image {
  std::size_t height = 0, width = 0;
  std::vector<double> pixels;  // row-major

  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  [[nodiscard]] std::size_t blocks() const { return (height / 8) * (width / 8); }
};

/// Right/bottom edge replication up to multiples of 8.
inline Image pad_to_blocks(const Image& img) {
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width) {
    throw InputError("jpeg: empty or malformed image");
  }
  const std::size_t h = (img.height + 7) / 8 * 8, w = (img.width + 7) / 8 * 8;
  if (h == img.height && w == img.width) return img;
  Image out{h, w, std::vector<double>(h * w)};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out.pixels[r * w + c] = img.at(std::min(r, img.height - 1), std::min(c, img.width - 1));
  }
  return out;
}

struct ImageSet {
  std::vector<Image> images;  // padded, pixel values in [0, 1]
  std::size_t source_height = 0, source_width = 0;
  bool padded = false;

  [[nodiscard]] std::size_t size() const { return images.size(); }
  [[nodiscard]] std::size_t blocks_per_image() const { return images.empty() ? 0 : images.front().blocks(); }
};

/// Images [begin, end) of an IDX file, bytes mapped to [0, 1], padded to
/// whole blocks.
inline ImageSet from_idx(const idx::Images& raw, std::size_t begin, std::size_t end) {
  if (begin > end || end > raw.count) throw InputError("jpeg: image range out of bounds");
  ImageSet set;
  set.source_height = raw.rows;
  set.source_width = raw.cols;
  set.padded = raw.rows % 8 != 0 || raw.cols % 8 != 0;
  set.images.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    Image img{raw.rows, raw.cols, std::vector<double>(raw.rows * raw.cols)};
    const std::uint8_t* p = raw.image(i);
    for (std::size_t k = 0; k < img.pixels.size(); ++k) img.pixels[k] = p[k] / 255.0;
    set.images.push_back(pad_to_blocks(img));
  }
  return set;
}

inline std::vector<Block> blockwise_dct(const Image& input) {
  const Image img = pad_to_blocks(input);
  std::vector<Block> out;
  out.reserve(img.blocks());
  for (std::size_t br = 0; br < img.height; br += 8) {
    for (std::size_t bc = 0; bc < img.width; bc += 8) {
      Block b{};
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) b[8 * i + j] = img.at(br + i, bc + j);
      }
      out.push_back(dct::forward(b));
    }
  }
  return out;
}

inline Image blockwise_idct(const std::vector<Block>& coeffs, std::size_t height, std::size_t width) {
  if (height % 8 != 0 || width % 8 != 0 || coeffs.size() != (height / 8) * (width / 8)) {
    throw DimensionError("blockwise_idct: block count does not match the image shape");
  }
  Image img{height, width, std::vector<double>(height * width)};
  std::size_t k = 0;
  for (std::size_t br = 0; br < height; br += 8) {
    for (std::size_t bc = 0; bc < width; bc += 8) {
      const Block x = dct::inverse(coeffs[k++]);
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) img.pixels[(br + i) * width + bc + j] = x[8 * i + j];
      }
    }
  }
  return img;
}

struct BlockStats {
  std::array<double, 64> means{};
  std::array<double, 64> variances{};
  std::size_t count = 0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"means", means}, {"variances", variances}, {"block_count", count}};
  }
};

/// Population mean and variance (normalized by the total block count) of
/// each DCT coefficient over every block of every image. Two passes.
inline BlockStats estimate_stats(const ImageSet& train) {
  std::vector<Block> all;
  for (const auto& img : train.images) {
    auto b = blockwise_dct(img);
    all.insert(all.end(), b.begin(), b.end());
  }
  if (all.size() < 2) throw InputError("estimate_stats: at least two blocks required");
  BlockStats s;
  s.count = all.size();
  for (const auto& b : all) {
    for (int j = 0; j < 64; ++j) s.means[j] += b[j];
  }
  for (double& m : s.means) m /= static_cast<double>(s.count);
  for (const auto& b : all) {
    for (int j = 0; j < 64; ++j) {
      const double d = b[j] - s.means[j];
      s.variances[j] += d * d;
    }
  }
  for (double& v : s.variances) v /= static_cast<double>(s.count);
  return s;
}

struct QuantTable {
  std::array<double, 64> q{};

  void validate() const {
    for (double v : q) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InputError("QuantTable: steps must be positive and finite");
    }
  }
  [[nodiscard]] QuantTable scaled(double factor) const {
    QuantTable t = *this;
    for (double& v : t.q) v *= factor;
    return t;
  }
  [[nodiscard]] nlohmann::json to_json() const { return {{"q", q}}; }
};

/// Nearest integer, ties to even.
inline std::int32_t round_half_even(double v) {
  const double r = std::nearbyint(v);  // default rounding mode: to nearest, ties to even
  if (!(std::abs(r) < 2147483647.0)) throw DomainError("jpeg: quantized symbol out of range");
  return static_cast<std::int32_t>(r);
}

inline Symbols quantize(const Block& coeffs, const BlockStats& stats, const QuantTable& qt) {
  Symbols y{};
  for (int j = 0; j < 64; ++j) y[j] = round_half_even((coeffs[j] - stats.means[j]) / qt.q[j]);
  return y;
}

inline Block dequantize(const Symbols& y, const BlockStats& stats, const QuantTable& qt) {
  Block z{};
  for (int j = 0; j < 64; ++j) z[j] = y[j] * qt.q[j] + stats.means[j];
  return z;
}

inline std::vector<Symbols> encode_blocks(const Image& img, const BlockStats& stats, const QuantTable& qt) {
  qt.validate();
  std::vector<Symbols> out;
  for (const auto& b : blockwise_dct(img)) out.push_back(quantize(b, stats, qt));
  return out;
}

inline Image decode_blocks(const std::vector<Symbols>& y, const BlockStats& stats, const QuantTable& qt,
                           std::size_t height, std::size_t width) {
  std::vector<Block> coeffs;
  coeffs.reserve(y.size());
  for (const auto& s : y) coeffs.push_back(dequantize(s, stats, qt));
  return blockwise_idct(coeffs, height, width);
}

/// Pooled Shannon entropy of every symbol of every block, scaled to bits per
/// image (64 B symbols per image).
inline double entropy_rate(const std::vector<std::vector<Symbols>>& per_image) {
  if (per_image.empty()) throw InputError("entropy_rate: no images");
  std::map<std::int32_t, std::size_t> hist;
  std::size_t total = 0, blocks = 0;
  for (const auto& img : per_image) {
    blocks += img.size();
    for (const auto& b : img) {
      for (std::int32_t v : b) ++hist[v];
      total += 64;
    }
  }
  if (total == 0) throw InputError("entropy_rate: no symbols");
  double h = 0.0;
  for (const auto& [v, c] : hist) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  const double per_image_symbols = 64.0 * static_cast<double>(blocks) / static_cast<double>(per_image.size());
  return per_image_symbols * std::max(h, 0.0);
}

/// Sum over the 64 coefficient positions of each position's own symbol
/// entropy, scaled to bits per image.
inline double entropy_rate_per_coefficient(const std::vector<std::vector<Symbols>>& per_image) {
  if (per_image.empty()) throw InputError("entropy_rate_per_coefficient: no images");
  std::array<std::map<std::int32_t, std::size_t>, 64> hist;
  std::size_t blocks = 0;
  for (const auto& img : per_image) {
    blocks += img.size();
    for (const auto& b : img) {
      for (std::size_t j = 0; j < 64; ++j) ++hist[j][b[j]];
    }
  }
  if (blocks == 0) throw InputError("entropy_rate_per_coefficient: no symbols");
  double h = 0.0;
  for (const auto& hj : hist) {
    for (const auto& [v, c] : hj) {
      const double p = static_cast<double>(c) / static_cast<double>(blocks);
      h -= p * std::log2(p);
    }
  }
  return std::max(h, 0.0) * static_cast<double>(blocks) / static_cast<double>(per_image.size());
}

enum class Calibration { Analytic, Empirical };

inline const char* to_string(Calibration c) { return c == Calibration::Analytic ? "analytic" : "empirical"; }

struct QTableOptions {
  double alpha = 1.0;
  Calibration calibration = Calibration::Analytic;
  double q_min = 1e-4;
  SolverConfig solver{};
};

struct QTableResult {
  QuantTable table;
  EncoderParams xis;
  std::array<double, 64> thetas{};
  std::array<bool, 64> calibrated{};  // Empirical bisection succeeded for coefficient j
  SolveResult solve;

  [[nodiscard]] nlohmann::json to_json() const {
    std::vector<double> rel(64);
    for (int j = 0; j < 64; ++j) rel[j] = 1.0 - xis[j];
    return {{"q", table.q},
            {"theta", thetas},
            {"theta_over_lambda", rel},
            {"calibrated", calibrated},
            {"status", to_string(solve.status)},
            {"rate_bits_model", solve.rate_bits}};
  }
};

class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, SolveResult result) : std::runtime_error(what), result_(std::move(result)) {}
  [[nodiscard]] const SolveResult& result() const { return result_; }

 private:
  SolveResult result_;
};

namespace detail {

inline std::array<std::vector<double>, 64> centered_coefficients(const ImageSet& set, const BlockStats& stats) {
  std::array<std::vector<double>, 64> out;
  for (const auto& img : set.images) {
    for (const auto& b : blockwise_dct(img)) {
      for (int j = 0; j < 64; ++j) out[j].push_back(b[j] - stats.means[j]);
    }
  }
  return out;
}

inline double quantization_mse(const std::vector<double>& z, double q) {
  double s = 0.0;
  for (double v : z) {
    const double e = v - q * std::nearbyint(v / q);
    s += e * e;
  }
  return s / static_cast<double>(z.size());
}

}  // namespace detail

/// Solves the agnostic RDD problem on the mean-removed coefficient variances
/// and maps theta_j = lambda_j (1 - xi_j) to steps: q_j = sqrt(12 theta_j)
/// (Analytic), optionally refined by bisection until the measured training
/// MSE is within 5% of theta_j (Empirical). theta_j = 0 maps to q_min.
inline QTableResult derive_qtable(const BlockStats& stats, double delta, double omega, const QTableOptions& opt,
                                  const ImageSet* train = nullptr) {
  if (!(opt.q_min > 0.0)) throw InputError("derive_qtable: q_min must be > 0");
  const Spectrum lam(std::vector<double>(stats.variances.begin(), stats.variances.end()));
  const RddProblem problem{lam, AnomalyModel::white(opt.alpha), delta, omega, ConstraintKind::AgnosticZ};
  QTableResult out;
  out.solve = solve_rdd_z(problem, opt.solver);
  if (!out.solve.feasible()) {
    throw InfeasibleError("derive_qtable: no encoder meets delta=" + std::to_string(delta) +
                              " and omega=" + std::to_string(omega),
                          out.solve);
  }
  out.xis = out.solve.xis;
  for (int j = 0; j < 64; ++j) {
    out.thetas[j] = lam[j] * (1.0 - out.xis[j]);
    out.table.q[j] = out.thetas[j] > 0.0 ? std::max(std::sqrt(12.0 * out.thetas[j]), opt.q_min) : opt.q_min;
  }
  if (opt.calibration == Calibration::Empirical) {
    if (!train) throw InputError("derive_qtable: empirical calibration needs a training set");
    const auto z = detail::centered_coefficients(*train, stats);
    for (int j = 0; j < 64; ++j) {
      const double theta = out.thetas[j];
      const double rel = lam[j] > 0.0 ? theta / lam[j] : 0.0;
      if (!(theta > 0.0) || rel < 1e-6) continue;
      // MSE grows with q up to the coefficient variance, reached once every
      // symbol is zero; bisect on log q. No bracket: keep the analytic step.
      double lo = std::max(out.table.q[j] / 64.0, opt.q_min), hi = out.table.q[j] * 64.0;
      if (detail::quantization_mse(z[j], lo) > theta || detail::quantization_mse(z[j], hi) < theta) continue;
      for (int it = 0; it < 100; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double mse = detail::quantization_mse(z[j], mid);
        if (std::abs(mse - theta) <= 0.05 * theta) {
          out.table.q[j] = mid;
          out.calibrated[j] = true;
          break;
        }
        (mse < theta ? lo : hi) = mid;
      }
    }
  }
  return out;
}

/// x_ko = (1 - eta) x + eta u with u ~ U[0, 1) i.i.d. per pixel; the noise of
/// image i is the stream (seed, i).
inline Image mix_uniform(const Image& img, double eta, std::uint64_t seed, std::uint64_t image_index) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw InputError("mix_uniform: eta must lie in [0, 1]");
  Image out = img;
  CounterRng rng(derive_key(seed, {image_index}));
  for (double& p : out.pixels) p = (1.0 - eta) * p + eta * rng.uniform();
  return out;
}

struct JpegConfig {
  std::vector<double> deltas{0.3};
  std::vector<double> omegas{0.0, 1000.0};
  double alpha = 1.0;
  double eta = 0.5;
  std::size_t blocks = 10000;  // scored blocks per class
  std::uint64_t seed = 0;
  Calibration calibration = Calibration::Empirical;
  double q_min = 1e-4;
  SolverConfig solver{};
  int jobs = 1;

  void validate() const {
    auto sorted = [](const std::vector<double>& g) {
      if (g.empty()) return false;
      for (std::size_t i = 1; i < g.size(); ++i) {
        if (!(g[i] > g[i - 1])) return false;
      }
      return true;
    };
    if (!sorted(deltas) || !sorted(omegas)) throw InputError("JpegConfig: grids must be non-empty and ascending");
    if (blocks < 1) throw InputError("JpegConfig: blocks must be >= 1");
    if (!(eta >= 0.0 && eta <= 1.0)) throw InputError("JpegConfig: eta must lie in [0, 1]");
    if (!(alpha > 0.0)) throw InputError("JpegConfig: alpha must be > 0");
  }
};

struct JpegRow {
  double delta = 0.0, omega = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  double rate_bits = std::numeric_limits<double>::quiet_NaN();   // bits per test image
  double distortion = std::numeric_limits<double>::quiet_NaN();  // squared error per block
  double rate_bits_per_coefficient = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double p_det = std::numeric_limits<double>::quiet_NaN();
  double p_det_se = std::numeric_limits<double>::quiet_NaN();
  int eigen_clipped = 0;
  QTableResult table;
};

struct JpegTable {
  std::vector<JpegRow> rows;

  static constexpr const char* kCsvHeader = "delta,omega,status,rate_bits,distortion,p_det,p_det_se";

  void write_csv(std::ostream& os) const {
    os << kCsvHeader << '\n';
    os.precision(17);
    for (const auto& r : rows) {
      os << r.delta << ',' << r.omega << ',' << to_string(r.status) << ',' << r.rate_bits << ',' << r.distortion << ','
         << r.p_det << ',' << r.p_det_se << '\n';
    }
  }
};

namespace detail {

inline std::vector<Block> compressed_coefficients(const Image& img, const BlockStats& stats, const QuantTable& qt) {
  std::vector<Block> out;
  for (const auto& b : blockwise_dct(img)) out.push_back(dequantize(quantize(b, stats, qt), stats, qt));
  return out;
}

}  // namespace detail

/// One row per (delta, omega) cell: derive the table, compress the test set,
/// measure distortion and entropy rate, and score `blocks` clean against
/// `blocks` anomaly-mixed compressed test blocks with a Mahalanobis detector
/// fitted on the compressed training blocks. Infeasible cells stay in the
/// table with NaN measurements.
inline JpegTable jpeg_experiment(const ImageSet& train, const ImageSet& test, const JpegConfig& cfg) {
  cfg.validate();
  if (train.size() == 0 || test.size() == 0) throw InputError("jpeg_experiment: empty image set");
  const BlockStats stats = estimate_stats(train);
  const std::size_t bpi = test.blocks_per_image();
  const std::size_t available = test.size() * bpi;
  if (cfg.blocks > available) throw InputError("jpeg_experiment: fewer test blocks than requested");

  // Scored block positions, shared by every cell.
  std::vector<std::size_t> order(available);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng pick(derive_key(cfg.seed, {0x62}));
  for (std::size_t i = available - 1; i > 0; --i) std::swap(order[i], order[pick.below(i + 1)]);
  order.resize(cfg.blocks);
  std::sort(order.begin(), order.end());

  std::vector<Image> anomalous(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) anomalous[i] = mix_uniform(test.images[i], cfg.eta, derive_key(cfg.seed, {0x6b}), i);

  QTableOptions opt;
  opt.alpha = cfg.alpha;
  opt.calibration = cfg.calibration;
  opt.q_min = cfg.q_min;
  opt.solver = cfg.solver;

  JpegTable table;
  for (double d : cfg.deltas) {
    for (double w : cfg.omegas) {
      JpegRow row;
      row.delta = d;
      row.omega = w;
      table.rows.push_back(std::move(row));
    }
  }

  parallel_for(table.rows.size(), cfg.jobs, [&](std::size_t cell) {
    JpegRow& row = table.rows[cell];
    try {
      row.table = derive_qtable(stats, row.delta, row.omega, opt, &train);
    } catch (const InfeasibleError& e) {
      row.table.solve = e.result();
      row.status = SolveStatus::Infeasible;
      return;
    }
    row.status = row.table.solve.status;
    const QuantTable& qt = row.table.table;

    // Detector fitted on compressed training blocks.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(64);
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(64, 64);
    std::size_t count = 0;
    for (const auto& img : train.images) {
      for (const auto& b : detail::compressed_coefficients(img, stats, qt)) {
        const Eigen::Map<const Eigen::VectorXd> v(b.data(), 64);
        mean += v;
        scatter.noalias() += v * v.transpose();
        ++count;
      }
    }
    mean /= static_cast<double>(count);
    Eigen::MatrixXd cov = scatter / static_cast<double>(count) - mean * mean.transpose();
    cov = 0.5 * (cov + cov.transpose());
    const MahalanobisDetector detector(mean, cov);
    row.eigen_clipped = detector.clipped();

    std::vector<std::vector<Symbols>> symbols(test.size());
    double sse = 0.0;
    std::vector<double> s_ok, s_ko;
    s_ok.reserve(cfg.blocks);
    s_ko.reserve(cfg.blocks);
    std::size_t next = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Image& img = test.images[i];
      symbols[i] = encode_blocks(img, stats, qt);
      const Image rec = decode_blocks(symbols[i], stats, qt, img.height, img.width);
      for (std::size_t p = 0; p < img.pixels.size(); ++p) {
        const double e = img.pixels[p] - rec.pixels[p];
        sse += e * e;
      }
      if (next < order.size() && order[next] / bpi == i) {
        const auto ok_blocks = detail::compressed_coefficients(img, stats, qt);
        const auto ko_blocks = detail::compressed_coefficients(anomalous[i], stats, qt);
        while (next < order.size() && order[next] / bpi == i) {
          const std::size_t k = order[next] % bpi;
          s_ok.push_back(detector.score(std::span<const double>(ok_blocks[k].data(), 64)));
          s_ko.push_back(detector.score(std::span<const double>(ko_blocks[k].data(), 64)));
          ++next;
        }
      }
    }
    row.distortion = sse / static_cast<double>(available);
    row.rate_bits = entropy_rate(symbols);
    row.rate_bits_per_coefficient = entropy_rate_per_coefficient(symbols);
    row.auc = auc(s_ok, s_ko);
    row.p_det = p_det(row.auc);
    row.p_det_se = binomial_std_error(row.p_det, cfg.blocks);
  });
  return table;
}

}  // namespace rdd::jpeg
