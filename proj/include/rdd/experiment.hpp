#pragma once

// Experiment orchestration: configs, sweeps, CSV/JSON emission and the run
// manifest. Every results file is written by one collector after all cells
// finish, so outputs never depend on --jobs.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rdd/detector_lab.hpp"
#include "rdd/error.hpp"
#include "rdd/gaussian_core.hpp"
#include "rdd/idx.hpp"
#include "rdd/jpeg_adapt.hpp"
#include "rdd/parallel.hpp"
#include "rdd/pareto_solver.hpp"
#include "rdd/profiles.hpp"
#include "rdd/rcs_compressor.hpp"
#include "rdd/version.hpp"

namespace rdd::lab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInvariant = 4;

inline constexpr int kCsvSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Logging

enum class LogLevel { Off = 0, Error, Warn, Info, Debug };

inline LogLevel parse_log_level(std::string_view s) {
  if (s == "off" || s == "0") return LogLevel::Off;
  if (s == "error") return LogLevel::Error;
  if (s == "warn" || s == "warning") return LogLevel::Warn;
  if (s == "info") return LogLevel::Info;
  if (s == "debug" || s == "trace") return LogLevel::Debug;
  return LogLevel::Warn;
}

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("RDD_LAB_LOG");
    return env ? parse_log_level(env) : LogLevel::Warn;
  }();
  return level;
}

inline void log(LogLevel level, std::string_view msg) {
  static constexpr const char* kNames[] = {"off", "error", "warn", "info", "debug"};
  if (level == LogLevel::Off || level > log_level()) return;
  std::cerr << "[rdd_lab " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

// ---------------------------------------------------------------------------
// Config

enum class ExperimentKind { ParetoZ, ParetoJ, DetectSim, Rcs, Jpeg, ProfileReport };
enum class OutputFormat { Csv, Json };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::ParetoZ: return "pareto-z";
    case ExperimentKind::ParetoJ: return "pareto-j";
    case ExperimentKind::DetectSim: return "detect-sim";
    case ExperimentKind::Rcs: return "rcs";
    case ExperimentKind::Jpeg: return "jpeg";
    case ExperimentKind::ProfileReport: return "profile-report";
  }
  return "?";
}

inline ExperimentKind parse_experiment(std::string_view s) {
  for (auto k : {ExperimentKind::ParetoZ, ExperimentKind::ParetoJ, ExperimentKind::DetectSim, ExperimentKind::Rcs,
                 ExperimentKind::Jpeg, ExperimentKind::ProfileReport}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

inline const char* to_string(OutputFormat f) { return f == OutputFormat::Csv ? "csv" : "json"; }

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw ConfigError("format must be csv or json, got '" + std::string(s) + "'");
}

inline std::vector<double> linspace(double a, double b, std::size_t count) {
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = count == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

struct RcsSettings {
  std::vector<std::size_t> m_counts;  // empty: 1..n
  std::uint64_t max_selections = 10000;
  double epsilon = 0.0;  // <= 0: smallest variance / 100
};

struct JpegSettings {
  std::string images;  // IDX image file, gz or raw
  std::size_t train = 8000;
  std::size_t test = 2000;
  double eta = 0.5;
  std::size_t blocks = 10000;
  jpeg::Calibration calibration = jpeg::Calibration::Empirical;
  double q_min = 1e-4;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::ParetoZ;
  std::optional<std::uint64_t> seed;
  ProfileSpec profile{};
  double alpha = 1.0;
  std::optional<ProfileSpec> ko_profile;  // aware problems; empty: identity
  std::optional<std::vector<double>> deltas;
  std::optional<std::vector<double>> omegas;
  ConstraintKind constraint = ConstraintKind::AgnosticZ;  // profile-report only
  SolverConfig solver{};
  std::size_t samples = 10000;
  int jobs = 1;
  std::string out = ".";
  OutputFormat format = OutputFormat::Csv;
  double monotonicity_tol = 1e-6;
  RcsSettings rcs{};
  JpegSettings jpeg{};

  [[nodiscard]] std::vector<double> delta_grid() const {
    if (deltas) return *deltas;
    switch (experiment) {
      case ExperimentKind::Jpeg: return {0.3};
      case ExperimentKind::ProfileReport: return {10.0};
      default: return {2.0, 6.0, 10.0, 14.0};
    }
  }

  [[nodiscard]] std::vector<double> omega_grid() const {
    if (omegas) return *omegas;
    switch (experiment) {
      case ExperimentKind::Jpeg: return {0.0, 1000.0};
      case ExperimentKind::ProfileReport: return {0.0, 5.0, 10.0};
      default: return linspace(0.0, 38.0, 20);
    }
  }

  [[nodiscard]] Spectrum lam_ok() const { return make_profile(profile); }

  [[nodiscard]] Spectrum lam_ko(std::size_t n) const {
    if (!ko_profile) return Spectrum(std::vector<double>(n, 1.0));
    Spectrum s = make_profile(*ko_profile);
    if (s.size() != n) throw ConfigError("ko_profile length must match profile length");
    return s;
  }

  [[nodiscard]] bool uses_grids() const {
    return experiment != ExperimentKind::Rcs;
  }

  void validate() const {
    if (!seed) throw ConfigError("seed is mandatory (config key 'seed' or --seed)");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(alpha > 0.0 && std::isfinite(alpha))) throw ConfigError("alpha must be > 0");
    if (!(monotonicity_tol >= 0.0)) throw ConfigError("monotonicity_tol must be >= 0");
    if (out.empty()) throw ConfigError("out directory must be non-empty");
    try {
      profile.validate();
      if (ko_profile) ko_profile->validate();
      solver.validate();
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
    auto check_grid = [](const std::vector<double>& g, const char* name, bool nonneg) {
      if (g.empty()) throw ConfigError(std::string(name) + " grid is empty");
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i]) || (nonneg && g[i] < 0.0)) {
          throw ConfigError(std::string(name) + " grid values must be finite and non-negative");
        }
        if (i > 0 && !(g[i] > g[i - 1])) throw ConfigError(std::string(name) + " grid must be strictly ascending");
      }
    };
    if (uses_grids()) {
      check_grid(delta_grid(), "delta", true);
      check_grid(omega_grid(), "omega", true);
    }
    if (experiment == ExperimentKind::ProfileReport && delta_grid().size() != 1) {
      throw ConfigError("profile-report takes exactly one delta");
    }
    if ((experiment == ExperimentKind::DetectSim) && samples < 1) throw ConfigError("samples must be >= 1");
    if (experiment == ExperimentKind::Rcs) {
      if (rcs.max_selections < 1) throw ConfigError("rcs.max_selections must be >= 1");
      const std::size_t n = lam_ok().size();
      for (std::size_t m : rcs.m_counts) {
        if (m < 1 || m > n) throw ConfigError("rcs.m_counts must lie in [1, n]");
      }
    }
    if (experiment == ExperimentKind::Jpeg) {
      if (jpeg.images.empty()) throw ConfigError("jpeg.images path is required");
      if (jpeg.train < 1 || jpeg.test < 1) throw ConfigError("jpeg.train and jpeg.test must be >= 1");
      if (!(jpeg.eta >= 0.0 && jpeg.eta <= 1.0)) throw ConfigError("jpeg.eta must lie in [0, 1]");
      if (jpeg.blocks < 1) throw ConfigError("jpeg.blocks must be >= 1");
      if (!(jpeg.q_min > 0.0)) throw ConfigError("jpeg.q_min must be > 0");
    }
    if (experiment == ExperimentKind::ParetoJ || (experiment == ExperimentKind::ProfileReport &&
                                                  constraint == ConstraintKind::AwareJ)) {
      (void)lam_ko(lam_ok().size());
    }
  }

  /// Applies every key of `j` on top of the current values; unknown keys are errors.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    auto sub = [](const nlohmann::json& v, const char* name) -> const nlohmann::json& {
      if (!v.is_object()) throw ConfigError(std::string(name) + " must be a JSON object");
      return v;
    };
    for (const auto& [key, value] : j.items()) {
      try {
        if (key == "experiment") experiment = parse_experiment(value.get<std::string>());
        else if (key == "seed") seed = value.get<std::uint64_t>();
        else if (key == "profile") profile = ProfileSpec::from_json(value);
        else if (key == "alpha") alpha = value.get<double>();
        else if (key == "ko_profile") ko_profile = ProfileSpec::from_json(value);
        else if (key == "deltas") deltas = value.get<std::vector<double>>();
        else if (key == "omegas") omegas = value.get<std::vector<double>>();
        else if (key == "constraint") {
          const auto c = value.get<std::string>();
          if (c == "z" || c == "agnostic_z") constraint = ConstraintKind::AgnosticZ;
          else if (c == "j" || c == "aware_j") constraint = ConstraintKind::AwareJ;
          else throw ConfigError("constraint must be 'z' or 'j'");
        } else if (key == "solver") {
          const SolverConfig base = solver;
          nlohmann::json merged = base.to_json();
          merged.update(sub(value, "solver"));
          solver = SolverConfig::from_json(merged);
        } else if (key == "samples") samples = value.get<std::size_t>();
        else if (key == "jobs") jobs = value.get<int>();
        else if (key == "out") out = value.get<std::string>();
        else if (key == "format") format = parse_format(value.get<std::string>());
        else if (key == "monotonicity_tol") monotonicity_tol = value.get<double>();
        else if (key == "rcs") {
          for (const auto& [k, v] : sub(value, "rcs").items()) {
            if (k == "m_counts") rcs.m_counts = v.get<std::vector<std::size_t>>();
            else if (k == "max_selections") rcs.max_selections = v.get<std::uint64_t>();
            else if (k == "epsilon") rcs.epsilon = v.get<double>();
            else throw ConfigError("unknown key 'rcs." + k + "'");
          }
        } else if (key == "jpeg") {
          for (const auto& [k, v] : sub(value, "jpeg").items()) {
            if (k == "images") jpeg.images = v.get<std::string>();
            else if (k == "train") jpeg.train = v.get<std::size_t>();
            else if (k == "test") jpeg.test = v.get<std::size_t>();
            else if (k == "eta") jpeg.eta = v.get<double>();
            else if (k == "blocks") jpeg.blocks = v.get<std::size_t>();
            else if (k == "q_min") jpeg.q_min = v.get<double>();
            else if (k == "calibration") {
              const auto c = v.get<std::string>();
              if (c == "empirical") jpeg.calibration = jpeg::Calibration::Empirical;
              else if (c == "analytic") jpeg.calibration = jpeg::Calibration::Analytic;
              else throw ConfigError("jpeg.calibration must be 'empirical' or 'analytic'");
            } else throw ConfigError("unknown key 'jpeg." + k + "'");
          }
        } else {
          throw ConfigError("unknown config key '" + key + "'");
        }
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
      } catch (const InputError& e) {
        throw ConfigError(e.what());
      }
    }
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.merge_json(j);
    return c;
  }

  static nlohmann::json read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw OutputError("cannot open config file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return j;
  }

  static ExperimentConfig from_file(const std::string& path) { return from_json(read_file(path)); }

  /// Effective configuration, with defaults resolved.
  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["experiment"] = to_string(experiment);
    if (seed) j["seed"] = *seed;
    j["profile"] = profile.to_json();
    j["alpha"] = alpha;
    if (ko_profile) j["ko_profile"] = ko_profile->to_json();
    if (uses_grids()) {
      j["deltas"] = delta_grid();
      j["omegas"] = omega_grid();
    }
    if (experiment == ExperimentKind::ProfileReport) {
      j["constraint"] = constraint == ConstraintKind::AgnosticZ ? "z" : "j";
    }
    j["solver"] = solver.to_json();
    j["samples"] = samples;
    j["jobs"] = jobs;
    j["out"] = out;
    j["format"] = to_string(format);
    j["monotonicity_tol"] = monotonicity_tol;
    if (experiment == ExperimentKind::Rcs) {
      j["rcs"] = {{"m_counts", rcs.m_counts}, {"max_selections", rcs.max_selections}, {"epsilon", rcs.epsilon}};
    }
    if (experiment == ExperimentKind::Jpeg) {
      j["jpeg"] = {{"images", jpeg.images}, {"train", jpeg.train},   {"test", jpeg.test},
                   {"eta", jpeg.eta},       {"blocks", jpeg.blocks}, {"calibration", jpeg::to_string(jpeg.calibration)},
                   {"q_min", jpeg.q_min}};
    }
    return j;
  }
};

// ---------------------------------------------------------------------------
// Tables

/// A results table: header, string cells, and a JSON mirror for --format json.
struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  nlohmann::json records = nlohmann::json::array();

  [[nodiscard]] std::string header_line() const {
    std::string s;
    for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
    return s;
  }

  void write_csv(std::ostream& os) const {
    os << header_line() << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
  }

  void write_json(std::ostream& os) const {
    nlohmann::json j{{"schema_version", kCsvSchemaVersion}, {"columns", header}, {"rows", records}};
    os << j.dump(2) << '\n';
  }
};

inline const std::vector<std::string>& pareto_header() {
  static const std::vector<std::string> h{"delta_index", "omega_index", "delta",      "omega",
                                          "status",      "rate_bits",   "achieved_delta", "achieved_omega",
                                          "iterations",  "branch",      "restart_index"};
  return h;
}

inline const std::vector<std::string>& detect_header() {
  static const std::vector<std::string> h{"delta_index", "omega_index", "delta",      "omega",  "status",
                                          "rate_bits",   "achieved_omega", "pdet_ld", "pdet_ld_se", "pdet_npd",
                                          "pdet_npd_se"};
  return h;
}

inline std::vector<std::string> profile_report_header(const std::vector<double>& omegas) {
  std::vector<std::string> h{"j", "lambda_ok", "lambda_ko"};
  for (double w : omegas) h.push_back("theta_over_lambda_omega_" + format_number(w));
  return h;
}

inline std::vector<std::string> split_header(const char* line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char* p = line; *p; ++p) {
    if (*p == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += *p;
    }
  }
  out.push_back(cur);
  return out;
}

inline nlohmann::json result_json(const SolveResult& r) {
  nlohmann::json xi = nlohmann::json::array();
  for (double x : r.xis.values()) xi.push_back(x);
  return {{"status", to_string(r.status)},
          {"rate_bits", json_number(r.rate_bits)},
          {"achieved_delta", json_number(r.achieved_delta)},
          {"achieved_omega", json_number(r.achieved_omega)},
          {"iterations", r.diagnostics.iterations},
          {"branch", r.diagnostics.branch},
          {"restart_index", r.diagnostics.restart_index},
          {"max_achievable_omega", json_number(r.diagnostics.max_achievable_omega)},
          {"note", r.diagnostics.note},
          {"xis", xi}};
}

inline std::vector<std::string> pareto_cells(const ParetoPoint& p) {
  const auto& r = p.result;
  return {std::to_string(p.delta_index),
          std::to_string(p.omega_index),
          format_number(p.delta),
          format_number(p.omega),
          to_string(r.status),
          format_number(r.status == SolveStatus::Infeasible ? std::nan("") : r.rate_bits),
          format_number(r.status == SolveStatus::Infeasible ? std::nan("") : r.achieved_delta),
          format_number(r.status == SolveStatus::Infeasible ? std::nan("") : r.achieved_omega),
          std::to_string(r.diagnostics.iterations),
          std::to_string(r.diagnostics.branch),
          std::to_string(r.diagnostics.restart_index)};
}

// ---------------------------------------------------------------------------
// Invariant checks on returned results, recomputed from the closed forms.

inline std::vector<std::string> verify_result(const RddProblem& p, const SolveResult& r) {
  std::vector<std::string> out;
  if (!r.feasible()) return out;
  const std::string where = "(delta=" + format_number(p.delta) + ", omega=" + format_number(p.omega) + ")";
  const double rho = rate(p.lam_ok, r.xis);
  const bool both_inf = is_infinite_rate(rho) && is_infinite_rate(r.rate_bits);
  if (!both_inf && !(std::abs(rho - r.rate_bits) <= 1e-9 * std::max(1.0, std::abs(rho)))) {
    out.push_back("reported rate differs from the closed form at " + where);
  }
  const double n = static_cast<double>(p.lam_ok.size());
  if (distortion(p.lam_ok, r.xis) > p.delta + 1e-8 * n) out.push_back("distortion budget exceeded at " + where);
  const RatioVector rv = ratios(p.lam_ok, p.anomaly);
  const double achieved = p.kind == ConstraintKind::AgnosticZ ? dist_z(rv, r.xis) : dist_j(rv, r.xis);
  if (p.omega > 0.0 && achieved < p.omega - 1e-8) out.push_back("distinguishability floor missed at " + where);
  return out;
}

// ---------------------------------------------------------------------------
// Run

struct RunReport {
  int exit_code = kExitOk;
  std::vector<Table> tables;
  nlohmann::json extras = nlohmann::json::object();
  std::vector<std::string> violations;        // trigger exit 4
  std::vector<std::string> heuristic_flags;   // reported only
  std::vector<std::filesystem::path> written;
};

namespace detail {

inline ProblemFamily family_for(const ExperimentConfig& cfg, ConstraintKind kind) {
  Spectrum lam = cfg.lam_ok();
  if (kind == ConstraintKind::AgnosticZ) return {lam, AnomalyModel::white(cfg.alpha), kind};
  const std::size_t n = lam.size();
  return {std::move(lam), AnomalyModel::diagonal(cfg.lam_ko(n)), kind};
}

inline SolverConfig seeded_solver(const ExperimentConfig& cfg) {
  SolverConfig s = cfg.solver;
  s.seed = derive_key(*cfg.seed, {0x50});
  return s;
}

inline void check_surface(const ProblemFamily& fam, const ParetoSurface& s, RunReport& rep) {
  for (const auto& pt : s.points) {
    RddProblem p{fam.lam_ok, fam.anomaly, pt.delta, pt.omega, fam.kind};
    for (auto& v : verify_result(p, pt.result)) rep.violations.push_back(std::move(v));
  }
  auto& sink = fam.kind == ConstraintKind::AgnosticZ ? rep.violations : rep.heuristic_flags;
  for (const auto& v : s.violations) sink.push_back(v);
}

inline Table pareto_table(const ParetoSurface& s, const char* name) {
  Table t{name, pareto_header(), {}, nlohmann::json::array()};
  for (const auto& pt : s.points) {
    t.rows.push_back(pareto_cells(pt));
    nlohmann::json rec = result_json(pt.result);
    rec["delta_index"] = pt.delta_index;
    rec["omega_index"] = pt.omega_index;
    rec["delta"] = pt.delta;
    rec["omega"] = pt.omega;
    t.records.push_back(std::move(rec));
  }
  return t;
}

inline void run_pareto(const ExperimentConfig& cfg, ConstraintKind kind, RunReport& rep) {
  const ProblemFamily fam = family_for(cfg, kind);
  log(LogLevel::Info, std::string("sweeping ") + std::to_string(cfg.delta_grid().size()) + "x" +
                          std::to_string(cfg.omega_grid().size()) + " cells (" + to_string(kind) + ")");
  const ParetoSurface s =
      sweep(fam, cfg.delta_grid(), cfg.omega_grid(), seeded_solver(cfg), cfg.jobs, cfg.monotonicity_tol);
  check_surface(fam, s, rep);
  rep.tables.push_back(pareto_table(s, kind == ConstraintKind::AgnosticZ ? "pareto_z" : "pareto_j"));
}

inline void run_detect(const ExperimentConfig& cfg, RunReport& rep) {
  const ProblemFamily fam = family_for(cfg, ConstraintKind::AgnosticZ);
  const ParetoSurface s =
      sweep(fam, cfg.delta_grid(), cfg.omega_grid(), seeded_solver(cfg), cfg.jobs, cfg.monotonicity_tol);
  check_surface(fam, s, rep);

  struct Cell {
    DetectionResult ld, npd;
  };
  std::vector<Cell> cells(s.points.size());
  parallel_for(s.points.size(), cfg.jobs, [&](std::size_t c) {
    const ParetoPoint& pt = s.points[c];
    if (!pt.result.feasible()) return;
    const std::uint64_t key = derive_key(*cfg.seed, {0x64, pt.delta_index, pt.omega_index});
    cells[c].ld = evaluate_detection(fam.lam_ok, fam.anomaly, pt.result.xis, DetectorKind::LD, cfg.samples, key);
    cells[c].npd = evaluate_detection(fam.lam_ok, fam.anomaly, pt.result.xis, DetectorKind::NPD, cfg.samples, key);
  });

  Table t{"detect_sim", detect_header(), {}, nlohmann::json::array()};
  const double nan = std::nan("");
  for (std::size_t c = 0; c < s.points.size(); ++c) {
    const ParetoPoint& pt = s.points[c];
    const bool ok = pt.result.feasible();
    const Cell& cell = cells[c];
    t.rows.push_back({std::to_string(pt.delta_index), std::to_string(pt.omega_index), format_number(pt.delta),
                      format_number(pt.omega), to_string(pt.result.status),
                      format_number(ok ? pt.result.rate_bits : nan), format_number(ok ? pt.result.achieved_omega : nan),
                      format_number(ok ? cell.ld.p_det : nan), format_number(ok ? cell.ld.std_error : nan),
                      format_number(ok ? cell.npd.p_det : nan), format_number(ok ? cell.npd.std_error : nan)});
    nlohmann::json rec = result_json(pt.result);
    rec["delta_index"] = pt.delta_index;
    rec["omega_index"] = pt.omega_index;
    rec["delta"] = pt.delta;
    rec["omega"] = pt.omega;
    rec["pdet_ld"] = json_number(ok ? cell.ld.p_det : nan);
    rec["pdet_ld_se"] = json_number(ok ? cell.ld.std_error : nan);
    rec["pdet_npd"] = json_number(ok ? cell.npd.p_det : nan);
    rec["pdet_npd_se"] = json_number(ok ? cell.npd.std_error : nan);
    t.records.push_back(std::move(rec));
  }
  rep.tables.push_back(std::move(t));
  rep.extras["detection"] = {{"samples_per_class", cfg.samples},
                             {"stream", "derive_key(seed, {0x64, delta_index, omega_index}); LD and NPD share draws"}};
}

inline void run_rcs(const ExperimentConfig& cfg, RunReport& rep) {
  const Spectrum lam = cfg.lam_ok();
  RcsConfig rc;
  rc.m_counts = cfg.rcs.m_counts;
  rc.max_selections = cfg.rcs.max_selections;
  rc.epsilon = cfg.rcs.epsilon;
  rc.samples = cfg.samples;
  rc.seed = *cfg.seed;
  rc.jobs = cfg.jobs;
  const RcsTable rt = rcs_experiment(lam, AnomalyModel::white(cfg.alpha), rc);
  Table t{"rcs", split_header(RcsTable::kCsvHeader), {}, nlohmann::json::array()};
  for (const auto& r : rt.rows) {
    t.rows.push_back({std::to_string(r.m_count), r.selection.id(), format_number(r.rate_bits),
                      format_number(r.distortion), format_number(r.pdet_ld), format_number(r.pdet_npd)});
    t.records.push_back({{"m_count", r.m_count},
                         {"selection_id", r.selection.id()},
                         {"rate_bits", json_number(r.rate_bits)},
                         {"distortion", json_number(r.distortion)},
                         {"pdet_ld", json_number(r.pdet_ld)},
                         {"pdet_npd", json_number(r.pdet_npd)},
                         {"omega_equivalent", json_number(r.omega_equivalent)},
                         {"omega_measured", json_number(r.omega_measured)},
                         {"fine", r.fine}});
  }
  rep.tables.push_back(std::move(t));
  rep.extras["rcs"] = rt.sidecar();
}

inline void run_jpeg(const ExperimentConfig& cfg, RunReport& rep) {
  const idx::Images raw = idx::read_images(cfg.jpeg.images);
  if (cfg.jpeg.train + cfg.jpeg.test > raw.count) {
    throw ConfigError("jpeg.train + jpeg.test exceeds the " + std::to_string(raw.count) + " images in " +
                      cfg.jpeg.images);
  }
  const jpeg::ImageSet train = jpeg::from_idx(raw, 0, cfg.jpeg.train);
  const jpeg::ImageSet test = jpeg::from_idx(raw, cfg.jpeg.train, cfg.jpeg.train + cfg.jpeg.test);
  jpeg::JpegConfig jc;
  jc.deltas = cfg.delta_grid();
  jc.omegas = cfg.omega_grid();
  jc.alpha = cfg.alpha;
  jc.eta = cfg.jpeg.eta;
  jc.blocks = cfg.jpeg.blocks;
  jc.seed = *cfg.seed;
  jc.calibration = cfg.jpeg.calibration;
  jc.q_min = cfg.jpeg.q_min;
  jc.solver = seeded_solver(cfg);
  jc.jobs = cfg.jobs;
  try {
    jc.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  log(LogLevel::Info, "jpeg: " + std::to_string(train.size()) + " train / " + std::to_string(test.size()) +
                          " test images");
  const jpeg::JpegTable jt = jpeg::jpeg_experiment(train, test, jc);
  Table t{"jpeg", split_header(jpeg::JpegTable::kCsvHeader), {}, nlohmann::json::array()};
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& r : jt.rows) {
    t.rows.push_back({format_number(r.delta), format_number(r.omega), to_string(r.status), format_number(r.rate_bits),
                      format_number(r.distortion), format_number(r.p_det), format_number(r.p_det_se)});
    t.records.push_back({{"delta", r.delta},
                         {"omega", r.omega},
                         {"status", to_string(r.status)},
                         {"rate_bits", json_number(r.rate_bits)},
                         {"distortion", json_number(r.distortion)},
                         {"p_det", json_number(r.p_det)},
                         {"p_det_se", json_number(r.p_det_se)}});
    cells.push_back({{"delta", r.delta},
                     {"omega", r.omega},
                     {"auc", json_number(r.auc)},
                     {"rate_bits_per_coefficient", json_number(r.rate_bits_per_coefficient)},
                     {"eigen_clipped", r.eigen_clipped},
                     {"table", r.table.to_json()}});
  }
  rep.tables.push_back(std::move(t));
  rep.extras["jpeg"] = {{"source", {{"images", cfg.jpeg.images}, {"count", raw.count}, {"rows", raw.rows},
                                    {"cols", raw.cols}}},
                        {"train_range", {0, cfg.jpeg.train}},
                        {"test_range", {cfg.jpeg.train, cfg.jpeg.train + cfg.jpeg.test}},
                        {"padded", {train.images.front().height, train.images.front().width}},
                        {"cells", cells}};
}

inline void run_profile_report(const ExperimentConfig& cfg, RunReport& rep) {
  const ProblemFamily fam = family_for(cfg, cfg.constraint);
  const double delta = cfg.delta_grid().front();
  const std::vector<double> omegas = cfg.omega_grid();
  const ParetoSurface s = sweep(fam, {delta}, omegas, seeded_solver(cfg), cfg.jobs, cfg.monotonicity_tol);
  check_surface(fam, s, rep);
  const std::size_t n = fam.lam_ok.size();
  const Spectrum ko = fam.anomaly.expand(n);
  Table t{"profile_report", profile_report_header(omegas), {}, nlohmann::json::array()};
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::string> row{std::to_string(j), format_number(fam.lam_ok[j]), format_number(ko[j])};
    nlohmann::json rec{{"j", j}, {"lambda_ok", fam.lam_ok[j]}, {"lambda_ko", ko[j]}};
    nlohmann::json rel = nlohmann::json::array();
    for (std::size_t k = 0; k < omegas.size(); ++k) {
      const SolveResult& r = s.at(0, k).result;
      const double v = r.feasible() ? 1.0 - r.xis[j] : std::nan("");
      row.push_back(format_number(v));
      rel.push_back(json_number(v));
    }
    rec["theta_over_lambda"] = rel;
    t.rows.push_back(std::move(row));
    t.records.push_back(std::move(rec));
  }
  rep.tables.push_back(std::move(t));
  nlohmann::json status = nlohmann::json::array();
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    const SolveResult& r = s.at(0, k).result;
    status.push_back({{"omega", omegas[k]}, {"status", to_string(r.status)}, {"rate_bits", json_number(r.rate_bits)}});
  }
  rep.extras["profile_report"] = {{"delta", delta}, {"cells", status}};
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Computes every table of the experiment without touching the filesystem.
inline RunReport execute(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport rep;
  switch (cfg.experiment) {
    case ExperimentKind::ParetoZ: detail::run_pareto(cfg, ConstraintKind::AgnosticZ, rep); break;
    case ExperimentKind::ParetoJ: detail::run_pareto(cfg, ConstraintKind::AwareJ, rep); break;
    case ExperimentKind::DetectSim: detail::run_detect(cfg, rep); break;
    case ExperimentKind::Rcs: detail::run_rcs(cfg, rep); break;
    case ExperimentKind::Jpeg: detail::run_jpeg(cfg, rep); break;
    case ExperimentKind::ProfileReport: detail::run_profile_report(cfg, rep); break;
  }
  for (const auto& v : rep.violations) log(LogLevel::Error, "invariant violation: " + v);
  for (const auto& v : rep.heuristic_flags) log(LogLevel::Warn, "flagged: " + v);
  rep.exit_code = rep.violations.empty() ? kExitOk : kExitInvariant;
  return rep;
}

/// Serializes one table in the configured format.
inline std::string render(const Table& t, OutputFormat f) {
  std::ostringstream os;
  if (f == OutputFormat::Csv) t.write_csv(os);
  else t.write_json(os);
  return os.str();
}

/// Runs the experiment and writes `<name>.csv|json` plus `manifest.json` to cfg.out.
inline RunReport run(const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_utc = detail::utc_now();
  RunReport rep = execute(cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  namespace fs = std::filesystem;
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw OutputError("cannot create output directory " + dir.string() + ": " + ec.message());

  auto write = [&](const fs::path& p, const std::string& body) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw OutputError("cannot write " + p.string());
    os << body;
    if (!os) throw OutputError("write failed for " + p.string());
    rep.written.push_back(p);
  };

  nlohmann::json outputs = nlohmann::json::array();
  const char* ext = cfg.format == OutputFormat::Csv ? ".csv" : ".json";
  for (const auto& t : rep.tables) {
    const fs::path p = dir / (t.name + ext);
    write(p, render(t, cfg.format));
    outputs.push_back({{"path", p.filename().string()}, {"header", t.header}, {"rows", t.rows.size()}});
  }

  const Spectrum lam = cfg.lam_ok();
  nlohmann::json manifest;
  manifest["manifest_version"] = 1;
  manifest["csv_schema_version"] = kCsvSchemaVersion;
  manifest["library"] = {{"name", "rdd"}, {"version", kVersion}};
  manifest["experiment"] = to_string(cfg.experiment);
  manifest["config"] = cfg.to_json();
  manifest["profile_values"] = std::vector<double>(lam.values().begin(), lam.values().end());
  manifest["seeds"] = {{"seed", *cfg.seed},
                       {"solver_seed", detail::seeded_solver(cfg).seed},
                       {"cell_key", "derive_key(solver_seed, {delta_index, omega_index})"}};
  manifest["outputs"] = outputs;
  manifest["violations"] = rep.violations;
  manifest["flagged"] = rep.heuristic_flags;
  manifest["details"] = rep.extras;
  manifest["exit_code"] = rep.exit_code;
  manifest["started_utc"] = started_utc;
  manifest["wall_time_seconds"] = wall;
  write(dir / "manifest.json", manifest.dump(2) + "\n");
  return rep;
}

/// Machine-readable error report for stderr.
inline std::string error_report(int code, std::string_view kind, std::string_view message) {
  return nlohmann::json{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}}.dump();
}

}  // namespace rdd::lab
