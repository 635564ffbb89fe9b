// rdd_lab: command-line front end for the rate-distortion-distinguishability
// experiments. See README.md for usage.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdd/experiment.hpp"

#ifndef RDD_DEFAULT_MNIST_IMAGES
#define RDD_DEFAULT_MNIST_IMAGES ""
#endif

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::vector<double> delta;
  std::vector<double> omega;
  std::optional<double> alpha;
  std::optional<std::size_t> n_samples;
  std::optional<std::string> images;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Master seed (mandatory unless set in the config)");
  sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--format", o.format, "Results format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--delta", o.delta, "Distortion grid (overrides config)")->delimiter(',');
  sub->add_option("--omega", o.omega, "Distinguishability grid in bits (overrides config)")->delimiter(',');
  sub->add_option("--alpha", o.alpha, "White anomaly variance");
  sub->add_option("--n-samples", o.n_samples, "Monte-Carlo samples per class");
}

rdd::lab::ExperimentConfig build_config(rdd::lab::ExperimentKind kind, const Overrides& o) {
  using namespace rdd::lab;
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    const nlohmann::json raw = ExperimentConfig::read_file(o.config);
    if (raw.is_object() && raw.contains("experiment") && raw["experiment"].is_string() &&
        raw["experiment"].get<std::string>() != to_string(kind)) {
      throw ConfigError("config is for '" + raw["experiment"].get<std::string>() + "' but the subcommand is '" +
                        to_string(kind) + "'");
    }
    cfg = ExperimentConfig::from_json(raw);
  }
  cfg.experiment = kind;
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.out) cfg.out = *o.out;
  if (o.format) cfg.format = parse_format(*o.format);
  if (!o.delta.empty()) cfg.deltas = o.delta;
  if (!o.omega.empty()) cfg.omegas = o.omega;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.n_samples) {
    cfg.samples = *o.n_samples;
    cfg.jpeg.blocks = *o.n_samples;
  }
  if (o.images) cfg.jpeg.images = *o.images;
  if (kind == ExperimentKind::Jpeg && cfg.jpeg.images.empty()) cfg.jpeg.images = RDD_DEFAULT_MNIST_IMAGES;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace rdd::lab;
  CLI::App app{"Rate-distortion-distinguishability experiment runner"};
  app.set_version_flag("--version", std::string(rdd::kVersion));
  app.require_subcommand(1);

  Overrides o;
  struct Entry {
    ExperimentKind kind;
    const char* help;
    CLI::App* sub = nullptr;
  };
  std::vector<Entry> entries{
      {ExperimentKind::ParetoZ, "Pareto surface under the agnostic (white-anomaly) constraint"},
      {ExperimentKind::ParetoJ, "Pareto surface under the aware (diagonal-anomaly) constraint"},
      {ExperimentKind::DetectSim, "Pareto surface plus Monte-Carlo LD/NPD detection rates"},
      {ExperimentKind::Rcs, "Random component selection scatter"},
      {ExperimentKind::Jpeg, "JPEG-like pipeline on MNIST with derived quantization tables"},
      {ExperimentKind::ProfileReport, "Relative distortion profile at one delta across omega values"},
  };
  for (auto& e : entries) {
    e.sub = app.add_subcommand(to_string(e.kind), e.help);
    add_common(e.sub, o);
  }
  entries[4].sub->add_option("--images", o.images, "MNIST IDX image file (.gz accepted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_report(kExitConfig, "config", e.what()) << '\n';
    return kExitConfig;
  }

  ExperimentKind kind = ExperimentKind::ParetoZ;
  for (const auto& e : entries) {
    if (e.sub->parsed()) kind = e.kind;
  }

  try {
    const ExperimentConfig cfg = build_config(kind, o);
    const RunReport rep = run(cfg);
    for (const auto& p : rep.written) log(LogLevel::Info, "wrote " + p.string());
    if (rep.exit_code != kExitOk) {
      std::cerr << error_report(rep.exit_code, "invariant",
                                std::to_string(rep.violations.size()) + " invariant violation(s); see manifest.json")
                << '\n';
    }
    return rep.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << error_report(kExitConfig, "config", e.what()) << '\n';
    return kExitConfig;
  } catch (const rdd::InputError& e) {
    std::cerr << error_report(kExitConfig, "config", e.what()) << '\n';
    return kExitConfig;
  } catch (const rdd::DimensionError& e) {
    std::cerr << error_report(kExitConfig, "config", e.what()) << '\n';
    return kExitConfig;
  } catch (const rdd::idx::IoError& e) {
    std::cerr << error_report(kExitIo, "io", e.what()) << '\n';
    return kExitIo;
  } catch (const OutputError& e) {
    std::cerr << error_report(kExitIo, "io", e.what()) << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << error_report(kExitIo, "io", e.what()) << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << error_report(kExitInvariant, "internal", e.what()) << '\n';
    return kExitInvariant;
  }
}
