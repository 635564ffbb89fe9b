#pragma once

// Signal-variance profile generators.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdd/error.hpp"
#include "rdd/gaussian_core.hpp"

namespace rdd {

struct ProfileSpec {
  enum class Kind { Explicit, ExponentialDecay, Uniform };

  Kind kind = Kind::ExponentialDecay;
  std::size_t n = 32;
  double decay = 0.15;
  std::vector<double> values;  // Explicit only
  bool normalize = true;       // rescale to trace n; generated kinds always are

  static ProfileSpec uniform(std::size_t n) { return {Kind::Uniform, n, 0.0, {}, true}; }
  static ProfileSpec exponential(std::size_t n, double decay) { return {Kind::ExponentialDecay, n, decay, {}, true}; }
  static ProfileSpec explicit_values(std::vector<double> v, bool normalize = false) {
    const std::size_t n = v.size();
    return {Kind::Explicit, n, 0.0, std::move(v), normalize};
  }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::Explicit: return "explicit";
      case Kind::ExponentialDecay: return "exponential_decay";
      case Kind::Uniform: return "uniform";
    }
    return "?";
  }

  void validate() const {
    if (kind == Kind::Explicit) {
      if (values.empty()) throw InputError("profile: explicit values must be non-empty");
    } else {
      if (n < 1) throw InputError("profile: n must be >= 1");
      if (kind == Kind::ExponentialDecay && !(decay > 0.0 && std::isfinite(decay))) {
        throw InputError("profile: decay must be > 0");
      }
    }
  }

  static ProfileSpec from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("profile: expected a JSON object");
    ProfileSpec s;
    const std::string kind = j.value("kind", std::string("exponential_decay"));
    try {
      if (kind == "uniform") {
        s = uniform(j.at("n").get<std::size_t>());
      } else if (kind == "exponential_decay") {
        s = exponential(j.value("n", std::size_t{32}), j.value("decay", 0.15));
      } else if (kind == "explicit") {
        s = explicit_values(j.at("values").get<std::vector<double>>(), j.value("normalize", false));
      } else {
        throw InputError("profile: unknown kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("profile: ") + e.what());
    }
    s.validate();
    return s;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind_name(kind)}};
    if (kind == Kind::Explicit) {
      j["values"] = values;
      j["normalize"] = normalize;
    } else {
      j["n"] = n;
      if (kind == Kind::ExponentialDecay) j["decay"] = decay;
    }
    return j;
  }
};

/// lambda_j proportional to exp(-decay j) (or constant), rescaled so the trace is n.
inline Spectrum make_profile(const ProfileSpec& spec) {
  spec.validate();
  std::vector<double> v;
  switch (spec.kind) {
    case ProfileSpec::Kind::Uniform: v.assign(spec.n, 1.0); break;
    case ProfileSpec::Kind::ExponentialDecay:
      v.resize(spec.n);
      for (std::size_t j = 0; j < spec.n; ++j) v[j] = std::exp(-spec.decay * static_cast<double>(j));
      break;
    case ProfileSpec::Kind::Explicit: v = spec.values; break;
  }
  if (spec.normalize) {
    double t = 0.0;
    for (double x : v) t += x;
    if (!(t > 0.0)) throw InputError("profile: cannot normalize a zero-trace profile");
    const double scale = static_cast<double>(v.size()) / t;
    for (double& x : v) x *= scale;
  }
  return Spectrum(std::move(v));
}

}  // namespace rdd
