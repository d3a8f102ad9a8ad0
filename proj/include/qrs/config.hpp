#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrs/io.hpp"
#include "qrs/testbeds.hpp"

namespace qrs::io {

/// Schema violation in a run-config or constraint-spec document; carries the
/// offending keys so the CLI can list them (exit code 65).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::vector<std::string> keys)
      : std::runtime_error(what + (keys.empty() ? "" : ": " + join(keys))),
        keys_(std::move(keys)) {}
  const std::vector<std::string>& keys() const { return keys_; }

 private:
  static std::string join(const std::vector<std::string>& keys) {
    std::string out;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (i) out += ", ";
      out += keys[i];
    }
    return out;
  }
  std::vector<std::string> keys_;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& section,
                                const std::vector<std::string>& allowed) {
  std::vector<std::string> bad;
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed)
      if (key == a) ok = true;
    if (!ok) bad.push_back(section.empty() ? key : section + "." + key);
  }
  if (!bad.empty()) throw ConfigError("unknown config keys", std::move(bad));
}

/// All numeric fields travel as decimal strings (diff-able provenance); a
/// raw JSON number is a schema violation.
inline std::string decimal_field(const json& obj, const std::string& section,
                                 const std::string& key, const char* fallback = nullptr) {
  const std::string path = section.empty() ? key : section + "." + key;
  if (!obj.contains(key)) {
    if (fallback) return fallback;
    throw ConfigError("missing config key", {path});
  }
  if (!obj[key].is_string())
    throw ConfigError("numeric fields must be decimal strings", {path});
  return obj[key].get<std::string>();
}

inline std::string string_field(const json& obj, const std::string& section,
                                const std::string& key, const char* fallback = nullptr) {
  const std::string path = section.empty() ? key : section + "." + key;
  if (!obj.contains(key)) {
    if (fallback) return fallback;
    throw ConfigError("missing config key", {path});
  }
  if (!obj[key].is_string()) throw ConfigError("expected a string value", {path});
  return obj[key].get<std::string>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Testbed addressing
// ---------------------------------------------------------------------------

struct TestbedRef {
  enum class Kind { poisson, categorical, constraint_file, two_point, constraint_demo };
  Kind kind = Kind::two_point;
  double lambda_p = 11.0, lambda_q = 10.0;
  int positions = 1, symbols = 2;
  std::uint64_t seed = 0;
  WeightLaw law = WeightLaw::uniform_dirichlet;
  std::string path;  // constraint spec file
  std::string raw;
};

/// Parses CLI testbed names: `poisson:<lp>:<lq>`,
/// `categorical:<k>:<v>:<seed>:<law>`, `constraint:<spec-file>`, plus the
/// built-in demo instances `twopoint` and `constraint-demo`.
inline TestbedRef parse_testbed_name(const std::string& name) {
  TestbedRef ref;
  ref.raw = name;
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= name.size(); ++i) {
    if (i == name.size() || name[i] == ':') {
      parts.push_back(name.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.empty()) throw std::invalid_argument("empty testbed name");
  const std::string& head = parts[0];
  if (head == "twopoint" && parts.size() == 1) {
    ref.kind = TestbedRef::Kind::two_point;
    return ref;
  }
  if (head == "constraint-demo" && parts.size() == 1) {
    ref.kind = TestbedRef::Kind::constraint_demo;
    return ref;
  }
  if (head == "poisson" && parts.size() == 3) {
    ref.kind = TestbedRef::Kind::poisson;
    ref.lambda_p = parse_double(parts[1]);
    ref.lambda_q = parse_double(parts[2]);
    return ref;
  }
  if (head == "categorical" && parts.size() == 5) {
    ref.kind = TestbedRef::Kind::categorical;
    ref.positions = static_cast<int>(parse_u64(parts[1]));
    ref.symbols = static_cast<int>(parse_u64(parts[2]));
    ref.seed = parse_u64(parts[3]);
    ref.law = parse_weight_law(parts[4]);
    return ref;
  }
  if (head == "constraint" && parts.size() >= 2) {
    ref.kind = TestbedRef::Kind::constraint_file;
    ref.path = name.substr(head.size() + 1);
    return ref;
  }
  throw std::invalid_argument("unresolvable testbed name: " + name);
}

// ---------------------------------------------------------------------------
// Constraint spec files
// ---------------------------------------------------------------------------

struct ConstraintFeatureSpec {
  std::string name;
  std::string kind;  // "pos:<i>:<sym>" or "contains:<sym>"
  double lambda = 0.0;
};

struct ConstraintSpec {
  int positions = 2;
  int symbols = 2;
  std::uint64_t seed = 0;
  WeightLaw law = WeightLaw::uniform_dirichlet;
  ConstraintMode mode = ConstraintMode::pointwise;
  std::vector<ConstraintFeatureSpec> features;
};

/// Builds the feature predicate for a declarative kind over a space's digit
/// representation. The space geometry is captured by value, so the predicate
/// does not depend on the space object's lifetime.
inline std::function<double(const std::int32_t&)> make_feature_fn(
    const CategoricalSpace& space, const std::string& kind) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= kind.size(); ++i) {
    if (i == kind.size() || kind[i] == ':') {
      parts.push_back(kind.substr(start, i - start));
      start = i + 1;
    }
  }
  const int k = space.positions();
  const int v = space.symbols();
  auto digit_at = [k, v](std::int32_t x, int pos) {
    std::int32_t stride = 1;
    for (int i = pos + 1; i < k; ++i) stride *= v;
    return (x / stride) % v;
  };
  if (parts.size() == 3 && parts[0] == "pos") {
    const int pos = static_cast<int>(parse_u64(parts[1]));
    const auto sym = static_cast<std::int32_t>(parse_u64(parts[2]));
    if (pos < 0 || pos >= k)
      throw std::invalid_argument("feature position out of range: " + kind);
    return [digit_at, pos, sym](const std::int32_t& x) {
      return digit_at(x, pos) == sym ? 1.0 : 0.0;
    };
  }
  if (parts.size() == 2 && parts[0] == "contains") {
    const auto sym = static_cast<std::int32_t>(parse_u64(parts[1]));
    return [digit_at, k, sym](const std::int32_t& x) {
      for (int i = 0; i < k; ++i)
        if (digit_at(x, i) == sym) return 1.0;
      return 0.0;
    };
  }
  throw std::invalid_argument("unknown feature kind: " + kind);
}

inline ConstraintSpec parse_constraint_spec(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("constraint spec is not valid JSON: ") + e.what(), {});
  }
  if (!doc.is_object()) throw ConfigError("constraint spec must be a JSON object", {});
  detail::reject_unknown_keys(doc, "", {"schema_version", "space", "mode", "features"});
  if (detail::decimal_field(doc, "", "schema_version") != "1")
    throw ConfigError("unsupported schema_version", {"schema_version"});

  ConstraintSpec spec;
  if (!doc.contains("space") || !doc["space"].is_object())
    throw ConfigError("missing config key", {"space"});
  const json& sp = doc["space"];
  detail::reject_unknown_keys(sp, "space", {"positions", "symbols", "seed", "law"});
  spec.positions = static_cast<int>(parse_u64(detail::decimal_field(sp, "space", "positions")));
  spec.symbols = static_cast<int>(parse_u64(detail::decimal_field(sp, "space", "symbols")));
  spec.seed = parse_u64(detail::decimal_field(sp, "space", "seed", "0"));
  spec.law = parse_weight_law(detail::string_field(sp, "space", "law", "uniform-dirichlet"));

  const std::string mode = detail::string_field(doc, "", "mode");
  if (mode == "pointwise")
    spec.mode = ConstraintMode::pointwise;
  else if (mode == "exponential")
    spec.mode = ConstraintMode::exponential;
  else
    throw ConfigError("mode must be 'pointwise' or 'exponential'", {"mode"});

  if (!doc.contains("features") || !doc["features"].is_array())
    throw ConfigError("missing config key", {"features"});
  for (std::size_t i = 0; i < doc["features"].size(); ++i) {
    const json& f = doc["features"][i];
    const std::string section = "features[" + std::to_string(i) + "]";
    if (!f.is_object()) throw ConfigError("feature entries must be objects", {section});
    detail::reject_unknown_keys(f, section, {"name", "kind", "lambda"});
    ConstraintFeatureSpec fs;
    fs.name = detail::string_field(f, section, "name");
    fs.kind = detail::string_field(f, section, "kind");
    if (spec.mode == ConstraintMode::exponential)
      fs.lambda = parse_double(detail::decimal_field(f, section, "lambda"));
    else if (f.contains("lambda"))
      throw ConfigError("pointwise features take no lambda", {section + ".lambda"});
    spec.features.push_back(std::move(fs));
  }
  if (spec.features.empty()) throw ConfigError("need at least one feature", {"features"});
  return spec;
}

// ---------------------------------------------------------------------------
// Run configs (the `sweep` subcommand)
// ---------------------------------------------------------------------------

struct RunConfig {
  TestbedRef target;
  std::string proposal_source = "paired";  // "paired" | "projected"
  std::vector<double> beta_grid;
  std::size_t n_draws = 0;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::string output_path;    // empty: stdout
  std::string output_format = "csv";
};

inline std::vector<double> build_grid(double lo, double hi, std::size_t points,
                                      const std::string& scale) {
  if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError("bad beta range", {"sweep.beta_min"});
  if (points < 1) throw ConfigError("bad grid size", {"sweep.grid_points"});
  std::vector<double> grid;
  if (points == 1) return {lo};
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(scale == "log" ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))
                                  : lo + t * (hi - lo));
  }
  return grid;
}

inline RunConfig parse_run_config(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), {});
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object", {});
  detail::reject_unknown_keys(doc, "",
                              {"schema_version", "target", "proposal", "sweep", "output"});
  if (detail::decimal_field(doc, "", "schema_version") != "1")
    throw ConfigError("unsupported schema_version", {"schema_version"});

  RunConfig cfg;
  if (!doc.contains("target") || !doc["target"].is_object())
    throw ConfigError("missing config key", {"target"});
  detail::reject_unknown_keys(doc["target"], "target", {"testbed"});
  cfg.target = parse_testbed_name(detail::string_field(doc["target"], "target", "testbed"));

  if (doc.contains("proposal")) {
    detail::reject_unknown_keys(doc["proposal"], "proposal", {"testbed"});
    cfg.proposal_source = detail::string_field(doc["proposal"], "proposal", "testbed", "paired");
    if (cfg.proposal_source != "paired" && cfg.proposal_source != "projected")
      throw ConfigError("proposal.testbed must be 'paired' or 'projected'",
                        {"proposal.testbed"});
  }

  if (!doc.contains("sweep") || !doc["sweep"].is_object())
    throw ConfigError("missing config key", {"sweep"});
  const json& sw = doc["sweep"];
  detail::reject_unknown_keys(sw, "sweep",
                              {"beta_min", "beta_max", "grid_points", "grid_scale", "n_draws",
                               "replicates", "seed"});
  const double lo = parse_double(detail::decimal_field(sw, "sweep", "beta_min"));
  const double hi = parse_double(detail::decimal_field(sw, "sweep", "beta_max"));
  const auto points = parse_u64(detail::decimal_field(sw, "sweep", "grid_points"));
  const std::string scale = detail::string_field(sw, "sweep", "grid_scale", "log");
  if (scale != "log" && scale != "linear")
    throw ConfigError("grid_scale must be 'log' or 'linear'", {"sweep.grid_scale"});
  cfg.beta_grid = build_grid(lo, hi, points, scale);
  cfg.n_draws = parse_u64(detail::decimal_field(sw, "sweep", "n_draws"));
  cfg.replicates = parse_u64(detail::decimal_field(sw, "sweep", "replicates", "1"));
  cfg.seed = parse_u64(detail::decimal_field(sw, "sweep", "seed", "0"));

  if (doc.contains("output")) {
    detail::reject_unknown_keys(doc["output"], "output", {"path", "format"});
    cfg.output_path = detail::string_field(doc["output"], "output", "path", "");
    cfg.output_format = detail::string_field(doc["output"], "output", "format", "csv");
    if (cfg.output_format != "csv" && cfg.output_format != "json")
      throw ConfigError("output.format must be 'csv' or 'json'", {"output.format"});
  }
  return cfg;
}

}  // namespace qrs::io
