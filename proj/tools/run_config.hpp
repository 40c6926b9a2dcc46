#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "oudrift/error.hpp"
#include "oudrift/estimators.hpp"
#include "oudrift/harness.hpp"
#include "oudrift/ou_core.hpp"

namespace ou_bench {

using oudrift::ConfigError;

struct VerifyConfig {
  std::int64_t oracle_n = 256;
  double oracle_delta = 0.1;
  double coupling_delta = 0.05;
  std::vector<std::int64_t> coupling_ns{256, 1024, 4096};
  double gate_sigmas = 4.0;
};

struct SimulateConfig {
  oudrift::Variant variant = oudrift::Variant::FromZero;
  bool coupled = false;
  std::int64_t paths = 1;
};

struct RunConfig {
  double theta_true = 1.0;
  std::set<oudrift::Estimator> estimators{oudrift::Estimator::AMCE, oudrift::Estimator::AMLE};
  std::optional<std::string> preset;
  std::optional<oudrift::harness::Schedule> schedule;
  std::int64_t replications = 10000;
  std::uint64_t master_seed = 20240917;
  oudrift::IndexConvention index_convention = oudrift::IndexConvention::Body;
  std::string output_dir = "ou_bench_out";
  std::set<std::string> emit{"cells_csv", "rates_csv", "report_md", "plotdata_csv"};
  oudrift::harness::Cell cell{1000, 0.05};
  SimulateConfig simulate;
  VerifyConfig verify;

  bool emits(const std::string& what) const { return emit.count(what) > 0; }
};

inline const std::set<std::string>& known_emits() {
  static const std::set<std::string> k{"cells_csv", "rates_csv", "report_md", "plotdata_csv"};
  return k;
}

namespace detail {

inline std::string where(const YAML::Node& node, const std::string& field) {
  const auto mark = node.Mark();
  if (mark.is_null()) return "field '" + field + "'";
  return "line " + std::to_string(mark.line + 1) + ", field '" + field + "'";
}

template <class T>
T scalar(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) throw ConfigError(where(node, field) + ": expected a scalar value");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(node, field) + ": cannot parse '" + node.Scalar() + "'");
  }
}

inline void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& prefix) {
  if (!map.IsMap()) throw ConfigError(where(map, prefix) + ": expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(where(kv.first, prefix + key) + ": unknown key");
  }
}

} // namespace detail

inline oudrift::Estimator parse_estimator_name(const std::string& s, const std::string& field) {
  if (s == "amce") return oudrift::Estimator::AMCE;
  if (s == "amle") return oudrift::Estimator::AMLE;
  throw ConfigError("field '" + field + "': unknown estimator '" + s + "'");
}

inline std::set<oudrift::Estimator> parse_estimator_set(const std::string& s, const std::string& field) {
  if (s == "both") return {oudrift::Estimator::AMCE, oudrift::Estimator::AMLE};
  return {parse_estimator_name(s, field)};
}

inline oudrift::IndexConvention parse_convention(const std::string& s, const std::string& field) {
  if (s == "body") return oudrift::IndexConvention::Body;
  if (s == "abstract") return oudrift::IndexConvention::Abstract;
  throw ConfigError("field '" + field + "': expected body or abstract, got '" + s + "'");
}

inline oudrift::Variant parse_variant(const std::string& s, const std::string& field) {
  if (s == "from_zero") return oudrift::Variant::FromZero;
  if (s == "stationary") return oudrift::Variant::Stationary;
  throw ConfigError("field '" + field + "': expected from_zero or stationary, got '" + s + "'");
}

inline oudrift::harness::Schedule schedule_from_preset(const std::string& name, const std::string& field) {
  if (auto s = oudrift::harness::preset(name)) return *s;
  throw ConfigError("field '" + field + "': unknown preset '" + name + "'");
}

// Reads the YAML document at `path` on top of the defaults.
inline RunConfig load_config(const std::string& path) {
  using detail::scalar;
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file " + path);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  detail::check_keys(root,
                     {"theta", "estimator", "schedule", "replications", "seed", "index_convention", "output_dir",
                      "emit", "cell", "simulate", "verify"},
                     "");

  if (auto n = root["theta"]) cfg.theta_true = scalar<double>(n, "theta");
  if (auto n = root["estimator"]) cfg.estimators = parse_estimator_set(scalar<std::string>(n, "estimator"), "estimator");
  if (auto n = root["replications"]) cfg.replications = scalar<std::int64_t>(n, "replications");
  if (auto n = root["seed"]) cfg.master_seed = scalar<std::uint64_t>(n, "seed");
  if (auto n = root["index_convention"])
    cfg.index_convention = parse_convention(scalar<std::string>(n, "index_convention"), "index_convention");
  if (auto n = root["output_dir"]) cfg.output_dir = scalar<std::string>(n, "output_dir");
  if (auto n = root["emit"]) {
    if (!n.IsSequence()) throw ConfigError(detail::where(n, "emit") + ": expected a list");
    cfg.emit.clear();
    for (const auto& item : n) {
      const auto v = scalar<std::string>(item, "emit");
      if (!known_emits().count(v)) throw ConfigError(detail::where(item, "emit") + ": unknown output '" + v + "'");
      cfg.emit.insert(v);
    }
  }
  if (auto s = root["schedule"]) {
    detail::check_keys(s, {"preset", "name", "cells"}, "schedule.");
    if (s["preset"] && s["cells"])
      throw ConfigError(detail::where(s, "schedule") + ": give either preset or cells, not both");
    if (auto p = s["preset"]) {
      cfg.preset = scalar<std::string>(p, "schedule.preset");
      cfg.schedule = schedule_from_preset(*cfg.preset, "schedule.preset");
    } else if (auto cells = s["cells"]) {
      if (!cells.IsSequence()) throw ConfigError(detail::where(cells, "schedule.cells") + ": expected a list");
      std::vector<oudrift::harness::Cell> list;
      for (const auto& c : cells) {
        detail::check_keys(c, {"n", "delta"}, "schedule.cells.");
        if (!c["n"] || !c["delta"]) throw ConfigError(detail::where(c, "schedule.cells") + ": need n and delta");
        list.push_back({scalar<std::int64_t>(c["n"], "schedule.cells.n"),
                        scalar<double>(c["delta"], "schedule.cells.delta")});
      }
      const auto name = s["name"] ? scalar<std::string>(s["name"], "schedule.name") : std::string("custom");
      try {
        cfg.schedule = oudrift::harness::Schedule(name, std::move(list));
      } catch (const oudrift::ScheduleError& e) {
        throw ConfigError(detail::where(cells, "schedule.cells") + ": " + e.what());
      }
    }
  }
  if (auto c = root["cell"]) {
    detail::check_keys(c, {"n", "delta"}, "cell.");
    if (auto n = c["n"]) cfg.cell.n = scalar<std::int64_t>(n, "cell.n");
    if (auto d = c["delta"]) cfg.cell.delta = scalar<double>(d, "cell.delta");
  }
  if (auto s = root["simulate"]) {
    detail::check_keys(s, {"variant", "coupled", "paths"}, "simulate.");
    if (auto v = s["variant"]) cfg.simulate.variant = parse_variant(scalar<std::string>(v, "simulate.variant"), "simulate.variant");
    if (auto v = s["coupled"]) cfg.simulate.coupled = scalar<bool>(v, "simulate.coupled");
    if (auto v = s["paths"]) cfg.simulate.paths = scalar<std::int64_t>(v, "simulate.paths");
  }
  if (auto v = root["verify"]) {
    detail::check_keys(v, {"oracle_n", "oracle_delta", "coupling_delta", "coupling_ns", "gate_sigmas"}, "verify.");
    if (auto x = v["oracle_n"]) cfg.verify.oracle_n = scalar<std::int64_t>(x, "verify.oracle_n");
    if (auto x = v["oracle_delta"]) cfg.verify.oracle_delta = scalar<double>(x, "verify.oracle_delta");
    if (auto x = v["coupling_delta"]) cfg.verify.coupling_delta = scalar<double>(x, "verify.coupling_delta");
    if (auto x = v["gate_sigmas"]) cfg.verify.gate_sigmas = scalar<double>(x, "verify.gate_sigmas");
    if (auto x = v["coupling_ns"]) {
      if (!x.IsSequence()) throw ConfigError(detail::where(x, "verify.coupling_ns") + ": expected a list");
      cfg.verify.coupling_ns.clear();
      for (const auto& item : x) cfg.verify.coupling_ns.push_back(scalar<std::int64_t>(item, "verify.coupling_ns"));
    }
  }
  return cfg;
}

// Field-level checks run before any simulation.
inline void validate(const RunConfig& c) {
  if (!(std::isfinite(c.theta_true) && c.theta_true > 0.0))
    throw ConfigError("field 'theta': must be a finite positive number");
  if (c.replications < 2) throw ConfigError("field 'replications': must be >= 2");
  if (c.estimators.empty()) throw ConfigError("field 'estimator': no estimator selected");
  if (c.cell.n < 1) throw ConfigError("field 'cell.n': must be >= 1");
  if (!(std::isfinite(c.cell.delta) && c.cell.delta > 0.0)) throw ConfigError("field 'cell.delta': must be > 0");
  if (c.simulate.paths < 1) throw ConfigError("field 'simulate.paths': must be >= 1");
  if (c.output_dir.empty()) throw ConfigError("field 'output_dir': must not be empty");
  if (c.verify.oracle_n < 2) throw ConfigError("field 'verify.oracle_n': must be >= 2");
  if (c.verify.oracle_n > oudrift::oracles::kChaosMatrixCap)
    throw ConfigError("field 'verify.oracle_n': must be <= " + std::to_string(oudrift::oracles::kChaosMatrixCap));
  if (!(c.verify.oracle_delta > 0.0)) throw ConfigError("field 'verify.oracle_delta': must be > 0");
  if (!(c.verify.coupling_delta > 0.0)) throw ConfigError("field 'verify.coupling_delta': must be > 0");
  if (c.verify.coupling_ns.empty()) throw ConfigError("field 'verify.coupling_ns': must not be empty");
  for (auto n : c.verify.coupling_ns)
    if (n < 2) throw ConfigError("field 'verify.coupling_ns': every n must be >= 2");
  if (!(c.verify.gate_sigmas > 0.0)) throw ConfigError("field 'verify.gate_sigmas': must be > 0");
}

} // namespace ou_bench
