#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "counterfactual.hpp"
#include "error.hpp"
#include "json.hpp"
#include "policies.hpp"
#include "sim.hpp"

namespace banditlab {

/// Run configuration: one JSON document with the sections data, synth,
/// oracle, policies, run and tune. Every section is optional; unknown keys
/// anywhere are errors.
struct RunConfig {
  static constexpr int kSpecVersion = 1;

  struct Data {
    std::string input;   // CSV path
    std::string schema;  // schema JSON path; empty = case-study schema
  };

  struct Synth {
    std::size_t max_modes = 5;
    double smoothing = 0.5;
    std::string artifact;              // sampler JSON read by validate-synth and run
    std::optional<std::size_t> rows;   // synthetic rows for validation; default = real row count
    std::size_t n_trees = 100;
    std::size_t max_depth = 6;
    double split = 0.7;
  };

  struct Oracle {
    BaseLearnerConfig base;
    bool iptw = true;
    double e_min = 0.01;
    double propensity_lambda = 1e-3;
    std::size_t propensity_max_iter = 2000;
    std::string artifact;  // T-learner JSON read by run and tune
  };

  struct PolicyEntry {
    std::string name;
    PolicyConfig config;
  };

  struct Run {
    std::string environment = "analytic";  // analytic | sampler | replay
    SurfaceKind surface = SurfaceKind::Bumps;
    RewardMode reward = RewardMode::Bernoulli;
    double noise_sigma = 0.1;
    std::size_t rounds = 1000;
    std::size_t seeds = 10;
    std::optional<std::uint64_t> seed;
    std::size_t window = 100;
    std::size_t final_window = 500;
    std::size_t prior_rows = 0;  // > 0 warm-starts every policy from a logged prior
  };

  struct Tune {
    std::string algorithm;
    std::optional<GridSpec> grid;  // default grid of the algorithm when absent
  };

  Data data;
  Synth synth;
  Oracle oracle;
  std::vector<PolicyEntry> policies;
  Run run;
  Tune tune;
  nlohmann::ordered_json document;  // as given

  GridSpec grid() const {
    if (tune.grid) return *tune.grid;
    if (tune.algorithm == "kernelucb") return GridSpec::kernelucb_default();
    if (tune.algorithm == "neural") return GridSpec::neural_default();
    throw Error(ErrorCode::UnknownAlgorithm, "tune.algorithm must be kernelucb or neural, got '" + tune.algorithm + "'");
  }
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline void check_keys(const ojson& obj, const std::string& where, const std::set<std::string>& allowed) {
  require(obj.is_object(), ErrorCode::InvalidSchema, where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw Error(ErrorCode::UnknownParameter, "unknown key '" + key + "' in " + where);
}

template <class T>
void read_key(const ojson& obj, const std::string& key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidSchema, where + "." + key + " has the wrong type");
  }
}

template <class T>
void read_key(const ojson& obj, const std::string& key, const std::string& where, std::optional<T>& out) {
  if (!obj.contains(key)) return;
  T v{};
  read_key(obj, key, where, v);
  out = v;
}

inline nlohmann::json plain(const ojson& j) { return nlohmann::json::parse(j.dump()); }

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::ordered_json& doc) {
  using detail::read_key;
  detail::check_keys(doc, "config", {"spec_version", "data", "synth", "oracle", "policies", "run", "tune"});
  require(doc.contains("spec_version"), ErrorCode::InvalidSchema, "config needs \"spec_version\": 1");
  int version = 0;
  read_key(doc, "spec_version", "config", version);
  require(version == RunConfig::kSpecVersion, ErrorCode::InvalidSchema,
          "unsupported spec_version " + std::to_string(version));
  RunConfig c;
  c.document = doc;

  if (doc.contains("data")) {
    const auto& s = doc["data"];
    detail::check_keys(s, "data", {"input", "schema"});
    read_key(s, "input", "data", c.data.input);
    read_key(s, "schema", "data", c.data.schema);
  }
  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    detail::check_keys(s, "synth", {"max_modes", "smoothing", "artifact", "rows", "n_trees", "max_depth", "split"});
    read_key(s, "max_modes", "synth", c.synth.max_modes);
    read_key(s, "smoothing", "synth", c.synth.smoothing);
    read_key(s, "artifact", "synth", c.synth.artifact);
    read_key(s, "rows", "synth", c.synth.rows);
    read_key(s, "n_trees", "synth", c.synth.n_trees);
    read_key(s, "max_depth", "synth", c.synth.max_depth);
    read_key(s, "split", "synth", c.synth.split);
    require(c.synth.max_modes >= 1, ErrorCode::InvalidArgument, "synth.max_modes must be >= 1");
    require(c.synth.split > 0.0 && c.synth.split < 1.0, ErrorCode::InvalidArgument, "synth.split must be in (0,1)");
  }
  if (doc.contains("oracle")) {
    const auto& s = doc["oracle"];
    detail::check_keys(s, "oracle",
                       {"base_learner", "iptw", "e_min", "propensity_lambda", "propensity_max_iter", "artifact"});
    if (s.contains("base_learner")) {
      require(s["base_learner"].is_object(), ErrorCode::InvalidSchema, "oracle.base_learner must be an object");
      c.oracle.base = detail::plain(s["base_learner"]).get<BaseLearnerConfig>();
    }
    read_key(s, "iptw", "oracle", c.oracle.iptw);
    read_key(s, "e_min", "oracle", c.oracle.e_min);
    read_key(s, "propensity_lambda", "oracle", c.oracle.propensity_lambda);
    read_key(s, "propensity_max_iter", "oracle", c.oracle.propensity_max_iter);
    read_key(s, "artifact", "oracle", c.oracle.artifact);
    require(c.oracle.e_min > 0.0 && c.oracle.e_min < 0.5, ErrorCode::InvalidArgument, "oracle.e_min must be in (0, 0.5)");
  }
  if (doc.contains("policies")) {
    const auto& s = doc["policies"];
    require(s.is_array(), ErrorCode::InvalidSchema, "policies must be an array");
    std::set<std::string> seen;
    for (const auto& p : s) {
      RunConfig::PolicyEntry e;
      if (p.is_string()) {
        e.name = p.get<std::string>();
        e.config = default_policy_config(e.name);
      } else {
        require(p.is_object() && p.contains("type"), ErrorCode::InvalidSchema,
                "each policy is a registry name or an object with a \"type\"");
        auto j = detail::plain(p);
        e.name = j.value("name", j.at("type").get<std::string>());
        j.erase("name");
        e.config = parse_policy_config(j);
      }
      require(seen.insert(e.name).second, ErrorCode::InvalidArgument, "duplicate policy name '" + e.name + "'");
      c.policies.push_back(std::move(e));
    }
  }
  if (doc.contains("run")) {
    const auto& s = doc["run"];
    detail::check_keys(s, "run",
                       {"environment", "surface", "reward", "noise_sigma", "rounds", "seeds", "seed", "window",
                        "final_window", "prior_rows"});
    read_key(s, "environment", "run", c.run.environment);
    std::string surface = std::string(to_string(c.run.surface)), reward = "bernoulli";
    read_key(s, "surface", "run", surface);
    read_key(s, "reward", "run", reward);
    c.run.surface = parse_surface(surface);
    c.run.reward = parse_reward_mode(reward);
    read_key(s, "noise_sigma", "run", c.run.noise_sigma);
    read_key(s, "rounds", "run", c.run.rounds);
    read_key(s, "seeds", "run", c.run.seeds);
    read_key(s, "seed", "run", c.run.seed);
    read_key(s, "window", "run", c.run.window);
    read_key(s, "final_window", "run", c.run.final_window);
    read_key(s, "prior_rows", "run", c.run.prior_rows);
    require(c.run.environment == "analytic" || c.run.environment == "sampler" || c.run.environment == "replay",
            ErrorCode::InvalidArgument, "run.environment must be analytic, sampler or replay");
    require(c.run.rounds >= 1 && c.run.seeds >= 1 && c.run.window >= 1 && c.run.final_window >= 1,
            ErrorCode::InvalidArgument, "run.rounds, seeds, window and final_window must be >= 1");
  }
  if (doc.contains("tune")) {
    const auto& s = doc["tune"];
    detail::check_keys(s, "tune", {"algorithm", "grid"});
    read_key(s, "algorithm", "tune", c.tune.algorithm);
    require(c.tune.algorithm == "kernelucb" || c.tune.algorithm == "neural", ErrorCode::UnknownAlgorithm,
            "tune.algorithm must be kernelucb or neural");
    if (s.contains("grid")) {
      // an object keeps its key order: parameters expand in the order written
      require(s["grid"].is_object(), ErrorCode::InvalidSchema, "tune.grid must be an object of value lists");
      GridSpec g{c.tune.algorithm, {}};
      for (const auto& [key, values] : s["grid"].items()) {
        require(values.is_array(), ErrorCode::InvalidSchema, "tune.grid." + key + " must be a list");
        std::vector<nlohmann::json> vs;
        for (const auto& v : values) vs.push_back(detail::plain(v));
        g.parameters.emplace_back(key, std::move(vs));
      }
      expand_grid(g);  // validates names and values
      c.tune.grid = std::move(g);
    }
  }
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(doc);
}

/// Seed precedence: explicit flag, then run.seed, then BANDITLAB_SEED, then 0.
struct ResolvedSeed {
  std::uint64_t value = 0;
  std::string source = "default";
};

inline ResolvedSeed resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& config, const char* env_value) {
  if (flag) return {*flag, "flag"};
  if (config.run.seed) return {*config.run.seed, "config"};
  if (env_value && *env_value) {
    std::uint64_t v = 0;
    const std::string_view s(env_value);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::InvalidArgument,
            "BANDITLAB_SEED must be a non-negative integer");
    return {v, "environment"};
  }
  return {};
}

}  // namespace banditlab
