#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bandit.hpp"
#include "error.hpp"
#include "json.hpp"
#include "random.hpp"

namespace banditlab {

struct RandomConfig {};

struct EpsilonGreedyConfig {
  double epsilon = 0.2;
};

struct Ucb1Config {
  double c = 1.0;
};

struct LinUcbConfig {
  double alpha = 0.5;
  double lambda = 1.0;
};

struct KernelUcbConfig {
  double beta = 0.5;
  KernelKind kernel = KernelKind::Rbf;
  double gamma = 0.5;
  int degree = 2;
  double lambda = 0.1;
  std::size_t max_samples = 500;
};

struct NeuralConfig {
  std::vector<std::size_t> trunk_widths{32, 16};
  std::vector<std::size_t> head_widths{8};
  double dropout = 0.1;
  double alpha = 0.5;
  std::size_t mc_samples = 20;
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  double learning_rate = 0.1;
  double weight_decay = 1e-5;
  std::size_t buffer_capacity = 2000;
  std::size_t pretrain_epochs = 30;
  std::size_t explore_rounds = 500;
};

using PolicyConfig =
    std::variant<RandomConfig, EpsilonGreedyConfig, Ucb1Config, LinUcbConfig, KernelUcbConfig, NeuralConfig>;

/// Registry names, in registry order.
inline const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names{"random", "eps_greedy", "ucb1", "linucb", "kernelucb", "neural"};
  return names;
}

inline std::string registry_listing() {
  std::string s;
  for (const auto& n : policy_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

inline std::string policy_type(const PolicyConfig& c) { return policy_names()[c.index()]; }

inline PolicyConfig default_policy_config(const std::string& type) {
  if (type == "random") return RandomConfig{};
  if (type == "eps_greedy") return EpsilonGreedyConfig{};
  if (type == "ucb1") return Ucb1Config{};
  if (type == "linucb") return LinUcbConfig{};
  if (type == "kernelucb") return KernelUcbConfig{};
  if (type == "neural") return NeuralConfig{};
  throw Error(ErrorCode::UnknownAlgorithm, "policy '" + type + "'; known: " + registry_listing());
}

inline nlohmann::json policy_config_json(const PolicyConfig& config) {
  nlohmann::json j{{"type", policy_type(config)}};
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, EpsilonGreedyConfig>) {
          j["epsilon"] = c.epsilon;
        } else if constexpr (std::is_same_v<T, Ucb1Config>) {
          j["c"] = c.c;
        } else if constexpr (std::is_same_v<T, LinUcbConfig>) {
          j["alpha"] = c.alpha;
          j["lambda"] = c.lambda;
        } else if constexpr (std::is_same_v<T, KernelUcbConfig>) {
          j["alpha"] = c.beta;
          j["kernel"] = std::string(to_string(c.kernel));
          if (c.kernel == KernelKind::Rbf) j["gamma"] = c.gamma;
          if (c.kernel == KernelKind::Polynomial) j["degree"] = c.degree;
          j["lambda"] = c.lambda;
          j["max_samples"] = c.max_samples;
        } else if constexpr (std::is_same_v<T, NeuralConfig>) {
          j["trunk_widths"] = c.trunk_widths;
          j["head_widths"] = c.head_widths;
          j["dropout"] = c.dropout;
          j["alpha"] = c.alpha;
          j["mc_samples"] = c.mc_samples;
          j["batch_size"] = c.batch_size;
          j["epochs"] = c.epochs;
          j["learning_rate"] = c.learning_rate;
          j["weight_decay"] = c.weight_decay;
          j["buffer_capacity"] = c.buffer_capacity;
          j["pretrain_epochs"] = c.pretrain_epochs;
          j["explore_rounds"] = c.explore_rounds;
        }
      },
      config);
  return j;
}

/// Applies one named parameter to a config; unknown names are rejected.
inline void set_policy_parameter(PolicyConfig& config, const std::string& key, const nlohmann::json& value) {
  const auto unknown = [&] {
    throw Error(ErrorCode::UnknownParameter, "'" + key + "' for policy '" + policy_type(config) + "'");
  };
  std::visit(
      [&](auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, RandomConfig>) {
          unknown();
        } else if constexpr (std::is_same_v<T, EpsilonGreedyConfig>) {
          if (key == "epsilon") c.epsilon = value.get<double>();
          else unknown();
        } else if constexpr (std::is_same_v<T, Ucb1Config>) {
          if (key == "c") c.c = value.get<double>();
          else unknown();
        } else if constexpr (std::is_same_v<T, LinUcbConfig>) {
          if (key == "alpha") c.alpha = value.get<double>();
          else if (key == "lambda") c.lambda = value.get<double>();
          else unknown();
        } else if constexpr (std::is_same_v<T, KernelUcbConfig>) {
          if (key == "alpha" || key == "beta") c.beta = value.get<double>();
          else if (key == "kernel") c.kernel = parse_kernel(value.get<std::string>());
          else if (key == "gamma") c.gamma = value.get<double>();
          else if (key == "degree") c.degree = value.get<int>();
          else if (key == "lambda") c.lambda = value.get<double>();
          else if (key == "max_samples") c.max_samples = value.get<std::size_t>();
          else unknown();
        } else if constexpr (std::is_same_v<T, NeuralConfig>) {
          if (key == "trunk_widths") c.trunk_widths = value.get<std::vector<std::size_t>>();
          else if (key == "hidden_size") {
            const auto h = value.get<std::size_t>();
            c.trunk_widths = {h, std::max<std::size_t>(1, h / 2)};
          } else if (key == "head_widths") c.head_widths = value.get<std::vector<std::size_t>>();
          else if (key == "dropout") c.dropout = value.get<double>();
          else if (key == "alpha" || key == "beta") c.alpha = value.get<double>();
          else if (key == "mc_samples") c.mc_samples = value.get<std::size_t>();
          else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
          else if (key == "epochs") c.epochs = value.get<std::size_t>();
          else if (key == "learning_rate") c.learning_rate = value.get<double>();
          else if (key == "weight_decay") c.weight_decay = value.get<double>();
          else if (key == "buffer_capacity") c.buffer_capacity = value.get<std::size_t>();
          else if (key == "pretrain_epochs") c.pretrain_epochs = value.get<std::size_t>();
          else if (key == "explore_rounds") c.explore_rounds = value.get<std::size_t>();
          else unknown();
        }
      },
      config);
}

inline PolicyConfig parse_policy_config(const nlohmann::json& j) {
  require(j.is_object() && j.contains("type"), ErrorCode::InvalidArgument, "policy config needs a 'type'");
  PolicyConfig config = default_policy_config(j.at("type").get<std::string>());
  for (const auto& [key, value] : j.items())
    if (key != "type") set_policy_parameter(config, key, value);
  return config;
}

/// Short stable identifier of a config (FNV-1a of its canonical JSON).
inline std::string config_hash(const PolicyConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(policy_config_json(config).dump())));
  return buf;
}

/// Constructs a cold policy, then warm-starts it when a prior is given.
inline Policy make_policy(const std::string& name, const PolicyConfig& config, std::size_t arms, std::size_t dim,
                          std::uint64_t seed, const PriorDataset* prior = nullptr) {
  const bool warm = prior && !prior->empty();
  return std::visit(
      [&](const auto& c) -> Policy {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, RandomConfig>) {
          return Policy(name, SimplePolicyState(SimpleVariant::Random, arms, dim));
        } else if constexpr (std::is_same_v<T, EpsilonGreedyConfig>) {
          return Policy(name, SimplePolicyState(SimpleVariant::EpsilonGreedy, arms, dim, c.epsilon));
        } else if constexpr (std::is_same_v<T, Ucb1Config>) {
          return Policy(name, SimplePolicyState(SimpleVariant::Ucb1, arms, dim, c.c));
        } else if constexpr (std::is_same_v<T, LinUcbConfig>) {
          LinUcbState s(arms, dim, c.lambda, c.alpha);
          return Policy(name, warm ? warm_start_linucb(std::move(s), *prior) : std::move(s));
        } else if constexpr (std::is_same_v<T, KernelUcbConfig>) {
          KernelUcbState s(arms, dim, KernelParams{c.kernel, c.gamma, c.degree}, c.beta, c.lambda, c.max_samples);
          return Policy(name, warm ? warm_start_kernelucb(std::move(s), *prior) : std::move(s));
        } else {
          require(c.mc_samples >= 2 && c.batch_size >= 1 && c.buffer_capacity >= 1, ErrorCode::InvalidArgument,
                  "neural policy needs mc_samples >= 2, batch_size >= 1, buffer_capacity >= 1");
          NeuralBanditState s;
          s.net = Mlp::init(MlpSpec{dim, c.trunk_widths, c.head_widths, arms, c.dropout}, derive_seed(seed, "neural-init"));
          s.capacity = c.buffer_capacity;
          s.alpha = c.alpha;
          s.mc_samples = c.mc_samples;
          s.train_every = c.batch_size;
          s.epochs = c.epochs;
          s.learning_rate = c.learning_rate;
          s.weight_decay = c.weight_decay;
          s.seed = derive_seed(seed, "neural-policy");
          s.explore_rounds = warm ? 0 : c.explore_rounds;
          if (warm) {
            TrainConfig cfg;
            cfg.learning_rate = c.learning_rate;
            cfg.batch_size = c.batch_size;
            cfg.epochs = std::max<std::size_t>(1, c.pretrain_epochs);
            cfg.weight_decay = c.weight_decay;
            cfg.seed = derive_seed(seed, "neural-pretrain");
            s = pretrain_neural(std::move(s), *prior, cfg);
          }
          return Policy(name, std::move(s));
        }
      },
      config);
}

// ---------------------------------------------------------------------------
// State snapshots

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : Eigen::Index{0};
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = json_vec(j.at(static_cast<std::size_t>(r))).transpose();
  return m;
}

}  // namespace detail

/// Versioned JSON snapshot of a policy's learned state.
inline nlohmann::json policy_snapshot(const Policy& p) {
  nlohmann::json j{{"format", "banditlab.policy_state"}, {"version", 1}, {"name", p.name()}};
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SimplePolicyState>) {
          static const char* kinds[] = {"random", "eps_greedy", "ucb1"};
          j["kind"] = kinds[static_cast<int>(s.variant)];
          j["epsilon"] = s.epsilon;
          j["c"] = s.c;
          j["dimension"] = s.dimension;
          j["counts"] = s.counts;
          j["means"] = s.means;
        } else if constexpr (std::is_same_v<T, LinUcbState>) {
          j["kind"] = "linucb";
          j["alpha"] = s.alpha;
          j["lambda"] = s.lambda;
          nlohmann::json arms = nlohmann::json::array();
          for (std::size_t a = 0; a < s.arm_count(); ++a)
            arms.push_back({{"A", detail::matrix_json(s.A[a])}, {"b", detail::vec_json(s.b[a])}});
          j["arms"] = arms;
        } else if constexpr (std::is_same_v<T, KernelUcbState>) {
          j["kind"] = "kernelucb";
          j["kernel"] = std::string(to_string(s.kernel.kind));
          j["gamma"] = s.kernel.gamma;
          j["degree"] = s.kernel.degree;
          j["beta"] = s.beta;
          j["lambda"] = s.lambda;
          j["max_samples"] = s.max_samples;
          j["dimension"] = s.dim;
          nlohmann::json arms = nlohmann::json::array();
          for (const auto& arm : s.arms) {
            nlohmann::json xs = nlohmann::json::array();
            for (const auto& x : arm.x) xs.push_back(detail::vec_json(x));
            arms.push_back({{"x", xs}, {"y", arm.y}});
          }
          j["arms"] = arms;
        } else {
          j["kind"] = "neural";
          j["net"] = s.net;
          j["alpha"] = s.alpha;
          j["mc_samples"] = s.mc_samples;
          j["train_every"] = s.train_every;
          j["epochs"] = s.epochs;
          j["learning_rate"] = s.learning_rate;
          j["weight_decay"] = s.weight_decay;
          j["capacity"] = s.capacity;
          j["seed"] = s.seed;
          j["explore_rounds"] = s.explore_rounds;
          nlohmann::json buf = nlohmann::json::array();
          for (const auto& e : s.buffer) buf.push_back({{"x", detail::vec_json(e.x)}, {"arm", e.arm}, {"r", e.reward}});
          j["buffer"] = buf;
        }
      },
      p.state());
  return j;
}

inline Policy restore_policy(const nlohmann::json& j) {
  require(j.value("format", "") == "banditlab.policy_state" && j.at("version").get<int>() == 1,
          ErrorCode::FormatError, "not a policy snapshot");
  const auto kind = j.at("kind").get<std::string>();
  const auto name = j.at("name").get<std::string>();
  if (kind == "random" || kind == "eps_greedy" || kind == "ucb1") {
    SimplePolicyState s;
    s.variant = kind == "random" ? SimpleVariant::Random
                                 : (kind == "eps_greedy" ? SimpleVariant::EpsilonGreedy : SimpleVariant::Ucb1);
    s.epsilon = j.at("epsilon").get<double>();
    s.c = j.at("c").get<double>();
    s.dimension = j.at("dimension").get<std::size_t>();
    s.counts = j.at("counts").get<std::vector<std::size_t>>();
    s.means = j.at("means").get<std::vector<double>>();
    return Policy(name, s);
  }
  if (kind == "linucb") {
    const auto& arms = j.at("arms");
    const auto d = arms.at(0).at("b").size();
    LinUcbState s(arms.size(), d, j.at("lambda").get<double>(), j.at("alpha").get<double>());
    for (std::size_t a = 0; a < arms.size(); ++a) {
      s.A[a] = detail::json_matrix(arms[a].at("A"));
      s.b[a] = detail::json_vec(arms[a].at("b"));
      s.factor[a].compute(s.A[a]);
    }
    return Policy(name, std::move(s));
  }
  if (kind == "kernelucb") {
    const auto& arms = j.at("arms");
    KernelUcbState s(arms.size(), j.at("dimension").get<std::size_t>(),
                     KernelParams{parse_kernel(j.at("kernel").get<std::string>()), j.at("gamma").get<double>(),
                                  j.at("degree").get<int>()},
                     j.at("beta").get<double>(), j.at("lambda").get<double>(), j.at("max_samples").get<std::size_t>());
    for (std::size_t a = 0; a < arms.size(); ++a) {
      for (const auto& x : arms[a].at("x")) s.arms[a].x.push_back(detail::json_vec(x));
      s.arms[a].y = arms[a].at("y").get<std::vector<double>>();
      if (!s.arms[a].x.empty()) s.refactor(a);
    }
    return Policy(name, std::move(s));
  }
  if (kind == "neural") {
    NeuralBanditState s;
    s.net = j.at("net").get<Mlp>();
    s.alpha = j.at("alpha").get<double>();
    s.mc_samples = j.at("mc_samples").get<std::size_t>();
    s.train_every = j.at("train_every").get<std::size_t>();
    s.epochs = j.at("epochs").get<std::size_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.capacity = j.at("capacity").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.explore_rounds = j.at("explore_rounds").get<std::size_t>();
    for (const auto& e : j.at("buffer"))
      s.buffer.push_back(Experience{detail::json_vec(e.at("x")), e.at("arm").get<std::size_t>(), e.at("r").get<double>()});
    return Policy(name, std::move(s));
  }
  throw Error(ErrorCode::FormatError, "unknown policy kind '" + kind + "'");
}

}  // namespace banditlab
