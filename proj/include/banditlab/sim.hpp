#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bandit.hpp"
#include "counterfactual.hpp"
#include "error.hpp"
#include "policies.hpp"
#include "random.hpp"
#include "synth.hpp"
#include "vgm.hpp"

namespace banditlab {

// ---------------------------------------------------------------------------
// Analytic reward surfaces
//
// Contexts mimic an encoded patient row: three mode-normalized continuous
// scalars u in [-1,1]^3 followed by one binary one-hot block (c, 1-c).

enum class SurfaceKind { Linear, Bumps, Constant };

inline std::string_view to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::Linear: return "LINEAR";
    case SurfaceKind::Bumps: return "BUMPS";
    case SurfaceKind::Constant: return "CONSTANT";
  }
  return "?";
}

inline SurfaceKind parse_surface(const std::string& name) {
  if (name == "LINEAR" || name == "linear") return SurfaceKind::Linear;
  if (name == "BUMPS" || name == "bumps") return SurfaceKind::Bumps;
  if (name == "CONSTANT" || name == "constant") return SurfaceKind::Constant;
  throw Error(ErrorCode::UnknownParameter, "analytic surface '" + name + "' (known: LINEAR, BUMPS, CONSTANT)");
}

class AnalyticSurface {
 public:
  static constexpr std::size_t kArms = 5;
  static constexpr std::size_t kDim = 5;

  static constexpr double kSlab = 99.0;

  /// Gaussian bump; arms 3 and 4 use u2 only, arms 1 and 2 use (u0, u1) only.
  struct Bump {
    std::size_t arm;
    double u0, u1, u2;
    double height;
    double width;
  };

  explicit AnalyticSurface(SurfaceKind kind = SurfaceKind::Bumps) : kind_(kind) {}

  SurfaceKind kind() const { return kind_; }
  std::size_t arm_count() const { return kArms; }
  std::size_t dimension() const { return kDim; }

  ContextVector draw_context(Rng& rng) const {
    ContextVector x(static_cast<Eigen::Index>(kDim));
    for (int i = 0; i < 3; ++i) x[i] = 2.0 * uniform01(rng) - 1.0;
    const bool c = uniform01(rng) < 0.5;
    x[3] = c ? 1.0 : 0.0;
    x[4] = c ? 0.0 : 1.0;
    return x;
  }

  double mean(const ContextVector& x, std::size_t arm) const {
    require(arm < kArms, ErrorCode::UnknownArm, "surface arm");
    require(static_cast<std::size_t>(x.size()) == kDim, ErrorCode::DimensionMismatch, "surface context");
    switch (kind_) {
      case SurfaceKind::Linear: return std::clamp(linear_theta().row(static_cast<Eigen::Index>(arm)).dot(x), 0.0, 1.0);
      case SurfaceKind::Constant: return constant_means()[arm];
      case SurfaceKind::Bumps: {
        double v = bump_base()[arm];
        for (const auto& b : bumps()) {
          if (b.arm != arm) continue;
          double d2 = 0.0;
          if (b.arm == 3 || b.arm == 4) {
            d2 = (x[2] - b.u2) * (x[2] - b.u2);
          } else {
            d2 = (x[0] - b.u0) * (x[0] - b.u0) + (x[1] - b.u1) * (x[1] - b.u1);
            if (b.u2 != kSlab) d2 += (x[2] - b.u2) * (x[2] - b.u2);
          }
          v += b.height * std::exp(-d2 / (2.0 * b.width * b.width));
        }
        v += kBumpGroupShift * (x[3] - x[4]) * (arm % 2 == 0 ? 1.0 : -1.0);
        return std::clamp(v, 0.0, 1.0);
      }
    }
    return 0.0;
  }

  /// Rows are arms; columns match the context layout (u0, u1, u2, c, 1-c).
  static const Eigen::MatrixXd& linear_theta() {
    static const Eigen::MatrixXd theta = [] {
      Eigen::MatrixXd t(5, 5);
      t << 0.25, 0.10, 0.00, 0.45, 0.45,   //
          -0.25, 0.05, 0.10, 0.50, 0.40,   //
          0.05, 0.25, -0.10, 0.40, 0.50,   //
          0.00, -0.25, 0.20, 0.45, 0.45,   //
          -0.10, -0.05, -0.25, 0.50, 0.45;
      return t;
    }();
    return theta;
  }

  static const std::vector<double>& constant_means() {
    static const std::vector<double> m{0.10, 0.15, 0.35, 0.25, 0.15};  // uniform value 0.20
    return m;
  }

  /// Per-arm floor; arm 0 is the best arm on average but rarely the best locally.
  static const std::vector<double>& bump_base() {
    static const std::vector<double> b{0.50, 0.05, 0.05, 0.05, 0.05};
    return b;
  }
  static constexpr double kBumpGroupShift = 0.04;

  static const std::vector<Bump>& bumps() {
    // u2 = kSlab marks a bump that ignores u0 and u1 (a slab along u2).
    static const std::vector<Bump> b{
        {0, 0.0, 0.0, 0.0, 0.15, 0.6},                                         // central dome
        {1, 0.8, 0.8, kSlab, 0.9, 0.35}, {1, -0.8, -0.8, kSlab, 0.9, 0.35},  // diagonal pair
        {2, 0.8, -0.8, kSlab, 0.9, 0.35}, {2, -0.8, 0.8, kSlab, 0.9, 0.35},  // anti-diagonal pair
        {3, 0.0, 0.0, 0.0, 0.85, 0.2},                                         // middle slab
        {4, 0.0, 0.0, 1.0, 0.85, 0.2}, {4, 0.0, 0.0, -1.0, 0.85, 0.2},         // outer slabs
    };
    return b;
  }

 private:
  SurfaceKind kind_;
};

// ---------------------------------------------------------------------------
// Environment

enum class RewardMode { Bernoulli, GaussianNoise, Deterministic };

inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "bernoulli") return RewardMode::Bernoulli;
  if (s == "gaussian") return RewardMode::GaussianNoise;
  if (s == "deterministic") return RewardMode::Deterministic;
  throw Error(ErrorCode::UnknownParameter, "reward mode '" + s + "'");
}

struct SamplerSource {
  std::shared_ptr<const ConditionalSampler> sampler;
};

struct ReplaySource {
  std::shared_ptr<const Dataset> data;
  bool reshuffle = true;
};

struct AnalyticSource {};

using PatientSource = std::variant<SamplerSource, ReplaySource, AnalyticSource>;
using RewardOracle = std::variant<std::shared_ptr<const TLearnerOracle>, AnalyticSurface>;

/// Patient source plus noiseless reward oracle. Immutable; per-episode
/// mutable state lives in ContextStream.
class Environment {
 public:
  Environment(PatientSource source, RewardOracle oracle, RewardMode mode, std::uint64_t seed, double noise_sigma = 0.1)
      : source_(std::move(source)), oracle_(std::move(oracle)), mode_(mode), seed_(seed), sigma_(noise_sigma) {
    const bool analytic_oracle = std::holds_alternative<AnalyticSurface>(oracle_);
    const bool analytic_source = std::holds_alternative<AnalyticSource>(source_);
    require(analytic_oracle == analytic_source, ErrorCode::InvalidArgument,
            "analytic surfaces provide their own contexts; tabular sources need a T-learner oracle");
    if (!analytic_oracle) {
      const auto& o = *std::get<std::shared_ptr<const TLearnerOracle>>(oracle_);
      const Schema* schema = nullptr;
      if (const auto* s = std::get_if<SamplerSource>(&source_)) schema = &s->sampler->schema();
      if (const auto* r = std::get_if<ReplaySource>(&source_)) {
        require(!r->data->rows.empty(), ErrorCode::InvalidArgument, "replay source is empty");
        schema = &r->data->schema;
      }
      require(schema->arm.categories == o.arms(), ErrorCode::ArmSetMismatch, "source and oracle arm sets differ");
      require(schema->features == o.encoder().schema().features, ErrorCode::SchemaMismatch,
              "source and oracle feature schemas differ");
    }
  }

  static Environment analytic(SurfaceKind kind, RewardMode mode, std::uint64_t seed) {
    return Environment(AnalyticSource{}, AnalyticSurface(kind), mode, seed);
  }

  RewardMode reward_mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  double noise_sigma() const { return sigma_; }
  const PatientSource& source() const { return source_; }
  const RewardOracle& oracle() const { return oracle_; }

  std::size_t arm_count() const {
    if (const auto* s = std::get_if<AnalyticSurface>(&oracle_)) return s->arm_count();
    return std::get<std::shared_ptr<const TLearnerOracle>>(oracle_)->arm_count();
  }

  std::size_t dimension() const {
    if (const auto* s = std::get_if<AnalyticSurface>(&oracle_)) return s->dimension();
    return std::get<std::shared_ptr<const TLearnerOracle>>(oracle_)->encoder().dimension();
  }

  double mean(const ContextVector& x, std::size_t arm) const {
    if (const auto* s = std::get_if<AnalyticSurface>(&oracle_)) return s->mean(x, arm);
    return std::get<std::shared_ptr<const TLearnerOracle>>(oracle_)->predict(x, arm);
  }

  Eigen::VectorXd means(const ContextVector& x) const {
    Eigen::VectorXd m(static_cast<Eigen::Index>(arm_count()));
    for (std::size_t a = 0; a < arm_count(); ++a) m[static_cast<Eigen::Index>(a)] = mean(x, a);
    return m;
  }

  /// Realized reward for expected value mu, using the uniform u and normal z
  /// drawn for the round.
  double realize(double mu, double u, double z) const {
    switch (mode_) {
      case RewardMode::Bernoulli: return u < std::clamp(mu, 0.0, 1.0) ? 1.0 : 0.0;
      case RewardMode::GaussianNoise: return mu + sigma_ * z;
      case RewardMode::Deterministic: return mu;
    }
    return mu;
  }

  ContextVector encode(const Row& row) const {
    return std::get<std::shared_ptr<const TLearnerOracle>>(oracle_)->encoder().encode(row);
  }

 private:
  PatientSource source_;
  RewardOracle oracle_;
  RewardMode mode_;
  std::uint64_t seed_;
  double sigma_;
};

/// Per-episode context generator (owns the replay cursor and rng).
class ContextStream {
 public:
  ContextStream(const Environment& env, std::uint64_t episode_seed)
      : env_(&env), rng_(make_rng(env.seed(), "contexts", {episode_seed})) {}

  ContextVector next() {
    return std::visit(
        [&](const auto& src) -> ContextVector {
          using T = std::decay_t<decltype(src)>;
          if constexpr (std::is_same_v<T, AnalyticSource>) {
            return std::get<AnalyticSurface>(env_->oracle()).draw_context(rng_);
          } else if constexpr (std::is_same_v<T, SamplerSource>) {
            return env_->encode(src.sampler->draw(rng_));
          } else {
            const auto n = src.data->rows.size();
            if (cursor_ % n == 0) {
              if (order_.empty()) {
                order_.resize(n);
                std::iota(order_.begin(), order_.end(), std::size_t{0});
              }
              if (src.reshuffle)
                for (std::size_t i = n; i > 1; --i) std::swap(order_[i - 1], order_[uniform_index(rng_, i)]);
            }
            return env_->encode(src.data->rows[order_[cursor_++ % n]]);
          }
        },
        env_->source());
  }

 private:
  const Environment* env_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// (best arm, best expected reward); ties resolve to the lowest index.
inline std::pair<std::size_t, double> oracle_value(const Environment& env, const ContextVector& x) {
  const auto m = env.means(x);
  const auto best = detail::argmax_lowest(m);
  return {best, m[static_cast<Eigen::Index>(best)]};
}

/// Draws a prior of `n` (context, arm, reward) triples with arms chosen
/// uniformly, as a logging policy would.
inline PriorDataset make_prior(const Environment& env, std::size_t n, std::uint64_t seed) {
  ContextStream contexts(env, derive_seed(seed, "prior-contexts"));
  Rng rng = make_rng(seed, "prior");
  PriorDataset prior;
  prior.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = contexts.next();
    const auto arm = uniform_index(rng, env.arm_count());
    const double u = uniform01(rng), z = standard_normal(rng);
    const double r = env.realize(env.mean(x, arm), u, z);
    prior.push_back(Experience{std::move(x), arm, r});
  }
  return prior;
}

// ---------------------------------------------------------------------------
// Episodes

struct LearningCurve {
  std::string policy;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t window = 100;
  std::vector<double> reward;
  std::vector<double> rolling_mean;
  std::vector<double> cum_regret;
  std::vector<std::size_t> arm;
  std::vector<double> oracle_mean;  // mu*(x_t)

  std::size_t rounds() const { return reward.size(); }
};

/// Mean of the last min(t, window) entries ending at t (1-based).
inline double window_mean(const std::vector<double>& values, std::size_t t, std::size_t window) {
  const std::size_t w = std::min(t, window);
  double s = 0.0;
  for (std::size_t i = t - w; i < t; ++i) s += values[i];
  return s / static_cast<double>(w);
}

/// The observe / select / reward / update loop. Contexts and reward noise
/// depend only on (env.seed, seed), so policies face identical patients.
inline LearningCurve run_episode(const Environment& env, Policy& policy, std::size_t rounds, std::uint64_t seed,
                                 std::size_t window = 100, std::size_t policy_index = 0) {
  require(rounds >= 1, ErrorCode::InvalidArgument, "rounds must be >= 1");
  require(window >= 1, ErrorCode::InvalidArgument, "window must be >= 1");
  require(policy.arm_count() == env.arm_count(), ErrorCode::ArmSetMismatch,
          "policy has " + std::to_string(policy.arm_count()) + " arms, environment " +
              std::to_string(env.arm_count()));
  ContextStream contexts(env, seed);
  Rng reward_rng = make_rng(env.seed(), "rewards", {seed});
  Rng policy_rng = make_rng(env.seed(), "policy", {policy_index, seed});

  LearningCurve c;
  c.policy = policy.name();
  c.seed = seed;
  c.window = window;
  c.reward.reserve(rounds);
  double regret = 0.0;
  for (std::size_t t = 1; t <= rounds; ++t) {
    const ContextVector x = contexts.next();
    const double u = uniform01(reward_rng), z = standard_normal(reward_rng);
    const auto arm = policy.select(x, t, policy_rng);
    require(arm < env.arm_count(), ErrorCode::UnknownArm, "policy selected an unknown arm");
    const auto m = env.means(x);
    const double best = m.maxCoeff();
    const double mu = m[static_cast<Eigen::Index>(arm)];
    const double r = env.realize(mu, u, z);
    policy.update(x, arm, r, t);
    regret += std::max(0.0, best - mu);
    c.reward.push_back(r);
    c.arm.push_back(arm);
    c.oracle_mean.push_back(best);
    c.cum_regret.push_back(regret);
    c.rolling_mean.push_back(window_mean(c.reward, t, window));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Experiments

struct PolicySpec {
  std::string name;
  PolicyConfig config;
  std::shared_ptr<const PriorDataset> prior;  // warm start when non-null
};

struct PolicyAggregate {
  std::string policy;
  std::string config_hash;
  std::vector<LearningCurve> curves;  // one per seed, in seed order
  std::vector<double> mean;           // across seeds, of the rolling mean
  std::vector<double> std;            // population std across seeds
  double final_mean_reward = 0.0;     // mean over seeds of the final-window raw reward
  double final_std_reward = 0.0;
  double mean_final_regret = 0.0;
};

struct ExperimentResult {
  std::size_t rounds = 0;
  std::size_t window = 100;
  std::size_t final_window = 500;
  std::vector<std::uint64_t> seeds;
  std::vector<PolicyAggregate> policies;

  const PolicyAggregate& at(const std::string& name) const {
    for (const auto& p : policies)
      if (p.policy == name) return p;
    throw Error(ErrorCode::InvalidArgument, "no policy '" + name + "' in result");
  }
};

struct ExperimentOptions {
  std::size_t rounds = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::size_t window = 100;
  std::size_t final_window = 500;
  std::size_t jobs = 1;
};

inline LearningCurve run_policy_seed(const Environment& env, const PolicySpec& spec, std::size_t policy_index,
                                     std::uint64_t seed, const ExperimentOptions& opt) {
  Policy policy = make_policy(spec.name, spec.config, env.arm_count(), env.dimension(),
                              derive_seed(env.seed(), "policy-init", {policy_index, seed}), spec.prior.get());
  auto curve = run_episode(env, policy, opt.rounds, seed, opt.window, policy_index);
  curve.config_hash = config_hash(spec.config);
  return curve;
}

inline PolicyAggregate aggregate(std::string name, std::string hash, std::vector<LearningCurve> curves,
                                 std::size_t final_window) {
  PolicyAggregate agg;
  agg.policy = std::move(name);
  agg.config_hash = std::move(hash);
  const std::size_t T = curves.front().rounds();
  for (const auto& c : curves) require(c.rounds() == T, ErrorCode::InvalidArgument, "curves differ in length");
  const double S = static_cast<double>(curves.size());
  agg.mean.assign(T, 0.0);
  agg.std.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    // shifted by the first seed, so identical curves aggregate exactly
    const double first = curves.front().rolling_mean[t];
    double shift = 0.0;
    for (const auto& c : curves) shift += c.rolling_mean[t] - first;
    shift /= S;
    double v = 0.0;
    for (const auto& c : curves) v += (c.rolling_mean[t] - first - shift) * (c.rolling_mean[t] - first - shift);
    agg.mean[t] = first + shift;
    agg.std[t] = std::sqrt(v / S);
  }
  const std::size_t F = std::min(final_window, T);
  std::vector<double> finals;
  for (const auto& c : curves) {
    finals.push_back(window_mean(c.reward, T, F));
    agg.mean_final_regret += c.cum_regret.back() / S;
  }
  agg.final_mean_reward = std::accumulate(finals.begin(), finals.end(), 0.0) / S;
  double v = 0.0;
  for (double f : finals) v += (f - agg.final_mean_reward) * (f - agg.final_mean_reward);
  agg.final_std_reward = std::sqrt(v / S);
  agg.curves = std::move(curves);
  return agg;
}

/// Runs every (policy, seed) episode independently, up to opt.jobs at a
/// time, and reduces in (policy, seed) order.
inline ExperimentResult run_experiment(const Environment& env, const std::vector<PolicySpec>& policies,
                                       const ExperimentOptions& opt) {
  require(!opt.seeds.empty(), ErrorCode::InvalidArgument, "at least one seed required");
  require(!policies.empty(), ErrorCode::InvalidArgument, "at least one policy required");
  const std::size_t P = policies.size(), S = opt.seeds.size();
  std::vector<std::optional<LearningCurve>> curves(P * S);
  const std::size_t jobs = std::max<std::size_t>(1, opt.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < P * S; ++i)
      curves[i] = run_policy_seed(env, policies[i / S], i / S, opt.seeds[i % S], opt);
  } else {
    std::vector<std::future<LearningCurve>> running;
    std::vector<std::size_t> ids;
    std::size_t next = 0;
    while (next < P * S || !running.empty()) {
      while (next < P * S && running.size() < jobs) {
        const std::size_t i = next++;
        ids.push_back(i);
        running.push_back(std::async(std::launch::async, [&, i] {
          return run_policy_seed(env, policies[i / S], i / S, opt.seeds[i % S], opt);
        }));
      }
      curves[ids.front()] = running.front().get();
      running.erase(running.begin());
      ids.erase(ids.begin());
    }
  }
  ExperimentResult result;
  result.rounds = opt.rounds;
  result.window = opt.window;
  result.final_window = opt.final_window;
  result.seeds = opt.seeds;
  for (std::size_t p = 0; p < P; ++p) {
    std::vector<LearningCurve> pc;
    for (std::size_t s = 0; s < S; ++s) pc.push_back(std::move(*curves[p * S + s]));
    result.policies.push_back(aggregate(policies[p].name, config_hash(policies[p].config), std::move(pc),
                                        opt.final_window));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grid search

/// Ordered parameter lists for one algorithm. Conditional parameters: for
/// kernelucb, gamma applies only to the rbf kernel and degree only to the
/// polynomial kernel.
struct GridSpec {
  std::string algorithm;
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> parameters;

  static GridSpec kernelucb_default() {
    return GridSpec{"kernelucb",
                    {{"alpha", {0.1, 0.5}},
                     {"kernel", {"rbf", "polynomial", "linear"}},
                     {"gamma", {0.1, 0.5}},
                     {"degree", {2, 3}},
                     {"lambda", {0.01}},
                     {"max_samples", {100, 500}}}};
  }

  static GridSpec neural_default() {
    return GridSpec{"neural",
                    {{"hidden_size", {32, 64, 128}},
                     {"beta", {0.5, 1.0}},
                     {"batch_size", {32, 64}},
                     {"learning_rate", {1e-3, 1e-2}}}};
  }
};

struct GridPoint {
  PolicyConfig config;
  std::vector<std::pair<std::string, nlohmann::json>> assignment;

  std::string label() const {
    std::string s;
    for (const auto& [k, v] : assignment) s += (s.empty() ? "" : ",") + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    return s;
  }
};

namespace detail {

inline bool parameter_applies(const std::string& algorithm, const std::string& key,
                              const std::vector<std::pair<std::string, nlohmann::json>>& assigned) {
  if (algorithm != "kernelucb" || (key != "gamma" && key != "degree")) return true;
  for (const auto& [k, v] : assigned) {
    if (k != "kernel") continue;
    const auto kind = parse_kernel(v.get<std::string>());
    return key == "gamma" ? kind == KernelKind::Rbf : kind == KernelKind::Polynomial;
  }
  // no kernel in the grid: the default kernel decides
  const auto kind = KernelUcbConfig{}.kernel;
  return key == "gamma" ? kind == KernelKind::Rbf : kind == KernelKind::Polynomial;
}

}  // namespace detail

inline std::vector<GridPoint> expand_grid(const GridSpec& grid) {
  require(!grid.parameters.empty(), ErrorCode::InvalidArgument, "grid is empty");
  const PolicyConfig base = default_policy_config(grid.algorithm);
  auto params = grid.parameters;
  if (grid.algorithm == "kernelucb") {
    // kernel must be assigned before its conditional parameters
    std::stable_partition(params.begin(), params.end(), [](const auto& p) { return p.first != "gamma" && p.first != "degree"; });
  }
  for (const auto& [key, values] : params) {
    require(!values.empty(), ErrorCode::InvalidArgument, "grid parameter '" + key + "' has no values");
    PolicyConfig probe = base;
    set_policy_parameter(probe, key, values.front());
  }
  std::vector<GridPoint> out;
  std::function<void(std::size_t, GridPoint)> rec = [&](std::size_t i, GridPoint point) {
    if (i == params.size()) {
      out.push_back(std::move(point));
      return;
    }
    const auto& [key, values] = params[i];
    if (!detail::parameter_applies(grid.algorithm, key, point.assignment)) {
      rec(i + 1, std::move(point));
      return;
    }
    for (const auto& v : values) {
      GridPoint p = point;
      set_policy_parameter(p.config, key, v);
      p.assignment.emplace_back(key, v);
      rec(i + 1, std::move(p));
    }
  };
  rec(0, GridPoint{base, {}});
  return out;
}

struct TuneEntry {
  std::size_t index = 0;  // position in grid expansion order
  GridPoint point;
  PolicyAggregate result;
};

struct TuneReport {
  std::string algorithm;
  std::vector<TuneEntry> entries;  // expansion order
  std::vector<std::size_t> ranking;  // indices into entries, best first

  const TuneEntry& best() const { return entries.at(ranking.front()); }
};

inline TuneReport grid_search(const Environment& env, const GridSpec& grid, const ExperimentOptions& opt,
                              std::shared_ptr<const PriorDataset> prior = nullptr) {
  const auto points = expand_grid(grid);
  std::vector<PolicySpec> specs;
  for (const auto& p : points) specs.push_back(PolicySpec{grid.algorithm + "[" + p.label() + "]", p.config, prior});
  auto result = run_experiment(env, specs, opt);
  TuneReport report;
  report.algorithm = grid.algorithm;
  for (std::size_t i = 0; i < points.size(); ++i)
    report.entries.push_back(TuneEntry{i, points[i], std::move(result.policies[i])});
  report.ranking.resize(points.size());
  std::iota(report.ranking.begin(), report.ranking.end(), std::size_t{0});
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](auto a, auto b) {
    return report.entries[a].result.final_mean_reward > report.entries[b].result.final_mean_reward;
  });
  return report;
}

}  // namespace banditlab
