#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "kernels.hpp"
#include "neural.hpp"
#include "random.hpp"
#include "vgm.hpp"

namespace banditlab {

/// Historical (context, arm, reward) triples used to initialize a policy.
using PriorDataset = std::vector<Experience>;

namespace detail {

/// First index of the maximum; scores compare exactly.
inline std::size_t argmax_lowest(const Eigen::VectorXd& scores) {
  std::size_t best = 0;
  for (Eigen::Index a = 1; a < scores.size(); ++a)
    if (scores[a] > scores[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(a);
  return best;
}

inline void check_dimension(const ContextVector& x, std::size_t d) {
  require(static_cast<std::size_t>(x.size()) == d, ErrorCode::DimensionMismatch,
          "context has dimension " + std::to_string(x.size()) + ", policy expects " + std::to_string(d));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Context-free baselines

enum class SimpleVariant { Random, EpsilonGreedy, Ucb1 };

struct SimplePolicyState {
  SimpleVariant variant = SimpleVariant::Random;
  double epsilon = 0.2;  // EpsilonGreedy
  double c = 1.0;        // Ucb1
  std::size_t dimension = 0;
  std::vector<std::size_t> counts;
  std::vector<double> means;

  SimplePolicyState() = default;
  SimplePolicyState(SimpleVariant v, std::size_t arms, std::size_t dim, double param = 0.0)
      : variant(v), dimension(dim), counts(arms, 0), means(arms, 0.0) {
    require(arms >= 1, ErrorCode::InvalidArgument, "policy needs at least one arm");
    if (v == SimpleVariant::EpsilonGreedy) {
      require(param >= 0.0 && param <= 1.0, ErrorCode::InvalidArgument, "epsilon must be in [0,1]");
      epsilon = param;
    }
    if (v == SimpleVariant::Ucb1) {
      require(param >= 0.0, ErrorCode::InvalidArgument, "ucb1 c must be >= 0");
      c = param;
    }
  }

  std::size_t arm_count() const { return counts.size(); }

  Eigen::VectorXd scores(std::size_t t) const {
    Eigen::VectorXd s(static_cast<Eigen::Index>(arm_count()));
    for (std::size_t a = 0; a < arm_count(); ++a) {
      double v = means[a];
      if (variant == SimpleVariant::Ucb1)
        v = counts[a] == 0 ? std::numeric_limits<double>::infinity()
                           : means[a] + c * std::sqrt(2.0 * std::log(static_cast<double>(std::max<std::size_t>(t, 1))) /
                                                      static_cast<double>(counts[a]));
      s[static_cast<Eigen::Index>(a)] = v;
    }
    return s;
  }

  std::size_t select(const ContextVector& x, std::size_t t, Rng& rng) const {
    detail::check_dimension(x, dimension);
    switch (variant) {
      case SimpleVariant::Random: return uniform_index(rng, arm_count());
      case SimpleVariant::EpsilonGreedy:
        if (uniform01(rng) < epsilon) return uniform_index(rng, arm_count());
        return detail::argmax_lowest(scores(t));
      case SimpleVariant::Ucb1: return detail::argmax_lowest(scores(t));
    }
    return 0;
  }

  void update(const ContextVector&, std::size_t arm, double reward, std::size_t) {
    require(arm < arm_count(), ErrorCode::UnknownArm, "update arm");
    require(std::isfinite(reward), ErrorCode::NonFinite, "reward");
    ++counts[arm];
    means[arm] += (reward - means[arm]) / static_cast<double>(counts[arm]);
  }
};

// ---------------------------------------------------------------------------
// LinUCB (disjoint, one ridge model per arm)

struct LinUcbState {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::VectorXd> b;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factor;
  double lambda = 1.0;
  double alpha = 0.5;

  LinUcbState() = default;
  LinUcbState(std::size_t arms, std::size_t d, double lambda_, double alpha_) : lambda(lambda_), alpha(alpha_) {
    require(arms >= 1 && d >= 1, ErrorCode::InvalidArgument, "linucb needs arms >= 1 and d >= 1");
    require(lambda > 0.0 && alpha >= 0.0, ErrorCode::InvalidArgument, "linucb needs lambda > 0, alpha >= 0");
    const auto dim = static_cast<Eigen::Index>(d);
    A.assign(arms, Eigen::MatrixXd::Identity(dim, dim) * lambda);
    b.assign(arms, Eigen::VectorXd::Zero(dim));
    for (std::size_t a = 0; a < arms; ++a) factor.emplace_back(A[a]);
  }

  std::size_t arm_count() const { return A.size(); }
  std::size_t dimension() const { return static_cast<std::size_t>(b.front().size()); }

  Eigen::VectorXd theta(std::size_t arm) const { return factor.at(arm).solve(b[arm]); }

  Eigen::VectorXd scores(const ContextVector& x) const {
    detail::check_dimension(x, dimension());
    Eigen::VectorXd s(static_cast<Eigen::Index>(arm_count()));
    for (std::size_t a = 0; a < arm_count(); ++a) {
      const Eigen::VectorXd Ainv_x = factor[a].solve(x);
      s[static_cast<Eigen::Index>(a)] = Ainv_x.dot(b[a]) + alpha * std::sqrt(std::max(0.0, x.dot(Ainv_x)));
    }
    return s;
  }

  std::size_t select(const ContextVector& x, std::size_t, Rng&) const { return detail::argmax_lowest(scores(x)); }

  void update(const ContextVector& x, std::size_t arm, double reward, std::size_t) {
    detail::check_dimension(x, dimension());
    require(arm < arm_count(), ErrorCode::UnknownArm, "update arm");
    require(std::isfinite(reward), ErrorCode::NonFinite, "reward");
    A[arm].noalias() += x * x.transpose();
    b[arm] += reward * x;
    factor[arm].compute(A[arm]);
#ifndef NDEBUG
    check_invariants();
#endif
  }

  /// Every A_a must factor (symmetric positive definite).
  void check_invariants() const {
    for (std::size_t a = 0; a < arm_count(); ++a)
      if (factor[a].info() != Eigen::Success || !A[a].isApprox(A[a].transpose()))
        throw NumericalError("linucb A_" + std::to_string(a) + " is not positive definite");
  }
};

/// A_a = lambda I + sum x x^T and b_a = sum r x over the prior's arm-a rows.
inline LinUcbState warm_start_linucb(LinUcbState state, const PriorDataset& prior) {
  for (const auto& e : prior) {
    detail::check_dimension(e.x, state.dimension());
    require(e.arm < state.arm_count(), ErrorCode::UnknownArm, "prior arm");
    require(std::isfinite(e.reward), ErrorCode::NonFinite, "prior reward");
    state.A[e.arm].noalias() += e.x * e.x.transpose();
    state.b[e.arm] += e.reward * e.x;
  }
  for (std::size_t a = 0; a < state.arm_count(); ++a) state.factor[a].compute(state.A[a]);
  return state;
}

// ---------------------------------------------------------------------------
// KernelUCB

/// Per-arm kernel regression on a sliding window of at most max_samples
/// observations. The action-indicator kernel makes the joint system block
/// diagonal, so each arm keeps its own Cholesky factor of (K + lambda I).
struct KernelUcbState {
  struct ArmSupport {
    std::vector<ContextVector> x;
    std::vector<double> y;
    Eigen::MatrixXd L;      // lower Cholesky factor of K + lambda I
    Eigen::VectorXd alpha;  // (K + lambda I)^-1 y
    std::size_t evictions = 0;  // since the last full refactor
  };

  KernelParams kernel;
  double beta = 0.5;
  double lambda = 0.01;
  std::size_t max_samples = 500;
  std::size_t dim = 0;
  std::vector<ArmSupport> arms;
  /// Set when a warm start dropped prior rows beyond max_samples.
  std::size_t truncated_prior_rows = 0;

  KernelUcbState() = default;
  KernelUcbState(std::size_t n_arms, std::size_t d, KernelParams k, double beta_, double lambda_,
                 std::size_t max_samples_)
      : kernel(k), beta(beta_), lambda(lambda_), max_samples(max_samples_), dim(d), arms(n_arms) {
    require(n_arms >= 1 && d >= 1, ErrorCode::InvalidArgument, "kernelucb needs arms >= 1 and d >= 1");
    require(lambda > 0.0 && beta >= 0.0 && max_samples >= 1, ErrorCode::InvalidArgument,
            "kernelucb needs lambda > 0, beta >= 0, max_samples >= 1");
    require(k.kind != KernelKind::Rbf || k.gamma > 0.0, ErrorCode::InvalidArgument, "rbf gamma must be > 0");
    require(k.kind != KernelKind::Polynomial || k.degree >= 1, ErrorCode::InvalidArgument, "degree must be >= 1");
  }

  std::size_t arm_count() const { return arms.size(); }
  std::size_t dimension() const { return dim; }
  std::size_t support_size(std::size_t arm) const { return arms.at(arm).x.size(); }

  /// Posterior mean and variance of arm a at x.
  std::pair<double, double> posterior(const ContextVector& x, std::size_t a) const {
    const auto& s = arms[a];
    const double kxx = kernel(x, x);
    const auto n = static_cast<Eigen::Index>(s.x.size());
    if (n == 0) return {0.0, std::max(0.0, kxx)};
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel(s.x[static_cast<std::size_t>(i)], x);
    const double mean = k.dot(s.alpha);
    const Eigen::VectorXd v = s.L.triangularView<Eigen::Lower>().solve(k);
    return {mean, std::max(0.0, kxx - v.squaredNorm())};
  }

  Eigen::VectorXd scores(const ContextVector& x) const {
    detail::check_dimension(x, dim);
    Eigen::VectorXd out(static_cast<Eigen::Index>(arm_count()));
    for (std::size_t a = 0; a < arm_count(); ++a) {
      const auto [mean, var] = posterior(x, a);
      out[static_cast<Eigen::Index>(a)] = mean + beta * std::sqrt(var);
    }
    return out;
  }

  std::size_t select(const ContextVector& x, std::size_t, Rng&) const { return detail::argmax_lowest(scores(x)); }

  void update(const ContextVector& x, std::size_t arm, double reward, std::size_t) {
    detail::check_dimension(x, dim);
    require(arm < arm_count(), ErrorCode::UnknownArm, "update arm");
    require(std::isfinite(reward), ErrorCode::NonFinite, "reward");
    auto& s = arms[arm];
    if (s.x.size() >= max_samples) {
      evict_oldest(arm);
      if (++s.evictions >= max_samples) {
        // periodic rebuild keeps rounding drift of the downdates bounded
        s.x.push_back(x);
        s.y.push_back(reward);
        refactor(arm);
        return;
      }
    }
    append(arm, x, reward);
#ifndef NDEBUG
    check_invariants();
#endif
  }

  /// Rebuilds arm a's factor from its support.
  void refactor(std::size_t a) {
    auto& s = arms[a];
    const auto n = static_cast<Eigen::Index>(s.x.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        K(i, j) = K(j, i) = kernel(s.x[static_cast<std::size_t>(i)], s.x[static_cast<std::size_t>(j)]);
    K.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw NumericalError("kernel matrix is not positive definite");
    s.L = llt.matrixL();
    s.evictions = 0;
    solve_alpha(a);
  }

  void check_invariants() const {
    for (std::size_t a = 0; a < arm_count(); ++a) {
      const auto& s = arms[a];
      require(s.x.size() <= max_samples, ErrorCode::InvalidArgument, "support exceeds max_samples");
      if (s.x.empty()) continue;
      if (!(s.L.diagonal().array() > 0.0).all() || !s.L.allFinite())
        throw NumericalError("kernel factor of arm " + std::to_string(a) + " is not positive definite");
    }
  }

 private:
  /// Drops the oldest support point. With L = [l11 0; l21 L22] the remaining
  /// block factors as chol(L22 L22' + l21 l21'), a rank-one update: O(n^2).
  void evict_oldest(std::size_t a) {
    auto& s = arms[a];
    const auto n = static_cast<Eigen::Index>(s.x.size());
    Eigen::VectorXd v = s.L.col(0).tail(n - 1);
    Eigen::MatrixXd L = s.L.bottomRightCorner(n - 1, n - 1);
    for (Eigen::Index k = 0; k < n - 1; ++k) {
      const double r = std::hypot(L(k, k), v[k]);
      const double c = r / L(k, k), sn = v[k] / L(k, k);
      L(k, k) = r;
      const Eigen::Index m = n - 2 - k;
      if (m > 0) {
        L.col(k).tail(m) = (L.col(k).tail(m) + sn * v.tail(m)) / c;
        v.tail(m) = c * v.tail(m) - sn * L.col(k).tail(m);
      }
    }
    s.L = std::move(L);
    s.x.erase(s.x.begin());
    s.y.erase(s.y.begin());
  }

  /// Extends the Cholesky factor by one row: O(n^2).
  void append(std::size_t a, const ContextVector& x, double reward) {
    auto& s = arms[a];
    const auto n = static_cast<Eigen::Index>(s.x.size());
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel(s.x[static_cast<std::size_t>(i)], x);
    const Eigen::VectorXd l = n > 0 ? Eigen::VectorXd(s.L.triangularView<Eigen::Lower>().solve(k)) : Eigen::VectorXd();
    const double d2 = kernel(x, x) + lambda - l.squaredNorm();
    if (!(d2 > 0.0)) throw NumericalError("kernel factor update lost positive definiteness");
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n + 1, n + 1);
    if (n > 0) {
      L.topLeftCorner(n, n) = s.L;
      L.block(n, 0, 1, n) = l.transpose();
    }
    L(n, n) = std::sqrt(d2);
    s.L = std::move(L);
    s.x.push_back(x);
    s.y.push_back(reward);
    solve_alpha(a);
  }

  void solve_alpha(std::size_t a) {
    auto& s = arms[a];
    const Eigen::Map<const Eigen::VectorXd> y(s.y.data(), static_cast<Eigen::Index>(s.y.size()));
    const Eigen::VectorXd z = s.L.triangularView<Eigen::Lower>().solve(y);
    s.alpha = s.L.transpose().triangularView<Eigen::Upper>().solve(z);
  }
};

/// Pre-loads each arm's support with its prior pairs (the most recent
/// max_samples per arm when the prior is larger) and factors K_0 + lambda I.
inline KernelUcbState warm_start_kernelucb(KernelUcbState state, const PriorDataset& prior) {
  std::vector<std::vector<const Experience*>> per_arm(state.arm_count());
  for (const auto& e : prior) {
    detail::check_dimension(e.x, state.dimension());
    require(e.arm < state.arm_count(), ErrorCode::UnknownArm, "prior arm");
    require(std::isfinite(e.reward), ErrorCode::NonFinite, "prior reward");
    per_arm[e.arm].push_back(&e);
  }
  for (std::size_t a = 0; a < state.arm_count(); ++a) {
    auto& s = state.arms[a];
    for (const auto* e : per_arm[a]) {
      s.x.push_back(e->x);
      s.y.push_back(e->reward);
    }
    if (s.x.size() > state.max_samples) {
      const auto excess = s.x.size() - state.max_samples;
      state.truncated_prior_rows += excess;
      s.x.erase(s.x.begin(), s.x.begin() + static_cast<std::ptrdiff_t>(excess));
      s.y.erase(s.y.begin(), s.y.begin() + static_cast<std::ptrdiff_t>(excess));
    }
    if (!s.x.empty()) state.refactor(a);
  }
  return state;
}

// ---------------------------------------------------------------------------
// NeuralBandit

struct NeuralBanditState {
  Mlp net;
  std::deque<Experience> buffer;
  std::size_t capacity = 2000;
  double alpha = 0.5;
  std::size_t mc_samples = 20;
  std::size_t train_every = 32;  // also the mini-batch size
  std::size_t epochs = 1;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t explore_rounds = 0;  // round-robin arms for the first rounds
  std::size_t training_runs = 0;

  std::size_t arm_count() const { return net.spec().arms; }
  std::size_t dimension() const { return net.spec().input_dim; }

  DropoutStats stats(const ContextVector& x, Rng& rng) const {
    detail::check_dimension(x, dimension());
    return mc_dropout_stats(net, x, mc_samples, rng);
  }

  std::size_t select(const ContextVector& x, std::size_t t, Rng& rng) const {
    if (t >= 1 && t <= explore_rounds) {
      detail::check_dimension(x, dimension());
      return (t - 1) % arm_count();
    }
    const auto s = stats(x, rng);
    return detail::argmax_lowest(s.mean + alpha * s.std);
  }

  void update(const ContextVector& x, std::size_t arm, double reward, std::size_t t) {
    detail::check_dimension(x, dimension());
    require(arm < arm_count(), ErrorCode::UnknownArm, "update arm");
    require(std::isfinite(reward), ErrorCode::NonFinite, "reward");
    buffer.push_back(Experience{x, arm, reward});
    while (buffer.size() > capacity) buffer.pop_front();
    if (train_every > 0 && t % train_every == 0) {
      const std::vector<Experience> batch(buffer.begin(), buffer.end());
      TrainConfig cfg;
      cfg.learning_rate = learning_rate;
      cfg.batch_size = train_every;
      cfg.epochs = epochs;
      cfg.weight_decay = weight_decay;
      cfg.seed = derive_seed(seed, "neural-bandit-train", {t});
      train(net, batch, cfg);
      ++training_runs;
    }
  }
};

/// Fits the network to the prior before online learning; optionally keeps the
/// prior in the replay buffer.
inline NeuralBanditState pretrain_neural(NeuralBanditState state, const PriorDataset& prior, const TrainConfig& cfg,
                                         bool seed_buffer = true) {
  require(!prior.empty(), ErrorCode::InvalidArgument, "pretraining prior is empty");
  for (const auto& e : prior) detail::check_dimension(e.x, state.dimension());
  train(state.net, prior, cfg);
  if (seed_buffer) {
    for (const auto& e : prior) state.buffer.push_back(e);
    while (state.buffer.size() > state.capacity) state.buffer.pop_front();
  }
  return state;
}

// ---------------------------------------------------------------------------
// Uniform policy wrapper

class Policy {
 public:
  using State = std::variant<SimplePolicyState, LinUcbState, KernelUcbState, NeuralBanditState>;

  Policy() = default;
  Policy(std::string name, State state) : name_(std::move(name)), state_(std::move(state)) {}

  const std::string& name() const { return name_; }
  const State& state() const { return state_; }
  State& state() { return state_; }

  std::size_t arm_count() const {
    return std::visit([](const auto& s) { return s.arm_count(); }, state_);
  }

  std::size_t select(const ContextVector& x, std::size_t t, Rng& rng) const {
    return std::visit([&](const auto& s) { return s.select(x, t, rng); }, state_);
  }

  void update(const ContextVector& x, std::size_t arm, double reward, std::size_t t) {
    std::visit([&](auto& s) { s.update(x, arm, reward, t); }, state_);
  }

 private:
  std::string name_;
  State state_;
};

}  // namespace banditlab
