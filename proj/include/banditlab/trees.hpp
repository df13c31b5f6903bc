#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "json.hpp"
#include "random.hpp"

namespace banditlab {

// ---------------------------------------------------------------------------
// Boosted regression stumps

struct Stump {
  Eigen::Index feature = 0;
  double threshold = 0.0;  // x[feature] <= threshold goes left
  double left = 0.0;
  double right = 0.0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return x[feature] <= threshold ? left : right;
  }
};

struct BoostedStumps {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<Stump> stumps;
  /// Weighted training MSE after the base value and after every round.
  std::vector<double> training_loss;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double f = base;
    for (const auto& s : stumps) f += learning_rate * s.predict(x);
    return f;
  }
};

namespace detail {

inline std::vector<std::vector<Eigen::Index>> presort_columns(const Eigen::MatrixXd& X) {
  std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    auto& idx = order[static_cast<std::size_t>(f)];
    idx.resize(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
  }
  return order;
}

/// Least-squares stump on (X, target, w); falls back to a constant stump when
/// no split exists.
inline Stump fit_stump(const Eigen::MatrixXd& X, const Eigen::VectorXd& target, const Eigen::VectorXd& w,
                       const std::vector<std::vector<Eigen::Index>>& order) {
  const double wsum = w.sum();
  const double wy = w.dot(target);
  Stump best;
  best.left = best.right = wsum > 0 ? wy / wsum : 0.0;
  best.threshold = std::numeric_limits<double>::infinity();
  double best_gain = 0.0;
  const double base_term = wsum > 0 ? wy * wy / wsum : 0.0;
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    const auto& idx = order[static_cast<std::size_t>(f)];
    double wl = 0.0, yl = 0.0;
    for (std::size_t p = 0; p + 1 < idx.size(); ++p) {
      const auto i = idx[p];
      wl += w[i];
      yl += w[i] * target[i];
      const double here = X(i, f), next = X(idx[p + 1], f);
      if (here == next) continue;
      const double wr = wsum - wl, yr = wy - yl;
      if (wl <= 0.0 || wr <= 0.0) continue;
      // SSE reduction relative to a single constant
      const double gain = yl * yl / wl + yr * yr / wr - base_term;
      if (gain > best_gain + 1e-15) {
        best_gain = gain;
        best.feature = f;
        best.threshold = 0.5 * (here + next);
        best.left = yl / wl;
        best.right = yr / wr;
      }
    }
  }
  return best;
}

inline double weighted_mse(const Eigen::VectorXd& residual, const Eigen::VectorXd& w) {
  return w.dot(residual.cwiseProduct(residual)) / w.sum();
}

}  // namespace detail

/// Stagewise least-squares boosting of depth-1 trees. `stumps_per_round`
/// stumps are added per round, each fitted to the current residual.
inline BoostedStumps boosted_stumps_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const std::optional<Eigen::VectorXd>& weights, std::size_t rounds,
                                        double learning_rate, std::size_t stumps_per_round = 1) {
  require(rounds >= 1, ErrorCode::InvalidArgument, "boosting rounds must be >= 1");
  require(learning_rate > 0.0 && learning_rate <= 1.0, ErrorCode::InvalidArgument, "learning rate must be in (0,1]");
  require(X.rows() == y.size() && X.rows() > 0, ErrorCode::DimensionMismatch, "boosting design/target sizes");
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(y.size());
  require(w.size() == y.size() && w.minCoeff() >= 0.0 && w.sum() > 0.0, ErrorCode::InvalidArgument,
          "boosting weights must be non-negative with positive total");
  require(X.allFinite() && y.allFinite(), ErrorCode::NonFinite, "boosting input");

  BoostedStumps model;
  model.learning_rate = learning_rate;
  model.base = w.dot(y) / w.sum();
  Eigen::VectorXd residual = y.array() - model.base;
  model.training_loss.push_back(detail::weighted_mse(residual, w));
  const auto order = detail::presort_columns(X);
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t s = 0; s < std::max<std::size_t>(1, stumps_per_round); ++s) {
      const Stump stump = detail::fit_stump(X, residual, w, order);
      for (Eigen::Index i = 0; i < X.rows(); ++i) residual[i] -= learning_rate * stump.predict(X.row(i).transpose());
      model.stumps.push_back(stump);
    }
    model.training_loss.push_back(detail::weighted_mse(residual, w));
  }
  return model;
}

inline double boosted_stumps_predict(const BoostedStumps& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return model.predict(x);
}

inline void to_json(nlohmann::json& j, const BoostedStumps& m) {
  nlohmann::json stumps = nlohmann::json::array();
  for (const auto& s : m.stumps)
    stumps.push_back({static_cast<long long>(s.feature), s.threshold, s.left, s.right});
  j = nlohmann::json{{"base", m.base}, {"learning_rate", m.learning_rate}, {"stumps", stumps}};
}

inline void from_json(const nlohmann::json& j, BoostedStumps& m) {
  m = BoostedStumps{};
  m.base = j.at("base").get<double>();
  m.learning_rate = j.at("learning_rate").get<double>();
  for (const auto& s : j.at("stumps")) {
    const double threshold = s.at(1).is_null() ? std::numeric_limits<double>::infinity() : s.at(1).get<double>();
    m.stumps.push_back(Stump{s.at(0).get<Eigen::Index>(), threshold, s.at(2).get<double>(), s.at(3).get<double>()});
  }
}

// ---------------------------------------------------------------------------
// Bagged regression trees (used as a probability classifier on 0/1 labels)

struct TreeNode {
  Eigen::Index feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
};

class RegressionTree {
 public:
  struct Options {
    std::size_t max_depth = 6;
    std::size_t min_leaf = 1;
    std::size_t features_per_split = 0;  // 0 = all
  };

  static RegressionTree fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<Eigen::Index> rows,
                            const Options& opt, Rng& rng) {
    RegressionTree tree;
    tree.nodes_.reserve(64);
    tree.grow(X, y, rows, 0, opt, rng);
    return tree;
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    std::size_t n = 0;
    while (nodes_[n].feature >= 0) n = x[nodes_[n].feature] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
    return nodes_[n].value;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::size_t grow(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<Eigen::Index>& rows,
                   std::size_t depth, const Options& opt, Rng& rng) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    double sum = 0.0;
    for (auto i : rows) sum += y[i];
    const double n = static_cast<double>(rows.size());
    nodes_[id].value = rows.empty() ? 0.0 : sum / n;
    if (depth >= opt.max_depth || rows.size() < 2 * opt.min_leaf) return id;

    std::vector<Eigen::Index> features(static_cast<std::size_t>(X.cols()));
    std::iota(features.begin(), features.end(), Eigen::Index{0});
    std::size_t take = features.size();
    if (opt.features_per_split > 0 && opt.features_per_split < features.size()) {
      take = opt.features_per_split;
      for (std::size_t i = 0; i < take; ++i)
        std::swap(features[i], features[i + uniform_index(rng, features.size() - i)]);
    }

    double best_gain = 1e-12;
    Eigen::Index best_feature = -1;
    double best_threshold = 0.0;
    const double base_term = sum * sum / n;
    std::vector<Eigen::Index> sorted = rows;
    for (std::size_t fi = 0; fi < take; ++fi) {
      const Eigen::Index f = features[fi];
      std::sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
      double left_sum = 0.0;
      for (std::size_t p = 0; p + 1 < sorted.size(); ++p) {
        left_sum += y[sorted[p]];
        const double here = X(sorted[p], f), next = X(sorted[p + 1], f);
        if (here == next) continue;
        const double nl = static_cast<double>(p + 1), nr = n - nl;
        if (p + 1 < opt.min_leaf || sorted.size() - p - 1 < opt.min_leaf) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base_term;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (here + next);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> left_rows, right_rows;
    for (auto i : rows) (X(i, best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
    rows.clear();
    rows.shrink_to_fit();
    const std::size_t l = grow(X, y, left_rows, depth + 1, opt, rng);
    const std::size_t r = grow(X, y, right_rows, depth + 1, opt, rng);
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::vector<TreeNode> nodes_;
};

/// Bootstrap-aggregated trees with per-split feature subsampling.
class BaggedTrees {
 public:
  struct Options {
    std::size_t n_trees = 100;
    std::size_t max_depth = 6;
    std::size_t min_leaf = 1;
    bool sqrt_features = true;
    std::uint64_t seed = 0;
  };

  static BaggedTrees fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Options& opt) {
    require(X.rows() == y.size() && X.rows() > 0, ErrorCode::DimensionMismatch, "forest design/target sizes");
    require(opt.n_trees >= 1, ErrorCode::InvalidArgument, "n_trees must be >= 1");
    BaggedTrees forest;
    RegressionTree::Options topt;
    topt.max_depth = opt.max_depth;
    topt.min_leaf = opt.min_leaf;
    topt.features_per_split =
        opt.sqrt_features ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(X.cols()))))
                          : 0;
    const auto n = static_cast<std::size_t>(X.rows());
    for (std::size_t t = 0; t < opt.n_trees; ++t) {
      Rng rng = make_rng(opt.seed, "bagged-tree", {t});
      std::vector<Eigen::Index> rows(n);
      for (auto& r : rows) r = static_cast<Eigen::Index>(uniform_index(rng, n));
      forest.trees_.push_back(RegressionTree::fit(X, y, std::move(rows), topt, rng));
    }
    return forest;
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }

  std::size_t size() const { return trees_.size(); }

 private:
  std::vector<RegressionTree> trees_;
};

}  // namespace banditlab
