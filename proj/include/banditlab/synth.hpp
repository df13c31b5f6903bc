#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "json.hpp"
#include "random.hpp"
#include "tabular.hpp"
#include "trees.hpp"
#include "vgm.hpp"

namespace banditlab {

/// Partial assignment of categorical values, keyed by column name.
using Condition = std::map<std::string, std::string>;

struct SamplerOptions {
  std::size_t max_modes = 5;
  double smoothing = 0.5;
  std::uint64_t seed = 0;
};

/// Conditional mixture sampler over a schema. Categorical columns (features,
/// arm, and a binary outcome) share one smoothed joint table; each continuous
/// column (features and a continuous outcome) has a global mode set whose mode
/// probabilities, means and spreads are re-estimated per categorical cell.
class ConditionalSampler {
 public:
  static constexpr int kFormatVersion = 1;
  /// Pseudo-rows pulling a cell's mode mean and spread toward the global mode.
  static constexpr double kModeShrinkage = 5.0;

  /// Column reference in the flattened order features..., arm, outcome.
  struct Column {
    std::string name;
    bool categorical = false;
    std::size_t cardinality = 0;
  };

  ConditionalSampler() = default;

  static ConditionalSampler fit(const Dataset& data, const SamplerOptions& opt = {}) {
    data.schema.validate();
    require(data.size() >= 30, ErrorCode::TooFewRows,
            "sampler needs at least 30 rows, got " + std::to_string(data.size()));
    require(opt.smoothing >= 0.0, ErrorCode::InvalidArgument, "smoothing must be >= 0");
    ConditionalSampler s;
    s.schema_ = data.schema;
    s.smoothing_ = opt.smoothing;
    s.build_columns();

    // marginal counts per categorical column, and the joint cell counts
    s.marginal_counts_.resize(s.categorical_.size());
    for (std::size_t c = 0; c < s.categorical_.size(); ++c)
      s.marginal_counts_[c].assign(s.columns_[s.categorical_[c]].cardinality, 0.0);
    std::vector<double> cell_counts(s.cell_count(), 0.0);
    std::vector<std::size_t> cell_of_row(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto values = s.flatten(data.rows[i]);
      for (std::size_t c = 0; c < s.categorical_.size(); ++c)
        s.marginal_counts_[c][category_of(values[s.categorical_[c]])] += 1.0;
      cell_of_row[i] = s.cell_index(values);
      cell_counts[cell_of_row[i]] += 1.0;
    }
    if (opt.smoothing == 0.0) {
      for (std::size_t c = 0; c < s.categorical_.size(); ++c)
        for (std::size_t v = 0; v < s.marginal_counts_[c].size(); ++v)
          require(s.marginal_counts_[c][v] > 0.0, ErrorCode::InvalidArgument,
                  "category '" + s.category_label(c, v) + "' of column '" + s.columns_[s.categorical_[c]].name +
                      "' is unobserved and smoothing is 0");
    }
    const double total = static_cast<double>(data.size()) + opt.smoothing * static_cast<double>(s.cell_count());
    s.cell_probs_.resize(s.cell_count());
    for (std::size_t k = 0; k < s.cell_count(); ++k) s.cell_probs_[k] = (cell_counts[k] + opt.smoothing) / total;

    // global mixtures for continuous columns, then per-cell mode weights
    s.normalizers_.resize(s.continuous_.size());
    s.cell_mode_weights_.assign(s.cell_count() * s.continuous_.size(), {});
    s.cell_mode_means_.assign(s.cell_count() * s.continuous_.size(), {});
    s.cell_mode_stds_.assign(s.cell_count() * s.continuous_.size(), {});
    for (std::size_t c = 0; c < s.continuous_.size(); ++c) {
      std::vector<double> column(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) column[i] = s.flatten(data.rows[i])[s.continuous_[c]];
      VgmOptions vopt;
      vopt.max_modes = opt.max_modes;
      vopt.seed = derive_seed(opt.seed, "vgm-column", {s.continuous_[c]});
      s.normalizers_[c] = fit_vgm(column, vopt);
      const auto& norm = s.normalizers_[c];
      const std::size_t m = norm.mode_count();
      std::vector<std::vector<double>> resp_sum(s.cell_count(), std::vector<double>(m, 0.0));
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = norm.responsibilities(column[i]);
        for (std::size_t k = 0; k < m; ++k) resp_sum[cell_of_row[i]][k] += r[k];
      }
      // per-cell mode locations: responsibility-weighted moments shrunk toward the global mode
      std::vector<std::vector<double>> sum_x(s.cell_count(), std::vector<double>(m, 0.0)), sum_xx = sum_x;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = norm.responsibilities(column[i]);
        for (std::size_t k = 0; k < m; ++k) {
          sum_x[cell_of_row[i]][k] += r[k] * column[i];
          sum_xx[cell_of_row[i]][k] += r[k] * column[i] * column[i];
        }
      }
      for (std::size_t cell = 0; cell < s.cell_count(); ++cell) {
        std::vector<double> mu(m), sd(m);
        for (std::size_t k = 0; k < m; ++k) {
          const double n_k = resp_sum[cell][k], kappa = kModeShrinkage;
          mu[k] = (sum_x[cell][k] + kappa * norm.means[k]) / (n_k + kappa);
          const double ss = sum_xx[cell][k] - 2.0 * mu[k] * sum_x[cell][k] + n_k * mu[k] * mu[k];
          const double var = (std::max(0.0, ss) + kappa * norm.stds[k] * norm.stds[k]) / (n_k + kappa);
          sd[k] = std::max(std::sqrt(var), norm.std_floor);
        }
        s.cell_mode_means_[cell * s.continuous_.size() + c] = std::move(mu);
        s.cell_mode_stds_[cell * s.continuous_.size() + c] = std::move(sd);
      }
      for (std::size_t cell = 0; cell < s.cell_count(); ++cell) {
        const double prior_mass = opt.smoothing * static_cast<double>(m);
        const double denom = cell_counts[cell] + prior_mass;
        std::vector<double> w(m);
        for (std::size_t k = 0; k < m; ++k)
          w[k] = denom > 0.0 ? (resp_sum[cell][k] + prior_mass * norm.weights[k]) / denom : norm.weights[k];
        s.cell_mode_weights_[cell * s.continuous_.size() + c] = std::move(w);
      }
    }
    return s;
  }

  const Schema& schema() const { return schema_; }
  double smoothing() const { return smoothing_; }
  std::size_t cell_count() const {
    std::size_t n = 1;
    for (auto c : categorical_) n *= columns_[c].cardinality;
    return n;
  }
  const std::vector<double>& cell_probabilities() const { return cell_probs_; }
  const std::vector<Column>& columns() const { return columns_; }

  /// Mixture of the c-th continuous column (flattened continuous order).
  const ModeNormalizer& continuous_normalizer(std::size_t c) const { return normalizers_.at(c); }
  const std::vector<double>& cell_mode_weights(std::size_t cell, std::size_t c) const {
    return cell_mode_weights_.at(cell * continuous_.size() + c);
  }

  /// Encoder over the schema's features built from the fitted mixtures.
  RowEncoder encoder() const {
    std::vector<std::optional<ModeNormalizer>> norms(schema_.features.size());
    for (std::size_t c = 0; c < continuous_.size(); ++c)
      if (continuous_[c] < schema_.features.size()) norms[continuous_[c]] = normalizers_[c];
    return RowEncoder(schema_, std::move(norms));
  }

  /// P(column = value | condition) under the smoothed joint table.
  double conditional_probability(const std::string& column, const std::string& value,
                                 const Condition& condition = {}) const {
    const auto target = resolve(Condition{{column, value}});
    const auto given = resolve(condition);
    double num = 0.0, den = 0.0;
    for (std::size_t cell = 0; cell < cell_count(); ++cell) {
      if (!matches(cell, given)) continue;
      den += cell_probs_[cell];
      if (matches(cell, target)) num += cell_probs_[cell];
    }
    return den > 0.0 ? num / den : 0.0;
  }

  /// Training-by-sampling weights for the conditioning value of categorical
  /// column c: proportional to log(1 + count).
  std::vector<double> conditioning_weights(std::size_t c) const {
    std::vector<double> w(marginal_counts_.at(c).size());
    for (std::size_t v = 0; v < w.size(); ++v) w[v] = std::log1p(marginal_counts_[c][v]);
    return w;
  }

  std::size_t categorical_column_count() const { return categorical_.size(); }
  const Column& categorical_column(std::size_t c) const { return columns_.at(categorical_.at(c)); }
  const std::vector<double>& marginal_counts(std::size_t c) const { return marginal_counts_.at(c); }

  /// Draws one row. Without a condition a conditioning column is picked
  /// uniformly and its value by log-frequency; with a condition the joint
  /// table is restricted to matching cells.
  Row draw(Rng& rng, const Condition& condition = {}) const {
    std::vector<std::pair<std::size_t, std::size_t>> given;
    if (condition.empty()) {
      if (!categorical_.empty()) {
        const std::size_t c = uniform_index(rng, categorical_.size());
        const auto w = conditioning_weights(c);
        given.emplace_back(c, draw_weighted(rng, w));
      }
    } else {
      given = resolve(condition);
    }
    std::vector<double> w(cell_count());
    for (std::size_t cell = 0; cell < cell_count(); ++cell) w[cell] = matches(cell, given) ? cell_probs_[cell] : 0.0;
    double mass = std::accumulate(w.begin(), w.end(), 0.0);
    require(mass > 0.0, ErrorCode::InvalidCondition, "condition has zero probability under the sampler");
    const std::size_t cell = draw_weighted(rng, w);

    std::vector<double> flat(columns_.size(), 0.0);
    std::size_t rem = cell;
    for (std::size_t c = categorical_.size(); c-- > 0;) {
      const auto card = columns_[categorical_[c]].cardinality;
      flat[categorical_[c]] = static_cast<double>(rem % card);
      rem /= card;
    }
    const std::size_t C = continuous_.size();
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t k = draw_weighted(rng, cell_mode_weights(cell, c));
      const auto slot = cell * C + c;
      double v = cell_mode_means_[slot][k] + cell_mode_stds_[slot][k] * standard_normal(rng);
      const auto b = bounds_of(continuous_[c]);
      if (b) v = std::clamp(v, b->min, b->max);
      flat[continuous_[c]] = v;
    }
    Row row;
    row.values.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(schema_.features.size()));
    row.arm = category_of(flat[schema_.features.size()]);
    row.outcome = flat[schema_.features.size() + 1];
    return row;
  }

  Dataset sample(std::size_t n, const Condition& condition, std::uint64_t seed) const {
    require(n >= 1, ErrorCode::InvalidArgument, "sample size must be >= 1");
    resolve(condition);
    Rng rng = make_rng(seed, "sampler-draw");
    Dataset out{schema_, {}};
    out.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.rows.push_back(draw(rng, condition));
    return out;
  }

  friend void to_json(nlohmann::json& j, const ConditionalSampler& s) {
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& w : s.cell_mode_weights_) weights.push_back(w);
    j = nlohmann::json{{"format", "banditlab.sampler"},
                       {"version", kFormatVersion},
                       {"schema", s.schema_},
                       {"smoothing", s.smoothing_},
                       {"cell_probabilities", s.cell_probs_},
                       {"marginal_counts", s.marginal_counts_},
                       {"normalizers", s.normalizers_},
                       {"cell_mode_weights", weights},
                       {"cell_mode_means", s.cell_mode_means_},
                       {"cell_mode_stds", s.cell_mode_stds_}};
  }

  friend void from_json(const nlohmann::json& j, ConditionalSampler& s) {
    require(j.value("format", "") == "banditlab.sampler", ErrorCode::FormatError, "not a sampler document");
    require(j.at("version").get<int>() == kFormatVersion, ErrorCode::FormatError, "unsupported sampler version");
    s = ConditionalSampler{};
    s.schema_ = j.at("schema").get<Schema>();
    s.smoothing_ = j.at("smoothing").get<double>();
    s.build_columns();
    s.cell_probs_ = j.at("cell_probabilities").get<std::vector<double>>();
    s.marginal_counts_ = j.at("marginal_counts").get<std::vector<std::vector<double>>>();
    s.normalizers_ = j.at("normalizers").get<std::vector<ModeNormalizer>>();
    s.cell_mode_weights_ = j.at("cell_mode_weights").get<std::vector<std::vector<double>>>();
    s.cell_mode_means_ = j.at("cell_mode_means").get<std::vector<std::vector<double>>>();
    s.cell_mode_stds_ = j.at("cell_mode_stds").get<std::vector<std::vector<double>>>();
    require(s.cell_mode_means_.size() == s.cell_mode_weights_.size() &&
                s.cell_mode_stds_.size() == s.cell_mode_weights_.size(),
            ErrorCode::FormatError, "sampler mode location tables do not match");
    require(s.cell_probs_.size() == s.cell_count() && s.normalizers_.size() == s.continuous_.size() &&
                s.cell_mode_weights_.size() == s.cell_count() * s.continuous_.size() &&
                s.marginal_counts_.size() == s.categorical_.size(),
            ErrorCode::FormatError, "sampler tables do not match schema");
  }

 private:
  void build_columns() {
    columns_.clear();
    categorical_.clear();
    continuous_.clear();
    auto add = [&](const ColumnSpec& spec) {
      const std::size_t idx = columns_.size();
      columns_.push_back(Column{spec.name, spec.is_categorical(), spec.cardinality()});
      (spec.is_categorical() ? categorical_ : continuous_).push_back(idx);
    };
    for (const auto& f : schema_.features) add(f);
    add(schema_.arm);
    add(schema_.outcome);
  }

  std::optional<Bounds> bounds_of(std::size_t flat_index) const {
    if (flat_index < schema_.features.size()) return schema_.features[flat_index].bounds;
    if (flat_index == schema_.features.size() + 1)
      return schema_.outcome.bounds ? schema_.outcome.bounds : std::optional<Bounds>(Bounds{0.0, 1.0});
    return std::nullopt;
  }

  const ColumnSpec& spec_of(std::size_t flat_index) const {
    if (flat_index < schema_.features.size()) return schema_.features[flat_index];
    return flat_index == schema_.features.size() ? schema_.arm : schema_.outcome;
  }

  std::string category_label(std::size_t c, std::size_t v) const { return spec_of(categorical_[c]).categories.at(v); }

  std::vector<double> flatten(const Row& row) const {
    std::vector<double> flat(row.values);
    flat.push_back(static_cast<double>(row.arm));
    flat.push_back(row.outcome);
    return flat;
  }

  std::size_t cell_index(const std::vector<double>& flat) const {
    std::size_t idx = 0;
    for (auto c : categorical_) idx = idx * columns_[c].cardinality + category_of(flat[c]);
    return idx;
  }

  std::size_t cell_category(std::size_t cell, std::size_t c) const {
    for (std::size_t k = categorical_.size(); k-- > c + 1;) cell /= columns_[categorical_[k]].cardinality;
    return cell % columns_[categorical_[c]].cardinality;
  }

  /// Condition -> (categorical slot, value index) pairs; throws InvalidCondition.
  std::vector<std::pair<std::size_t, std::size_t>> resolve(const Condition& condition) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& [name, value] : condition) {
      std::optional<std::size_t> slot;
      for (std::size_t c = 0; c < categorical_.size(); ++c)
        if (columns_[categorical_[c]].name == name) slot = c;
      require(slot.has_value(), ErrorCode::InvalidCondition, "'" + name + "' is not a categorical column");
      const auto v = spec_of(categorical_[*slot]).category_index(value);
      require(v.has_value(), ErrorCode::InvalidCondition, "'" + value + "' is not a category of '" + name + "'");
      out.emplace_back(*slot, *v);
    }
    return out;
  }

  bool matches(std::size_t cell, const std::vector<std::pair<std::size_t, std::size_t>>& given) const {
    for (const auto& [c, v] : given)
      if (cell_category(cell, c) != v) return false;
    return true;
  }

  Schema schema_;
  double smoothing_ = 0.5;
  std::vector<Column> columns_;
  std::vector<std::size_t> categorical_;  // indices into columns_
  std::vector<std::size_t> continuous_;   // indices into columns_
  std::vector<std::vector<double>> marginal_counts_;
  std::vector<double> cell_probs_;
  std::vector<ModeNormalizer> normalizers_;
  std::vector<std::vector<double>> cell_mode_weights_;  // [cell * n_continuous + c]
  std::vector<std::vector<double>> cell_mode_means_;    // same layout, per-cell mode locations
  std::vector<std::vector<double>> cell_mode_stds_;
};

inline ConditionalSampler fit_sampler(const Dataset& data, std::size_t max_modes, double smoothing,
                                      std::uint64_t seed) {
  return ConditionalSampler::fit(data, SamplerOptions{max_modes, smoothing, seed});
}

inline Dataset sample(const ConditionalSampler& sampler, std::size_t n, const Condition& condition,
                      std::uint64_t seed) {
  return sampler.sample(n, condition, seed);
}

// ---------------------------------------------------------------------------
// Two-sample classifier test

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// ROC over all distinct score thresholds (descending), starting at (0,0) and
/// ending at (1,1); AUC by the trapezoidal rule. Labels are 1 = positive.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size() && !scores.empty(), ErrorCode::DimensionMismatch, "roc inputs");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double pos = 0.0, neg = 0.0;
  for (int l : labels) (l ? pos : neg) += 1.0;
  require(pos > 0 && neg > 0, ErrorCode::InvalidArgument, "roc needs both classes");
  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t p = 0; p < order.size();) {
    const double s = scores[order[p]];
    while (p < order.size() && scores[order[p]] == s) {
      (labels[order[p]] ? tp : fp) += 1.0;
      ++p;
    }
    roc.points.push_back({fp / neg, tp / pos});
  }
  for (std::size_t i = 1; i < roc.points.size(); ++i)
    roc.auc += (roc.points[i].fpr - roc.points[i - 1].fpr) * 0.5 * (roc.points[i].tpr + roc.points[i - 1].tpr);
  return roc;
}

struct TwoSampleReport {
  double auc = 0.5;
  std::vector<RocPoint> roc_points;
  std::size_t n_real = 0;
  std::size_t n_synth = 0;
  std::string classifier_config;
};

/// Raw feature matrix for the classifier: every column (features, arm,
/// outcome) as one numeric feature; categorical columns by category index.
inline Eigen::MatrixXd raw_feature_matrix(const Dataset& data) {
  const auto cols = static_cast<Eigen::Index>(data.schema.features.size() + 2);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(data.size()), cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.rows[i];
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < r.values.size(); ++j) X(row, static_cast<Eigen::Index>(j)) = r.values[j];
    X(row, cols - 2) = static_cast<double>(r.arm);
    X(row, cols - 1) = r.outcome;
  }
  return X;
}

struct TwoSampleOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 6;
  double split = 0.7;
  std::uint64_t seed = 0;
};

/// Real rows labelled 1, synthetic rows 0; a bagged-tree classifier trained
/// on a `split` fraction of the pooled shuffled rows and scored on the rest.
inline TwoSampleReport two_sample_auc(const Dataset& real, const Dataset& synth, const TwoSampleOptions& opt = {}) {
  require(!real.rows.empty() && !synth.rows.empty(), ErrorCode::InvalidArgument, "two-sample test on empty data");
  require(real.schema == synth.schema, ErrorCode::SchemaMismatch, "real and synthetic schemas differ");
  require(opt.split > 0.0 && opt.split < 1.0, ErrorCode::InvalidArgument, "split must be in (0,1)");
  const Eigen::MatrixXd Xr = raw_feature_matrix(real), Xs = raw_feature_matrix(synth);
  const Eigen::Index n = Xr.rows() + Xs.rows();
  Eigen::MatrixXd X(n, Xr.cols());
  X << Xr, Xs;
  Eigen::VectorXd y(n);
  y.head(Xr.rows()).setOnes();
  y.tail(Xs.rows()).setZero();

  // Stratified split: both samples are cut by one shared permutation, so row i
  // of each side lands in the same partition (an exact copy stays paired).
  const std::size_t nr = real.size(), ns = synth.size();
  std::vector<std::size_t> perm(std::max(nr, ns));
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(opt.seed, "two-sample-split");
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  std::vector<Eigen::Index> train_idx, test_idx;
  const auto cut = [&](std::size_t side_n, Eigen::Index offset) {
    auto k = static_cast<std::size_t>(std::llround(opt.split * static_cast<double>(side_n)));
    if (side_n >= 2) k = std::clamp<std::size_t>(k, 1, side_n - 1);
    std::size_t taken = 0;
    for (auto p : perm) {
      if (p >= side_n) continue;
      (taken++ < k ? train_idx : test_idx).push_back(offset + static_cast<Eigen::Index>(p));
    }
  };
  cut(nr, 0);
  cut(ns, static_cast<Eigen::Index>(nr));
  require(!train_idx.empty() && !test_idx.empty(), ErrorCode::InvalidArgument, "too few rows to split");

  Eigen::MatrixXd Xtrain(static_cast<Eigen::Index>(train_idx.size()), X.cols());
  Eigen::VectorXd ytrain(static_cast<Eigen::Index>(train_idx.size()));
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    Xtrain.row(static_cast<Eigen::Index>(i)) = X.row(train_idx[i]);
    ytrain[static_cast<Eigen::Index>(i)] = y[train_idx[i]];
  }
  BaggedTrees::Options fopt;
  fopt.n_trees = opt.n_trees;
  fopt.max_depth = opt.max_depth;
  fopt.seed = derive_seed(opt.seed, "two-sample-forest");
  const auto forest = BaggedTrees::fit(Xtrain, ytrain, fopt);

  std::vector<double> scores;
  std::vector<int> labels;
  for (auto i : test_idx) {
    scores.push_back(forest.predict(X.row(i).transpose()));
    labels.push_back(y[i] > 0.5 ? 1 : 0);
  }
  const auto roc = roc_curve(scores, labels);
  TwoSampleReport report;
  report.auc = roc.auc;
  report.roc_points = roc.points;
  report.n_real = real.size();
  report.n_synth = synth.size();
  report.classifier_config = "bagged_trees(n_trees=" + std::to_string(opt.n_trees) +
                             ",max_depth=" + std::to_string(opt.max_depth) +
                             ",split=" + detail::format_double(opt.split) + ")";
  return report;
}

}  // namespace banditlab
