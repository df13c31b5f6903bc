#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "json.hpp"
#include "random.hpp"
#include "tabular.hpp"

namespace banditlab {

using ContextVector = Eigen::VectorXd;

struct VgmOptions {
  std::size_t max_modes = 5;
  double tol = 1e-6;
  std::size_t max_iter = 200;
  double prune_weight = 0.01;
  std::uint64_t seed = 0;
};

/// 1-D Gaussian mixture used for mode-specific normalization of one
/// continuous column.
struct ModeNormalizer {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> stds;
  double std_floor = 0.0;
  bool degenerate = false;
  /// Mean per-sample log-likelihood after each EM iteration of the selected fit.
  std::vector<double> log_likelihood_trace;

  std::size_t mode_count() const { return weights.size(); }

  double log_component_density(std::size_t k, double v) const {
    const double z = (v - means[k]) / stds[k];
    return std::log(weights[k]) - std::log(stds[k]) - 0.5 * std::log(2.0 * M_PI) - 0.5 * z * z;
  }

  /// Posterior mode probabilities for value v.
  std::vector<double> responsibilities(double v) const {
    std::vector<double> logp(mode_count());
    for (std::size_t k = 0; k < mode_count(); ++k) logp[k] = log_component_density(k, v);
    const double mx = *std::max_element(logp.begin(), logp.end());
    double total = 0.0;
    for (auto& l : logp) total += (l = std::exp(l - mx));
    for (auto& l : logp) l /= total;
    return logp;
  }

  std::size_t most_probable_mode(double v) const {
    std::size_t best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mode_count(); ++k) {
      const double lp = log_component_density(k, v);
      if (lp > best_lp) {
        best_lp = lp;
        best = k;
      }
    }
    return best;
  }

  /// (v - mu_k) / (4 sigma_k) for the most probable mode k, clamped to [-1, 1].
  double encode(double v) const {
    const auto k = most_probable_mode(v);
    return std::clamp((v - means[k]) / (4.0 * stds[k]), -1.0, 1.0);
  }
};

inline double decode_continuous(double normalized, std::size_t mode, const ModeNormalizer& n) {
  require(mode < n.mode_count(), ErrorCode::InvalidArgument, "mode index out of range");
  return n.means[mode] + 4.0 * n.stds[mode] * normalized;
}

namespace detail {

struct EmFit {
  std::vector<double> weights, means, stds;
  std::vector<double> trace;
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

inline EmFit run_em(std::span<const double> x, std::size_t m, double std_floor, const VgmOptions& opt, Rng rng) {
  const std::size_t n = x.size();
  EmFit fit;
  // k-means++ seeding of the means.
  fit.means.push_back(x[uniform_index(rng, n)]);
  std::vector<double> d2(n);
  while (fit.means.size() < m) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double mu : fit.means) best = std::min(best, (x[i] - mu) * (x[i] - mu));
      d2[i] = best;
    }
    fit.means.push_back(x[draw_weighted(rng, d2)]);
  }
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double init_std = std::max(std::sqrt(var / static_cast<double>(n)) / static_cast<double>(m), std_floor);
  fit.stds.assign(m, init_std);
  fit.weights.assign(m, 1.0 / static_cast<double>(m));

  Eigen::MatrixXd resp(n, m);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    // E step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < m; ++k) {
        const double z = (x[i] - fit.means[k]) / fit.stds[k];
        resp(i, k) = std::log(fit.weights[k]) - std::log(fit.stds[k]) - 0.5 * z * z;
        mx = std::max(mx, resp(i, k));
      }
      double total = 0.0;
      for (std::size_t k = 0; k < m; ++k) total += (resp(i, k) = std::exp(resp(i, k) - mx));
      resp.row(i) /= total;
      ll += mx + std::log(total) - 0.5 * std::log(2.0 * M_PI);
    }
    ll /= static_cast<double>(n);
    fit.trace.push_back(ll);
    fit.log_likelihood = ll;
    if (iter > 0 && ll - previous < opt.tol) break;
    previous = ll;
    // M step
    for (std::size_t k = 0; k < m; ++k) {
      const double nk = resp.col(k).sum();
      if (nk <= 1e-12) {
        fit.weights[k] = 1e-12;
        continue;
      }
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += resp(i, k) * x[i];
      mu /= nk;
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += resp(i, k) * (x[i] - mu) * (x[i] - mu);
      fit.weights[k] = nk / static_cast<double>(n);
      fit.means[k] = mu;
      fit.stds[k] = std::max(std::sqrt(v / nk), std_floor);
    }
    const double wsum = std::accumulate(fit.weights.begin(), fit.weights.end(), 0.0);
    for (auto& w : fit.weights) w /= wsum;
  }
  return fit;
}

}  // namespace detail

/// Fits the column mixture by EM. The mode count is chosen by BIC over
/// 1..max_modes; modes lighter than prune_weight are then dropped and the
/// remaining weights renormalized. A constant column yields a single flagged
/// mode with sigma = std_floor.
inline ModeNormalizer fit_vgm(std::span<const double> values, const VgmOptions& opt = {}) {
  require(!values.empty(), ErrorCode::InvalidArgument, "fit_vgm on an empty column");
  require(opt.max_modes >= 1, ErrorCode::InvalidArgument, "max_modes must be >= 1");
  require(opt.tol > 0.0, ErrorCode::InvalidArgument, "tol must be > 0");
  for (double v : values) require(std::isfinite(v), ErrorCode::NonFinite, "fit_vgm input");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;

  ModeNormalizer out;
  if (range == 0.0) {
    out.std_floor = 1e-6 * std::max(1.0, std::abs(*lo));
    out.weights = {1.0};
    out.means = {*lo};
    out.stds = {out.std_floor};
    out.degenerate = true;
    return out;
  }
  out.std_floor = 1e-6 * range;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct =
      static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  const std::size_t max_m = std::min(opt.max_modes, distinct);
  const double n = static_cast<double>(values.size());

  detail::EmFit best;
  double best_bic = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m <= max_m; ++m) {
    auto fit = detail::run_em(values, m, out.std_floor, opt, make_rng(opt.seed, "vgm", {m}));
    const double bic = -2.0 * fit.log_likelihood * n + static_cast<double>(3 * m - 1) * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best = std::move(fit);
    }
  }

  double kept = 0.0;
  for (std::size_t k = 0; k < best.weights.size(); ++k) {
    if (best.weights[k] < opt.prune_weight) continue;
    out.weights.push_back(best.weights[k]);
    out.means.push_back(best.means[k]);
    out.stds.push_back(best.stds[k]);
    kept += best.weights[k];
  }
  if (out.weights.empty()) {
    const auto k = static_cast<std::size_t>(
        std::max_element(best.weights.begin(), best.weights.end()) - best.weights.begin());
    out.weights = {1.0};
    out.means = {best.means[k]};
    out.stds = {best.stds[k]};
  } else {
    for (auto& w : out.weights) w /= kept;
  }
  out.log_likelihood_trace = std::move(best.trace);
  return out;
}

inline void to_json(nlohmann::json& j, const ModeNormalizer& n) {
  j = nlohmann::json{{"degenerate", n.degenerate}, {"means", n.means}, {"std_floor", n.std_floor},
                     {"stds", n.stds}, {"weights", n.weights}};
}

inline void from_json(const nlohmann::json& j, ModeNormalizer& n) {
  n = ModeNormalizer{};
  n.degenerate = j.at("degenerate").get<bool>();
  n.means = j.at("means").get<std::vector<double>>();
  n.std_floor = j.at("std_floor").get<double>();
  n.stds = j.at("stds").get<std::vector<double>>();
  n.weights = j.at("weights").get<std::vector<double>>();
  require(!n.weights.empty() && n.means.size() == n.weights.size() && n.stds.size() == n.weights.size(),
          ErrorCode::FormatError, "mode normalizer arrays disagree");
}

/// Maps feature values to the bandit context: one scalar per continuous
/// column (mode-normalized) followed by a one-hot block per categorical column,
/// in schema order.
class RowEncoder {
 public:
  RowEncoder() = default;

  RowEncoder(Schema schema, std::vector<std::optional<ModeNormalizer>> normalizers)
      : schema_(std::move(schema)), normalizers_(std::move(normalizers)) {
    require(normalizers_.size() == schema_.features.size(), ErrorCode::SchemaMismatch,
            "one normalizer slot per feature required");
    for (std::size_t j = 0; j < schema_.features.size(); ++j) {
      const bool needs = !schema_.features[j].is_categorical();
      require(needs == normalizers_[j].has_value(), ErrorCode::SchemaMismatch,
              "normalizer presence must match column kind for '" + schema_.features[j].name + "'");
    }
  }

  static RowEncoder fit(const Dataset& data, const VgmOptions& opt = {}) {
    std::vector<std::optional<ModeNormalizer>> norms(data.schema.features.size());
    for (std::size_t j = 0; j < data.schema.features.size(); ++j) {
      if (data.schema.features[j].is_categorical()) continue;
      std::vector<double> column;
      column.reserve(data.size());
      for (const auto& r : data.rows) column.push_back(r.values[j]);
      VgmOptions col_opt = opt;
      col_opt.seed = derive_seed(opt.seed, "vgm-column", {j});
      norms[j] = fit_vgm(column, col_opt);
    }
    return RowEncoder(data.schema, std::move(norms));
  }

  /// Single-Gaussian encoder: each continuous column becomes (v - mean) / (4 sd),
  /// clamped. Monotone in v, for linear models such as the propensity fit.
  static RowEncoder standardized(const Dataset& data) {
    require(!data.rows.empty(), ErrorCode::InvalidArgument, "standardized encoder on empty data");
    std::vector<std::optional<ModeNormalizer>> norms(data.schema.features.size());
    const double n = static_cast<double>(data.size());
    for (std::size_t j = 0; j < data.schema.features.size(); ++j) {
      if (data.schema.features[j].is_categorical()) continue;
      double mean = 0.0, var = 0.0;
      for (const auto& r : data.rows) mean += r.values[j];
      mean /= n;
      for (const auto& r : data.rows) var += (r.values[j] - mean) * (r.values[j] - mean);
      ModeNormalizer m;
      m.std_floor = 1e-6 * std::max(1.0, std::abs(mean));
      m.weights = {1.0};
      m.means = {mean};
      m.stds = {std::max(std::sqrt(var / n), m.std_floor)};
      m.degenerate = var == 0.0;
      norms[j] = std::move(m);
    }
    return RowEncoder(data.schema, std::move(norms));
  }

  const Schema& schema() const { return schema_; }
  const std::vector<std::optional<ModeNormalizer>>& normalizers() const { return normalizers_; }

  std::size_t dimension() const {
    std::size_t d = 0;
    for (const auto& c : schema_.features) d += c.is_categorical() ? c.cardinality() : 1;
    return d;
  }

  ContextVector encode(std::span<const double> values) const {
    require(values.size() == schema_.features.size(), ErrorCode::DimensionMismatch, "row arity");
    ContextVector x = ContextVector::Zero(static_cast<Eigen::Index>(dimension()));
    Eigen::Index pos = 0;
    for (std::size_t j = 0; j < schema_.features.size(); ++j) {
      if (!schema_.features[j].is_categorical()) x[pos++] = normalizers_[j]->encode(values[j]);
    }
    for (std::size_t j = 0; j < schema_.features.size(); ++j) {
      const auto& col = schema_.features[j];
      if (!col.is_categorical()) continue;
      x[pos + static_cast<Eigen::Index>(category_of(values[j]))] = 1.0;
      pos += static_cast<Eigen::Index>(col.cardinality());
    }
    return x;
  }

  ContextVector encode(const Row& row) const { return encode(row.values); }

  Eigen::MatrixXd encode_all(const Dataset& data) const {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(dimension()));
    for (std::size_t i = 0; i < data.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = encode(data.rows[i]).transpose();
    return X;
  }

 private:
  Schema schema_;
  std::vector<std::optional<ModeNormalizer>> normalizers_;
};

inline ContextVector encode_row(const Row& row, const RowEncoder& encoder) { return encoder.encode(row); }

inline void to_json(nlohmann::json& j, const RowEncoder& e) {
  nlohmann::json norms = nlohmann::json::array();
  for (const auto& n : e.normalizers()) norms.push_back(n ? nlohmann::json(*n) : nlohmann::json(nullptr));
  j = nlohmann::json{{"normalizers", norms}, {"schema", e.schema()}};
}

inline void from_json(const nlohmann::json& j, RowEncoder& e) {
  Schema schema = j.at("schema").get<Schema>();
  std::vector<std::optional<ModeNormalizer>> norms;
  for (const auto& n : j.at("normalizers")) {
    if (n.is_null()) norms.emplace_back();
    else norms.emplace_back(n.get<ModeNormalizer>());
  }
  e = RowEncoder(std::move(schema), std::move(norms));
}

}  // namespace banditlab
