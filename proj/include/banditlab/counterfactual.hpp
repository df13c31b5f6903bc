#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "json.hpp"
#include "random.hpp"
#include "tabular.hpp"
#include "trees.hpp"
#include "vgm.hpp"

namespace banditlab {

// ---------------------------------------------------------------------------
// Ridge

/// Solves (X^T W X + lambda I) theta = X^T W y by Cholesky.
inline Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const std::optional<Eigen::VectorXd>& w, double lambda) {
  require(lambda > 0.0, ErrorCode::InvalidArgument, "ridge lambda must be > 0");
  require(X.rows() == y.size(), ErrorCode::DimensionMismatch, "ridge design/target sizes");
  require(!w || w->size() == y.size(), ErrorCode::DimensionMismatch, "ridge weight size");
  require(X.allFinite() && y.allFinite() && (!w || w->allFinite()), ErrorCode::NonFinite, "ridge input");
  Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(X.cols(), X.cols()) * lambda;
  Eigen::VectorXd rhs;
  if (w) {
    gram.noalias() += X.transpose() * w->asDiagonal() * X;
    rhs = X.transpose() * (w->cwiseProduct(y));
  } else {
    gram.noalias() += X.transpose() * X;
    rhs = X.transpose() * y;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("ridge normal matrix is not positive definite");
  return llt.solve(rhs);
}

// ---------------------------------------------------------------------------
// Base learners

enum class BaseLearnerKind { Ridge, KernelRidge, BoostedStumps };

inline std::string_view to_string(BaseLearnerKind k) {
  switch (k) {
    case BaseLearnerKind::Ridge: return "ridge";
    case BaseLearnerKind::KernelRidge: return "kernel_ridge";
    case BaseLearnerKind::BoostedStumps: return "boosted_stumps";
  }
  return "?";
}

inline BaseLearnerKind parse_base_learner(const std::string& name) {
  if (name == "ridge") return BaseLearnerKind::Ridge;
  if (name == "kernel_ridge") return BaseLearnerKind::KernelRidge;
  if (name == "boosted_stumps") return BaseLearnerKind::BoostedStumps;
  throw Error(ErrorCode::UnknownParameter, "base learner '" + name + "'");
}

struct BaseLearnerConfig {
  BaseLearnerKind kind = BaseLearnerKind::BoostedStumps;
  double ridge_lambda = 1e-3;
  double kernel_gamma = 0.5;
  std::size_t rounds = 200;
  double learning_rate = 0.1;
  std::size_t stumps_per_round = 1;

  void validate() const {
    require(ridge_lambda > 0.0, ErrorCode::InvalidArgument, "ridge lambda must be > 0");
    require(kernel_gamma > 0.0, ErrorCode::InvalidArgument, "kernel gamma must be > 0");
    require(rounds >= 1, ErrorCode::InvalidArgument, "boosting rounds must be >= 1");
    require(learning_rate > 0.0 && learning_rate <= 1.0, ErrorCode::InvalidArgument, "learning rate in (0,1]");
  }
};

/// Ridge with an unpenalized intercept (fit on weighted-centered data).
struct RidgeModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const { return intercept + coefficients.dot(x); }
};

/// RBF kernel ridge around the weighted mean outcome.
struct KernelRidgeModel {
  double intercept = 0.0;
  double gamma = 0.5;
  Eigen::MatrixXd support;  // one row per training point
  Eigen::VectorXd dual;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double f = intercept;
    for (Eigen::Index i = 0; i < support.rows(); ++i)
      f += dual[i] * std::exp(-gamma * (support.row(i).transpose() - x).squaredNorm());
    return f;
  }
};

using ArmModel = std::variant<RidgeModel, KernelRidgeModel, BoostedStumps>;

inline double predict_raw(const ArmModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return std::visit([&](const auto& model) { return model.predict(x); }, m);
}

inline ArmModel fit_base_learner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                 const BaseLearnerConfig& cfg) {
  cfg.validate();
  const double wsum = w.sum();
  require(wsum > 0.0, ErrorCode::InvalidArgument, "base learner weights sum to zero");
  switch (cfg.kind) {
    case BaseLearnerKind::Ridge: {
      const Eigen::RowVectorXd x_mean = (w.transpose() * X) / wsum;
      const double y_mean = w.dot(y) / wsum;
      const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
      const Eigen::VectorXd yc = y.array() - y_mean;
      RidgeModel m;
      m.coefficients = ridge_fit(Xc, yc, w, cfg.ridge_lambda);
      m.intercept = y_mean - x_mean.dot(m.coefficients);
      return m;
    }
    case BaseLearnerKind::KernelRidge: {
      KernelRidgeModel m;
      m.gamma = cfg.kernel_gamma;
      m.intercept = w.dot(y) / wsum;
      m.support = X;
      const Eigen::Index n = X.rows();
      Eigen::MatrixXd K(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
          K(i, j) = K(j, i) = std::exp(-cfg.kernel_gamma * (X.row(i) - X.row(j)).squaredNorm());
      // weighted loss sum_i w_i (y_i - f_i)^2 + lambda |f|^2  =>  (K + lambda W^-1) alpha = y - mean
      for (Eigen::Index i = 0; i < n; ++i) K(i, i) += cfg.ridge_lambda / std::max(w[i], 1e-12);
      Eigen::LLT<Eigen::MatrixXd> llt(K);
      if (llt.info() != Eigen::Success) throw NumericalError("kernel ridge system is not positive definite");
      m.dual = llt.solve((y.array() - m.intercept).matrix());
      return m;
    }
    case BaseLearnerKind::BoostedStumps:
      return boosted_stumps_fit(X, y, w, cfg.rounds, cfg.learning_rate, cfg.stumps_per_round);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown base learner");
}

// ---------------------------------------------------------------------------
// Propensity

struct PropensityOptions {
  double lambda = 1e-3;
  std::size_t max_iter = 2000;
  double tol = 1e-6;
};

/// Multinomial logistic model P(T = t | x) over encoded contexts.
class PropensityModel {
 public:
  PropensityModel() = default;
  PropensityModel(RowEncoder encoder, std::vector<std::string> arms, Eigen::MatrixXd coef, Eigen::VectorXd bias,
                  double lambda, bool converged, std::size_t iterations)
      : encoder_(std::move(encoder)), arms_(std::move(arms)), coef_(std::move(coef)), bias_(std::move(bias)),
        lambda_(lambda), converged_(converged), iterations_(iterations) {}

  const RowEncoder& encoder() const { return encoder_; }
  const std::vector<std::string>& arms() const { return arms_; }
  std::size_t arm_count() const { return arms_.size(); }
  double lambda() const { return lambda_; }
  bool converged() const { return converged_; }
  std::size_t iterations() const { return iterations_; }

  Eigen::VectorXd probabilities(const ContextVector& x) const {
    Eigen::VectorXd z = coef_ * x + bias_;
    z.array() -= z.maxCoeff();
    z = z.array().exp();
    return z / z.sum();
  }

  Eigen::VectorXd probabilities(const Row& row) const { return probabilities(encoder_.encode(row)); }

 private:
  RowEncoder encoder_;
  std::vector<std::string> arms_;
  Eigen::MatrixXd coef_;  // K x d
  Eigen::VectorXd bias_;  // K
  double lambda_ = 0.0;
  bool converged_ = false;
  std::size_t iterations_ = 0;
};

inline void require_arm_counts(const Dataset& data, std::size_t minimum) {
  const auto counts = data.arm_counts();
  for (std::size_t a = 0; a < counts.size(); ++a)
    require(counts[a] >= minimum, ErrorCode::ArmUnderrepresented,
            "arm '" + data.schema.arm.categories[a] + "' has " + std::to_string(counts[a]) + " rows, needs " +
                std::to_string(minimum));
}

/// Fits by accelerated gradient ascent on the L2-penalized mean log-likelihood
/// (bias unpenalized). Stops when the gradient norm drops below tol.
inline PropensityModel fit_propensity(const Dataset& data, const RowEncoder& encoder,
                                      const PropensityOptions& opt = {}) {
  require_arm_counts(data, 5);
  require(opt.lambda >= 0.0 && opt.tol > 0.0, ErrorCode::InvalidArgument, "propensity options");
  const Eigen::MatrixXd X = encoder.encode_all(data);
  const Eigen::Index n = X.rows(), d = X.cols();
  const auto K = static_cast<Eigen::Index>(data.schema.arm_count());
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, static_cast<Eigen::Index>(data.rows[static_cast<std::size_t>(i)].arm)) = 1.0;

  // parameters packed as (d + 1) x K, last row = bias
  Eigen::MatrixXd Xb(n, d + 1);
  Xb << X, Eigen::VectorXd::Ones(n);
  const double lipschitz =
      0.5 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Xb.transpose() * Xb / static_cast<double>(n),
                                                           Eigen::EigenvaluesOnly)
                .eigenvalues()
                .maxCoeff() +
      opt.lambda;
  const double step = 1.0 / lipschitz;

  const auto gradient = [&](const Eigen::MatrixXd& W) {
    Eigen::MatrixXd Z = Xb * W;
    for (Eigen::Index i = 0; i < n; ++i) {
      Z.row(i).array() -= Z.row(i).maxCoeff();
      Z.row(i) = Z.row(i).array().exp();
      Z.row(i) /= Z.row(i).sum();
    }
    Eigen::MatrixXd G = Xb.transpose() * (Y - Z) / static_cast<double>(n);
    G.topRows(d) -= opt.lambda * W.topRows(d);
    return G;
  };

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d + 1, K), V = W;
  double t = 1.0;
  bool converged = false;
  std::size_t iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    const Eigen::MatrixXd G = gradient(W);
    if (G.norm() < opt.tol) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd GV = gradient(V);
    const Eigen::MatrixXd W_next = V + step * GV;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // restart momentum when the step points against the gradient
    if ((W_next - W).cwiseProduct(G).sum() < 0.0) {
      V = W_next;
      t = 1.0;
    } else {
      V = W_next + ((t - 1.0) / t_next) * (W_next - W);
      t = t_next;
    }
    W = W_next;
  }
  if (!W.allFinite()) throw NumericalError("propensity fit diverged");
  return PropensityModel(encoder, data.schema.arm.categories, W.topRows(d).transpose(), W.row(d).transpose(),
                         opt.lambda, converged, iter);
}

/// Propensity over standardized features: the logit stays linear in each raw
/// continuous value, which the mode-specific encoding does not allow.
inline PropensityModel fit_propensity(const Dataset& data, double lambda, std::size_t max_iter, double tol) {
  return fit_propensity(data, RowEncoder::standardized(data), PropensityOptions{lambda, max_iter, tol});
}

// ---------------------------------------------------------------------------
// IPTW

struct WeightVector {
  std::vector<double> weights;
  std::size_t target_arm = 0;
  double e_min = 0.01;
  double w_max() const { return 1.0 / e_min; }
};

inline WeightVector iptw(const Dataset& data, const PropensityModel& prop, std::size_t target_arm, double e_min) {
  require(e_min > 0.0 && e_min < 0.5, ErrorCode::InvalidArgument, "e_min must be in (0, 0.5)");
  require(target_arm < data.schema.arm_count(), ErrorCode::UnknownArm, "target arm out of range");
  WeightVector w;
  w.target_arm = target_arm;
  w.e_min = e_min;
  w.weights.reserve(data.size());
  for (const auto& row : data.rows) {
    if (row.arm != target_arm) {
      w.weights.push_back(0.0);
      continue;
    }
    const double e = prop.probabilities(row)[static_cast<Eigen::Index>(target_arm)];
    w.weights.push_back(1.0 / std::max(e, e_min));
  }
  return w;
}

/// Normalized (Hajek) weighted mean outcome of the rows with positive weight.
inline double weighted_mean_outcome(const Dataset& data, const WeightVector& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    num += w.weights[i] * data.rows[i].outcome;
    den += w.weights[i];
  }
  require(den > 0.0, ErrorCode::InvalidArgument, "all weights are zero");
  return num / den;
}

// ---------------------------------------------------------------------------
// T-learner

struct ArmDiagnostics {
  std::string arm;
  std::size_t n_rows = 0;
  double holdout_mse = 0.0;
};

class TLearnerOracle {
 public:
  static constexpr int kFormatVersion = 1;

  TLearnerOracle() = default;
  TLearnerOracle(RowEncoder encoder, std::vector<std::string> arms, std::vector<ArmModel> models,
                 BaseLearnerConfig base, std::vector<ArmDiagnostics> diagnostics = {})
      : encoder_(std::move(encoder)), arms_(std::move(arms)), models_(std::move(models)), base_(base),
        diagnostics_(std::move(diagnostics)) {
    require(arms_.size() == models_.size() && !arms_.empty(), ErrorCode::InvalidArgument,
            "one regressor per arm required");
  }

  const RowEncoder& encoder() const { return encoder_; }
  const std::vector<std::string>& arms() const { return arms_; }
  std::size_t arm_count() const { return arms_.size(); }
  const BaseLearnerConfig& base() const { return base_; }
  const std::vector<ArmDiagnostics>& diagnostics() const { return diagnostics_; }
  const ArmModel& model(std::size_t arm) const { return models_.at(arm); }

  double predict(const ContextVector& x, std::size_t arm) const {
    require(arm < models_.size(), ErrorCode::UnknownArm, "arm index " + std::to_string(arm));
    return std::clamp(predict_raw(models_[arm], x), 0.0, 1.0);
  }

  Eigen::VectorXd predict_all(const ContextVector& x) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(models_.size()));
    for (std::size_t a = 0; a < models_.size(); ++a) out[static_cast<Eigen::Index>(a)] = predict(x, a);
    return out;
  }

  friend void to_json(nlohmann::json& j, const TLearnerOracle& o);
  friend void from_json(const nlohmann::json& j, TLearnerOracle& o);

 private:
  RowEncoder encoder_;
  std::vector<std::string> arms_;
  std::vector<ArmModel> models_;
  BaseLearnerConfig base_;
  std::vector<ArmDiagnostics> diagnostics_;
};

inline double predict(const TLearnerOracle& oracle, const ContextVector& x, std::size_t arm) {
  return oracle.predict(x, arm);
}

inline Eigen::VectorXd predict_all(const TLearnerOracle& oracle, const ContextVector& x) {
  return oracle.predict_all(x);
}

/// Fits one regressor per arm on that arm's rows only. With weights, arm t's
/// regressor minimizes the weights[t]-weighted squared error. Diagnostics
/// hold out every fifth row of the arm for an MSE estimate before refitting
/// on all rows.
inline TLearnerOracle fit_tlearner(const Dataset& data, const std::optional<std::vector<WeightVector>>& weights,
                                   const BaseLearnerConfig& base, const RowEncoder& encoder) {
  base.validate();
  require_arm_counts(data, 10);
  const std::size_t K = data.schema.arm_count();
  require(!weights || weights->size() == K, ErrorCode::InvalidArgument, "one weight vector per arm required");
  const Eigen::MatrixXd X = encoder.encode_all(data);

  std::vector<ArmModel> models;
  std::vector<ArmDiagnostics> diags;
  for (std::size_t a = 0; a < K; ++a) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.rows[i].arm == a) rows.push_back(static_cast<Eigen::Index>(i));
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd Xa(n, X.cols());
    Eigen::VectorXd ya(n), wa(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto i = rows[static_cast<std::size_t>(r)];
      Xa.row(r) = X.row(i);
      ya[r] = data.rows[static_cast<std::size_t>(i)].outcome;
      wa[r] = weights ? (*weights)[a].weights[static_cast<std::size_t>(i)] : 1.0;
    }
    require(wa.minCoeff() >= 0.0 && wa.sum() > 0.0, ErrorCode::InvalidArgument,
            "arm " + data.schema.arm.categories[a] + ": weights must be >= 0 with a positive sum");

    std::vector<Eigen::Index> train, hold;
    for (Eigen::Index r = 0; r < n; ++r) (r % 5 == 4 ? hold : train).push_back(r);
    const auto take = [](const auto& M, const std::vector<Eigen::Index>& idx) {
      using M_t = std::decay_t<decltype(M)>;
      M_t out(static_cast<Eigen::Index>(idx.size()), M.cols());
      for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = M.row(idx[k]);
      return out;
    };
    const auto held_model = fit_base_learner(take(Xa, train), take(Eigen::MatrixXd(ya), train).col(0),
                                             take(Eigen::MatrixXd(wa), train).col(0), base);
    double mse = 0.0;
    for (auto r : hold) {
      const double e = std::clamp(predict_raw(held_model, Xa.row(r).transpose()), 0.0, 1.0) - ya[r];
      mse += e * e;
    }
    mse /= static_cast<double>(std::max<std::size_t>(1, hold.size()));

    models.push_back(fit_base_learner(Xa, ya, wa, base));
    diags.push_back(ArmDiagnostics{data.schema.arm.categories[a], rows.size(), mse});
  }
  return TLearnerOracle(encoder, data.schema.arm.categories, std::move(models), base, std::move(diags));
}

inline TLearnerOracle fit_tlearner(const Dataset& data, const std::optional<std::vector<WeightVector>>& weights,
                                   const BaseLearnerConfig& base, std::uint64_t seed) {
  VgmOptions vopt;
  vopt.seed = seed;
  return fit_tlearner(data, weights, base, RowEncoder::fit(data, vopt));
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const BaseLearnerConfig& c) {
  j = nlohmann::json{{"kind", std::string(to_string(c.kind))}, {"ridge_lambda", c.ridge_lambda},
                     {"kernel_gamma", c.kernel_gamma},        {"rounds", c.rounds},
                     {"learning_rate", c.learning_rate},      {"stumps_per_round", c.stumps_per_round}};
}

inline void from_json(const nlohmann::json& j, BaseLearnerConfig& c) {
  c = BaseLearnerConfig{};
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") c.kind = parse_base_learner(value.get<std::string>());
    else if (key == "ridge_lambda") c.ridge_lambda = value.get<double>();
    else if (key == "kernel_gamma") c.kernel_gamma = value.get<double>();
    else if (key == "rounds") c.rounds = value.get<std::size_t>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "stumps_per_round") c.stumps_per_round = value.get<std::size_t>();
    else throw Error(ErrorCode::UnknownParameter, "base learner key '" + key + "'");
  }
  c.validate();
}

namespace detail {

inline nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const TLearnerOracle& o) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : o.models_) {
    if (const auto* r = std::get_if<RidgeModel>(&m)) {
      models.push_back({{"kind", "ridge"}, {"intercept", r->intercept},
                        {"coefficients", detail::vector_json(r->coefficients)}});
    } else if (const auto* k = std::get_if<KernelRidgeModel>(&m)) {
      nlohmann::json support = nlohmann::json::array();
      for (Eigen::Index i = 0; i < k->support.rows(); ++i)
        support.push_back(detail::vector_json(k->support.row(i).transpose()));
      models.push_back({{"kind", "kernel_ridge"}, {"intercept", k->intercept}, {"gamma", k->gamma},
                        {"support", support}, {"dual", detail::vector_json(k->dual)}});
    } else {
      nlohmann::json s = std::get<BoostedStumps>(m);
      s["kind"] = "boosted_stumps";
      models.push_back(s);
    }
  }
  nlohmann::json diags = nlohmann::json::array();
  for (const auto& d : o.diagnostics_)
    diags.push_back({{"arm", d.arm}, {"n_rows", d.n_rows}, {"holdout_mse", d.holdout_mse}});
  j = nlohmann::json{{"format", "banditlab.tlearner"}, {"version", TLearnerOracle::kFormatVersion},
                     {"encoder", o.encoder_},          {"arms", o.arms_},
                     {"base", o.base_},                {"models", models},
                     {"diagnostics", diags}};
}

inline void from_json(const nlohmann::json& j, TLearnerOracle& o) {
  require(j.value("format", "") == "banditlab.tlearner", ErrorCode::FormatError, "not a T-learner document");
  require(j.at("version").get<int>() == TLearnerOracle::kFormatVersion, ErrorCode::FormatError,
          "unsupported T-learner version");
  std::vector<ArmModel> models;
  for (const auto& m : j.at("models")) {
    const auto kind = m.at("kind").get<std::string>();
    if (kind == "ridge") {
      models.emplace_back(RidgeModel{m.at("intercept").get<double>(), detail::json_vector(m.at("coefficients"))});
    } else if (kind == "kernel_ridge") {
      KernelRidgeModel k;
      k.intercept = m.at("intercept").get<double>();
      k.gamma = m.at("gamma").get<double>();
      k.dual = detail::json_vector(m.at("dual"));
      const auto& sup = m.at("support");
      const auto dim = sup.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(sup.at(0).size());
      k.support.resize(static_cast<Eigen::Index>(sup.size()), dim);
      for (std::size_t i = 0; i < sup.size(); ++i)
        k.support.row(static_cast<Eigen::Index>(i)) = detail::json_vector(sup.at(i)).transpose();
      models.emplace_back(std::move(k));
    } else if (kind == "boosted_stumps") {
      models.emplace_back(m.get<BoostedStumps>());
    } else {
      throw Error(ErrorCode::FormatError, "unknown regressor kind '" + kind + "'");
    }
  }
  std::vector<ArmDiagnostics> diags;
  for (const auto& d : j.value("diagnostics", nlohmann::json::array()))
    diags.push_back(ArmDiagnostics{d.at("arm").get<std::string>(), d.at("n_rows").get<std::size_t>(),
                                   d.at("holdout_mse").get<double>()});
  o = TLearnerOracle(j.at("encoder").get<RowEncoder>(), j.at("arms").get<std::vector<std::string>>(),
                     std::move(models), j.at("base").get<BaseLearnerConfig>(), std::move(diags));
}

}  // namespace banditlab
