#include <cmath>

#include "banditlab/casegen.hpp"
#include "banditlab/counterfactual.hpp"
#include "test_util.hpp"

using namespace banditlab;

namespace {

Schema two_arm_schema() {
  Schema s;
  s.features = {ColumnSpec::continuous("age", Bounds{0, 100}), ColumnSpec::categorical("kras", {"wild", "mutant"})};
  s.arm = ColumnSpec::categorical("arm", {"A", "B"});
  s.outcome = ColumnSpec::continuous("outcome", Bounds{0, 1});
  return s;
}

Dataset two_arm_data(std::size_t n, std::uint64_t seed, bool separable) {
  Rng rng = make_rng(seed, "test-two-arm");
  Dataset d{two_arm_schema(), {}};
  for (std::size_t i = 0; i < n; ++i) {
    Row r;
    r.values = {20.0 + 60.0 * uniform01(rng), uniform01(rng) < 0.5 ? 1.0 : 0.0};
    r.arm = separable ? static_cast<std::size_t>(r.values[1]) : uniform_index(rng, 2);
    r.outcome = uniform01(rng);
    d.rows.push_back(r);
  }
  return d;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = standard_normal(rng);
  return m;
}

}  // namespace

// ridge ----------------------------------------------------------------------

TEST(Ridge, IdentityDesign) {
  const Eigen::VectorXd theta =
      ridge_fit(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1.0, 2.0), std::nullopt, 1e-12);
  EXPECT_NEAR(theta[0], 1.0, 1e-9);
  EXPECT_NEAR(theta[1], 2.0, 1e-9);
}

TEST(Ridge, NormalEquationResidual) {
  Rng rng = make_rng(1, "test-ridge");
  const auto X = random_matrix(rng, 50, 5);
  const Eigen::VectorXd y = random_matrix(rng, 50, 1).col(0);
  const Eigen::VectorXd w = (random_matrix(rng, 50, 1).col(0).array().abs() + 0.1).matrix();
  const double lambda = 0.3;
  const auto theta = ridge_fit(X, y, w, lambda);
  const Eigen::VectorXd r =
      (X.transpose() * w.asDiagonal() * X + lambda * Eigen::MatrixXd::Identity(5, 5)) * theta -
      X.transpose() * w.cwiseProduct(y);
  EXPECT_LT(r.norm(), 1e-8);
}

TEST(Ridge, DoubledWeightEqualsDuplicatedRow) {
  Rng rng = make_rng(2, "test-ridge-dup");
  const auto X = random_matrix(rng, 20, 4);
  const Eigen::VectorXd y = random_matrix(rng, 20, 1).col(0);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(20);
  w[7] = 2.0;
  Eigen::MatrixXd Xd(21, 4);
  Xd << X, X.row(7);
  Eigen::VectorXd yd(21);
  yd << y, y[7];
  const auto a = ridge_fit(X, y, w, 0.5);
  const auto b = ridge_fit(Xd, yd, std::nullopt, 0.5);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ridge, RejectsBadInput) {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_CODE(ridge_fit(X, Eigen::Vector2d(1, 2), std::nullopt, 0.0), ErrorCode::InvalidArgument);
  EXPECT_CODE(ridge_fit(X, Eigen::Vector3d(1, 2, 3), std::nullopt, 1.0), ErrorCode::DimensionMismatch);
  EXPECT_CODE(ridge_fit(X, Eigen::Vector2d(1, NAN), std::nullopt, 1.0), ErrorCode::NonFinite);
}

// boosting -------------------------------------------------------------------

TEST(Boosting, FitsStepFunction) {
  Rng rng = make_rng(3, "test-boost");
  Eigen::MatrixXd X = random_matrix(rng, 200, 3);
  Eigen::VectorXd y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y[i] = X(i, 1) > 0.3 ? 1.0 : 0.0;
  const auto model = boosted_stumps_fit(X, y, std::nullopt, 50, 0.1);
  double mse = 0.0;
  for (Eigen::Index i = 0; i < 200; ++i) mse += std::pow(boosted_stumps_predict(model, X.row(i).transpose()) - y[i], 2);
  EXPECT_LT(mse / 200.0, 0.01);
  for (std::size_t r = 1; r < model.training_loss.size(); ++r)
    EXPECT_LE(model.training_loss[r], model.training_loss[r - 1] + 1e-12);
}

TEST(Boosting, ConstantTargetWithUnitRate) {
  Rng rng = make_rng(4, "test-boost-const");
  const auto X = random_matrix(rng, 30, 2);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(30, 0.7);
  const auto model = boosted_stumps_fit(X, y, std::nullopt, 1, 1.0);
  for (Eigen::Index i = 0; i < 30; ++i) EXPECT_NEAR(boosted_stumps_predict(model, X.row(i).transpose()), 0.7, 1e-12);
}

TEST(Boosting, RejectsBadOptions) {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
  EXPECT_CODE(boosted_stumps_fit(X, y, std::nullopt, 0, 0.1), ErrorCode::InvalidArgument);
  EXPECT_CODE(boosted_stumps_fit(X, y, std::nullopt, 5, 1.5), ErrorCode::InvalidArgument);
}

// propensity -----------------------------------------------------------------

TEST(Propensity, RandomizedAssignmentIsNearHalf) {
  const auto data = two_arm_data(2000, 5, false);
  const auto prop = fit_propensity(data, 1e-3, 2000, 1e-6);
  for (const auto& r : data.rows) EXPECT_NEAR(prop.probabilities(r)[0], 0.5, 0.05);
}

TEST(Propensity, SeparableAssignment) {
  const auto data = two_arm_data(400, 6, true);
  const auto prop = fit_propensity(data, 1e-3, 5000, 1e-6);
  for (const auto& r : data.rows) EXPECT_GE(prop.probabilities(r)[static_cast<Eigen::Index>(r.arm)], 0.9);
}

TEST(Propensity, SevenArmProbabilitiesSumToOne) {
  const auto data = CaseStudyGenerator().generate(1000, 7);
  const auto prop = fit_propensity(data, 1e-3, 500, 1e-6);
  Rng rng = make_rng(7, "test-prop-x");
  const auto d = static_cast<Eigen::Index>(prop.encoder().dimension());
  for (int i = 0; i < 100; ++i) {
    const auto p = prop.probabilities(ContextVector(random_matrix(rng, d, 1).col(0)));
    EXPECT_EQ(p.size(), 7);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_TRUE((p.array() >= 0.0).all());
  }
}

TEST(Propensity, ArmUnderrepresented) {
  auto data = two_arm_data(100, 8, false);
  for (auto& r : data.rows) r.arm = 0;
  data.rows[0].arm = 1;
  EXPECT_CODE(fit_propensity(data, 1e-3, 100, 1e-6), ErrorCode::ArmUnderrepresented);
}

// iptw -----------------------------------------------------------------------

TEST(Iptw, WeightsFollowTheDefinition) {
  const auto data = two_arm_data(50, 9, false);
  const auto enc = RowEncoder::standardized(data);
  const auto d = static_cast<Eigen::Index>(enc.dimension());
  const PropensityModel half(enc, {"A", "B"}, Eigen::MatrixXd::Zero(2, d), Eigen::VectorXd::Zero(2), 0.0, true, 0);
  const auto w = iptw(data, half, 1, 0.01);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_DOUBLE_EQ(w.weights[i], data.rows[i].arm == 1 ? 2.0 : 0.0);

  const PropensityModel rare(enc, {"A", "B"}, Eigen::MatrixXd::Zero(2, d),
                             Eigen::Vector2d(std::log(0.999), std::log(0.001)), 0.0, true, 0);
  const auto clipped = iptw(data, rare, 1, 0.01);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.rows[i].arm == 1) {
      EXPECT_NEAR(clipped.weights[i], 100.0, 1e-9);
    }
  EXPECT_DOUBLE_EQ(clipped.w_max(), 100.0);
  EXPECT_CODE(iptw(data, half, 1, 0.5), ErrorCode::InvalidArgument);
  EXPECT_CODE(iptw(data, half, 2, 0.01), ErrorCode::UnknownArm);
}

TEST(Iptw, ReducesConfoundingBias) {
  const CaseStudyGenerator gen(true);
  const auto truth = CaseStudyGenerator::population_means(100000, 10);
  const auto data = gen.generate(4000, 10);
  const auto prop = fit_propensity(data, 1e-3, 2000, 1e-6);
  double raw_err = 0.0, w_err = 0.0;
  const auto counts = data.arm_counts();
  for (std::size_t a = 0; a < 7; ++a) {
    double raw = 0.0;
    for (const auto& r : data.rows)
      if (r.arm == a) raw += r.outcome / static_cast<double>(counts[a]);
    raw_err += std::abs(raw - truth[static_cast<Eigen::Index>(a)]);
    w_err += std::abs(weighted_mean_outcome(data, iptw(data, prop, a, 0.01)) - truth[static_cast<Eigen::Index>(a)]);
  }
  EXPECT_LT(w_err, raw_err);
}

// T-learner ------------------------------------------------------------------

TEST(TLearner, ConstantArmIsPredictedExactly) {
  auto data = CaseStudyGenerator(false).generate(700, 11);
  for (auto& r : data.rows)
    if (r.arm == 0) r.outcome = 0.5;
  BaseLearnerConfig ridge;
  ridge.kind = BaseLearnerKind::Ridge;
  const auto oracle = fit_tlearner(data, std::nullopt, ridge, 1);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(oracle.predict(oracle.encoder().encode(data.rows[i]), 0), 0.5, 1e-6);
}

TEST(TLearner, RecoversLinearOutcome) {
  auto data = CaseStudyGenerator(false).generate(2000, 12);
  const auto enc = RowEncoder::fit(data);
  Rng rng = make_rng(12, "test-linear-outcome");
  for (auto& r : data.rows) {
    const auto x = enc.encode(r);
    const double arm_shift = 0.05 * static_cast<double>(r.arm);
    r.outcome = std::clamp(0.3 + arm_shift + 0.4 * x[0] + 0.4 * x[1] + 0.15 * x[6] + 0.05 * standard_normal(rng), 0.0, 1.0);
  }
  Dataset train{data.schema, {data.rows.begin(), data.rows.begin() + 1500}};
  Dataset test{data.schema, {data.rows.begin() + 1500, data.rows.end()}};
  BaseLearnerConfig ridge;
  ridge.kind = BaseLearnerKind::Ridge;
  const auto oracle = fit_tlearner(train, std::nullopt, ridge, enc);
  double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
  for (const auto& r : test.rows) mean += r.outcome / static_cast<double>(test.size());
  for (const auto& r : test.rows) {
    ss_res += std::pow(oracle.predict(enc.encode(r), r.arm) - r.outcome, 2);
    ss_tot += std::pow(r.outcome - mean, 2);
  }
  EXPECT_GE(1.0 - ss_res / ss_tot, 0.9);
}

TEST(TLearner, ClampsAndAgreesWithPredictAll) {
  const auto data = two_arm_data(100, 13, false);
  const auto enc = RowEncoder::fit(data);
  const auto d = static_cast<Eigen::Index>(enc.dimension());
  const TLearnerOracle oracle(enc, {"A", "B"},
                              {RidgeModel{1.3, Eigen::VectorXd::Zero(d)}, RidgeModel{-0.2, Eigen::VectorXd::Zero(d)}},
                              BaseLearnerConfig{});
  const auto x = enc.encode(data.rows[0]);
  EXPECT_EQ(oracle.predict(x, 0), 1.0);
  EXPECT_EQ(oracle.predict(x, 1), 0.0);
  const auto all = predict_all(oracle, x);
  ASSERT_EQ(all.size(), 2);
  EXPECT_EQ(all[0], predict(oracle, x, 0));
  EXPECT_EQ(all[1], predict(oracle, x, 1));
  EXPECT_CODE(oracle.predict(x, 2), ErrorCode::UnknownArm);
}

TEST(TLearner, ArgmaxMatchesGeneratorTruth) {
  const CaseStudyGenerator gen(false);
  const auto data = gen.generate(6000, 14);
  const auto oracle = fit_tlearner(data, std::nullopt, BaseLearnerConfig{}, 14);
  const auto test = gen.generate(500, 15);
  std::size_t hits = 0;
  for (const auto& r : test.rows) {
    Eigen::VectorXd truth(7);
    for (std::size_t a = 0; a < 7; ++a) truth[static_cast<Eigen::Index>(a)] = CaseStudyGenerator::expected_outcome(r, a);
    Eigen::Index best_true = 0, best_pred = 0;
    truth.maxCoeff(&best_true);
    oracle.predict_all(oracle.encoder().encode(r)).maxCoeff(&best_pred);
    hits += best_true == best_pred;
  }
  EXPECT_GE(static_cast<double>(hits) / 500.0, 0.8);
}

// Same check with raw standardized features; separates learner error from
// what the scalar mode encoding discards.
TEST(TLearner, ArgmaxMatchesGeneratorTruthStandardized) {
  const CaseStudyGenerator gen(false);
  const auto data = gen.generate(6000, 14);
  const auto oracle = fit_tlearner(data, std::nullopt, BaseLearnerConfig{}, RowEncoder::standardized(data));
  const auto test = gen.generate(500, 15);
  std::size_t hits = 0;
  for (const auto& r : test.rows) {
    Eigen::VectorXd truth(7);
    for (std::size_t a = 0; a < 7; ++a) truth[static_cast<Eigen::Index>(a)] = CaseStudyGenerator::expected_outcome(r, a);
    Eigen::Index best_true = 0, best_pred = 0;
    truth.maxCoeff(&best_true);
    oracle.predict_all(oracle.encoder().encode(r)).maxCoeff(&best_pred);
    hits += best_true == best_pred;
  }
  EXPECT_GE(static_cast<double>(hits) / 500.0, 0.8);
}

TEST(TLearner, ArmUnderrepresented) {
  auto data = CaseStudyGenerator(false).generate(300, 16);
  std::size_t kept = 0;
  for (auto& r : data.rows)
    if (r.arm == 3 && ++kept > 5) r.arm = 2;
  EXPECT_CODE(fit_tlearner(data, std::nullopt, BaseLearnerConfig{}, 1), ErrorCode::ArmUnderrepresented);
}

TEST(TLearner, JsonRoundTripForEveryBaseLearner) {
  const auto data = CaseStudyGenerator(false).generate(400, 17);
  for (auto kind : {BaseLearnerKind::Ridge, BaseLearnerKind::KernelRidge, BaseLearnerKind::BoostedStumps}) {
    BaseLearnerConfig base;
    base.kind = kind;
    base.rounds = 20;
    const auto oracle = fit_tlearner(data, std::nullopt, base, 2);
    const nlohmann::json j = oracle;
    const auto back = nlohmann::json::parse(j.dump()).get<TLearnerOracle>();
    for (std::size_t i = 0; i < 20; ++i) {
      const auto x = oracle.encoder().encode(data.rows[i]);
      EXPECT_EQ(oracle.predict_all(x), back.predict_all(x));
    }
    ASSERT_EQ(back.diagnostics().size(), 7u);
  }
}

TEST(TLearner, ZeroWeightEqualsDroppingTheRow) {
  const auto data = CaseStudyGenerator(false).generate(600, 18);
  const auto enc = RowEncoder::fit(data);
  std::vector<WeightVector> w(7);
  Dataset kept{data.schema, {}};
  for (std::size_t a = 0; a < 7; ++a) w[a].target_arm = a;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool keep = i % 3 != 0;
    for (std::size_t a = 0; a < 7; ++a) w[a].weights.push_back(data.rows[i].arm == a && keep ? 1.0 : 0.0);
    if (keep) kept.rows.push_back(data.rows[i]);
  }
  BaseLearnerConfig ridge;
  ridge.kind = BaseLearnerKind::Ridge;
  const auto weighted = fit_tlearner(data, w, ridge, enc);
  const auto subset = fit_tlearner(kept, std::nullopt, ridge, enc);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto x = enc.encode(data.rows[i]);
    EXPECT_LT((weighted.predict_all(x) - subset.predict_all(x)).cwiseAbs().maxCoeff(), 1e-9);
  }
}
