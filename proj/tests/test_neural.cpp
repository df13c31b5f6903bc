#include <cmath>

#include "banditlab/neural.hpp"
#include "test_util.hpp"

using namespace banditlab;

namespace {

MlpSpec small_spec(double dropout = 0.0) { return MlpSpec{4, {8, 6}, {5}, 3, dropout}; }

ContextVector random_x(Rng& rng, std::size_t d) {
  ContextVector x(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = standard_normal(rng);
  return x;
}

}  // namespace

TEST(MlpInit, DeterministicPerSeed) {
  const auto a = Mlp::init(small_spec(), 11), b = Mlp::init(small_spec(), 11), c = Mlp::init(small_spec(), 12);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_NE(a.parameters(), c.parameters());
}

TEST(MlpInit, ZeroBiasesAndFanBound) {
  const auto m = Mlp::init(small_spec(), 3);
  auto check = [](const DenseLayer& l) {
    EXPECT_TRUE(l.bias.isZero(0.0));
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
  };
  for (const auto& l : m.trunk()) check(l);
  for (std::size_t a = 0; a < 3; ++a)
    for (const auto& l : m.head(a)) check(l);
  EXPECT_EQ(m.head(0).back().weight.rows(), 1);
}

TEST(MlpInit, RejectsBadSpec) {
  EXPECT_CODE(Mlp::init(MlpSpec{0, {4}, {}, 2, 0.0}, 0), ErrorCode::InvalidArgument);
  EXPECT_CODE(Mlp::init(MlpSpec{2, {4}, {}, 2, 1.0}, 0), ErrorCode::InvalidArgument);
}

TEST(MlpForward, ZeroDropoutMatchesDeterministic) {
  const auto m = Mlp::init(small_spec(0.0), 5);
  Rng rng = make_rng(1, "t");
  for (int i = 0; i < 20; ++i) {
    const auto x = random_x(rng, 4);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(m.forward(x, a, true, rng), m.forward(x, a));
  }
}

TEST(MlpForward, ZeroWeightsGiveZero) {
  auto m = Mlp::init(small_spec(), 5);
  m.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameter_count())));
  Rng rng = make_rng(2, "t");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(m.forward(random_x(rng, 4), static_cast<std::size_t>(i % 3)), 0.0);
}

TEST(MlpForward, StochasticPassReproducible) {
  const auto m = Mlp::init(small_spec(0.3), 5);
  Rng r0 = make_rng(4, "t");
  const auto x = random_x(r0, 4);
  Rng r1 = make_rng(9, "drop"), r2 = make_rng(9, "drop");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(m.forward(x, 1, true, r1), m.forward(x, 1, true, r2));
}

TEST(MlpForward, DimensionChecked) {
  const auto m = Mlp::init(small_spec(), 5);
  EXPECT_CODE(m.forward(Eigen::VectorXd::Zero(3), 0), ErrorCode::DimensionMismatch);
  EXPECT_CODE(m.forward(Eigen::VectorXd::Zero(4), 3), ErrorCode::UnknownArm);
}

TEST(MlpParameters, RoundTrip) {
  auto m = Mlp::init(small_spec(), 8);
  const auto p = m.parameters();
  auto n = Mlp::init(small_spec(), 9);
  n.set_parameters(p);
  EXPECT_EQ(n.parameters(), p);
  EXPECT_EQ(static_cast<std::size_t>(p.size()), m.parameter_count());
}

TEST(MlpGradient, MatchesFiniteDifferences) {
  const MlpSpec spec{3, {5, 4}, {3}, 2, 0.2};
  Rng rng = make_rng(21, "t");
  std::vector<Experience> batch;
  for (int i = 0; i < 6; ++i) batch.push_back({random_x(rng, 3), static_cast<std::size_t>(i % 2), uniform01(rng)});
  for (int trial = 0; trial < 5; ++trial) {
    auto m = Mlp::init(spec, static_cast<std::uint64_t>(trial));
    // random point: zero init biases put dead units exactly on the ReLU kink
    Eigen::VectorXd p(m.parameters().size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = 0.5 * standard_normal(rng);
    m.set_parameters(p);
    std::vector<DropoutMasks> masks;
    for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(m.sample_masks(rng));
    Eigen::VectorXd grad;
    m.loss_and_gradient(batch, 1e-3, &grad, masks);
    const Eigen::VectorXd theta = m.parameters();
    Eigen::VectorXd fd(theta.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd t = theta;
      t[i] += h;
      m.set_parameters(t);
      const double up = m.loss_and_gradient(batch, 1e-3, nullptr, masks);
      t[i] -= 2 * h;
      m.set_parameters(t);
      const double dn = m.loss_and_gradient(batch, 1e-3, nullptr, masks);
      fd[i] = (up - dn) / (2 * h);
    }
    m.set_parameters(theta);
    EXPECT_LT((grad - fd).norm() / std::max(1e-12, grad.norm() + fd.norm()), 1e-4);
  }
}

TEST(MlpGradient, OnlySelectedHeadReceivesLoss) {
  const auto m = Mlp::init(small_spec(), 2);
  Rng rng = make_rng(3, "t");
  const std::vector<Experience> batch{{random_x(rng, 4), 1, 0.7}};
  Eigen::VectorXd grad;
  m.loss_and_gradient(batch, 0.0, &grad);
  // layout: trunk layers, then heads in arm order
  std::size_t trunk = 0, head = 0;
  for (const auto& l : m.trunk()) trunk += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  for (const auto& l : m.head(0)) head += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  const auto seg = [&](std::size_t start) {
    return grad.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(head));
  };
  EXPECT_TRUE(seg(trunk).isZero(0.0));
  EXPECT_FALSE(seg(trunk + head).isZero(0.0));
  EXPECT_TRUE(seg(trunk + 2 * head).isZero(0.0));
}

TEST(MlpTrain, OverfitsOnePoint) {
  auto m = Mlp::init(MlpSpec{4, {16, 8}, {8}, 2, 0.0}, 13);
  Rng rng = make_rng(5, "t");
  const std::vector<Experience> batch{{random_x(rng, 4), 1, 0.8}};
  train(m, batch, TrainConfig{0.05, 1, 500, 0.0, 1, false});
  EXPECT_NEAR(m.forward(batch[0].x, 1), 0.8, 1e-3);
}

TEST(MlpTrain, LargeWeightDecayShrinksToZero) {
  auto m = Mlp::init(small_spec(), 13);
  Rng rng = make_rng(6, "t");
  std::vector<Experience> batch;
  for (int i = 0; i < 16; ++i) batch.push_back({random_x(rng, 4), static_cast<std::size_t>(i % 3), 0.5});
  const double before = m.parameters().norm();
  train(m, batch, TrainConfig{1e-4, 16, 200, 1e3, 1, false});
  // the data term keeps the output bias near 0.5 / (1 + decay), not at 0
  EXPECT_LT(m.parameters().norm(), 1e-3 * before);
  for (const auto& e : batch) EXPECT_NEAR(m.forward(e.x, e.arm), 0.0, 1e-3);
}

TEST(MlpTrain, LossDecreasesEarly) {
  auto m = Mlp::init(small_spec(), 17);
  Rng rng = make_rng(7, "t");
  std::vector<Experience> batch;
  for (int i = 0; i < 64; ++i) {
    auto x = random_x(rng, 4);
    batch.push_back({x, static_cast<std::size_t>(i % 3), 0.3 + 0.1 * x[0]});
  }
  const auto trace = train(m, batch, TrainConfig{0.002, 64, 10, 0.0, 2, false});
  ASSERT_EQ(trace.size(), 10u);
  int rises = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) rises += trace[i] > trace[i - 1];
  EXPECT_LE(rises, 1);
  EXPECT_LT(trace.back(), trace.front());
}

TEST(MlpTrain, DeterministicAndValidated) {
  Rng rng = make_rng(8, "t");
  std::vector<Experience> batch;
  for (int i = 0; i < 20; ++i) batch.push_back({random_x(rng, 4), static_cast<std::size_t>(i % 3), uniform01(rng)});
  auto a = Mlp::init(small_spec(0.2), 1), b = Mlp::init(small_spec(0.2), 1);
  const TrainConfig cfg{0.01, 4, 5, 1e-4, 77, true};
  EXPECT_EQ(train(a, batch, cfg), train(b, batch, cfg));
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_CODE(train(a, std::span<const Experience>{}, cfg), ErrorCode::InvalidArgument);
  EXPECT_CODE(train(a, batch, TrainConfig{0.0, 4, 5, 0.0, 0, true}), ErrorCode::InvalidArgument);
}

TEST(MlpTrain, NonFiniteLossAborts) {
  auto m = Mlp::init(small_spec(), 1);
  Rng rng = make_rng(8, "t");
  const std::vector<Experience> batch{{random_x(rng, 4), 0, 1e300}};
  EXPECT_THROW(train(m, batch, TrainConfig{1.0, 1, 5, 0.0, 0, false}), NumericalError);
}

TEST(McDropout, ZeroDropoutHasZeroStd) {
  const auto m = Mlp::init(small_spec(0.0), 4);
  Rng rng = make_rng(9, "t");
  const auto s = mc_dropout_stats(m, random_x(rng, 4), 50, rng);
  EXPECT_TRUE(s.std.isZero(0.0));
}

TEST(McDropout, IdenticalMasksHaveZeroStd) {
  const auto m = Mlp::init(small_spec(0.5), 4);
  Rng rng = make_rng(10, "t");
  const auto mask = m.sample_masks(rng);
  const std::vector<DropoutMasks> passes{mask, mask};
  const auto s = mc_dropout_stats(m, random_x(rng, 4), passes);
  EXPECT_TRUE(s.std.isZero(0.0));
  EXPECT_CODE(mc_dropout_stats(m, random_x(rng, 4), std::span<const DropoutMasks>(passes).first(1)),
              ErrorCode::InvalidArgument);
}

TEST(McDropout, MatchesEnumeratedExpectation) {
  // two hidden units and a linear head: four masks, each with probability 1/4
  auto m = Mlp::init(MlpSpec{2, {2}, {}, 2, 0.5}, 6);
  m.mutable_trunk()[0].bias << 0.3, 0.2;
  ContextVector x(2);
  x << 0.9, -0.4;
  std::vector<DropoutMasks> all;
  for (int b = 0; b < 4; ++b) {
    Eigen::VectorXd k(2);
    k << (b & 1 ? 2.0 : 0.0), (b & 2 ? 2.0 : 0.0);
    all.push_back({k});
  }
  const auto exact = mc_dropout_stats(m, x, all);
  for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(exact.mean[static_cast<Eigen::Index>(a)], m.forward(x, a), 1e-12);

  Rng rng = make_rng(11, "t");
  const std::size_t M = 10000;
  const auto mc = mc_dropout_stats(m, x, M, rng);
  for (Eigen::Index a = 0; a < 2; ++a) {
    const double se = exact.std[a] / std::sqrt(static_cast<double>(M));
    EXPECT_LE(std::abs(mc.mean[a] - exact.mean[a]), 3.0 * se + 1e-12);
    EXPECT_NEAR(mc.std[a], exact.std[a], 0.05 * exact.std[a] + 1e-12);
  }
}

TEST(MlpJson, RoundTrip) {
  const auto m = Mlp::init(small_spec(0.25), 31);
  const nlohmann::json j = m;
  const auto back = j.get<Mlp>();
  EXPECT_EQ(back.parameters(), m.parameters());
  EXPECT_EQ(back.spec().dropout, 0.25);
  EXPECT_EQ(back.spec().trunk_widths, m.spec().trunk_widths);
  nlohmann::json bad = j;
  bad["format"] = "other";
  EXPECT_CODE(bad.get<Mlp>(), ErrorCode::FormatError);
}
