// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   acceptance <path-to-banditlab-cli> <scratch-dir>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "banditlab/banditlab.hpp"

using namespace banditlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index d, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * standard_normal(rng);
  return v;
}

// 1 ---------------------------------------------------------------------------
Outcome linucb_ridge() {
  const std::size_t d = 10, K = 4;
  LinUcbState s(K, d, 1.0, 0.5);
  Rng rng = make_rng(1, "acc-linucb");
  std::vector<std::vector<Eigen::VectorXd>> xs(K);
  std::vector<std::vector<double>> ys(K);
  for (std::size_t t = 1; t <= 200; ++t) {
    const auto x = random_vector(rng, d);
    const auto a = uniform_index(rng, K);
    const double r = uniform01(rng);
    s.update(x, a, r, t);
    xs[a].push_back(x);
    ys[a].push_back(r);
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(xs[a].size()), d);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      X.row(i) = xs[a][static_cast<std::size_t>(i)].transpose();
      y[i] = ys[a][static_cast<std::size_t>(i)];
    }
    const auto ref = ridge_fit(X, y, std::nullopt, 1.0);
    worst = std::max(worst, (s.theta(a) - ref).norm() / ref.norm());
  }
  return {worst < 1e-8, "max relative error " + num(worst)};
}

// 2 ---------------------------------------------------------------------------
Outcome kernelucb_closed_form() {
  const std::size_t d = 4;
  const std::vector<KernelParams> kernels{{KernelKind::Rbf, 0.5, 2}, {KernelKind::Polynomial, 0.5, 3},
                                          {KernelKind::Linear, 0.5, 2}};
  double worst = 0.0;
  for (const auto& k : kernels) {
    const double lambda = 0.1;
    KernelUcbState s(2, d, k, 0.5, lambda, 500);
    Rng rng = make_rng(2, "acc-kernel", {static_cast<std::uint64_t>(k.kind)});
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ys;
    for (std::size_t t = 1; t <= 50; ++t) {
      const auto x = random_vector(rng, d, 0.5);
      const double r = uniform01(rng);
      s.update(x, 0, r, t);
      xs.push_back(x);
      ys.push_back(r);
    }
    const auto n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd G(n, n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      y[i] = ys[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < n; ++j) G(i, j) = k(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
    }
    G += lambda * Eigen::MatrixXd::Identity(n, n);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(G);
    for (int q = 0; q < 20; ++q) {
      const auto x = random_vector(rng, d, 0.5);
      Eigen::VectorXd kv(n);
      for (Eigen::Index i = 0; i < n; ++i) kv[i] = k(xs[static_cast<std::size_t>(i)], x);
      const double mu = kv.dot(lu.solve(y));
      const double var = k(x, x) - kv.dot(lu.solve(kv));
      const auto [m, v] = s.posterior(x, 0);
      worst = std::max({worst, std::abs(m - mu), std::abs(v - std::max(0.0, var))});
    }
  }
  return {worst < 1e-6, "max abs error " + num(worst) + " over rbf, polynomial, linear"};
}

// 3 ---------------------------------------------------------------------------
template <class State, class Warm>
bool warm_equals_replay(State cold, Warm warm_start, const PriorDataset& prior, const Environment& env) {
  State warm = warm_start(cold, prior);
  for (std::size_t i = 0; i < prior.size(); ++i) cold.update(prior[i].x, prior[i].arm, prior[i].reward, i + 1);
  ContextStream contexts(env, 11);
  Rng rng_w = make_rng(3, "acc-select"), rng_c = make_rng(3, "acc-select");
  Rng rewards = make_rng(3, "acc-rewards");
  for (std::size_t t = 1; t <= 100; ++t) {
    const auto x = contexts.next();
    const auto aw = warm.select(x, t, rng_w);
    const auto ac = cold.select(x, t, rng_c);
    if (aw != ac) return false;
    const double r = env.realize(env.mean(x, aw), uniform01(rewards), standard_normal(rewards));
    warm.update(x, aw, r, t);
    cold.update(x, ac, r, t);
  }
  return true;
}

Outcome warm_start_replay() {
  const auto env = Environment::analytic(SurfaceKind::Bumps, RewardMode::Bernoulli, 3);
  const auto prior = make_prior(env, 300, 33);
  const bool lin = warm_equals_replay(LinUcbState(5, 5, 1.0, 0.5), warm_start_linucb, prior, env);
  const bool ker = warm_equals_replay(KernelUcbState(5, 5, KernelParams{}, 0.5, 0.1, 500), warm_start_kernelucb,
                                      prior, env);
  return {lin && ker, std::string("linucb ") + (lin ? "identical" : "diverged") + ", kernelucb " +
                          (ker ? "identical" : "diverged")};
}

// 4 ---------------------------------------------------------------------------
Outcome cold_start_mitigation() {
  const auto env = Environment::analytic(SurfaceKind::Bumps, RewardMode::Bernoulli, 7);
  const auto config = default_policy_config("kernelucb");
  double cold = 0.0, warm = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto prior = make_prior(env, 300, derive_seed(99, "prior", {s}));
    auto pc = make_policy("kernelucb", config, env.arm_count(), env.dimension(), s);
    auto pw = make_policy("kernelucb", config, env.arm_count(), env.dimension(), s, &prior);
    cold += run_episode(env, pc, 200, s).cum_regret.back();
    warm += run_episode(env, pw, 200, s).cum_regret.back();
  }
  const double ratio = warm / cold;
  return {ratio <= 0.85, "warm/cold regret over 200 rounds = " + num(ratio) + " (cold " + num(cold / 10) +
                             ", warm " + num(warm / 10) + ")"};
}

// 5 ---------------------------------------------------------------------------
Outcome ordering() {
  const auto env = Environment::analytic(SurfaceKind::Bumps, RewardMode::Bernoulli, 2024);
  std::vector<PolicySpec> specs;
  for (const auto& name : policy_names()) specs.push_back(PolicySpec{name, default_policy_config(name), nullptr});
  ExperimentOptions opt;
  opt.rounds = 2000;
  opt.final_window = 500;
  opt.seeds.clear();
  for (std::uint64_t s = 0; s < 10; ++s) opt.seeds.push_back(s);
  const auto result = run_experiment(env, specs, opt);
  const auto r = [&](const char* name) { return result.at(name).final_mean_reward; };
  const double kernel = r("kernelucb"), neural = r("neural"), lin = r("linucb"), ucb = r("ucb1"),
               eps = r("eps_greedy"), rnd = r("random");
  const bool ok = kernel > lin + 0.02 && lin > ucb + 0.02 && ucb >= eps && eps >= rnd - 0.01 && neural > lin;
  return {ok, "kernelucb " + num(kernel) + ", neural " + num(neural) + ", linucb " + num(lin) + ", ucb1 " + num(ucb) +
                  ", eps_greedy " + num(eps) + ", random " + num(rnd) + "; kernelucb-neural gap " +
                  num(kernel - neural, 2)};
}

// 6 ---------------------------------------------------------------------------
Outcome linear_sanity() {
  const auto env = Environment::analytic(SurfaceKind::Linear, RewardMode::Bernoulli, 6);
  ExperimentOptions opt;
  opt.rounds = 2000;
  opt.final_window = 500;
  opt.seeds.clear();
  for (std::uint64_t s = 0; s < 10; ++s) opt.seeds.push_back(s);
  const auto result = run_experiment(env, {PolicySpec{"linucb", default_policy_config("linucb"), nullptr}}, opt);
  const auto& agg = result.at("linucb");
  double oracle = 0.0, r1000 = 0.0, r2000 = 0.0;
  for (const auto& c : agg.curves) {
    for (std::size_t t = 1500; t < 2000; ++t) oracle += c.oracle_mean[t];
    r1000 += c.cum_regret[999];
    r2000 += c.cum_regret[1999];
  }
  oracle /= 500.0 * static_cast<double>(agg.curves.size());
  const double ratio = agg.final_mean_reward / oracle, growth = r2000 / r1000;
  return {ratio >= 0.95 && growth < 1.8, "linucb/oracle = " + num(ratio) + ", regret(2000)/regret(1000) = " + num(growth)};
}

// 7 ---------------------------------------------------------------------------
Outcome grid_cardinalities() {
  const auto k = expand_grid(GridSpec::kernelucb_default()).size();
  const auto n = expand_grid(GridSpec::neural_default()).size();
  return {k == 20 && n == 24, "kernelucb " + std::to_string(k) + ", neural " + std::to_string(n)};
}

// 8 ---------------------------------------------------------------------------
Dataset corrupt(Dataset d) {
  // every continuous feature shifted by two standard deviations of its column
  for (std::size_t j = 0; j < d.schema.features.size(); ++j) {
    if (d.schema.features[j].is_categorical()) continue;
    double m = 0.0, v = 0.0;
    for (const auto& r : d.rows) m += r.values[j];
    m /= static_cast<double>(d.size());
    for (const auto& r : d.rows) v += (r.values[j] - m) * (r.values[j] - m);
    const double sd = std::sqrt(v / static_cast<double>(d.size()));
    for (auto& r : d.rows) r.values[j] += 2.0 * sd;
  }
  return d;
}

Outcome two_sample_band() {
  const CaseStudyGenerator gen;
  bool ok = true;
  std::string synth_aucs, real_aucs, corrupt_aucs;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto real = gen.generate(2000, derive_seed(8, "real", {s}));
    const auto sampler = ConditionalSampler::fit(real, SamplerOptions{5, 0.5, s});
    const auto synth = sampler.sample(2000, {}, derive_seed(8, "synth", {s}));
    TwoSampleOptions opt;
    opt.seed = s;
    const double a_synth = two_sample_auc(real, synth, opt).auc;
    const double a_real = two_sample_auc(real, gen.generate(2000, derive_seed(8, "control", {s})), opt).auc;
    const double a_corrupt = two_sample_auc(real, corrupt(gen.generate(2000, derive_seed(8, "corrupt", {s}))), opt).auc;
    ok = ok && a_synth >= 0.45 && a_synth <= 0.65 && a_real >= 0.40 && a_real <= 0.60 && a_corrupt >= 0.90;
    const auto sep = s ? " " : "";
    synth_aucs += sep + num(a_synth, 3);
    real_aucs += sep + num(a_real, 3);
    corrupt_aucs += sep + num(a_corrupt, 3);
  }
  return {ok, "synthetic [" + synth_aucs + "], real [" + real_aucs + "], corrupted [" + corrupt_aucs + "]"};
}

// 9 ---------------------------------------------------------------------------
Outcome iptw_debiasing() {
  const CaseStudyGenerator gen(true);
  const Eigen::VectorXd truth = CaseStudyGenerator::population_means(200000, 9);
  double err_raw = 0.0, err_iptw = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto data = gen.generate(3000, derive_seed(9, "iptw", {s}));
    const auto prop = fit_propensity(data, 1e-3, 2000, 1e-6);
    const auto counts = data.arm_counts();
    for (std::size_t a = 0; a < data.schema.arm_count(); ++a) {
      double raw = 0.0;
      for (const auto& r : data.rows)
        if (r.arm == a) raw += r.outcome;
      raw /= static_cast<double>(counts[a]);
      const double weighted = weighted_mean_outcome(data, iptw(data, prop, a, 0.01));
      err_raw += std::abs(raw - truth[static_cast<Eigen::Index>(a)]);
      err_iptw += std::abs(weighted - truth[static_cast<Eigen::Index>(a)]);
    }
  }
  const double ratio = err_iptw / err_raw;
  return {ratio <= 0.5, "iptw/unweighted mean abs error = " + num(ratio) + " (unweighted " + num(err_raw / 140) +
                            ", iptw " + num(err_iptw / 140) + ")"};
}

// 10 --------------------------------------------------------------------------
Outcome vgm_recovery() {
  const double w0 = 0.3, m0 = -2.0, s0 = 0.5, m1 = 3.0, s1 = 1.0;
  double worst_mean = 0.0, worst_weight = 0.0;
  bool two = true;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng = make_rng(s, "acc-vgm");
    std::vector<double> x;
    for (int i = 0; i < 1000; ++i) x.push_back(uniform01(rng) < w0 ? m0 + s0 * standard_normal(rng) : m1 + s1 * standard_normal(rng));
    VgmOptions opt;
    opt.seed = s;
    const auto n = fit_vgm(x, opt);
    if (n.mode_count() != 2) {
      two = false;
      continue;
    }
    const std::size_t lo = n.means[0] < n.means[1] ? 0 : 1, hi = 1 - lo;
    worst_mean = std::max({worst_mean, std::abs(n.means[lo] - m0), std::abs(n.means[hi] - m1)});
    worst_weight = std::max({worst_weight, std::abs(n.weights[lo] - w0), std::abs(n.weights[hi] - (1 - w0))});
  }
  return {two && worst_mean <= 0.1 && worst_weight <= 0.05,
          std::string(two ? "2 modes" : "wrong mode count") + ", max mean error " + num(worst_mean) +
              ", max weight error " + num(worst_weight)};
}

// 11 --------------------------------------------------------------------------
Outcome mlp_gradient() {
  const MlpSpec spec{6, {12, 8}, {5}, 3, 0.0};
  double worst = 0.0;
  for (std::uint64_t p = 0; p < 100; ++p) {
    Mlp net = Mlp::init(spec, p);
    Rng rng = make_rng(p, "acc-grad");
    std::vector<Experience> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(Experience{random_vector(rng, 6), uniform_index(rng, 3), uniform01(rng)});
    Eigen::VectorXd theta = net.parameters();
    theta += random_vector(rng, theta.size(), 0.1);
    net.set_parameters(theta);
    Eigen::VectorXd grad;
    net.loss_and_gradient(batch, 1e-3, &grad);
    Eigen::VectorXd fd(theta.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      net.set_parameters(tp);
      const double lp = net.loss_and_gradient(batch, 1e-3, nullptr);
      net.set_parameters(tm);
      const double lm = net.loss_and_gradient(batch, 1e-3, nullptr);
      fd[i] = (lp - lm) / (2 * h);
    }
    net.set_parameters(theta);
    worst = std::max(worst, (grad - fd).norm() / std::max(1e-12, grad.norm() + fd.norm()));
  }
  Mlp net = Mlp::init(MlpSpec{6, {12, 8}, {5}, 3, 0.0}, 5);
  Rng rng = make_rng(5, "acc-mc");
  const auto stats = mc_dropout_stats(net, random_vector(rng, 6), 20, rng);
  const bool zero = (stats.std.array() == 0.0).all();
  return {worst < 1e-4 && zero, "max relative gradient error " + num(worst) + ", mc std at p=0 " +
                                    (zero ? "exactly 0" : "nonzero")};
}

// 12 --------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int shell(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome determinism(const std::string& cli, const fs::path& scratch) {
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const fs::path config = scratch / "run.json";
  std::ofstream(config) << R"({"spec_version": 1,
  "policies": ["random", "eps_greedy", "ucb1", "linucb", "kernelucb", "neural"],
  "run": {"environment": "analytic", "surface": "bumps", "rounds": 2000, "seeds": 2, "seed": 2024}})";
  const fs::path first = scratch / "first", second = scratch / "second";
  const std::string q = "\"";
  if (shell(q + cli + q + " run --config " + q + config.string() + q + " --out " + q + first.string() + q) != 0)
    return {false, "first run failed"};
  if (shell(q + cli + q + " run --config " + q + (first / "manifest.json").string() + q + " --out " + q +
            second.string() + q + " --jobs 2") != 0)
    return {false, "rerun from manifest failed"};
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(first)) {
    const auto ext = entry.path().extension();
    if (ext != ".csv" && ext != ".svg") continue;
    const auto other = second / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other))
      return {false, entry.path().filename().string() + " differs"};
    ++compared;
  }
  return {compared >= 4, std::to_string(compared) + " CSV/SVG files bit-identical after manifest rerun"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <banditlab-cli> <scratch-dir>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argv[2];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"linucb ridge equivalence", linucb_ridge},
      {"kernelucb closed-form equivalence", kernelucb_closed_form},
      {"warm start equals replay", warm_start_replay},
      {"cold-start mitigation", cold_start_mitigation},
      {"policy ordering on bumps", ordering},
      {"linear-environment sanity", linear_sanity},
      {"grid cardinalities", grid_cardinalities},
      {"two-sample band", two_sample_band},
      {"iptw debiasing", iptw_debiasing},
      {"vgm recovery", vgm_recovery},
      {"mlp gradient check", mlp_gradient},
      {"determinism", [&] { return determinism(cli, scratch); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail << " ["
              << num(secs, 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
