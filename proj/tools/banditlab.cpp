// banditlab: command-line front end.
//
//   banditlab <command> --config FILE [--out DIR] [--seed N] [--jobs N]
//
// Commands: fit-synth, validate-synth, fit-oracle, run, tune, report.
// Exit codes: 0 ok, 2 configuration or validation error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "banditlab/banditlab.hpp"
#include "banditlab/config.hpp"

namespace fs = std::filesystem;
using namespace banditlab;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoError, "sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct InputFile {
  std::string role;
  std::string path;
  std::string sha256;
};

/// Output directory; every file goes through write() so the manifest can
/// list it with its hash.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    require(!ec && fs::is_directory(root_), ErrorCode::IoError, "cannot create output directory '" + root_.string() + "'");
  }

  const fs::path& root() const { return root_; }

  void write(const std::string& relative, const std::string& content) {
    const fs::path p = root_ / relative;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write '" + p.string() + "'");
    out << content;
    out.close();
    require(static_cast<bool>(out), ErrorCode::IoError, "short write on '" + p.string() + "'");
    outputs_[relative] = sha256_hex(content);
  }

  void write_json(const std::string& relative, const nlohmann::json& j) { write(relative, j.dump(2) + "\n"); }

  const std::map<std::string, std::string>& outputs() const { return outputs_; }

 private:
  fs::path root_;
  std::map<std::string, std::string> outputs_;
};

struct Invocation {
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_flag;
  std::size_t jobs = 1;
};

struct Context {
  Invocation inv;
  RunConfig config;
  ResolvedSeed seed;
  std::vector<InputFile> inputs;

  std::string input(const std::string& role, const std::string& path) {
    require(!path.empty(), ErrorCode::InvalidArgument, "config does not name the " + role + " file");
    const std::string bytes = read_file(path);
    inputs.push_back(InputFile{role, path, sha256_hex(bytes)});
    return bytes;
  }

  Schema schema() {
    if (config.data.schema.empty()) return case_study_schema();
    const auto text = input("schema", config.data.schema);
    try {
      return nlohmann::json::parse(text).get<Schema>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidSchema, config.data.schema + ": " + e.what());
    }
  }

  Dataset dataset() {
    const Schema s = schema();
    const auto text = input("data", config.data.input);
    std::istringstream in(text);
    return parse_csv(in, s, config.data.input);
  }

  template <class T>
  T artifact(const std::string& role, const std::string& path) {
    const auto text = input(role, path);
    try {
      return nlohmann::json::parse(text).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, path + ": " + e.what());
    }
  }

  void write_manifest(OutputDir& out) const {
    nlohmann::ordered_json m;
    m["format"] = "banditlab.manifest";
    m["version"] = 1;
    m["tool_version"] = kToolVersion;
    m["command"] = inv.command;
    m["config"] = config.document;
    m["seed"] = seed.value;
    m["seed_source"] = seed.source;
    nlohmann::ordered_json ins = nlohmann::ordered_json::array();
    for (const auto& i : inputs) ins.push_back({{"role", i.role}, {"path", i.path}, {"sha256", i.sha256}});
    m["inputs"] = ins;
    nlohmann::ordered_json outs = nlohmann::ordered_json::array();
    for (const auto& [path, hash] : out.outputs()) outs.push_back({{"path", path}, {"sha256", hash}});
    m["outputs"] = outs;
    std::ofstream f(out.root() / "manifest.json", std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorCode::IoError, "cannot write manifest");
    f << m.dump(2) << "\n";
  }
};

/// Loads --config. A manifest is accepted in place of a config: its inputs
/// are re-hashed and must match before the embedded config is used.
Context load_context(const Invocation& inv) {
  Context ctx;
  ctx.inv = inv;
  require(!inv.config_path.empty(), ErrorCode::InvalidArgument, "--config is required for " + inv.command);
  const std::string text = read_file(inv.config_path);
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, inv.config_path + " is not valid JSON: " + e.what());
  }
  std::optional<std::uint64_t> manifest_seed;
  if (doc.is_object() && doc.value("format", "") == "banditlab.manifest") {
    require(doc.value("version", 0) == 1, ErrorCode::FormatError, "unsupported manifest version");
    require(doc.at("command").get<std::string>() == inv.command, ErrorCode::InvalidArgument,
            "manifest was written by '" + doc.at("command").get<std::string>() + "', not '" + inv.command + "'");
    for (const auto& i : doc.at("inputs")) {
      const auto path = i.at("path").get<std::string>();
      require(sha256_hex(read_file(path)) == i.at("sha256").get<std::string>(), ErrorCode::InvalidArgument,
              "input '" + path + "' changed since the manifest was written");
    }
    manifest_seed = doc.at("seed").get<std::uint64_t>();
    doc = doc.at("config");
  }
  ctx.config = parse_run_config(doc);
  if (manifest_seed && !inv.seed_flag) {
    ctx.seed = {*manifest_seed, "manifest"};
  } else {
    ctx.seed = resolve_seed(inv.seed_flag, ctx.config, std::getenv("BANDITLAB_SEED"));
  }
  return ctx;
}

const ColumnSpec& column_spec(const Schema& s, const std::string& name) {
  for (const auto& f : s.features)
    if (f.name == name) return f;
  if (s.arm.name == name) return s.arm;
  return s.outcome;
}

// ---------------------------------------------------------------------------
// fit-synth

int cmd_fit_synth(Context& ctx) {
  const Dataset data = ctx.dataset();
  SamplerOptions opt;
  opt.max_modes = ctx.config.synth.max_modes;
  opt.smoothing = ctx.config.synth.smoothing;
  opt.seed = derive_seed(ctx.seed.value, "fit-synth");
  const auto sampler = ConditionalSampler::fit(data, opt);

  OutputDir out(ctx.inv.out_dir);
  out.write_json("sampler.json", sampler);

  nlohmann::ordered_json report;
  report["rows"] = data.size();
  report["smoothing"] = sampler.smoothing();
  report["cells"] = sampler.cell_count();
  const auto& probs = sampler.cell_probabilities();
  report["min_cell_probability"] = *std::min_element(probs.begin(), probs.end());
  report["max_cell_probability"] = *std::max_element(probs.begin(), probs.end());
  nlohmann::ordered_json continuous = nlohmann::ordered_json::array(), categorical = nlohmann::ordered_json::array();
  std::size_t k = 0;
  for (const auto& col : sampler.columns()) {
    if (col.categorical) continue;
    const auto& n = sampler.continuous_normalizer(k++);
    continuous.push_back({{"column", col.name},
                          {"modes", n.mode_count()},
                          {"degenerate", n.degenerate},
                          {"weights", n.weights},
                          {"means", n.means},
                          {"stds", n.stds}});
  }
  for (std::size_t c = 0; c < sampler.categorical_column_count(); ++c) {
    const auto& col = sampler.categorical_column(c);
    const auto& spec = column_spec(sampler.schema(), col.name);
    nlohmann::ordered_json counts;
    for (std::size_t v = 0; v < spec.categories.size(); ++v) counts[spec.categories[v]] = sampler.marginal_counts(c)[v];
    categorical.push_back({{"column", col.name}, {"counts", counts}});
  }
  report["continuous"] = continuous;
  report["categorical"] = categorical;
  out.write("fit_report.json", report.dump(2) + "\n");
  ctx.write_manifest(out);
  std::cout << "sampler fitted on " << data.size() << " rows, " << sampler.cell_count() << " cells -> "
            << (out.root() / "sampler.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// validate-synth

int cmd_validate_synth(Context& ctx) {
  const Dataset real = ctx.dataset();
  const auto sampler = ctx.artifact<ConditionalSampler>("sampler", ctx.config.synth.artifact);
  require(sampler.schema() == real.schema, ErrorCode::SchemaMismatch, "sampler schema differs from the data schema");
  const std::size_t n = ctx.config.synth.rows.value_or(real.size());
  const Dataset synth = sampler.sample(n, {}, derive_seed(ctx.seed.value, "validate-sample"));
  TwoSampleOptions opt;
  opt.n_trees = ctx.config.synth.n_trees;
  opt.max_depth = ctx.config.synth.max_depth;
  opt.split = ctx.config.synth.split;
  opt.seed = derive_seed(ctx.seed.value, "validate-classifier");
  const auto rep = two_sample_auc(real, synth, opt);

  OutputDir out(ctx.inv.out_dir);
  std::ostringstream roc, rows;
  write_roc_csv(roc, rep.roc_points);
  write_csv(rows, synth);
  out.write("roc.csv", roc.str());
  out.write("roc.svg", render_roc(rep.roc_points, rep.auc, "Two-sample test: real vs synthetic"));
  out.write("synthetic.csv", rows.str());
  nlohmann::ordered_json summary{{"auc", rep.auc},
                                 {"n_real", rep.n_real},
                                 {"n_synth", rep.n_synth},
                                 {"roc_points", rep.roc_points.size()},
                                 {"classifier", rep.classifier_config}};
  out.write("two_sample.json", summary.dump(2) + "\n");
  ctx.write_manifest(out);
  std::cout << "two-sample AUC " << std::fixed << std::setprecision(4) << rep.auc << " (" << rep.n_real
            << " real, " << rep.n_synth << " synthetic)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit-oracle

int cmd_fit_oracle(Context& ctx) {
  const Dataset data = ctx.dataset();
  const auto& oc = ctx.config.oracle;
  VgmOptions vopt;
  vopt.max_modes = ctx.config.synth.max_modes;
  vopt.seed = derive_seed(ctx.seed.value, "fit-oracle-encoder");
  const RowEncoder encoder = RowEncoder::fit(data, vopt);
  const auto K = data.schema.arm_count();

  std::optional<std::vector<WeightVector>> weights;
  std::optional<PropensityModel> prop;
  if (oc.iptw) {
    prop = fit_propensity(data, RowEncoder::standardized(data), PropensityOptions{oc.propensity_lambda, oc.propensity_max_iter, 1e-6});
    weights.emplace();
    for (std::size_t a = 0; a < K; ++a) weights->push_back(iptw(data, *prop, a, oc.e_min));
  }
  const auto oracle = fit_tlearner(data, weights, oc.base, encoder);

  OutputDir out(ctx.inv.out_dir);
  out.write_json("oracle.json", oracle);
  std::ostringstream diag;
  diag << "arm,n_rows,holdout_mse\n";
  for (const auto& d : oracle.diagnostics())
    diag << d.arm << ',' << d.n_rows << ',' << detail::format_double(d.holdout_mse) << '\n';
  out.write("diagnostics.csv", diag.str());
  if (weights) {
    std::ostringstream w;
    w << "arm,n_rows,naive_mean,iptw_mean,max_weight\n";
    const auto counts = data.arm_counts();
    for (std::size_t a = 0; a < K; ++a) {
      WeightVector plain{std::vector<double>(data.size(), 0.0), a, oc.e_min};
      double wmax = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.rows[i].arm == a) plain.weights[i] = 1.0;
        wmax = std::max(wmax, (*weights)[a].weights[i]);
      }
      w << data.schema.arm.categories[a] << ',' << counts[a] << ','
        << detail::format_double(weighted_mean_outcome(data, plain)) << ','
        << detail::format_double(weighted_mean_outcome(data, (*weights)[a])) << ',' << detail::format_double(wmax)
        << '\n';
    }
    out.write("iptw.csv", w.str());
    nlohmann::ordered_json p{{"converged", prop->converged()}, {"iterations", prop->iterations()},
                             {"lambda", prop->lambda()}, {"e_min", oc.e_min}};
    out.write("propensity.json", p.dump(2) + "\n");
  }
  ctx.write_manifest(out);
  std::cout << "T-learner (" << to_string(oc.base.kind) << ", " << K << " arms"
            << (oc.iptw ? ", IPTW" : "") << ") -> " << (out.root() / "oracle.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run / tune

Environment build_environment(Context& ctx) {
  const auto& r = ctx.config.run;
  if (r.environment == "analytic")
    return Environment(AnalyticSource{}, AnalyticSurface(r.surface), r.reward, ctx.seed.value, r.noise_sigma);
  auto oracle = std::make_shared<const TLearnerOracle>(ctx.artifact<TLearnerOracle>("oracle", ctx.config.oracle.artifact));
  if (r.environment == "sampler") {
    auto sampler =
        std::make_shared<const ConditionalSampler>(ctx.artifact<ConditionalSampler>("sampler", ctx.config.synth.artifact));
    return Environment(SamplerSource{sampler}, oracle, r.reward, ctx.seed.value, r.noise_sigma);
  }
  auto data = std::make_shared<const Dataset>(ctx.dataset());
  return Environment(ReplaySource{data}, oracle, r.reward, ctx.seed.value, r.noise_sigma);
}

ExperimentOptions experiment_options(const Context& ctx) {
  ExperimentOptions opt;
  opt.rounds = ctx.config.run.rounds;
  opt.window = ctx.config.run.window;
  opt.final_window = ctx.config.run.final_window;
  opt.jobs = ctx.inv.jobs;
  opt.seeds.clear();
  for (std::uint64_t s = 0; s < ctx.config.run.seeds; ++s) opt.seeds.push_back(s);
  return opt;
}

std::shared_ptr<const PriorDataset> build_prior(const Context& ctx, const Environment& env) {
  if (ctx.config.run.prior_rows == 0) return nullptr;
  return std::make_shared<const PriorDataset>(
      make_prior(env, ctx.config.run.prior_rows, derive_seed(ctx.seed.value, "cli-prior")));
}

int cmd_run(Context& ctx) {
  require(!ctx.config.policies.empty(), ErrorCode::InvalidArgument,
          "config lists no policies; known: " + registry_listing());
  const Environment env = build_environment(ctx);
  const auto prior = build_prior(ctx, env);
  std::vector<PolicySpec> specs;
  for (const auto& p : ctx.config.policies) specs.push_back(PolicySpec{p.name, p.config, prior});
  const auto opt = experiment_options(ctx);
  const auto result = run_experiment(env, specs, opt);

  OutputDir out(ctx.inv.out_dir);
  std::ostringstream curves, agg, summary;
  write_curves_csv(curves, result, "run-" + std::to_string(ctx.seed.value));
  write_aggregate_csv(agg, result);
  write_summary_csv(summary, result);
  out.write("curves.csv", curves.str());
  out.write("aggregate.csv", agg.str());
  out.write("summary.csv", summary.str());
  out.write("learning_curves.svg", render_learning_curves(to_series(result.policies), "Learning curves"));
  ctx.write_manifest(out);

  std::cout << std::left << std::setw(16) << "policy" << std::right << std::setw(12) << "final_mean" << std::setw(12)
            << "final_std" << std::setw(14) << "cum_regret" << "\n";
  for (const auto& p : result.policies)
    std::cout << std::left << std::setw(16) << p.policy << std::right << std::fixed << std::setprecision(4)
              << std::setw(12) << p.final_mean_reward << std::setw(12) << p.final_std_reward << std::setw(14)
              << std::setprecision(2) << p.mean_final_regret << "\n";
  return 0;
}

int cmd_tune(Context& ctx) {
  require(!ctx.config.tune.algorithm.empty(), ErrorCode::InvalidArgument, "config needs tune.algorithm");
  const Environment env = build_environment(ctx);
  const auto prior = build_prior(ctx, env);
  const auto report = grid_search(env, ctx.config.grid(), experiment_options(ctx), prior);

  OutputDir out(ctx.inv.out_dir);
  std::ostringstream ranked, agg;
  write_tune_csv(ranked, report);
  out.write("tune_ranked.csv", ranked.str());
  std::vector<PolicyAggregate> all;
  for (const auto& e : report.entries) {
    std::ostringstream one;
    write_aggregate_csv(one, std::vector<PolicyAggregate>{e.result});
    std::ostringstream name;
    name << "curves/config_" << std::setw(3) << std::setfill('0') << e.index << ".csv";
    out.write(name.str(), one.str());
    all.push_back(e.result);
  }
  write_aggregate_csv(agg, all);
  out.write("tune_aggregate.csv", agg.str());
  out.write("tune.svg", render_learning_curves(to_series(all), "Tuning trajectories"));
  const auto& best = report.best();
  nlohmann::ordered_json block = nlohmann::ordered_json::parse(policy_config_json(best.point.config).dump());
  block["name"] = report.algorithm;
  out.write("best_config.json", block.dump(2) + "\n");
  ctx.write_manifest(out);

  std::cout << report.entries.size() << " configurations; best " << best.point.label() << " final mean "
            << std::fixed << std::setprecision(4) << best.result.final_mean_reward << "\n"
            << "policy block:\n"
            << block.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const Invocation& inv) {
  const fs::path dir(inv.out_dir);
  require(fs::is_directory(dir), ErrorCode::IoError, "no output directory '" + dir.string() + "'");
  int rendered = 0;
  auto rerender = [&](const std::string& csv, const std::string& svg, auto render) {
    const fs::path p = dir / csv;
    if (!fs::exists(p)) return;
    std::istringstream in(read_file(p.string()));
    std::ofstream f(dir / svg, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorCode::IoError, "cannot write '" + (dir / svg).string() + "'");
    f << render(in, p.string());
    ++rendered;
    std::cout << (dir / svg).string() << "\n";
  };
  rerender("aggregate.csv", "learning_curves.svg", [](std::istream& in, const std::string& src) {
    return render_learning_curves(read_aggregate_csv(in, src), "Learning curves");
  });
  rerender("tune_aggregate.csv", "tune.svg", [](std::istream& in, const std::string& src) {
    return render_learning_curves(read_aggregate_csv(in, src), "Tuning trajectories");
  });
  rerender("roc.csv", "roc.svg", [](std::istream& in, const std::string& src) {
    const auto pts = read_roc_csv(in, src);
    return render_roc(pts, trapezoid_auc(pts), "Two-sample test: real vs synthetic");
  });
  require(rendered > 0, ErrorCode::InvalidArgument,
          "'" + dir.string() + "' holds none of aggregate.csv, tune_aggregate.csv, roc.csv");
  return 0;
}

int dispatch(const Invocation& inv) {
  if (inv.command == "report") return cmd_report(inv);
  Context ctx = load_context(inv);
  if (inv.command == "fit-synth") return cmd_fit_synth(ctx);
  if (inv.command == "validate-synth") return cmd_validate_synth(ctx);
  if (inv.command == "fit-oracle") return cmd_fit_oracle(ctx);
  if (inv.command == "run") return cmd_run(ctx);
  if (inv.command == "tune") return cmd_tune(ctx);
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + inv.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"banditlab: synthetic patients, counterfactual oracles and contextual bandit experiments"};
  app.require_subcommand(1);
  Invocation inv;
  std::uint64_t seed = 0;
  app.add_option("--config", inv.config_path, "run configuration (JSON) or a manifest to replay");
  app.add_option("--out", inv.out_dir, "output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "base seed; overrides the config and BANDITLAB_SEED");
  app.add_option("--jobs", inv.jobs, "parallel episodes")->check(CLI::PositiveNumber)->capture_default_str();
  app.fallthrough();

  const std::vector<std::pair<std::string, std::string>> commands{
      {"fit-synth", "fit the conditional sampler to data.input"},
      {"validate-synth", "two-sample classifier test of the sampler against data.input"},
      {"fit-oracle", "fit propensities, IPTW weights and the T-learner reward oracle"},
      {"run", "run the listed policies over seeds and write learning curves"},
      {"tune", "grid search for kernelucb or neural"},
      {"report", "re-render SVG plots from the CSVs in --out"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  inv.command = app.get_subcommands().front()->get_name();
  if (seed_opt->count() > 0) inv.seed_flag = seed;

  try {
    return dispatch(inv);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == ErrorCode::NonFinite ? kExitNumerical : kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error [InvalidSchema]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
