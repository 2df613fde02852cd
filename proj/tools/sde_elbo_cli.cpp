// Command-line entry point: train, elbo, sample, check, data.
// Every run writes its fully resolved configuration next to its outputs;
// SDE_ELBO_SEED overrides the configured seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "sde_elbo/checks.hpp"
#include "sde_elbo/config.hpp"
#include "sde_elbo/elbo.hpp"
#include "sde_elbo/io.hpp"
#include "sde_elbo/sampler.hpp"
#include "sde_elbo/score_net.hpp"
#include "sde_elbo/score_source.hpp"
#include "sde_elbo/time_sampler.hpp"
#include "sde_elbo/toy_data.hpp"
#include "sde_elbo/trainer.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sde_elbo;

namespace {

std::optional<std::uint64_t> env_seed_override() {
  const char* env = std::getenv("SDE_ELBO_SEED");
  if (!env || !*env) return std::nullopt;
  return std::stoull(std::string(env));
}

std::uint64_t effective_seed(std::uint64_t configured) {
  const auto env = env_seed_override();
  return env ? *env : configured;
}

void write_resolved_config(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text_file(out_dir + "/resolved_config.ini", cfg.canonical_text());
}

VpSde sde_from_config(const Config& cfg) {
  VpSde sde;
  sde.beta_min = cfg.get_double("sde.beta_min", 0.1);
  sde.beta_max = cfg.get_double("sde.beta_max", 20.0);
  sde.horizon_T = cfg.get_double("sde.horizon_T", 1.0);
  sde.validate();
  return sde;
}

Dataset dataset_from_config(const Config& cfg, std::uint64_t seed) {
  const std::string kind = cfg.get_str("data.kind", "swiss_roll");
  const std::size_t n = static_cast<std::size_t>(cfg.get_int("data.n", 10000));
  const std::uint64_t dseed = cfg.get_u64("data.seed", seed);
  if (kind == "swiss_roll")
    return swiss_roll(n, cfg.get_double("data.noise_std", 0.05), dseed);
  if (kind == "gaussian") {
    const int d = static_cast<int>(cfg.get_int("data.dim", 2));
    Vec mean = Vec::Zero(d);
    std::istringstream ms(cfg.get_str("data.mean", ""));
    for (int i = 0; i < d && ms; ++i) ms >> mean[i];
    const double var = cfg.get_double("data.var", 1.0);
    return gaussian_mixture({mean}, {1.0}, var, n, dseed);
  }
  if (kind == "gaussian_mixture") {
    // centers as "x0 y0 ; x1 y1 ; ..."
    std::vector<Vec> centers;
    std::istringstream cs(cfg.get_str("data.centers", "-2 0 ; 2 0"));
    std::string part;
    while (std::getline(cs, part, ';')) {
      std::istringstream ps(part);
      std::vector<double> vals;
      double x;
      while (ps >> x) vals.push_back(x);
      centers.push_back(
          Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    }
    std::vector<double> weights;
    std::istringstream ws(cfg.get_str("data.weights", "0.5 0.5"));
    double w;
    while (ws >> w) weights.push_back(w);
    return gaussian_mixture(centers, weights, cfg.get_double("data.cov_scale", 1.0),
                            n, dseed);
  }
  throw std::invalid_argument("unknown data.kind: " + kind);
}

const std::set<std::string> kTrainKeys = {
    "run.seed",        "run.out_dir",      "run.threads",
    "data.kind",       "data.n",           "data.noise_std",
    "data.seed",       "data.dim",         "data.mean",
    "data.var",        "data.centers",     "data.weights",
    "data.cov_scale",  "sde.beta_min",     "sde.beta_max",
    "sde.horizon_T",   "net.hidden",       "net.time_features",
    "net.init_seed",   "train.loss_kind",  "train.lr",
    "train.batch",     "train.iters",      "train.eval_every",
    "train.parameterize", "train.s_min",   "train.s_eps",
    "train.eval_paths", "train.eval_steps"};

int cmd_train(const std::string& config_path) {
  Config cfg = Config::load(config_path);
  cfg.require_known(kTrainKeys);
  const std::uint64_t seed = effective_seed(cfg.get_u64("run.seed", 0));
  cfg.set_int("run.seed", static_cast<std::int64_t>(seed));
  const std::string out_dir = cfg.get_str("run.out_dir", "runs/train");

  const VpSde sde = sde_from_config(cfg);
  const Dataset data = dataset_from_config(cfg, seed);

  std::vector<int> widths;
  const int d = data.dim();
  const int k = static_cast<int>(cfg.get_int("net.time_features", 6));
  widths.push_back(d + 1 + 2 * k);
  std::istringstream hs(cfg.get_str("net.hidden", "128 128"));
  int h;
  while (hs >> h) widths.push_back(h);
  widths.push_back(d);
  ScoreNet net = ScoreNet::init(widths, k, cfg.get_u64("net.init_seed", seed));

  TrainConfig tc;
  tc.loss_kind = loss_kind_from_string(cfg.get_str("train.loss_kind", "dsm_weighted_uniform"));
  tc.lr = cfg.get_double("train.lr", 1e-4);
  tc.batch = static_cast<std::size_t>(cfg.get_int("train.batch", 128));
  tc.iters = static_cast<std::size_t>(cfg.get_int("train.iters", 20000));
  tc.seed = seed;
  tc.eval_every = static_cast<std::size_t>(cfg.get_int("train.eval_every", 1000));
  tc.parameterize =
      parameterization_from_string(cfg.get_str("train.parameterize", "drift_a"));
  tc.s_min = cfg.get_double("train.s_min", 1e-5);
  tc.s_eps = cfg.get_double("train.s_eps", 1e-3);
  tc.eval_paths = static_cast<std::size_t>(cfg.get_int("train.eval_paths", 256));
  tc.eval_steps = static_cast<std::size_t>(cfg.get_int("train.eval_steps", 200));
  tc.threads = static_cast<unsigned>(cfg.get_int("run.threads", 1));
  tc.config_hash = cfg.hash();
  fs::create_directories(out_dir);
  tc.checkpoint_path = out_dir + "/checkpoint.txt";

  const TrainResult result = train(net, data, sde, tc);
  write_metrics_csv(result.metrics, out_dir + "/metrics.csv");
  write_resolved_config(cfg, out_dir);
  std::cout << "trained " << tc.iters << " iterations; held-out CT-ELBO "
            << result.first_eval_elbo << " -> " << result.last_eval_elbo
            << " nats\nwrote " << out_dir << "/{checkpoint.txt,metrics.csv,resolved_config.ini}\n";
  return 0;
}

struct ScoreSetup {
  ScoreNet net = default_toy_net(2, 0);
  std::unique_ptr<GaussianOracle> oracle;
  std::unique_ptr<ScoreSource> source;
  VpSde sde;
  int dim = 2;
};

ScoreSetup make_score_setup(const std::string& checkpoint, bool use_oracle,
                            int oracle_dim, const VpSde& sde) {
  ScoreSetup s;
  s.sde = sde;
  if (use_oracle) {
    s.dim = oracle_dim;
    s.oracle = std::make_unique<GaussianOracle>(
        Vec::Zero(oracle_dim), Mat::Identity(oracle_dim, oracle_dim), sde);
    s.source = std::make_unique<OracleScoreSource>(*s.oracle);
  } else {
    ScoreNetCheckpoint loaded = ScoreNet::load(checkpoint);
    s.net = std::move(loaded.net);
    s.dim = s.net.dim();
    s.source = std::make_unique<NetScoreSource>(
        s.net, parameterization_from_string(loaded.parameterization), sde);
    // an oracle is still useful for data-CV bookkeeping on gaussian data
    s.oracle = std::make_unique<GaussianOracle>(Vec::Zero(s.dim),
                                                Mat::Identity(s.dim, s.dim), sde);
  }
  return s;
}

int cmd_elbo(const std::string& checkpoint, bool use_oracle, double lambda,
             bool ode, std::size_t paths, std::size_t steps,
             const std::string& div, std::size_t probes, std::size_t n_data,
             const std::string& data_csv, int dim, std::uint64_t seed_in,
             unsigned threads, const std::string& out_dir) {
  if (paths == 0) throw CLI::ValidationError("--paths must be >= 1");
  if (steps == 0) throw CLI::ValidationError("--steps must be >= 1");
  const std::uint64_t seed = effective_seed(seed_in);
  VpSde sde;
  ScoreSetup setup = make_score_setup(checkpoint, use_oracle, dim, sde);

  // evaluation data: CSV if given, else standard-normal draws
  Mat x;
  bool gaussian_data = false;
  if (!data_csv.empty()) {
    const Dataset ds = load_dataset_csv(data_csv);
    x = ds.points;
    gaussian_data = false;
  } else {
    Rng rng(mix_seed(seed, 0xda7a));
    x.resize(setup.dim, static_cast<Eigen::Index>(n_data));
    for (std::size_t i = 0; i < n_data; ++i)
      for (int j = 0; j < setup.dim; ++j) x(j, static_cast<Eigen::Index>(i)) = rng.gauss();
    gaussian_data = true;
  }

  json rec;
  rec["lambda"] = lambda;
  rec["n_paths"] = paths;
  rec["n_steps"] = steps;
  rec["seed"] = seed;
  if (lambda >= 1.0 && !ode)
    throw CLI::ValidationError(
        "--lambda >= 1: the quadratic Girsanov term divides by 1 - lambda, so "
        "the ELBO only exists for lambda < 1; pass --ode to evaluate the "
        "lambda = 1 probability-flow log-density instead");
  if (ode) {
    const MeanStderr ld = ode_log_density(
        *setup.source, sde, x, steps,
        div == "hutch" ? DivMode::hutchinson : DivMode::exact, probes, seed,
        threads);
    rec["estimator"] = "ode_log_density";
    rec["mean"] = ld.mean;
    rec["stderr"] = ld.stderr;
    rec["bits_per_dim"] = -ld.mean / (setup.dim * std::log(2.0));
  } else {
    PathOptions opt;
    opt.n_paths = paths;
    opt.n_steps = steps;
    opt.div_mode = div == "hutch" ? DivMode::hutchinson : DivMode::exact;
    opt.hutchinson_probes = probes;
    opt.seed = seed;
    opt.threads = threads;
    if (gaussian_data) opt.data_sq_norm_mean = setup.dim;
    const ElboEstimate est =
        lambda == 0.0
            ? ct_elbo_plugin(*setup.source, sde, x, opt)
            : ct_elbo_lambda(*setup.source, sde, lambda, x, opt,
                             setup.oracle.get());
    rec["estimator"] = lambda == 0.0 ? "ct_elbo_plugin" : "ct_elbo_lambda";
    rec["mean"] = est.mean;
    rec["stderr"] = est.stderr;
    rec["bits_per_dim"] = est.bits_per_dim(setup.dim);
    rec["terms"] = {{"prior_term", est.terms.prior_term},
                    {"quad_term", est.terms.quad_term},
                    {"div_term", est.terms.div_term}};
  }
  const std::string text = rec.dump(2) + "\n";
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/elbo.json", text);
    Config rc;
    rc.set("run.command", "elbo");
    rc.set_int("run.seed", static_cast<std::int64_t>(seed));
    rc.set("elbo.checkpoint", use_oracle ? "<oracle>" : checkpoint);
    rc.set_double("elbo.lambda", lambda);
    rc.set_int("elbo.paths", static_cast<std::int64_t>(paths));
    rc.set_int("elbo.steps", static_cast<std::int64_t>(steps));
    rc.set("elbo.div", div);
    rc.set("elbo.ode", ode ? "true" : "false");
    write_resolved_config(rc, out_dir);
  }
  return 0;
}

int cmd_sample(const std::string& checkpoint, bool use_oracle, double lambda,
               std::size_t n, std::size_t steps, int dim, std::uint64_t seed_in,
               unsigned threads, const std::string& out_dir) {
  if (n == 0) throw CLI::ValidationError("--n must be >= 1");
  const std::uint64_t seed = effective_seed(seed_in);
  VpSde sde;
  ScoreSetup setup = make_score_setup(checkpoint, use_oracle, dim, sde);

  LambdaSampler sampler;
  sampler.lambda = lambda;
  sampler.score = setup.source.get();
  sampler.sde = sde;
  sampler.n_steps = steps;
  sampler.scheme =
      lambda == 1.0 ? SampleScheme::heun_ode : SampleScheme::euler_maruyama;
  const Mat xs = sample(sampler, n, seed, threads);

  fs::create_directories(out_dir);
  std::vector<std::string> header;
  for (int j = 0; j < setup.dim; ++j) header.push_back("x" + std::to_string(j));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row;
    for (int j = 0; j < setup.dim; ++j)
      row.push_back(format_double(xs(j, static_cast<Eigen::Index>(i))));
    rows.push_back(std::move(row));
  }
  write_csv(out_dir + "/samples.csv", header, rows);
  if (setup.dim == 2) write_scatter_svg(out_dir + "/samples.svg", xs);
  Config rc;
  rc.set("run.command", "sample");
  rc.set_int("run.seed", static_cast<std::int64_t>(seed));
  rc.set("sample.checkpoint", use_oracle ? "<oracle>" : checkpoint);
  rc.set_double("sample.lambda", lambda);
  rc.set_int("sample.n", static_cast<std::int64_t>(n));
  rc.set_int("sample.steps", static_cast<std::int64_t>(steps));
  write_resolved_config(rc, out_dir);
  std::cout << "wrote " << out_dir << "/samples.csv"
            << (setup.dim == 2 ? " and samples.svg" : "") << "\n";
  return 0;
}

int cmd_check(const std::string& suite, bool quick, std::uint64_t seed_in,
              unsigned threads, const std::string& out_dir) {
  CheckOptions opt;
  opt.seed = effective_seed(seed_in);
  opt.threads = threads;
  opt.out_dir = out_dir;
  opt.quick = quick;
  const auto results = run_check_suite(suite, opt);
  const std::string report = format_check_report(results);
  std::cout << report;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/check_" + suite + "_report.txt", report);
    Config rc;
    rc.set("run.command", "check");
    rc.set("check.suite", suite);
    rc.set("check.quick", quick ? "true" : "false");
    rc.set_int("run.seed", static_cast<std::int64_t>(opt.seed));
    write_resolved_config(rc, out_dir);
  }
  return all_pass(results) ? 0 : 1;
}

int cmd_data(const std::string& kind, std::size_t n, double noise_std,
             std::uint64_t seed_in, const std::string& out_file) {
  const std::uint64_t seed = effective_seed(seed_in);
  Dataset ds;
  if (kind == "swiss_roll") {
    ds = swiss_roll(n, noise_std, seed);
  } else if (kind == "gaussian_mixture") {
    ds = gaussian_mixture({Vec::Constant(2, -2.0).eval(), Vec::Constant(2, 2.0).eval()},
                          {0.5, 0.5}, 1.0, n, seed);
  } else if (kind == "gaussian") {
    ds = gaussian_mixture({Vec::Zero(2).eval()}, {1.0}, 1.0, n, seed);
  } else {
    throw CLI::ValidationError("unknown --kind " + kind);
  }
  save_dataset_csv(ds, out_file);
  std::cout << "wrote " << out_file << " (" << ds.size() << " points)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational estimators and samplers for continuous-time "
               "diffusion generative models"};
  app.require_subcommand(1);

  // train
  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "train a score network from a config file");
  train_cmd->add_option("--config", train_config, "key-value config file")->required();

  // elbo
  std::string elbo_ckpt, elbo_div = "exact", elbo_data, elbo_out;
  bool elbo_oracle = false, elbo_ode = false;
  double elbo_lambda = 0.0;
  std::size_t elbo_paths = 4096, elbo_steps = 1000, elbo_probes = 1, elbo_ndata = 4096;
  int elbo_dim = 2;
  std::uint64_t elbo_seed = 0;
  unsigned elbo_threads = 1;
  auto* elbo_cmd = app.add_subcommand("elbo", "estimate the CT-ELBO (or the lambda = 1 ODE log-density)");
  elbo_cmd->add_option("--checkpoint", elbo_ckpt, "score network checkpoint");
  elbo_cmd->add_flag("--oracle", elbo_oracle, "use the closed-form Gaussian oracle score");
  elbo_cmd->add_option("--lambda", elbo_lambda, "family parameter, < 1 unless --ode");
  elbo_cmd->add_flag("--ode", elbo_ode, "evaluate the probability-flow ODE log-density");
  elbo_cmd->add_option("--paths", elbo_paths, "Monte-Carlo paths");
  elbo_cmd->add_option("--steps", elbo_steps, "integration steps");
  elbo_cmd->add_option("--div", elbo_div, "divergence mode: exact|hutch")
      ->check(CLI::IsMember({"exact", "hutch"}));
  elbo_cmd->add_option("--probes", elbo_probes, "Hutchinson probes");
  elbo_cmd->add_option("--n-data", elbo_ndata, "data points when drawing N(0, I)");
  elbo_cmd->add_option("--data", elbo_data, "dataset CSV to evaluate on");
  elbo_cmd->add_option("--dim", elbo_dim, "dimension for --oracle");
  elbo_cmd->add_option("--seed", elbo_seed, "rng seed");
  elbo_cmd->add_option("--threads", elbo_threads, "worker threads");
  elbo_cmd->add_option("--out", elbo_out, "output directory");

  // sample
  std::string sample_ckpt, sample_out = "runs/sample";
  bool sample_oracle = false;
  double sample_lambda = 0.0;
  std::size_t sample_n = 1000, sample_steps = 1000;
  int sample_dim = 2;
  std::uint64_t sample_seed = 0;
  unsigned sample_threads = 1;
  auto* sample_cmd = app.add_subcommand("sample", "draw samples from a plug-in reverse SDE/ODE");
  sample_cmd->add_option("--checkpoint", sample_ckpt, "score network checkpoint");
  sample_cmd->add_flag("--oracle", sample_oracle, "use the Gaussian oracle score");
  sample_cmd->add_option("--lambda", sample_lambda, "family parameter in [0, 1]");
  sample_cmd->add_option("--n", sample_n, "number of samples");
  sample_cmd->add_option("--steps", sample_steps, "integration steps");
  sample_cmd->add_option("--dim", sample_dim, "dimension for --oracle");
  sample_cmd->add_option("--seed", sample_seed, "rng seed");
  sample_cmd->add_option("--threads", sample_threads, "worker threads");
  sample_cmd->add_option("--out", sample_out, "output directory");

  // check
  std::string check_suite, check_out;
  bool check_quick = false;
  std::uint64_t check_seed = 1;
  unsigned check_threads = 1;
  auto* check_cmd = app.add_subcommand("check", "run a property suite and report pass/fail");
  check_cmd->add_option("suite", check_suite,
                        "identity|consistency|debias|gap|lambda-equiv|fk")
      ->required();
  check_cmd->add_flag("--quick", check_quick, "reduced sample counts");
  check_cmd->add_option("--seed", check_seed, "rng seed");
  check_cmd->add_option("--threads", check_threads, "worker threads");
  check_cmd->add_option("--out", check_out, "output directory for report and CSVs");

  // data
  std::string data_kind = "swiss_roll", data_out = "dataset.csv";
  std::size_t data_n = 10000;
  double data_noise = 0.05;
  std::uint64_t data_seed = 0;
  auto* data_cmd = app.add_subcommand("data", "generate and export a toy dataset");
  data_cmd->add_option("--kind", data_kind, "swiss_roll|gaussian_mixture|gaussian");
  data_cmd->add_option("--n", data_n, "number of points");
  data_cmd->add_option("--noise-std", data_noise, "swiss-roll noise");
  data_cmd->add_option("--seed", data_seed, "rng seed");
  data_cmd->add_option("--out", data_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_config);
    if (elbo_cmd->parsed()) {
      if (!elbo_oracle && elbo_ckpt.empty())
        throw CLI::ValidationError("elbo: need --checkpoint or --oracle");
      return cmd_elbo(elbo_ckpt, elbo_oracle, elbo_lambda, elbo_ode, elbo_paths,
                      elbo_steps, elbo_div, elbo_probes, elbo_ndata, elbo_data,
                      elbo_dim, elbo_seed, elbo_threads, elbo_out);
    }
    if (sample_cmd->parsed()) {
      if (!sample_oracle && sample_ckpt.empty())
        throw CLI::ValidationError("sample: need --checkpoint or --oracle");
      return cmd_sample(sample_ckpt, sample_oracle, sample_lambda, sample_n,
                        sample_steps, sample_dim, sample_seed, sample_threads,
                        sample_out);
    }
    if (check_cmd->parsed())
      return cmd_check(check_suite, check_quick, check_seed, check_threads, check_out);
    if (data_cmd->parsed())
      return cmd_data(data_kind, data_n, data_noise, data_seed, data_out);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
