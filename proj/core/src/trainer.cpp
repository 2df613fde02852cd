#include "sde_elbo/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "sde_elbo/elbo.hpp"
#include "sde_elbo/io.hpp"
#include "sde_elbo/time_sampler.hpp"

namespace sde_elbo {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "dsm_weighted_uniform") return LossKind::dsm_weighted_uniform;
  if (s == "dsm_debiased") return LossKind::dsm_debiased;
  if (s == "ssm") return LossKind::ssm;
  throw std::invalid_argument("unknown loss_kind: " + s);
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::dsm_weighted_uniform: return "dsm_weighted_uniform";
    case LossKind::dsm_debiased: return "dsm_debiased";
    case LossKind::ssm: return "ssm";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr > 0");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch >= 1");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every >= 1");
  if (!(s_min > 0.0)) throw std::invalid_argument("TrainConfig: s_min > 0");
}

AdamState AdamState::init(const ScoreNet& net) {
  AdamState st;
  for (const auto& l : net.layers()) {
    LayerParams zm, zv;
    zm.W = Mat::Zero(l.W.rows(), l.W.cols());
    zm.b = Vec::Zero(l.b.size());
    zv = zm;
    st.m.push_back(std::move(zm));
    st.v.push_back(std::move(zv));
  }
  return st;
}

void adam_step(AdamState& state, std::vector<LayerParams>& params,
               const ParamGrad& grads, double lr) {
  if (state.m.size() != params.size() || grads.layers.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto upd = [&](auto& p, auto& m, auto& v, const auto& g) {
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    upd(params[l].W, state.m[l].W, state.v[l].W, grads.layers[l].W);
    upd(params[l].b, state.m[l].b, state.v[l].b, grads.layers[l].b);
  }
}

namespace {

struct BatchDraw {
  Mat y_s;                 // perturbed points
  Mat noise;
  std::vector<double> s;
  std::vector<double> scale;   // sqrt(v)/g under drift_a, sqrt(v) under score
  std::vector<double> weight;  // per-row loss multiplier (Z for debiased)
};

BatchDraw draw_batch(const Mat& train, const VpSde& sde, const TrainConfig& cfg,
                     const DebiasedTimeDist* dist, Rng& rng) {
  const int d = static_cast<int>(train.rows());
  const std::size_t ntrain = static_cast<std::size_t>(train.cols());
  BatchDraw b;
  b.y_s.resize(d, cfg.batch);
  b.noise.resize(d, cfg.batch);
  b.s.resize(cfg.batch);
  b.scale.resize(cfg.batch);
  b.weight.assign(cfg.batch, 1.0);
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    const std::size_t idx = static_cast<std::size_t>(rng.next_u64() % ntrain);
    double s;
    if (cfg.loss_kind == LossKind::dsm_debiased) {
      s = dist->inv_cdf(rng.uniform());
      if (s < cfg.s_min) s = cfg.s_min;
      b.weight[i] = dist->normalizer();
    } else {
      s = cfg.s_min + (sde.horizon_T - cfg.s_min) * rng.uniform();
    }
    b.s[i] = s;
    for (int j = 0; j < d; ++j) b.noise(j, i) = rng.gauss();
    const Perturbed p =
        perturb(sde, train.col(static_cast<Eigen::Index>(idx)), s, b.noise.col(i));
    b.y_s.col(i) = p.y_s;
    const PerturbationKernel k = kernel_at(sde, s);
    b.scale[i] = cfg.parameterize == Parameterization::drift_a
                     ? k.std / diffusion_g(sde, s)
                     : k.std;
  }
  return b;
}

// weighted DSM rows 1/2 || scale * net + eps ||^2 (times the importance
// weight); cotangents for one batched backward pass
MeanStderr dsm_rows_and_cotangent(const ScoreNet::BatchCache& cache,
                                  const BatchDraw& b, Mat& cot,
                                  std::vector<double>& rows) {
  const std::size_t n = b.s.size();
  cot.resize(cache.out.rows(), cache.out.cols());
  rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec resid = b.scale[i] * cache.out.col(i) + b.noise.col(i);
    rows[i] = b.weight[i] * 0.5 * resid.squaredNorm();
    cot.col(i) = (b.weight[i] * b.scale[i] / static_cast<double>(n)) * resid;
  }
  return mean_stderr(rows);
}

}  // namespace

TrainResult train(ScoreNet& net, const Dataset& data, const VpSde& sde,
                  const TrainConfig& cfg) {
  cfg.validate();
  sde.validate();
  const Mat train_pts = data.train_points();
  if (train_pts.cols() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.dim() != net.dim())
    throw std::invalid_argument("train: net/data dimension mismatch");

  DebiasedTimeDist dist(sde, cfg.s_eps);
  Rng master(cfg.seed);
  AdamState adam = AdamState::init(net);
  ParamGrad grad = net.zero_grad();
  TrainResult result;
  result.loss_history.reserve(cfg.iters);

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  // held-out CT-ELBO (lambda = 0, Hutchinson divergence)
  const Mat heldout = data.heldout_points();
  auto eval_elbo = [&](std::size_t iter) -> MeanStderr {
    if (heldout.cols() == 0) return {0.0, 0.0, 0};
    NetScoreSource src(net, cfg.parameterize, sde);
    PathOptions opt;
    opt.n_paths = cfg.eval_paths;
    opt.n_steps = cfg.eval_steps;
    opt.div_mode = DivMode::hutchinson;
    opt.hutchinson_probes = 1;
    opt.seed = mix_seed(cfg.seed, 0xe7a1 + iter);
    opt.threads = cfg.threads;
    if (data.standardized) opt.data_sq_norm_mean = data.dim();
    const ElboEstimate est = ct_elbo_plugin(src, sde, heldout, opt);
    return {est.mean, est.stderr, est.n_paths};
  };

  auto record = [&](std::size_t iter, const MeanStderr& loss, bool with_eval) {
    MetricsRow row;
    row.iter = iter;
    row.wall_clock_s = wall();
    row.loss_mean = loss.mean;
    row.loss_stderr = loss.stderr;
    if (with_eval) {
      const MeanStderr e = eval_elbo(iter);
      row.has_eval = true;
      row.eval_elbo_mean = e.mean;
      row.eval_elbo_stderr = e.stderr;
      if (result.metrics.empty()) result.first_eval_elbo = e.mean;
      result.last_eval_elbo = e.mean;
    }
    result.metrics.push_back(row);
  };

  record(0, {0.0, 0.0, 0}, true);

  ScoreNet::BatchCache cache;
  ScoreNet::TangentCache tangent;
  Mat cot, probes;
  std::vector<double> rows;
  for (std::size_t iter = 1; iter <= cfg.iters; ++iter) {
    Rng rng = master.spawn(iter);
    BatchDraw b = draw_batch(train_pts, sde, cfg, &dist, rng);
    net.forward_batch(b.y_s, b.s, cache);
    grad.set_zero();
    MeanStderr loss;
    if (cfg.loss_kind == LossKind::ssm) {
      const int d = net.dim();
      probes.resize(d, cache.out.cols());
      for (Eigen::Index j = 0; j < probes.cols(); ++j)
        for (int i = 0; i < d; ++i) probes(i, j) = rng.rademacher();
      net.jvp_batch(cache, probes, tangent);
      rows.resize(cfg.batch);
      Mat gout(d, cache.out.cols()), gtan(d, cache.out.cols());
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        const double g = diffusion_g(sde, b.s[i]);
        const double c_sq = cfg.parameterize == Parameterization::drift_a ? 1.0 : g * g;
        const double c_div = cfg.parameterize == Parameterization::drift_a ? g : g * g;
        const double vjv = probes.col(i).dot(tangent.tout.col(i));
        rows[i] = c_sq * 0.5 * cache.out.col(i).squaredNorm() + c_div * vjv;
        gout.col(i) = (c_sq / static_cast<double>(cfg.batch)) * cache.out.col(i);
        gtan.col(i) = (c_div / static_cast<double>(cfg.batch)) * probes.col(i);
      }
      loss = mean_stderr(rows);
      net.vjp_with_tangent(cache, tangent, gout, gtan, &grad);
    } else {
      loss = dsm_rows_and_cotangent(cache, b, cot, rows);
      net.vjp_batch(cache, cot, &grad, nullptr);
    }
    if (!std::isfinite(loss.mean) || !grad.all_finite())
      throw std::runtime_error("train: non-finite loss at iteration " +
                               std::to_string(iter) + " (config " +
                               cfg.config_hash + ")");
    adam_step(adam, net.layers(), grad, cfg.lr);
    result.loss_history.push_back(loss.mean);
    if (iter == cfg.iters || iter % cfg.eval_every == 0) record(iter, loss, true);
  }

  if (!cfg.checkpoint_path.empty())
    net.save(cfg.checkpoint_path, to_string(cfg.parameterize), cfg.config_hash);
  return result;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows,
                       const std::string& path) {
  std::vector<std::vector<std::string>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({std::to_string(r.iter), format_double(r.wall_clock_s),
                   format_double(r.loss_mean), format_double(r.loss_stderr),
                   r.has_eval ? format_double(r.eval_elbo_mean) : "",
                   r.has_eval ? format_double(r.eval_elbo_stderr) : ""});
  }
  write_csv(path,
            {"iter", "wall_clock_s", "loss_mean", "loss_stderr",
             "eval_elbo_mean", "eval_elbo_stderr"},
            out);
}

}  // namespace sde_elbo
