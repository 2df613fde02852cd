#include "sde_elbo/elbo.hpp"

#include <cmath>
#include <stdexcept>

#include "sde_elbo/parallel.hpp"

namespace sde_elbo {

double ElboEstimate::bits_per_dim(int d) const {
  return -mean / (static_cast<double>(d) * std::log(2.0));
}

namespace {

struct PathAccum {
  std::vector<double> prior, quad, div;
  std::vector<double> c_ito;   // sum_k w_k (||xi_k||^2 - d), known mean 0
  std::vector<double> c_data;  // 1/2 (||x||^2 - E||x||^2), known mean 0

  explicit PathAccum(std::size_t n, bool with_ito, bool with_data)
      : prior(n), quad(n), div(n) {
    if (with_ito) c_ito.assign(n, 0.0);
    if (with_data) c_data.assign(n, 0.0);
  }
};

// Least-squares control-variate coefficients; corrections are folded into
// the quad bucket so ElboTerms keeps mean == prior - quad - div.
ElboEstimate finalize(PathAccum& acc, std::size_t n_steps) {
  const std::size_t n = acc.prior.size();
  std::vector<double> value(n);
  for (std::size_t i = 0; i < n; ++i)
    value[i] = acc.prior[i] - acc.quad[i] - acc.div[i];

  std::vector<const std::vector<double>*> regs;
  if (!acc.c_ito.empty()) regs.push_back(&acc.c_ito);
  if (!acc.c_data.empty()) regs.push_back(&acc.c_data);
  // drop degenerate regressors
  std::vector<const std::vector<double>*> live;
  std::vector<double> rmean;
  for (auto* r : regs) {
    const MeanStderr ms = mean_stderr(*r);
    const double var = ms.stderr * ms.stderr * static_cast<double>(n);
    if (var > 1e-24) {
      live.push_back(r);
      rmean.push_back(ms.mean);
    }
  }
  std::vector<double> coef(live.size(), 0.0);
  if (!live.empty() && n > 8) {
    const double vmean = mean_stderr(value).mean;
    if (live.size() == 1) {
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = (*live[0])[i] - rmean[0];
        sxy += dx * (value[i] - vmean);
        sxx += dx * dx;
      }
      coef[0] = sxy / sxx;
    } else {
      double s00 = 0.0, s01 = 0.0, s11 = 0.0, s0y = 0.0, s1y = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d0 = (*live[0])[i] - rmean[0];
        const double d1 = (*live[1])[i] - rmean[1];
        const double dy = value[i] - vmean;
        s00 += d0 * d0;
        s01 += d0 * d1;
        s11 += d1 * d1;
        s0y += d0 * dy;
        s1y += d1 * dy;
      }
      const double det = s00 * s11 - s01 * s01;
      if (std::abs(det) > 1e-30 * s00 * s11 + 1e-300) {
        coef[0] = (s11 * s0y - s01 * s1y) / det;
        coef[1] = (s00 * s1y - s01 * s0y) / det;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double corr = 0.0;
      for (std::size_t j = 0; j < live.size(); ++j) corr += coef[j] * (*live[j])[i];
      acc.quad[i] += corr;
      value[i] -= corr;
    }
  }

  ElboEstimate est;
  const MeanStderr mv = mean_stderr(value);
  est.mean = mv.mean;
  est.stderr = mv.stderr;
  est.n_paths = n;
  est.n_steps = n_steps;
  est.terms.prior_term = mean_stderr(acc.prior).mean;
  est.terms.quad_term = mean_stderr(acc.quad).mean;
  est.terms.div_term = mean_stderr(acc.div).mean;
  return est;
}

void check_path_args(std::size_t n_paths, std::size_t n_steps, const Mat& x) {
  if (n_paths == 0) throw std::invalid_argument("elbo: n_paths >= 1 required");
  if (n_steps == 0) throw std::invalid_argument("elbo: n_steps >= 1 required");
  if (x.cols() == 0) throw std::invalid_argument("elbo: empty data batch");
}

[[noreturn]] void novikov_error(double running, double s) {
  throw std::runtime_error(
      "inference drift violates the Novikov surrogate: running int ||a||^2 = " +
      std::to_string(running) + " at s = " + std::to_string(s));
}

}  // namespace

FkDensity fk_density(const GenerativeSde& sde, const Vec& x,
                     std::size_t n_paths, std::size_t n_steps,
                     std::uint64_t seed, unsigned threads) {
  check_path_args(n_paths, n_steps, Mat(x));
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(n_steps);
  const int d = sde.dim;
  Rng master(seed);
  std::vector<double> vals(n_paths);
  std::vector<std::uint8_t> ok(n_paths, 0);
  parallel_for(n_paths, threads, [&](std::size_t p) {
    Rng rng = master.spawn(p);
    Vec y = x;
    double acc = 0.5 * dt * sde.div_mu(y, T);  // trapezoid, state at s=0
    bool finite = true;
    for (std::size_t k = 0; k < n_steps && finite; ++k) {
      const double s0 = dt * static_cast<double>(k);
      const double s1 = dt * static_cast<double>(k + 1);
      const double sig = sde.sigma(T - s0);
      Vec xi(d);
      for (int i = 0; i < d; ++i) xi[i] = rng.gauss();
      y += -sde.mu(y, T - s0) * dt + sig * std::sqrt(dt) * xi;
      const double w = (k + 1 == n_steps) ? 0.5 * dt : dt;
      acc += w * sde.div_mu(y, T - s1);
      finite = y.allFinite() && std::isfinite(acc);
    }
    if (finite) {
      const double v = std::exp(sde.prior_logpdf(y) - acc);
      if (std::isfinite(v)) {
        vals[p] = v;
        ok[p] = 1;
      }
    }
  });
  std::vector<double> kept;
  kept.reserve(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p)
    if (ok[p]) kept.push_back(vals[p]);
  const std::size_t rejected = n_paths - kept.size();
  if (rejected * 100 > n_paths)
    throw std::runtime_error("fk_density: more than 1% of paths diverged (" +
                             std::to_string(rejected) + " of " +
                             std::to_string(n_paths) + ")");
  const MeanStderr ms = mean_stderr(kept);
  return {ms.mean, ms.stderr, n_paths, rejected};
}

ElboEstimate ct_elbo(const GenerativeSde& sde, const InferenceDrift& a,
                     const Mat& x_batch, const PathOptions& opt) {
  check_path_args(opt.n_paths, opt.n_steps, x_batch);
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(opt.n_steps);
  const int d = sde.dim;
  const std::size_t m = static_cast<std::size_t>(x_batch.cols());
  Rng master(opt.seed);
  PathAccum acc(opt.n_paths, opt.ito_regressor_cv, opt.data_sq_norm_mean >= 0.0);

  parallel_for(opt.n_paths, opt.threads, [&](std::size_t p) {
    Rng rng = master.spawn(p);
    const Vec x = x_batch.col(static_cast<Eigen::Index>(p % m));
    Vec y = x;
    double quad = 0.0, div = 0.0, c_ito = 0.0, running_a2 = 0.0;
    Vec a_cur = a(y, 0.0);
    double w_end = opt.trapezoid ? 0.5 * dt : dt;
    quad += w_end * 0.5 * a_cur.squaredNorm();
    div += w_end * sde.div_mu(y, T);
    Vec xi(d);
    for (std::size_t k = 0; k < opt.n_steps; ++k) {
      const double s0 = dt * static_cast<double>(k);
      const double s1 = dt * static_cast<double>(k + 1);
      const double sig = sde.sigma(T - s0);
      for (int i = 0; i < d; ++i) xi[i] = rng.gauss();
      if (opt.girsanov_martingale) quad += std::sqrt(dt) * a_cur.dot(xi);
      if (!acc.c_ito.empty()) c_ito += 0.5 * sig * sig * dt * (xi.squaredNorm() - d);
      running_a2 += a_cur.squaredNorm() * dt;
      if (!(running_a2 < opt.novikov_guard)) novikov_error(running_a2, s0);
      y += (-sde.mu(y, T - s0) + sig * a_cur) * dt + sig * std::sqrt(dt) * xi;
      if (!y.allFinite())
        throw std::runtime_error("ct_elbo: non-finite state at s = " +
                                 std::to_string(s1));
      a_cur = a(y, s1);
      const bool last = (k + 1 == opt.n_steps);
      const double w = opt.trapezoid ? (last ? 0.5 * dt : dt) : (last ? 0.0 : dt);
      if (w > 0.0) {
        quad += w * 0.5 * a_cur.squaredNorm();
        div += w * sde.div_mu(y, T - s1);
      }
    }
    acc.prior[p] = sde.prior_logpdf(y);
    acc.quad[p] = quad;
    acc.div[p] = div;
    if (!acc.c_ito.empty()) acc.c_ito[p] = c_ito;
    if (!acc.c_data.empty())
      acc.c_data[p] = 0.5 * (x.squaredNorm() - opt.data_sq_norm_mean);
  });
  return finalize(acc, opt.n_steps);
}

namespace {

// Shared batched driver for the fixed-VP plugin and the lambda family.
// Columns of Y are independent paths; per-path rng streams keep results
// schedule-invariant (chunks are fixed, threads only pick chunks).
struct VpPathConfig {
  double lambda = 0.0;
  const GaussianOracle* oracle = nullptr;  // required when lambda != 0
};

ElboEstimate vp_family_elbo(const ScoreSource& score, const VpSde& sde,
                            const Mat& x_batch, const PathOptions& opt,
                            const VpPathConfig& cfg) {
  sde.validate();
  check_path_args(opt.n_paths, opt.n_steps, x_batch);
  const int d = static_cast<int>(x_batch.rows());
  if (score.dim() != d) throw std::invalid_argument("elbo: dimension mismatch");
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(opt.n_steps);
  const double lam = cfg.lambda;
  if (lam >= 1.0)
    throw std::domain_error(
        "lambda >= 1 is outside the ELBO domain (the quadratic Girsanov term "
        "divides by 1 - lambda); the lambda = 1 member is the deterministic ODE");
  if (lam != 0.0 && cfg.oracle == nullptr)
    throw std::runtime_error(
        "lambda != 0 requires the Gaussian oracle: the inference drift and the "
        "correction terms involve grad log q");
  const double sqrt1ml = std::sqrt(1.0 - lam);
  const std::size_t m = static_cast<std::size_t>(x_batch.cols());
  const bool exact_steps = opt.exact_vp_steps && lam == 0.0;

  Rng master(opt.seed);
  PathAccum acc(opt.n_paths, opt.ito_regressor_cv, opt.data_sq_norm_mean >= 0.0);

  const std::size_t chunk = 1024;  // fixed: results must not depend on threads
  const std::size_t n_chunks = (opt.n_paths + chunk - 1) / chunk;

  parallel_for(n_chunks, opt.threads, [&](std::size_t ci) {
    const std::size_t lo = ci * chunk;
    const std::size_t hi = std::min(opt.n_paths, lo + chunk);
    const int c = static_cast<int>(hi - lo);
    Rng rng_div = master.spawn(0x100000000ull + ci);  // hutchinson probes
    std::vector<Rng> rngs;
    rngs.reserve(c);
    for (std::size_t p = lo; p < hi; ++p) rngs.push_back(master.spawn(p));

    Mat y(d, c);
    for (int j = 0; j < c; ++j)
      y.col(j) = x_batch.col(static_cast<Eigen::Index>((lo + j) % m));
    std::vector<double> quad(c, 0.0), div(c, 0.0), cito(c, 0.0), runa2(c, 0.0);
    Mat shat(d, c), a_cur(d, c), xi(d, c), qscore(d, c);
    Vec divs(c);
    std::vector<double> s_times(c);

    // integrand and drift pieces at one shared time s
    auto eval_state = [&](double s) {
      std::fill(s_times.begin(), s_times.end(), s);
      score.score_batch(y, s_times, shat);
      score.divergence_batch(y, s_times, opt.div_mode, opt.hutchinson_probes,
                             rng_div, divs);
      const double g = diffusion_g(sde, s);
      const double b = g * g;
      if (lam == 0.0) {
        a_cur = g * shat;
      } else {
        cfg.oracle->score_batch_at(y, s, qscore);
        a_cur = ((1.0 - lam) * g * shat +
                 (0.5 * lam * g) * (shat - qscore)) /
                sqrt1ml;
      }
      // div mu_lambda = (1 - lam/2) g^2 div s_theta + 1/2 beta d
      for (int j = 0; j < c; ++j)
        divs[j] = (1.0 - 0.5 * lam) * b * divs[j] + 0.5 * b * d;
    };

    auto accumulate = [&](double w) {
      for (int j = 0; j < c; ++j) {
        quad[j] += w * 0.5 * a_cur.col(j).squaredNorm();
        div[j] += w * divs[j];
      }
    };

    eval_state(0.0);
    accumulate(opt.trapezoid ? 0.5 * dt : dt);
    for (std::size_t k = 0; k < opt.n_steps; ++k) {
      const double s0 = dt * static_cast<double>(k);
      const double s1 = dt * static_cast<double>(k + 1);
      const double b0 = beta(sde, s0);
      const double sig = sqrt1ml * std::sqrt(b0);
      for (int j = 0; j < c; ++j)
        for (int i = 0; i < d; ++i) xi(i, j) = rngs[j].gauss();
      for (int j = 0; j < c; ++j) {
        if (opt.girsanov_martingale)
          quad[j] += std::sqrt(dt) * a_cur.col(j).dot(xi.col(j));
        if (!acc.c_ito.empty())
          cito[j] += 0.5 * sig * sig * dt * (xi.col(j).squaredNorm() - d);
        runa2[j] += a_cur.col(j).squaredNorm() * dt;
        if (!(runa2[j] < opt.novikov_guard)) novikov_error(runa2[j], s0);
      }
      if (exact_steps) {
        const double alpha =
            std::exp(-0.5 * (int_beta(sde, s1) - int_beta(sde, s0)));
        y = alpha * y + std::sqrt(1.0 - alpha * alpha) * xi;
      } else if (lam == 0.0) {
        y = (1.0 - 0.5 * b0 * dt) * y + std::sqrt(b0 * dt) * xi;
      } else {
        // dY = (f - lam/2 g^2 grad log q) ds + sqrt(1-lam) g dB;
        // qscore still holds grad log q at (y, s0) from eval_state
        y += (-0.5 * b0 * y - 0.5 * lam * b0 * qscore) * dt +
             sig * std::sqrt(dt) * xi;
      }
      if (!y.allFinite())
        throw std::runtime_error("elbo: non-finite path state at s = " +
                                 std::to_string(s1));
      eval_state(s1);
      const bool last = (k + 1 == opt.n_steps);
      const double w = opt.trapezoid ? (last ? 0.5 * dt : dt) : (last ? 0.0 : dt);
      if (w > 0.0) accumulate(w);
    }
    for (int j = 0; j < c; ++j) {
      const std::size_t p = lo + static_cast<std::size_t>(j);
      acc.prior[p] = std_normal_logpdf(y.col(j));
      acc.quad[p] = quad[j];
      acc.div[p] = div[j];
      if (!acc.c_ito.empty()) acc.c_ito[p] = cito[j];
      if (!acc.c_data.empty())
        acc.c_data[p] =
            0.5 * (x_batch.col(static_cast<Eigen::Index>(p % m)).squaredNorm() -
                   opt.data_sq_norm_mean);
    }
  });
  return finalize(acc, opt.n_steps);
}

}  // namespace

ElboEstimate ct_elbo_plugin(const ScoreSource& score, const VpSde& sde,
                            const Mat& x_batch, const PathOptions& opt) {
  return vp_family_elbo(score, sde, x_batch, opt, {});
}

ElboEstimate ct_elbo_lambda(const ScoreSource& score, const VpSde& sde,
                            double lambda, const Mat& x_batch,
                            const PathOptions& opt,
                            const GaussianOracle* oracle) {
  VpPathConfig cfg;
  cfg.lambda = lambda;
  cfg.oracle = oracle;
  return vp_family_elbo(score, sde, x_batch, opt, cfg);
}

MeanStderr weighted_esm_integral(const ScoreSource& score,
                                 const GaussianOracle& oracle, std::size_t n,
                                 Rng& rng) {
  if (n == 0) throw std::invalid_argument("weighted_esm_integral: n >= 1");
  const VpSde& sde = oracle.sde();
  const double T = sde.horizon_T;
  std::vector<double> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = T * rng.uniform();
    const Vec y = oracle.sample_marginal(s, rng);
    const double g2 = beta(sde, s);
    const Vec diff = score.score(y, s) - oracle.score(y, s);
    rows[i] = T * 0.5 * g2 * diff.squaredNorm();
  }
  return mean_stderr(rows);
}

MeanStderr ode_log_density(const ScoreSource& score, const VpSde& sde,
                           const Mat& x_batch, std::size_t n_steps,
                           DivMode div_mode, std::size_t probes,
                           std::uint64_t seed, unsigned threads) {
  sde.validate();
  if (n_steps == 0) throw std::invalid_argument("ode_log_density: n_steps >= 1");
  if (x_batch.cols() == 0) throw std::invalid_argument("ode_log_density: empty batch");
  const int d = static_cast<int>(x_batch.rows());
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(n_steps);
  const std::size_t n = static_cast<std::size_t>(x_batch.cols());
  Rng master(seed);
  std::vector<double> vals(n);

  const std::size_t chunk = 1024;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  parallel_for(n_chunks, threads, [&](std::size_t ci) {
    const std::size_t lo = ci * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    const int c = static_cast<int>(hi - lo);
    Rng rng_div = master.spawn(0x200000000ull + ci);
    Mat y = x_batch.middleCols(static_cast<Eigen::Index>(lo), c);
    Mat shat(d, c), k1(d, c), k2(d, c), yp(d, c);
    Vec divs(c);
    std::vector<double> acc(c, 0.0), s_times(c);

    // ODE inference dynamic dY = (f - 1/2 g^2 s_theta) ds; the density
    // accumulates -int div mu with mu = 1/2 g^2 s_theta - f
    auto drift_and_div = [&](const Mat& state, double s, Mat& dest, Vec* divout) {
      std::fill(s_times.begin(), s_times.end(), s);
      score.score_batch(state, s_times, shat);
      const double b = beta(sde, s);
      dest = -0.5 * b * state - 0.5 * b * shat;
      if (divout) {
        score.divergence_batch(state, s_times, div_mode, probes, rng_div, *divout);
        for (int j = 0; j < c; ++j)
          (*divout)[j] = 0.5 * b * (*divout)[j] + 0.5 * b * d;
      }
    };

    drift_and_div(y, 0.0, k1, &divs);  // k1 holds the drift at the left state
    for (int j = 0; j < c; ++j) acc[j] += 0.5 * dt * divs[j];
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double s1 = dt * static_cast<double>(k + 1);
      yp = y + dt * k1;
      drift_and_div(yp, s1, k2, nullptr);
      y += 0.5 * dt * (k1 + k2);
      if (!y.allFinite())
        throw std::runtime_error("ode_log_density: non-finite state at s = " +
                                 std::to_string(s1));
      drift_and_div(y, s1, k1, &divs);
      const double w = (k + 1 == n_steps) ? 0.5 * dt : dt;
      for (int j = 0; j < c; ++j) acc[j] += w * divs[j];
    }
    for (int j = 0; j < c; ++j)
      vals[lo + static_cast<std::size_t>(j)] =
          std_normal_logpdf(y.col(j)) - acc[j];
  });
  return mean_stderr(vals);
}

ElboEstimate dt_elbo(const GenerativeSde& sde, const InferenceDrift& a,
                     const Mat& x_batch, std::size_t layers,
                     const DtOptions& opt) {
  if (layers < 1) throw std::invalid_argument("dt_elbo: layers >= 1 required");
  if (opt.n_chains == 0) throw std::invalid_argument("dt_elbo: n_chains >= 1");
  if (x_batch.cols() == 0) throw std::invalid_argument("dt_elbo: empty batch");
  const int d = sde.dim;
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(layers);
  const std::size_t m = static_cast<std::size_t>(x_batch.cols());
  const std::size_t n_groups = opt.antithetic
                                   ? (opt.n_chains + 1) / 2
                                   : opt.n_chains;
  Rng master(opt.seed);
  PathAccum acc(n_groups, opt.ito_regressor_cv, opt.data_sq_norm_mean >= 0.0);

  parallel_for(n_groups, opt.threads, [&](std::size_t gi) {
    Rng rng = master.spawn(gi);
    const Vec x = x_batch.col(static_cast<Eigen::Index>(gi % m));
    const int reps = opt.antithetic ? 2 : 1;
    double prior_sum = 0.0, ratio_sum = 0.0, cito_sum = 0.0;
    std::vector<Vec> eps(layers, Vec(d));
    for (std::size_t i = 0; i < layers; ++i)
      for (int j = 0; j < d; ++j) eps[i][j] = rng.gauss();
    for (int rep = 0; rep < reps; ++rep) {
      const double sgn = rep == 0 ? 1.0 : -1.0;
      Vec xc = x;  // x_{i+1}, starting at x_L
      double ratio = 0.0, cito = 0.0;
      for (std::size_t ii = layers; ii-- > 0;) {
        const double t_hi = dt * static_cast<double>(ii + 1);
        const double t_lo = dt * static_cast<double>(ii);
        const double sig_hi = sde.sigma(t_hi);
        const double sig_lo = sde.sigma(t_lo);
        const Vec e = sgn * eps[layers - 1 - ii];
        const Vec mean_q =
            xc + dt * (-sde.mu(xc, t_hi) + sig_hi * a(xc, T - t_hi));
        const Vec x_lo = mean_q + std::sqrt(dt) * sig_hi * e;
        const double lq = -0.5 * d * std::log(2.0 * M_PI * dt * sig_hi * sig_hi) -
                          0.5 * e.squaredNorm();
        const Vec resid = xc - x_lo - dt * sde.mu(x_lo, t_lo);
        const double lp = -0.5 * d * std::log(2.0 * M_PI * dt * sig_lo * sig_lo) -
                          resid.squaredNorm() / (2.0 * dt * sig_lo * sig_lo);
        ratio += lp - lq;
        cito += 0.5 * sig_hi * sig_hi * dt * (e.squaredNorm() - d);
        xc = x_lo;
      }
      prior_sum += sde.prior_logpdf(xc);
      ratio_sum += ratio;
      cito_sum += cito;
    }
    const double inv = 1.0 / static_cast<double>(reps);
    acc.prior[gi] = prior_sum * inv;
    acc.quad[gi] = 0.0;
    acc.div[gi] = -ratio_sum * inv;  // DT bucket: -sum log p/q
    if (!acc.c_ito.empty()) acc.c_ito[gi] = cito_sum * inv;
    if (!acc.c_data.empty())
      acc.c_data[gi] = 0.5 * (x.squaredNorm() - opt.data_sq_norm_mean);
  });
  ElboEstimate est = finalize(acc, layers);
  est.n_paths = opt.n_chains;
  return est;
}

ElboEstimate dt_elbo_plugin(const ScoreSource& score, const VpSde& sde,
                            const Mat& x_batch, std::size_t layers,
                            const DtOptions& opt) {
  GenerativeSde gen;
  gen.dim = static_cast<int>(x_batch.rows());
  gen.horizon_T = sde.horizon_T;
  const double T = sde.horizon_T;
  gen.mu = [&score, &sde, T](const Vec& x, double t) -> Vec {
    const double s = T - t;
    const double g2 = beta(sde, s);
    return g2 * score.score(x, s) - drift_f(sde, x, s);
  };
  gen.sigma = [&sde, T](double t) { return diffusion_g(sde, T - t); };
  gen.div_mu = [](const Vec&, double) -> double {
    throw std::logic_error("dt_elbo_plugin: div_mu is not used");
  };
  gen.prior_logpdf = [](const Vec& y) { return std_normal_logpdf(y); };
  InferenceDrift a = [&score, &sde](const Vec& y, double s) -> Vec {
    return diffusion_g(sde, s) * score.score(y, s);
  };
  return dt_elbo(gen, a, x_batch, layers, opt);
}

MeanStderr variational_gap(const GenerativeSde& sde, const InferenceDrift& a,
                           const std::function<Vec(const Vec&, double)>& grad_log_p,
                           const Vec& x, std::size_t n_paths,
                           std::size_t n_steps, std::uint64_t seed,
                           unsigned threads) {
  check_path_args(n_paths, n_steps, Mat(x));
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(n_steps);
  const int d = sde.dim;
  Rng master(seed);
  std::vector<double> vals(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t p) {
    Rng rng = master.spawn(p);
    Vec y = x;
    auto rate = [&](const Vec& yy, double s) {
      const Vec diff = a(yy, s) - sde.sigma(T - s) * grad_log_p(yy, T - s);
      return 0.5 * diff.squaredNorm();
    };
    double gap = 0.5 * dt * rate(y, 0.0);
    Vec xi(d);
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double s0 = dt * static_cast<double>(k);
      const double s1 = dt * static_cast<double>(k + 1);
      const double sig = sde.sigma(T - s0);
      for (int i = 0; i < d; ++i) xi[i] = rng.gauss();
      y += (-sde.mu(y, T - s0) + sig * a(y, s0)) * dt + sig * std::sqrt(dt) * xi;
      gap += (k + 1 == n_steps ? 0.5 * dt : dt) * rate(y, s1);
    }
    vals[p] = gap;
  });
  return mean_stderr(vals);
}

double LinearSde::var_at(double t) const {
  const double e2 = std::exp(2.0 * theta * t);
  const double growth =
      std::abs(theta) < 1e-12 ? t : std::expm1(2.0 * theta * t) / (2.0 * theta);
  return e2 + sigma * sigma * growth;
}

double LinearSde::logpdf(const Vec& x, double t) const {
  const double v = var_at(t);
  return -0.5 * dim * std::log(2.0 * M_PI * v) - 0.5 * x.squaredNorm() / v;
}

Vec LinearSde::grad_log_p(const Vec& x, double t) const {
  return -x / var_at(t);
}

GenerativeSde LinearSde::as_generative() const {
  GenerativeSde g;
  g.dim = dim;
  g.horizon_T = horizon_T;
  const double th = theta;
  const int dd = dim;
  g.mu = [th](const Vec& x, double) -> Vec { return th * x; };
  g.sigma = [s = sigma](double) { return s; };
  g.div_mu = [th, dd](const Vec&, double) { return th * static_cast<double>(dd); };
  g.prior_logpdf = [](const Vec& y) { return std_normal_logpdf(y); };
  return g;
}

}  // namespace sde_elbo
