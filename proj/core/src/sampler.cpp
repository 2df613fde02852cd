#include "sde_elbo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sde_elbo/parallel.hpp"

namespace sde_elbo {

Vec em_step(const std::function<Vec(const Vec&, double)>& drift,
            const std::function<double(double)>& diffusion, const Vec& x,
            double t, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt > 0 required");
  Vec xi(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) xi[i] = rng.gauss();
  Vec out = x + drift(x, t) * dt + diffusion(t) * std::sqrt(dt) * xi;
  if (!out.allFinite())
    throw std::runtime_error("em_step: non-finite state at t = " +
                             std::to_string(t));
  return out;
}

void LambdaSampler::validate() const {
  sde.validate();
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("LambdaSampler: lambda in [0, 1]");
  if (score == nullptr) throw std::invalid_argument("LambdaSampler: no score source");
  if (n_steps == 0) throw std::invalid_argument("LambdaSampler: n_steps >= 1");
  if (lambda == 1.0 && scheme != SampleScheme::heun_ode)
    throw std::invalid_argument(
        "LambdaSampler: lambda = 1 has zero diffusion and requires the ODE scheme");
  if (lambda < 1.0 && scheme == SampleScheme::heun_ode)
    throw std::invalid_argument(
        "LambdaSampler: the Heun scheme only applies to the lambda = 1 ODE");
}

namespace {

constexpr std::size_t kChunk = 1024;  // fixed; results thread-count invariant

}  // namespace

Mat sample(const LambdaSampler& sampler, std::size_t n, std::uint64_t seed,
           unsigned threads) {
  sampler.validate();
  if (n == 0) throw std::invalid_argument("sample: n >= 1 required");
  const VpSde& sde = sampler.sde;
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(sampler.n_steps);
  const int d = sampler.score->dim();
  const double lam = sampler.lambda;
  Rng master(seed);
  Mat out(d, n);

  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  parallel_for(n_chunks, threads, [&](std::size_t ci) {
    const std::size_t lo = ci * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    const int c = static_cast<int>(hi - lo);
    std::vector<Rng> rngs;
    rngs.reserve(c);
    for (std::size_t p = lo; p < hi; ++p) rngs.push_back(master.spawn(p));
    Mat x(d, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < d; ++i) x(i, j) = rngs[j].gauss();

    Mat shat(d, c), mu(d, c), mu2(d, c), xi(d, c), xp(d, c);
    std::vector<double> times(c);
    auto drift_at = [&](const Mat& state, double t, Mat& dest) {
      const double s = T - t;
      const double b = beta(sde, s);
      std::fill(times.begin(), times.end(), s);
      sampler.score->score_batch(state, times, shat);
      // (1 - lam/2) g^2 s_theta - f, with f = -1/2 beta x
      dest = (1.0 - 0.5 * lam) * b * shat + 0.5 * b * state;
    };

    for (std::size_t k = 0; k < sampler.n_steps; ++k) {
      const double t0 = dt * static_cast<double>(k);
      const double t1 = dt * static_cast<double>(k + 1);
      drift_at(x, t0, mu);
      if (sampler.scheme == SampleScheme::heun_ode) {
        xp = x + dt * mu;
        drift_at(xp, t1, mu2);
        x += 0.5 * dt * (mu + mu2);
      } else {
        const double sig = std::sqrt(1.0 - lam) * diffusion_g(sde, T - t0);
        for (int j = 0; j < c; ++j)
          for (int i = 0; i < d; ++i) xi(i, j) = rngs[j].gauss();
        x += dt * mu + sig * std::sqrt(dt) * xi;
      }
      if (!x.allFinite())
        throw std::runtime_error("sample: non-finite state at t = " +
                                 std::to_string(t1));
    }
    out.middleCols(static_cast<Eigen::Index>(lo), c) = x;
  });
  return out;
}

InferencePaths simulate_inference(const VpSde& sde, double lambda,
                                  const GaussianOracle* oracle, const Mat& y0,
                                  std::size_t n_steps, std::uint64_t seed,
                                  const std::vector<double>& checkpoint_times,
                                  unsigned threads) {
  sde.validate();
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("simulate_inference: lambda in [0, 1]");
  if (lambda > 0.0 && oracle == nullptr)
    throw std::runtime_error(
        "simulate_inference: lambda > 0 needs the Gaussian oracle score");
  if (n_steps == 0) throw std::invalid_argument("simulate_inference: n_steps >= 1");
  const double T = sde.horizon_T;
  const double dt = T / static_cast<double>(n_steps);
  const int d = static_cast<int>(y0.rows());
  const std::size_t n = static_cast<std::size_t>(y0.cols());
  const bool deterministic = lambda == 1.0;

  // map checkpoint times onto grid indices
  std::vector<std::size_t> cp_steps;
  for (double tc : checkpoint_times) {
    if (!(tc >= 0.0 && tc <= T))
      throw std::invalid_argument("simulate_inference: checkpoint outside [0, T]");
    cp_steps.push_back(static_cast<std::size_t>(std::llround(tc / dt)));
  }

  InferencePaths out;
  out.terminal.resize(d, y0.cols());
  out.at_checkpoints.assign(cp_steps.size(), Mat(d, y0.cols()));
  out.checkpoint_times = checkpoint_times;

  Rng master(seed);
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  parallel_for(n_chunks, threads, [&](std::size_t ci) {
    const std::size_t lo = ci * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    const int c = static_cast<int>(hi - lo);
    std::vector<Rng> rngs;
    rngs.reserve(c);
    for (std::size_t p = lo; p < hi; ++p) rngs.push_back(master.spawn(p));
    Mat y = y0.middleCols(static_cast<Eigen::Index>(lo), c);
    Mat qscore(d, c), xi(d, c), drift(d, c), drift2(d, c), yp(d, c);

    auto drift_at = [&](const Mat& state, double s, Mat& dest) {
      const double b = beta(sde, s);
      dest = -0.5 * b * state;
      if (lambda > 0.0) {
        oracle->score_batch_at(state, s, qscore);
        dest -= 0.5 * lambda * b * qscore;
      }
    };

    auto record = [&](std::size_t step_idx, const Mat& state) {
      for (std::size_t q = 0; q < cp_steps.size(); ++q)
        if (cp_steps[q] == step_idx)
          out.at_checkpoints[q].middleCols(static_cast<Eigen::Index>(lo), c) = state;
    };

    record(0, y);
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double s0 = dt * static_cast<double>(k);
      const double s1 = dt * static_cast<double>(k + 1);
      if (deterministic) {
        drift_at(y, s0, drift);
        yp = y + dt * drift;
        drift_at(yp, s1, drift2);
        y += 0.5 * dt * (drift + drift2);
      } else {
        drift_at(y, s0, drift);
        const double sig = std::sqrt(1.0 - lambda) * diffusion_g(sde, s0);
        for (int j = 0; j < c; ++j)
          for (int i = 0; i < d; ++i) xi(i, j) = rngs[j].gauss();
        y += dt * drift + sig * std::sqrt(dt) * xi;
      }
      if (!y.allFinite())
        throw std::runtime_error("simulate_inference: non-finite state at s = " +
                                 std::to_string(s1));
      record(k + 1, y);
    }
    out.terminal.middleCols(static_cast<Eigen::Index>(lo), c) = y;
  });
  return out;
}

Moments sample_moments(const Mat& points) {
  const Eigen::Index n = points.cols();
  if (n < 2) throw std::invalid_argument("sample_moments: need at least 2 points");
  Moments m;
  m.mean = points.rowwise().mean();
  Mat centered = points.colwise() - m.mean;
  m.cov = centered * centered.transpose() / static_cast<double>(n - 1);
  return m;
}

}  // namespace sde_elbo
