#include "sde_elbo/time_sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "sde_elbo/score_source.hpp"

namespace sde_elbo {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

DebiasedTimeDist::DebiasedTimeDist(VpSde sde, double s_eps)
    : sde_(sde), s_eps_(s_eps) {
  sde_.validate();
  if (!(s_eps > 0.0 && s_eps < sde.horizon_T))
    throw std::invalid_argument("DebiasedTimeDist: need 0 < s_eps < T");
  const PerturbationKernel k = kernel_at(sde_, s_eps_);
  plateau_ = beta(sde_, s_eps_) / k.variance();
  z_ = unnorm_cdf(sde_.horizon_T);
}

double DebiasedTimeDist::phi(double s) const {
  if (!(s > 0.0)) throw std::domain_error("phi: undefined at s <= 0");
  const double a = int_beta(sde_, s);
  // log(exp(A) - 1), stable at both ends
  return a > 30.0 ? a + std::log1p(-std::exp(-a)) : std::log(std::expm1(a));
}

double DebiasedTimeDist::unnorm_pdf(double s) const {
  if (!(s >= 0.0 && s <= sde_.horizon_T))
    throw std::domain_error("unnorm_pdf: s outside [0, T]");
  if (s < s_eps_) return plateau_;
  const PerturbationKernel k = kernel_at(sde_, s);
  return beta(sde_, s) / k.variance();
}

double DebiasedTimeDist::unnorm_cdf(double s) const {
  if (!(s >= 0.0 && s <= sde_.horizon_T))
    throw std::domain_error("unnorm_cdf: s outside [0, T]");
  if (s < s_eps_) return plateau_ * s;
  return plateau_ * s_eps_ + phi(s) - phi(s_eps_);
}

double DebiasedTimeDist::inv_cdf(double u) const {
  if (!(u >= 0.0 && u <= 1.0))
    throw std::domain_error("inv_cdf: u outside [0, 1]");
  const double knee = plateau_ * s_eps_ / z_;
  if (u < knee) return z_ * u / plateau_;
  // solve phi(s) = Z u + phi(s_eps) - plateau * s_eps for s, i.e.
  // A(s) = log(1 + exp(w)) followed by the quadratic formula for A.
  const double w = z_ * u + phi(s_eps_) - plateau_ * s_eps_;
  const double a_target = softplus(w);
  const double slope = (sde_.beta_max - sde_.beta_min) / sde_.horizon_T;
  const double disc = sde_.beta_min * sde_.beta_min + 2.0 * slope * a_target;
  double s = (-sde_.beta_min + std::sqrt(disc)) / slope;
  if (s > sde_.horizon_T) s = sde_.horizon_T;  // guard float rounding at u = 1
  return s;
}

TimeSample sample_times(const DebiasedTimeDist& dist, std::size_t n, Rng& rng) {
  TimeSample out;
  out.s.resize(n);
  out.log_weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = dist.inv_cdf(rng.uniform());
    out.s[i] = s;
    out.log_weight[i] = -std::log(dist.pdf(s));
  }
  return out;
}

TimeSample sample_times_uniform(double s_min, double horizon_T, std::size_t n,
                                Rng& rng) {
  if (!(s_min >= 0.0 && s_min < horizon_T))
    throw std::invalid_argument("sample_times_uniform: need 0 <= s_min < T");
  TimeSample out;
  out.s.resize(n);
  out.log_weight.assign(n, std::log(horizon_T - s_min));
  for (std::size_t i = 0; i < n; ++i)
    out.s[i] = s_min + (horizon_T - s_min) * rng.uniform();
  return out;
}

MeanStderr debiased_dsm_objective(const ScoreSource& score, const Mat& y0_batch,
                                  const DebiasedTimeDist& dist, Rng& rng) {
  const int d = static_cast<int>(y0_batch.rows());
  const std::size_t n = static_cast<std::size_t>(y0_batch.cols());
  if (n == 0) throw std::invalid_argument("debiased_dsm_objective: empty batch");
  std::vector<double> rows(n);
  Vec noise(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = dist.inv_cdf(rng.uniform());
    for (int j = 0; j < d; ++j) noise[j] = rng.gauss();
    const Perturbed p = perturb(dist.sde(), y0_batch.col(i), s, noise);
    const PerturbationKernel k = kernel_at(dist.sde(), s);
    const Vec resid = k.std * score.score(p.y_s, s) + noise;
    rows[i] = dist.normalizer() * 0.5 * resid.squaredNorm();
  }
  return mean_stderr(rows);
}

}  // namespace sde_elbo
