#include "sde_elbo/vp_sde.hpp"

#include <cmath>
#include <stdexcept>

#include "sde_elbo/rng.hpp"

namespace sde_elbo {

namespace {

void check_time(const VpSde& sde, double s) {
  if (!(s >= 0.0 && s <= sde.horizon_T))
    throw std::domain_error("VpSde: time outside [0, T]");
}

}  // namespace

void VpSde::validate() const {
  if (!(0.0 < beta_min && beta_min < beta_max))
    throw std::invalid_argument("VpSde: need 0 < beta_min < beta_max");
  if (!(horizon_T > 0.0)) throw std::invalid_argument("VpSde: need T > 0");
}

double beta(const VpSde& sde, double s) {
  check_time(sde, s);
  return sde.beta_min + (sde.beta_max - sde.beta_min) * s / sde.horizon_T;
}

double int_beta(const VpSde& sde, double s) {
  check_time(sde, s);
  return 0.5 * s * s * (sde.beta_max - sde.beta_min) / sde.horizon_T +
         s * sde.beta_min;
}

PerturbationKernel kernel_at(const VpSde& sde, double s) {
  const double a = int_beta(sde, s);
  PerturbationKernel k;
  k.mean_coef = std::exp(-0.5 * a);
  k.std = std::sqrt(-std::expm1(-a));  // sqrt(1 - exp(-A))
  k.time = s;
  return k;
}

Vec drift_f(const VpSde& sde, const Vec& y, double s) {
  return -0.5 * beta(sde, s) * y;
}

double diffusion_g(const VpSde& sde, double s) {
  return std::sqrt(beta(sde, s));
}

Perturbed perturb(const VpSde& sde, const Vec& y0, double s, const Vec& noise) {
  if (noise.size() != y0.size())
    throw std::invalid_argument("perturb: noise dimension mismatch");
  const PerturbationKernel k = kernel_at(sde, s);
  if (k.std == 0.0)
    throw std::domain_error("perturb: degenerate kernel at s = 0 (v_s = 0)");
  Perturbed out;
  out.y_s = k.mean_coef * y0 + k.std * noise;
  out.cond_score = -noise / k.std;
  return out;
}

GaussianOracle::GaussianOracle(Vec mean0, Mat cov0, VpSde sde)
    : mean0_(std::move(mean0)), cov0_(std::move(cov0)), sde_(sde) {
  sde_.validate();
  if (cov0_.rows() != cov0_.cols() || cov0_.rows() != mean0_.size())
    throw std::invalid_argument("GaussianOracle: shape mismatch");
  Eigen::LLT<Mat> llt(cov0_);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("GaussianOracle: cov0 not positive definite");
}

GaussianOracle::Marginal GaussianOracle::marginal(double s) const {
  const PerturbationKernel k = kernel_at(sde_, s);
  Marginal m;
  m.mean = k.mean_coef * mean0_;
  m.cov = k.mean_coef * k.mean_coef * cov0_;
  m.cov.diagonal().array() += k.variance();
  return m;
}

Vec GaussianOracle::score(const Vec& y, double s) const {
  const Marginal m = marginal(s);
  return m.cov.llt().solve(m.mean - y);
}

void GaussianOracle::score_batch_at(const Mat& y, double s, Mat& out) const {
  const Marginal m = marginal(s);
  Eigen::LLT<Mat> llt(m.cov);
  out = llt.solve((-(y.colwise() - m.mean)).eval());
}

double GaussianOracle::logpdf(const Vec& y, double s) const {
  const Marginal m = marginal(s);
  return mvn_logpdf(y, m.mean, m.cov);
}

double GaussianOracle::score_divergence(double s) const {
  const Marginal m = marginal(s);
  return -m.cov.llt().solve(Mat::Identity(dim(), dim())).trace();
}

double GaussianOracle::fisher_info(double s) const {
  const double g = diffusion_g(sde_, s);
  return -g * g * score_divergence(s);
}

double GaussianOracle::expected_sq_norm(double s) const {
  const Marginal m = marginal(s);
  return m.mean.squaredNorm() + m.cov.trace();
}

Vec GaussianOracle::sample_marginal(double s, Rng& rng) const {
  const Marginal m = marginal(s);
  Eigen::LLT<Mat> llt(m.cov);
  Vec z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.gauss();
  return m.mean + llt.matrixL() * z;
}

double mvn_logpdf(const Vec& y, const Vec& mean, const Mat& cov) {
  const int d = static_cast<int>(y.size());
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("mvn_logpdf: covariance not positive definite");
  const Vec dy = y - mean;
  const Vec w = llt.matrixL().solve(dy);
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * d * std::log(2.0 * M_PI) - logdet - 0.5 * w.squaredNorm();
}

double std_normal_logpdf(const Vec& y) {
  return -0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI) -
         0.5 * y.squaredNorm();
}

}  // namespace sde_elbo
