#pragma once

#include <Eigen/Dense>

namespace sde_elbo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Variance-preserving inference SDE
//   dY = -1/2 beta(s) Y ds + sqrt(beta(s)) dB,  s in [0, T],
// with beta affine in s. Conditionals Y_s | Y_0 are Gaussian with mean
// coefficient m_s = exp(-A(s)/2) and variance v_s = 1 - exp(-A(s)), where
// A(s) = int_0^s beta; m_s^2 + v_s = 1.
struct VpSde {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon_T = 1.0;

  void validate() const;
};

double beta(const VpSde& sde, double s);
double int_beta(const VpSde& sde, double s);

// m_s and sqrt(v_s) of the conditional kernel at time s
struct PerturbationKernel {
  double mean_coef = 1.0;  // m_s
  double std = 0.0;        // sqrt(v_s)
  double time = 0.0;

  double variance() const { return std * std; }
};

PerturbationKernel kernel_at(const VpSde& sde, double s);

Vec drift_f(const VpSde& sde, const Vec& y, double s);
double diffusion_g(const VpSde& sde, double s);

struct Perturbed {
  Vec y_s;
  Vec cond_score;  // grad log q(y_s | y_0) = -noise / sqrt(v_s)
};

// y_s = m_s y0 + sqrt(v_s) noise, with noise ~ N(0, I). Requires s > 0.
Perturbed perturb(const VpSde& sde, const Vec& y0, double s, const Vec& noise);

// Closed-form marginals of Gaussian data N(mean0, cov0) pushed through the
// VP-SDE; ground truth for every estimator in the library.
class GaussianOracle {
 public:
  GaussianOracle(Vec mean0, Mat cov0, VpSde sde);

  int dim() const { return static_cast<int>(mean0_.size()); }
  const VpSde& sde() const { return sde_; }
  const Vec& mean0() const { return mean0_; }
  const Mat& cov0() const { return cov0_; }

  // marginal at time s: N(m_s mean0, m_s^2 cov0 + v_s I)
  struct Marginal {
    Vec mean;
    Mat cov;
  };
  Marginal marginal(double s) const;

  Vec score(const Vec& y, double s) const;        // -cov_s^{-1}(y - mean_s)
  // scores of many points at one shared time (one factorization)
  void score_batch_at(const Mat& y, double s, Mat& out) const;
  double logpdf(const Vec& y, double s) const;    // Gaussian log density
  double score_divergence(double s) const;        // -tr(cov_s^{-1})
  double fisher_info(double s) const;             // E||grad log q||^2_Lambda = g^2 tr(cov_s^{-1})
  double expected_sq_norm(double s) const;        // E||Y_s||^2

  // one draw from the marginal at time s
  Vec sample_marginal(double s, class Rng& rng) const;

 private:
  Vec mean0_;
  Mat cov0_;
  VpSde sde_;
};

// Multivariate normal helpers used by the oracle and the estimators.
double mvn_logpdf(const Vec& y, const Vec& mean, const Mat& cov);
double std_normal_logpdf(const Vec& y);

}  // namespace sde_elbo
