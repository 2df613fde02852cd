#pragma once

#include <functional>
#include <optional>

#include "sde_elbo/rng.hpp"
#include "sde_elbo/score_source.hpp"
#include "sde_elbo/stats.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

// Generative SDE dX = mu(X, t) dt + sigma(t) dB_t with X_0 ~ p_0 (standard
// normal of dimension dim unless prior_logpdf says otherwise).
struct GenerativeSde {
  int dim = 1;
  double horizon_T = 1.0;
  std::function<Vec(const Vec&, double)> mu;
  std::function<double(double)> sigma;
  std::function<double(const Vec&, double)> div_mu;
  std::function<double(const Vec&)> prior_logpdf;
};

// Markovian inference drift a(y, s); runs forward in s while mu and sigma
// run backward from T.
using InferenceDrift = std::function<Vec(const Vec&, double)>;

struct ElboTerms {
  double prior_term = 0.0;  // E log p0(Y_T)
  double quad_term = 0.0;   // Girsanov term: int 1/2 ||a||^2 ds (+ its
                            //   martingale part and CV corrections)
  double div_term = 0.0;    // int div mu ds; for DT estimates this bucket
                            //   carries -sum log p/q instead
};

struct ElboEstimate {
  double mean = 0.0;
  double stderr = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  ElboTerms terms;  // mean == prior_term - quad_term - div_term to 1e-10

  double bits_per_dim(int d) const;
};

struct PathOptions {
  std::size_t n_paths = 1024;
  std::size_t n_steps = 1000;
  DivMode div_mode = DivMode::exact;
  std::size_t hutchinson_probes = 1;
  // trapezoid rule for the ds integrals (the Ito martingale term is always
  // left-point); left-endpoint when false
  bool trapezoid = true;
  // keep the zero-mean Girsanov martingale int a . dB as part of quad_term;
  // it cancels most path noise without changing the mean
  bool girsanov_martingale = true;
  // regression control variate on the accumulated Ito noise
  // sum_k w_k (||xi_k||^2 - d)
  bool ito_regressor_cv = true;
  // when >= 0, E||x||^2 under the data law: enables a second regression
  // control variate 1/2 (||x||^2 - data_sq_norm_mean)
  double data_sq_norm_mean = -1.0;
  // exact VP conditional transitions instead of Euler-Maruyama; only
  // consumed by the fixed-VP plugin estimator
  bool exact_vp_steps = true;
  double novikov_guard = 1e6;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Feynman-Kac Monte-Carlo estimate of the marginal density p(x, T).
struct FkDensity {
  double density = 0.0;
  double stderr = 0.0;
  std::size_t n_paths = 0;
  std::size_t rejected = 0;
};
FkDensity fk_density(const GenerativeSde& sde, const Vec& x,
                     std::size_t n_paths, std::size_t n_steps,
                     std::uint64_t seed, unsigned threads = 1);

// Continuous-time ELBO for a generic (mu, sigma, a) triple; paths start from
// the columns of x_batch, cycled. Euler-Maruyama stepping.
ElboEstimate ct_elbo(const GenerativeSde& sde, const InferenceDrift& a,
                     const Mat& x_batch, const PathOptions& opt);

// Eq. (27) specialization: fixed VP inference SDE, mu = g^2 s_theta - f,
// a = g s_theta. Supports exact conditional-kernel stepping.
ElboEstimate ct_elbo_plugin(const ScoreSource& score, const VpSde& sde,
                            const Mat& x_batch, const PathOptions& opt);

// lambda-family ELBO. The inference drift carries (lambda/2) g^2 grad log q,
// so lambda != 0 requires the Gaussian oracle; lambda >= 1 is out of domain.
ElboEstimate ct_elbo_lambda(const ScoreSource& score, const VpSde& sde,
                            double lambda, const Mat& x_batch,
                            const PathOptions& opt,
                            const GaussianOracle* oracle = nullptr);

// int_0^T E_{Y_s}[ 1/2 || s_theta - grad log q ||^2_{g^2} ] ds by uniform
// time sampling; the correction integral of the lambda-ELBO relation.
MeanStderr weighted_esm_integral(const ScoreSource& score,
                                 const GaussianOracle& oracle, std::size_t n,
                                 Rng& rng);

// Exact log-density of the lambda = 1 probability-flow ODE via the
// deterministic change of variables (Heun integration, no lower bound).
// Returns mean and stderr over the columns of x_batch.
MeanStderr ode_log_density(const ScoreSource& score, const VpSde& sde,
                           const Mat& x_batch, std::size_t n_steps,
                           DivMode div_mode, std::size_t probes,
                           std::uint64_t seed, unsigned threads = 1);

// Discrete-time (hierarchical VAE) ELBO with L stochastic layers.
struct DtOptions {
  std::size_t n_chains = 4096;  // antithetic pairs count as two
  bool antithetic = true;
  bool ito_regressor_cv = true;
  double data_sq_norm_mean = -1.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};
ElboEstimate dt_elbo(const GenerativeSde& sde, const InferenceDrift& a,
                     const Mat& x_batch, std::size_t layers,
                     const DtOptions& opt);
ElboEstimate dt_elbo_plugin(const ScoreSource& score, const VpSde& sde,
                            const Mat& x_batch, std::size_t layers,
                            const DtOptions& opt);

// Variational gap 1/2 int_0^T E||a - sigma grad log p(., T-s)||^2 ds along
// inference paths; grad_log_p is the generative marginal score (closed form
// on the linear/Gaussian family).
MeanStderr variational_gap(const GenerativeSde& sde, const InferenceDrift& a,
                           const std::function<Vec(const Vec&, double)>& grad_log_p,
                           const Vec& x, std::size_t n_paths,
                           std::size_t n_steps, std::uint64_t seed,
                           unsigned threads = 1);

// Ornstein-Uhlenbeck generative family dX = theta X dt + sigma dB with
// X_0 ~ N(0, I): closed-form marginals for oracle tests.
struct LinearSde {
  int dim = 1;
  double theta = -1.0;
  double sigma = 0.5;
  double horizon_T = 1.0;

  double var_at(double t) const;   // per-coordinate marginal variance
  double logpdf(const Vec& x, double t) const;
  Vec grad_log_p(const Vec& x, double t) const;
  GenerativeSde as_generative() const;
};

}  // namespace sde_elbo
