#pragma once

#include <vector>

#include "sde_elbo/rng.hpp"
#include "sde_elbo/stats.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

class ScoreSource;

// Importance distribution over training times, proportional to g^2(s)/v_s
// for s >= s_eps and plateaued below s_eps (the raw ratio is not integrable
// at 0). Normalizer and inverse CDF are closed-form.
class DebiasedTimeDist {
 public:
  DebiasedTimeDist(VpSde sde, double s_eps);

  const VpSde& sde() const { return sde_; }
  double s_eps() const { return s_eps_; }
  double normalizer() const { return z_; }         // Z = unnorm_cdf(T)
  double plateau() const { return plateau_; }      // g^2(s_eps)/v_{s_eps}

  // antiderivative of g^2/v_s: phi(s) = log(exp(A(s)) - 1), s > 0
  double phi(double s) const;

  double unnorm_pdf(double s) const;
  double unnorm_cdf(double s) const;
  double pdf(double s) const { return unnorm_pdf(s) / z_; }
  double cdf(double s) const { return unnorm_cdf(s) / z_; }
  double inv_cdf(double u) const;

 private:
  VpSde sde_;
  double s_eps_;
  double plateau_;
  double z_;
};

struct TimeSample {
  std::vector<double> s;
  std::vector<double> log_weight;  // -log q(s); weighted averages estimate integrals ds
};

TimeSample sample_times(const DebiasedTimeDist& dist, std::size_t n, Rng& rng);

// uniform on [s_min, T]; log_weight = log(T - s_min)
TimeSample sample_times_uniform(double s_min, double horizon_T, std::size_t n,
                                Rng& rng);

// Z-weighted variance-stabilized DSM rows at s ~ q_eps; in expectation equals
// the time-integrated DSM term of the CT-ELBO up to the s < s_eps plateau bias.
MeanStderr debiased_dsm_objective(const ScoreSource& score, const Mat& y0_batch,
                                  const DebiasedTimeDist& dist, Rng& rng);

}  // namespace sde_elbo
