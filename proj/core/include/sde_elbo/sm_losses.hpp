#pragma once

#include <string>
#include <vector>

#include "sde_elbo/rng.hpp"
#include "sde_elbo/score_source.hpp"
#include "sde_elbo/stats.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

using LossValue = MeanStderr;

// One training batch: perturbed points with the noise that produced them,
// so the conditional score -eps / sqrt(v_s) is available.
struct LossBatch {
  Mat y0;                 // d x n data points
  std::vector<double> s;  // times, all > 0
  Mat noise;              // d x n standard normal draws
  Mat y_s;                // d x n perturbed points
  std::size_t size() const { return s.size(); }
};

// draws noise and perturbs each column of y0 at its time s[i]
LossBatch make_loss_batch(const Mat& y0, const std::vector<double>& s,
                          const VpSde& sde, Rng& rng);

// default minimum time for batch construction; v_s -> 0 makes the
// conditional score unbounded below this
inline constexpr double kDefaultSMin = 1e-5;

// All losses use the weighting Lambda(s) = g(s)^2 I.
LossValue esm(const ScoreSource& score, const LossBatch& batch, const VpSde& sde,
              const GaussianOracle& oracle);
LossValue ism(const ScoreSource& score, const LossBatch& batch, const VpSde& sde,
              DivMode mode, std::size_t probes, Rng& rng);
LossValue ssm(const ScoreSource& score, const LossBatch& batch, const VpSde& sde,
              std::size_t probes, Rng& rng);
LossValue dsm(const ScoreSource& score, const LossBatch& batch, const VpSde& sde);
// 1/2 E||sqrt(v_s) s_theta + eps||^2; (g^2/v_s) * this = dsm rowwise
LossValue dsm_weighted(const ScoreSource& score, const LossBatch& batch,
                       const VpSde& sde);

// All Table-1 losses plus the two Fisher terms on one shared batch, with the
// three equalities of the score-matching identity differenced row-by-row.
struct IdentityReport {
  LossValue esm, ism, ssm, dsm;
  LossValue half_fisher;       // 1/2 I(q), sampled as 1/2 ||grad log q||^2_Lambda
  LossValue half_cond_fisher;  // 1/2 E[I(q(.|y0))], sampled as 1/2 ||eps||^2 g^2 / v_s
  LossValue eq_esm_ism;        // ESM - 1/2 I(q) - ISM          (should be 0)
  LossValue eq_ism_ssm;        // ISM - SSM                     (should be 0)
  LossValue eq_dsm_ism;        // DSM - 1/2 E[I_cond] - ISM     (should be 0)
  bool all_within(double n_stderr = 3.0) const;
};

IdentityReport identity_report(const ScoreSource& score,
                               const GaussianOracle& oracle, std::size_t n,
                               Rng& rng, std::size_t ssm_probes = 1,
                               double s_min = kDefaultSMin);

// CSV with columns loss_name, value, stderr
void write_identity_csv(const IdentityReport& report, const std::string& path);

}  // namespace sde_elbo
