#include "sde_elbo/sm_losses.hpp"

#include <cmath>
#include <stdexcept>

#include "sde_elbo/io.hpp"

namespace sde_elbo {

LossBatch make_loss_batch(const Mat& y0, const std::vector<double>& s,
                          const VpSde& sde, Rng& rng) {
  const int d = static_cast<int>(y0.rows());
  const std::size_t n = static_cast<std::size_t>(y0.cols());
  if (s.size() != n) throw std::invalid_argument("make_loss_batch: length mismatch");
  LossBatch b;
  b.y0 = y0;
  b.s = s;
  b.noise.resize(d, y0.cols());
  b.y_s.resize(d, y0.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) b.noise(j, i) = rng.gauss();
    const Perturbed p = perturb(sde, y0.col(i), s[i], b.noise.col(i));
    b.y_s.col(i) = p.y_s;
  }
  return b;
}

namespace {

std::vector<double> g_sq(const LossBatch& batch, const VpSde& sde) {
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = beta(sde, batch.s[i]);
  return out;
}

}  // namespace

LossValue esm(const ScoreSource& score, const LossBatch& batch, const VpSde& sde,
              const GaussianOracle& oracle) {
  const auto g2 = g_sq(batch, sde);
  Mat shat;
  score.score_batch(batch.y_s, batch.s, shat);
  std::vector<double> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec diff = shat.col(i) - oracle.score(batch.y_s.col(i), batch.s[i]);
    rows[i] = 0.5 * g2[i] * diff.squaredNorm();
  }
  return mean_stderr(rows);
}

LossValue ism(const ScoreSource& score, const LossBatch& batch, const VpSde& sde,
              DivMode mode, std::size_t probes, Rng& rng) {
  const auto g2 = g_sq(batch, sde);
  Mat shat;
  score.score_batch(batch.y_s, batch.s, shat);
  Vec div;
  score.divergence_batch(batch.y_s, batch.s, mode, probes, rng, div);
  std::vector<double> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    rows[i] = g2[i] * (0.5 * shat.col(i).squaredNorm() + div[i]);
  return mean_stderr(rows);
}

LossValue ssm(const ScoreSource& score, const LossBatch& batch, const VpSde& sde,
              std::size_t probes, Rng& rng) {
  if (probes < 1) throw std::invalid_argument("ssm: probes >= 1");
  const auto g2 = g_sq(batch, sde);
  Mat shat;
  score.score_batch(batch.y_s, batch.s, shat);
  const int d = score.dim();
  std::vector<double> rows(batch.size());
  Vec v(d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double vjv = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
      for (int j = 0; j < d; ++j) v[j] = rng.rademacher();
      vjv += v.dot(score.jacobian_vec(batch.y_s.col(i), batch.s[i], v));
    }
    vjv /= static_cast<double>(probes);
    rows[i] = g2[i] * (0.5 * shat.col(i).squaredNorm() + vjv);
  }
  return mean_stderr(rows);
}

LossValue dsm(const ScoreSource& score, const LossBatch& batch, const VpSde& sde) {
  const auto g2 = g_sq(batch, sde);
  Mat shat;
  score.score_batch(batch.y_s, batch.s, shat);
  std::vector<double> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PerturbationKernel k = kernel_at(sde, batch.s[i]);
    if (k.std == 0.0) throw std::domain_error("dsm: degenerate kernel row (s = 0)");
    const Vec resid = shat.col(i) + batch.noise.col(i) / k.std;
    rows[i] = 0.5 * g2[i] * resid.squaredNorm();
  }
  return mean_stderr(rows);
}

LossValue dsm_weighted(const ScoreSource& score, const LossBatch& batch,
                       const VpSde& sde) {
  Mat shat;
  score.score_batch(batch.y_s, batch.s, shat);
  std::vector<double> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PerturbationKernel k = kernel_at(sde, batch.s[i]);
    if (k.std == 0.0)
      throw std::domain_error("dsm_weighted: degenerate kernel row (s = 0)");
    const Vec resid = k.std * shat.col(i) + batch.noise.col(i);
    rows[i] = 0.5 * resid.squaredNorm();
  }
  return mean_stderr(rows);
}

bool IdentityReport::all_within(double n_stderr) const {
  auto ok = [&](const LossValue& v) {
    return std::abs(v.mean) <= n_stderr * v.stderr;
  };
  return ok(eq_esm_ism) && ok(eq_ism_ssm) && ok(eq_dsm_ism);
}

IdentityReport identity_report(const ScoreSource& score,
                               const GaussianOracle& oracle, std::size_t n,
                               Rng& rng, std::size_t ssm_probes, double s_min) {
  const VpSde& sde = oracle.sde();
  const int d = oracle.dim();
  // shared sample: y0 ~ data, s ~ U[s_min, T], eps ~ N(0, I)
  Mat y0(d, n);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    y0.col(i) = oracle.sample_marginal(0.0, rng);
    s[i] = s_min + (sde.horizon_T - s_min) * rng.uniform();
  }
  LossBatch batch = make_loss_batch(y0, s, sde, rng);

  std::vector<double> r_esm(n), r_ism(n), r_ssm(n), r_dsm(n), r_if(n), r_icf(n);
  std::vector<double> r_eq1(n), r_eq2(n), r_eq3(n);
  Mat shat;
  score.score_batch(batch.y_s, batch.s, shat);
  Vec div;
  score.divergence_batch(batch.y_s, batch.s, DivMode::exact, 1, rng, div);
  Vec v(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double g2 = beta(sde, batch.s[i]);
    const PerturbationKernel k = kernel_at(sde, batch.s[i]);
    const Vec sc = shat.col(i);
    const Vec truescore = oracle.score(batch.y_s.col(i), batch.s[i]);
    const Vec condscore = -batch.noise.col(i) / k.std;
    r_esm[i] = 0.5 * g2 * (sc - truescore).squaredNorm();
    r_ism[i] = g2 * (0.5 * sc.squaredNorm() + div[i]);
    double vjv = 0.0;
    for (std::size_t p = 0; p < ssm_probes; ++p) {
      for (int j = 0; j < d; ++j) v[j] = rng.rademacher();
      vjv += v.dot(score.jacobian_vec(batch.y_s.col(i), batch.s[i], v));
    }
    vjv /= static_cast<double>(ssm_probes);
    r_ssm[i] = g2 * (0.5 * sc.squaredNorm() + vjv);
    r_dsm[i] = 0.5 * g2 * (sc - condscore).squaredNorm();
    r_if[i] = 0.5 * g2 * truescore.squaredNorm();
    r_icf[i] = 0.5 * g2 * condscore.squaredNorm();
    r_eq1[i] = r_esm[i] - r_if[i] - r_ism[i];
    r_eq2[i] = r_ism[i] - r_ssm[i];
    r_eq3[i] = r_dsm[i] - r_icf[i] - r_ism[i];
  }
  IdentityReport rep;
  rep.esm = mean_stderr(r_esm);
  rep.ism = mean_stderr(r_ism);
  rep.ssm = mean_stderr(r_ssm);
  rep.dsm = mean_stderr(r_dsm);
  rep.half_fisher = mean_stderr(r_if);
  rep.half_cond_fisher = mean_stderr(r_icf);
  rep.eq_esm_ism = mean_stderr(r_eq1);
  rep.eq_ism_ssm = mean_stderr(r_eq2);
  rep.eq_dsm_ism = mean_stderr(r_eq3);
  return rep;
}

void write_identity_csv(const IdentityReport& rep, const std::string& path) {
  auto row = [](const std::string& name, const LossValue& v) {
    return std::vector<std::string>{name, format_double(v.mean),
                                    format_double(v.stderr)};
  };
  write_csv(path, {"loss_name", "value", "stderr"},
            {row("esm", rep.esm), row("ism", rep.ism), row("ssm", rep.ssm),
             row("dsm", rep.dsm), row("half_fisher", rep.half_fisher),
             row("half_cond_fisher", rep.half_cond_fisher),
             row("eq_esm_minus_half_fisher_vs_ism", rep.eq_esm_ism),
             row("eq_ism_vs_ssm", rep.eq_ism_ssm),
             row("eq_dsm_minus_half_cond_fisher_vs_ism", rep.eq_dsm_ism)});
}

}  // namespace sde_elbo
