#include "sde_elbo/score_source.hpp"

#include <stdexcept>

namespace sde_elbo {

Parameterization parameterization_from_string(const std::string& s) {
  if (s == "score") return Parameterization::score;
  if (s == "drift_a") return Parameterization::drift_a;
  throw std::invalid_argument("unknown parameterization: " + s);
}

std::string to_string(Parameterization p) {
  return p == Parameterization::score ? "score" : "drift_a";
}

void ScoreSource::score_batch(const Mat& y, const std::vector<double>& s,
                              Mat& out) const {
  out.resize(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    out.col(i) = score(y.col(i), s[static_cast<std::size_t>(i)]);
}

void ScoreSource::divergence_batch(const Mat& y, const std::vector<double>& s,
                                   DivMode mode, std::size_t probes, Rng& rng,
                                   Vec& out) const {
  out.resize(y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    out[i] = divergence(y.col(i), s[static_cast<std::size_t>(i)], mode, probes, rng);
}

NetScoreSource::NetScoreSource(const ScoreNet& net, Parameterization param,
                               VpSde sde)
    : net_(&net), param_(param), sde_(sde) {
  sde_.validate();
}

Vec NetScoreSource::score(const Vec& y, double s) const {
  Vec out = net_->forward(y, s);
  if (param_ == Parameterization::drift_a) out /= diffusion_g(sde_, s);
  return out;
}

void NetScoreSource::score_batch(const Mat& y, const std::vector<double>& s,
                                 Mat& out) const {
  ScoreNet::BatchCache cache;
  net_->forward_batch(y, s, cache);
  out = std::move(cache.out);
  if (param_ == Parameterization::drift_a)
    for (Eigen::Index i = 0; i < out.cols(); ++i)
      out.col(i) /= diffusion_g(sde_, s[static_cast<std::size_t>(i)]);
}

double NetScoreSource::divergence(const Vec& y, double s, DivMode mode,
                                  std::size_t probes, Rng& rng) const {
  double div;
  if (mode == DivMode::exact) {
    div = net_->divergence_exact(y, s);
  } else {
    div = net_->divergence_hutchinson(y, s, probes, rng).mean;
  }
  if (param_ == Parameterization::drift_a) div /= diffusion_g(sde_, s);
  return div;
}

Vec NetScoreSource::jacobian_vec(const Vec& y, double s, const Vec& v) const {
  Vec jv = net_->jvp(y, s, v);
  if (param_ == Parameterization::drift_a) jv /= diffusion_g(sde_, s);
  return jv;
}

void NetScoreSource::divergence_batch(const Mat& y, const std::vector<double>& s,
                                      DivMode mode, std::size_t probes, Rng& rng,
                                      Vec& out) const {
  ScoreNet::BatchCache cache;
  net_->forward_batch(y, s, cache);
  const int d = net_->dim();
  const Eigen::Index n = y.cols();
  out = Vec::Zero(n);
  if (mode == DivMode::exact) {
    net_->divergence_exact_batch(cache, out);
  } else {
    Mat v(d, n);
    ScoreNet::TangentCache tc;
    for (std::size_t p = 0; p < probes; ++p) {
      for (Eigen::Index j = 0; j < n; ++j)
        for (int i = 0; i < d; ++i) v(i, j) = rng.rademacher();
      net_->jvp_batch(cache, v, tc);
      out += v.cwiseProduct(tc.tout).colwise().sum().transpose();
    }
    out /= static_cast<double>(probes);
  }
  if (param_ == Parameterization::drift_a)
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] /= diffusion_g(sde_, s[static_cast<std::size_t>(i)]);
}

}  // namespace sde_elbo
