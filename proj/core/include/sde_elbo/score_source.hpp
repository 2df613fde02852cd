#pragma once

#include <memory>
#include <string>

#include "sde_elbo/rng.hpp"
#include "sde_elbo/score_net.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

enum class DivMode { exact, hutchinson };
enum class Parameterization { score, drift_a };

Parameterization parameterization_from_string(const std::string& s);
std::string to_string(Parameterization p);

// A time-indexed vector field approximating grad log q(y, s), with a
// divergence. Backed either by a network or by the Gaussian oracle.
class ScoreSource {
 public:
  virtual ~ScoreSource() = default;
  virtual int dim() const = 0;
  virtual Vec score(const Vec& y, double s) const = 0;
  // columns of y are independent points, all at times s[i]
  virtual void score_batch(const Mat& y, const std::vector<double>& s,
                           Mat& out) const;
  virtual double divergence(const Vec& y, double s, DivMode mode,
                            std::size_t probes, Rng& rng) const = 0;
  virtual void divergence_batch(const Mat& y, const std::vector<double>& s,
                                DivMode mode, std::size_t probes, Rng& rng,
                                Vec& out) const;
  // (d score / d y) v, for sliced estimators
  virtual Vec jacobian_vec(const Vec& y, double s, const Vec& v) const = 0;
};

// s_theta from a ScoreNet. Under the drift_a parameterization the net
// outputs a = g s_theta and the score is recovered as a / g(s).
class NetScoreSource final : public ScoreSource {
 public:
  NetScoreSource(const ScoreNet& net, Parameterization param, VpSde sde);

  int dim() const override { return net_->dim(); }
  Vec score(const Vec& y, double s) const override;
  void score_batch(const Mat& y, const std::vector<double>& s,
                   Mat& out) const override;
  double divergence(const Vec& y, double s, DivMode mode, std::size_t probes,
                    Rng& rng) const override;
  void divergence_batch(const Mat& y, const std::vector<double>& s, DivMode mode,
                        std::size_t probes, Rng& rng, Vec& out) const override;
  Vec jacobian_vec(const Vec& y, double s, const Vec& v) const override;

  const ScoreNet& net() const { return *net_; }
  Parameterization parameterization() const { return param_; }

 private:
  const ScoreNet* net_;
  Parameterization param_;
  VpSde sde_;
};

class OracleScoreSource final : public ScoreSource {
 public:
  explicit OracleScoreSource(const GaussianOracle& oracle) : oracle_(&oracle) {}

  int dim() const override { return oracle_->dim(); }
  Vec score(const Vec& y, double s) const override {
    return oracle_->score(y, s);
  }
  double divergence(const Vec& y, double s, DivMode, std::size_t,
                    Rng&) const override {
    (void)y;
    return oracle_->score_divergence(s);  // analytic
  }
  Vec jacobian_vec(const Vec& y, double s, const Vec& v) const override {
    (void)y;  // Gaussian score is affine: J = -cov_s^{-1}
    const auto m = oracle_->marginal(s);
    return -m.cov.llt().solve(v);
  }
  const GaussianOracle& oracle() const { return *oracle_; }

 private:
  const GaussianOracle* oracle_;
};

}  // namespace sde_elbo
