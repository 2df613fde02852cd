#pragma once

#include <functional>
#include <vector>

#include "sde_elbo/rng.hpp"
#include "sde_elbo/score_source.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

enum class SampleScheme { euler_maruyama, heun_ode };

// One Euler-Maruyama step x + drift dt + diffusion sqrt(dt) xi.
Vec em_step(const std::function<Vec(const Vec&, double)>& drift,
            const std::function<double(double)>& diffusion, const Vec& x,
            double t, double dt, Rng& rng);

// Generative sampler for the plug-in reverse SDE family
//   dX = ((1 - lambda/2) g^2 s_theta - f) dt + sqrt(1 - lambda) g dB_t,
// coefficients evaluated at reversed time T - t; lambda = 1 is the
// deterministic probability-flow member and uses Heun on the same grid.
struct LambdaSampler {
  double lambda = 0.0;
  const ScoreSource* score = nullptr;
  VpSde sde;
  std::size_t n_steps = 1000;
  SampleScheme scheme = SampleScheme::euler_maruyama;

  void validate() const;
};

// n samples of X_T from X_0 ~ N(0, I); columns are samples.
Mat sample(const LambdaSampler& sampler, std::size_t n, std::uint64_t seed,
           unsigned threads = 1);

// Forward simulation of the lambda-inference SDE
//   dY = (f - (lambda/2) g^2 grad log q) ds + sqrt(1 - lambda) g dB_s
// from the data columns of y0. lambda > 0 needs the oracle score.
struct InferencePaths {
  Mat terminal;                      // d x n states at s = T
  std::vector<Mat> at_checkpoints;   // states at the requested times
  std::vector<double> checkpoint_times;
};
InferencePaths simulate_inference(const VpSde& sde, double lambda,
                                  const GaussianOracle* oracle, const Mat& y0,
                                  std::size_t n_steps, std::uint64_t seed,
                                  const std::vector<double>& checkpoint_times = {},
                                  unsigned threads = 1);

// sample moments, for the marginal-agreement checks
struct Moments {
  Vec mean;
  Mat cov;
};
Moments sample_moments(const Mat& points);

}  // namespace sde_elbo
