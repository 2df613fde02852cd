#pragma once

#include <string>
#include <vector>

#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

// Deterministic dataset: regeneration from (name, seed, n) is bit-identical.
struct Dataset {
  Mat points;  // d x n
  std::string name;
  std::uint64_t seed = 0;
  // per-coordinate statistics of the raw draw; applied to points only when
  // standardized is true
  Vec standardize_mean;
  Vec standardize_std;
  bool standardized = false;

  int dim() const { return static_cast<int>(points.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }

  // last 10% of points reserved for ELBO evaluation
  Mat train_points() const;
  Mat heldout_points() const;
};

// u ~ U[0,1], angle t = 1.5 pi (1 + 2u), raw (t cos t, t sin t) / (4.5 pi)
// plus isotropic noise; standardized per coordinate.
Dataset swiss_roll(std::size_t n, double noise_std, std::uint64_t seed);

// Isotropic Gaussian mixture with covariance cov_scale * I per component.
// Raw samples; standardization statistics are stored but not applied.
Dataset gaussian_mixture(const std::vector<Vec>& centers,
                         const std::vector<double>& weights, double cov_scale,
                         std::size_t n, std::uint64_t seed);

void save_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

}  // namespace sde_elbo
