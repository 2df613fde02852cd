#pragma once

#include <string>
#include <vector>

#include "sde_elbo/rng.hpp"
#include "sde_elbo/stats.hpp"
#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

struct LayerParams {
  Mat W;
  Vec b;
};

// Gradients with the same shapes as the owning net's parameters.
struct ParamGrad {
  std::vector<LayerParams> layers;

  void set_zero();
  void axpy(double alpha, const ParamGrad& other);  // this += alpha * other
  void scale(double alpha);
  double max_abs() const;
  bool all_finite() const;
};

struct ScoreNetCheckpoint;

// Time-conditioned MLP s(y, s): input [y; s; sin/cos(2^j pi s), j < k],
// silu hidden activations (C-infinity, so the divergence and its gradients
// exist), linear output of the spatial dimension d.
class ScoreNet {
 public:
  // widths = {input, hidden..., d} with input = d + 1 + 2 * time_features
  static ScoreNet init(const std::vector<int>& widths, int time_features,
                       std::uint64_t seed);

  int dim() const { return widths_.back(); }
  int input_dim() const { return widths_.front(); }
  int time_features() const { return time_features_; }
  const std::vector<int>& widths() const { return widths_; }

  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  ParamGrad zero_grad() const;
  std::size_t param_count() const;

  // Intermediate states of one batched forward pass (columns are rows of the
  // batch); reused by the backward passes below.
  struct BatchCache {
    Mat x0;                  // input features
    std::vector<Mat> pre;    // pre-activations, hidden layers
    std::vector<Mat> post;   // post-activations, hidden layers
    Mat out;
  };
  // Forward tangent states for a directional derivative in y.
  struct TangentCache {
    Mat t0;                  // input tangent: v in the spatial rows, zeros below
    std::vector<Mat> tpre;   // tangent pre-activations, hidden layers
    std::vector<Mat> tpost;
    Mat tout;                // J v per column
  };

  void forward_batch(const Mat& y, const std::vector<double>& s,
                     BatchCache& cache) const;
  Vec forward(const Vec& y, double s) const;

  // Accumulates d(cot . out)/dparams into pgrad (if non-null) and the input
  // gradient J^T cot into ygrad (if non-null; spatial rows only).
  void vjp_batch(const BatchCache& cache, const Mat& cot, ParamGrad* pgrad,
                 Mat* ygrad) const;
  std::pair<ParamGrad, Vec> vjp(const Vec& y, double s, const Vec& cot) const;

  // Tangent propagation in y only (time features carry zero tangent).
  void jvp_batch(const BatchCache& cache, const Mat& v, TangentCache& tc) const;
  Vec jvp(const Vec& y, double s, const Vec& v) const;

  // Reverse pass through forward + tangent: accumulates the parameter
  // gradient of sum_i [gout_i . out_i + gtan_i . (J v)_i]. Needed for
  // training objectives that contain v^T J v terms.
  void vjp_with_tangent(const BatchCache& cache, const TangentCache& tc,
                        const Mat& gout, const Mat& gtan,
                        ParamGrad* pgrad) const;

  // tr(dS/dy) from d input-only backward passes with basis cotangents.
  double divergence_exact(const Vec& y, double s) const;
  void divergence_exact_batch(const BatchCache& cache, Vec& out) const;

  // Hutchinson estimate over Rademacher probes.
  MeanStderr divergence_hutchinson(const Vec& y, double s, std::size_t probes,
                                   Rng& rng) const;

  void save(const std::string& path, const std::string& parameterization,
            const std::string& config_hash) const;
  static ScoreNetCheckpoint load(const std::string& path);

 private:
  ScoreNet() = default;

  void features(const Mat& y, const std::vector<double>& s, Mat& x0) const;

  std::vector<int> widths_;
  int time_features_ = 0;
  std::vector<LayerParams> layers_;
};

// load(save(net)) round-trips bit-exactly
struct ScoreNetCheckpoint {
  ScoreNet net;
  std::string parameterization;
  std::string config_hash;
};

// Default 2-D toy architecture: 2+13 -> 128 -> 128 -> 2 with k = 6.
ScoreNet default_toy_net(int d, std::uint64_t seed);

}  // namespace sde_elbo
