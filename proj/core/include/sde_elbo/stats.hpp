#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace sde_elbo {

// Monte-Carlo value with its standard error.
struct MeanStderr {
  double mean = 0.0;
  double stderr = 0.0;
  std::size_t n = 0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) throw std::invalid_argument("mean_stderr: empty sample");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(n);
  if (n == 1) return {m, 0.0, 1};
  double ss = 0.0;
  for (double x : xs) {
    const double dx = x - m;
    ss += dx * dx;
  }
  const double var = ss / static_cast<double>(n - 1);
  return {m, std::sqrt(var / static_cast<double>(n)), n};
}

// Streaming mean/variance (Welford).
class RunningStat {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace sde_elbo
