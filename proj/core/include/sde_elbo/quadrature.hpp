#pragma once

#include <cstddef>
#include <stdexcept>

namespace sde_elbo {

// Composite Simpson rule on [a, b] with n subintervals (n rounded up to even).
template <typename F>
double simpson(F&& f, double a, double b, std::size_t n = 2048) {
  if (!(b >= a)) throw std::invalid_argument("simpson: b < a");
  if (a == b) return 0.0;
  if (n % 2 != 0) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double acc = f(a) + f(b);
  for (std::size_t i = 1; i < n; ++i) {
    const double x = a + h * static_cast<double>(i);
    acc += (i % 2 == 0 ? 2.0 : 4.0) * f(x);
  }
  return acc * h / 3.0;
}

}  // namespace sde_elbo
