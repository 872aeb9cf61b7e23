#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gebd/rng.hpp"
#include "gebd/tensor.hpp"

namespace testutil {

inline gebd::Mat random_mat(gebd::Rng& rng, int rows, int cols, double scale = 1.0) {
  gebd::Mat m(rows, cols);
  for (double& v : m.v) v = rng.uniform(-scale, scale);
  return m;
}

inline gebd::Ten3 random_ten(gebd::Rng& rng, int c, int h, int w, double scale = 1.0) {
  gebd::Ten3 t(c, h, w);
  for (double& v : t.v) v = rng.uniform(-scale, scale);
  return t;
}

inline std::vector<double> random_vec(gebd::Rng& rng, std::size_t n,
                                      double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

// |a-b| relative to the larger magnitude, floored so near-zero pairs compare
// absolutely.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite difference of f with respect to *p.
inline double fd_grad(const std::function<double()>& f, double* p,
                      double eps = 1e-5) {
  const double saved = *p;
  *p = saved + eps;
  const double fp = f();
  *p = saved - eps;
  const double fm = f();
  *p = saved;
  return (fp - fm) / (2.0 * eps);
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
