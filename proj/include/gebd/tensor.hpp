#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace gebd {

// Row-major 2-D array. Sequence data is stored as L x C (row = snippet).
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const {
    return v.data() + static_cast<std::size_t>(r) * cols;
  }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// Channel-major 3-D array (C x H x W).
struct Ten3 {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Ten3() = default;
  Ten3(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  double* plane(int ci) { return v.data() + static_cast<std::size_t>(ci) * h * w; }
  const double* plane(int ci) const {
    return v.data() + static_cast<std::size_t>(ci) * h * w;
  }
  double* row(int ci, int y) { return plane(ci) + static_cast<std::size_t>(y) * w; }
  const double* row(int ci, int y) const {
    return plane(ci) + static_cast<std::size_t>(y) * w;
  }
  double& at(int ci, int y, int x) {
    return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  double at(int ci, int y, int x) const {
    return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  std::size_t size() const { return v.size(); }
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.v); }
inline bool all_finite(const Ten3& t) { return all_finite(t.v); }

}  // namespace gebd
