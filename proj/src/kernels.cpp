#include "gebd/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <vector>

namespace gebd::kernels {

namespace {
std::atomic<Exec> g_exec{Exec::Parallel};

inline void zero(double* __restrict__ p, std::size_t n) { std::memset(p, 0, n * sizeof(double)); }

inline void fill_bias_rows(double* __restrict__ y, int rows, int cols, const double* __restrict__ bias) {
  for (int r = 0; r < rows; ++r)
    std::memcpy(y + static_cast<std::size_t>(r) * cols, bias, cols * sizeof(double));
}
}  // namespace

Exec exec() { return g_exec.load(std::memory_order_relaxed); }
void set_exec(Exec e) { g_exec.store(e, std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// Serial reference. Plain loops, one output element at a time.
// ---------------------------------------------------------------------------
namespace serial {

void matmul_nt(const double* __restrict__ x, int n, int k, const double* __restrict__ w, int m, double* __restrict__ y) {
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < m; ++j) {
      const double* __restrict__ wj = w + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += xi[t] * wj[t];
      y[static_cast<std::size_t>(i) * m + j] = acc;
    }
  }
}

void matmul_nn(const double* __restrict__ a, int n, int k, const double* __restrict__ b, int m, double* __restrict__ y) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t)
        acc += a[static_cast<std::size_t>(i) * k + t] * b[static_cast<std::size_t>(t) * m + j];
      y[static_cast<std::size_t>(i) * m + j] = acc;
    }
  }
}

void matmul_tn(const double* __restrict__ a, int n, int m, const double* __restrict__ b, int k, double* __restrict__ y) {
  for (int o = 0; o < m; ++o) {
    for (int i = 0; i < k; ++i) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t)
        acc += a[static_cast<std::size_t>(t) * m + o] * b[static_cast<std::size_t>(t) * k + i];
      y[static_cast<std::size_t>(o) * k + i] = acc;
    }
  }
}

void conv1d(const double* __restrict__ x, int L, int cin, const double* __restrict__ w, int cout, int k,
            const double* __restrict__ bias, double* __restrict__ y) {
  const int off = k / 2;
  for (int t = 0; t < L; ++t) {
    for (int co = 0; co < cout; ++co) {
      double acc = bias[co];
      for (int dt = 0; dt < k; ++dt) {
        const int s = t + dt - off;
        if (s < 0 || s >= L) continue;
        const double* __restrict__ xs = x + static_cast<std::size_t>(s) * cin;
        const double* __restrict__ wr = w + (static_cast<std::size_t>(co) * cin) * k + dt;
        for (int ci = 0; ci < cin; ++ci) acc += wr[static_cast<std::size_t>(ci) * k] * xs[ci];
      }
      y[static_cast<std::size_t>(t) * cout + co] = acc;
    }
  }
}

void conv1d_bwd_input(const double* __restrict__ dy, int L, int cout, const double* __restrict__ w, int cin,
                      int k, double* __restrict__ dx) {
  const int off = k / 2;
  for (int u = 0; u < L; ++u) {
    for (int ci = 0; ci < cin; ++ci) {
      double acc = 0.0;
      for (int dt = 0; dt < k; ++dt) {
        const int s = u - dt + off;
        if (s < 0 || s >= L) continue;
        for (int co = 0; co < cout; ++co)
          acc += dy[static_cast<std::size_t>(s) * cout + co] *
                 w[(static_cast<std::size_t>(co) * cin + ci) * k + dt];
      }
      dx[static_cast<std::size_t>(u) * cin + ci] += acc;
    }
  }
}

void conv1d_bwd_params(const double* __restrict__ dy, const double* __restrict__ x, int L, int cin, int cout,
                       int k, double* __restrict__ dw, double* __restrict__ db) {
  const int off = k / 2;
  for (int co = 0; co < cout; ++co) {
    double accb = 0.0;
    for (int t = 0; t < L; ++t) accb += dy[static_cast<std::size_t>(t) * cout + co];
    db[co] += accb;
    for (int ci = 0; ci < cin; ++ci) {
      for (int dt = 0; dt < k; ++dt) {
        double acc = 0.0;
        for (int t = 0; t < L; ++t) {
          const int s = t + dt - off;
          if (s < 0 || s >= L) continue;
          acc += dy[static_cast<std::size_t>(t) * cout + co] *
                 x[static_cast<std::size_t>(s) * cin + ci];
        }
        dw[(static_cast<std::size_t>(co) * cin + ci) * k + dt] += acc;
      }
    }
  }
}

void conv2d(const double* __restrict__ x, int cin, int H, int W, const double* __restrict__ w, int cout,
            int k, const double* __restrict__ bias, double* __restrict__ y) {
  const int off = k / 2;
  for (int co = 0; co < cout; ++co) {
    for (int yy = 0; yy < H; ++yy) {
      for (int xx = 0; xx < W; ++xx) {
        double acc = bias[co];
        for (int ci = 0; ci < cin; ++ci) {
          for (int dy = 0; dy < k; ++dy) {
            const int sy = yy + dy - off;
            if (sy < 0 || sy >= H) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int sx = xx + dx - off;
              if (sx < 0 || sx >= W) continue;
              acc += w[((static_cast<std::size_t>(co) * cin + ci) * k + dy) * k + dx] *
                     x[(static_cast<std::size_t>(ci) * H + sy) * W + sx];
            }
          }
        }
        y[(static_cast<std::size_t>(co) * H + yy) * W + xx] = acc;
      }
    }
  }
}

void conv2d_bwd_input(const double* __restrict__ dy, int cout, int H, int W, const double* __restrict__ w,
                      int cin, int k, double* __restrict__ dx) {
  const int off = k / 2;
  for (int ci = 0; ci < cin; ++ci) {
    for (int sy = 0; sy < H; ++sy) {
      for (int sx = 0; sx < W; ++sx) {
        double acc = 0.0;
        for (int co = 0; co < cout; ++co) {
          for (int dyk = 0; dyk < k; ++dyk) {
            const int yy = sy - dyk + off;
            if (yy < 0 || yy >= H) continue;
            for (int dxk = 0; dxk < k; ++dxk) {
              const int xx = sx - dxk + off;
              if (xx < 0 || xx >= W) continue;
              acc += dy[(static_cast<std::size_t>(co) * H + yy) * W + xx] *
                     w[((static_cast<std::size_t>(co) * cin + ci) * k + dyk) * k + dxk];
            }
          }
        }
        dx[(static_cast<std::size_t>(ci) * H + sy) * W + sx] += acc;
      }
    }
  }
}

void conv2d_bwd_params(const double* __restrict__ dy, const double* __restrict__ x, int cin, int H, int W,
                       int cout, int k, double* __restrict__ dw, double* __restrict__ db) {
  const int off = k / 2;
  for (int co = 0; co < cout; ++co) {
    double accb = 0.0;
    const double* __restrict__ dyp = dy + static_cast<std::size_t>(co) * H * W;
    for (int i = 0; i < H * W; ++i) accb += dyp[i];
    db[co] += accb;
    for (int ci = 0; ci < cin; ++ci) {
      for (int dyk = 0; dyk < k; ++dyk) {
        for (int dxk = 0; dxk < k; ++dxk) {
          double acc = 0.0;
          for (int yy = 0; yy < H; ++yy) {
            const int sy = yy + dyk - off;
            if (sy < 0 || sy >= H) continue;
            for (int xx = 0; xx < W; ++xx) {
              const int sx = xx + dxk - off;
              if (sx < 0 || sx >= W) continue;
              acc += dyp[static_cast<std::size_t>(yy) * W + xx] *
                     x[(static_cast<std::size_t>(ci) * H + sy) * W + sx];
            }
          }
          dw[((static_cast<std::size_t>(co) * cin + ci) * k + dyk) * k + dxk] += acc;
        }
      }
    }
  }
}

namespace detail {
inline void row_norms(const double* __restrict__ x, int L, int d, double* __restrict__ inv, bool* __restrict__ degenerate) {
  for (int i = 0; i < L; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * d;
    double n2 = 0.0;
    for (int t = 0; t < d; ++t) n2 += xi[t] * xi[t];
    if (n2 < kZeroNorm2) {
      inv[i] = 0.0;
      if (degenerate) *degenerate = true;
    } else {
      inv[i] = 1.0 / std::sqrt(n2);
    }
  }
}
}  // namespace detail

void pairwise_cosine(const double* __restrict__ x, int L, int d, double* __restrict__ s, bool* __restrict__ degenerate) {
  std::vector<double> inv(L);
  detail::row_norms(x, L, d, inv.data(), degenerate);
  for (int i = 0; i < L; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < L; ++j) {
      if (inv[i] == 0.0 || inv[j] == 0.0) {
        s[static_cast<std::size_t>(i) * L + j] = 0.0;
        continue;
      }
      const double* __restrict__ xj = x + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int t = 0; t < d; ++t) dot += xi[t] * xj[t];
      s[static_cast<std::size_t>(i) * L + j] = dot * (inv[i] * inv[j]);
    }
  }
}

void pairwise_cosine_bwd(const double* __restrict__ x, int L, int d, const double* __restrict__ s,
                         const double* __restrict__ ds, double* __restrict__ dx) {
  std::vector<double> inv(L);
  detail::row_norms(x, L, d, inv.data(), nullptr);
  for (int i = 0; i < L; ++i) {
    if (inv[i] == 0.0) continue;
    double* __restrict__ dxi = dx + static_cast<std::size_t>(i) * d;
    double self = 0.0;
    for (int j = 0; j < L; ++j) {
      const double g = ds[static_cast<std::size_t>(i) * L + j] +
                       ds[static_cast<std::size_t>(j) * L + i];
      if (inv[j] == 0.0 || g == 0.0) continue;
      const double* __restrict__ xj = x + static_cast<std::size_t>(j) * d;
      const double wj = g * (inv[i] * inv[j]);
      for (int t = 0; t < d; ++t) dxi[t] += wj * xj[t];
      self += g * s[static_cast<std::size_t>(i) * L + j];
    }
    const double ci = self * inv[i] * inv[i];
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * d;
    for (int t = 0; t < d; ++t) dxi[t] -= ci * xi[t];
  }
}

void cross_cosine(const double* __restrict__ a, const double* __restrict__ b, int L, int d, double* __restrict__ c,
                  bool* __restrict__ degenerate) {
  std::vector<double> ia(L), ib(L);
  detail::row_norms(a, L, d, ia.data(), degenerate);
  detail::row_norms(b, L, d, ib.data(), degenerate);
  for (int i = 0; i < L; ++i) {
    const double* __restrict__ ai = a + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < L; ++j) {
      if (ia[i] == 0.0 || ib[j] == 0.0) {
        c[static_cast<std::size_t>(i) * L + j] = 0.0;
        continue;
      }
      const double* __restrict__ bj = b + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int t = 0; t < d; ++t) dot += ai[t] * bj[t];
      c[static_cast<std::size_t>(i) * L + j] = dot * (ia[i] * ib[j]);
    }
  }
}

void cross_cosine_bwd(const double* __restrict__ a, const double* __restrict__ b, int L, int d,
                      const double* __restrict__ c, const double* __restrict__ dc, double* __restrict__ da, double* __restrict__ db) {
  std::vector<double> ia(L), ib(L);
  detail::row_norms(a, L, d, ia.data(), nullptr);
  detail::row_norms(b, L, d, ib.data(), nullptr);
  if (da != nullptr) {
    for (int i = 0; i < L; ++i) {
      if (ia[i] == 0.0) continue;
      double* __restrict__ dai = da + static_cast<std::size_t>(i) * d;
      double self = 0.0;
      for (int j = 0; j < L; ++j) {
        const double g = dc[static_cast<std::size_t>(i) * L + j];
        if (ib[j] == 0.0 || g == 0.0) continue;
        const double* __restrict__ bj = b + static_cast<std::size_t>(j) * d;
        const double wj = g * (ia[i] * ib[j]);
        for (int t = 0; t < d; ++t) dai[t] += wj * bj[t];
        self += g * c[static_cast<std::size_t>(i) * L + j];
      }
      const double ci = self * ia[i] * ia[i];
      const double* __restrict__ airow = a + static_cast<std::size_t>(i) * d;
      for (int t = 0; t < d; ++t) dai[t] -= ci * airow[t];
    }
  }
  for (int j = 0; j < L; ++j) {
    if (ib[j] == 0.0) continue;
    double* __restrict__ dbj = db + static_cast<std::size_t>(j) * d;
    double self = 0.0;
    for (int i = 0; i < L; ++i) {
      const double g = dc[static_cast<std::size_t>(i) * L + j];
      if (ia[i] == 0.0 || g == 0.0) continue;
      const double* __restrict__ ai = a + static_cast<std::size_t>(i) * d;
      const double wi = g * (ia[i] * ib[j]);
      for (int t = 0; t < d; ++t) dbj[t] += wi * ai[t];
      self += g * c[static_cast<std::size_t>(i) * L + j];
    }
    const double cj = self * ib[j] * ib[j];
    const double* __restrict__ bjrow = b + static_cast<std::size_t>(j) * d;
    for (int t = 0; t < d; ++t) dbj[t] -= cj * bjrow[t];
  }
}

void softmax_rows(const double* __restrict__ x, int n, int m, double* __restrict__ y) {
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * m;
    double* __restrict__ yi = y + static_cast<std::size_t>(i) * m;
    double mx = xi[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const double invs = 1.0 / sum;
    for (int j = 0; j < m; ++j) yi[j] *= invs;
  }
}

void softmax_rows_bwd(const double* __restrict__ y, const double* __restrict__ dy, int n, int m, double* __restrict__ dx) {
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ yi = y + static_cast<std::size_t>(i) * m;
    const double* __restrict__ di = dy + static_cast<std::size_t>(i) * m;
    double* __restrict__ oi = dx + static_cast<std::size_t>(i) * m;
    double dot = 0.0;
    for (int j = 0; j < m; ++j) dot += di[j] * yi[j];
    for (int j = 0; j < m; ++j) oi[j] += yi[j] * (di[j] - dot);
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP versions. Parallel over independent output rows/planes; the
// per-element accumulation order matches the serial reference.
// ---------------------------------------------------------------------------
namespace omp {

void matmul_nt(const double* __restrict__ x, int n, int k, const double* __restrict__ w, int m, double* __restrict__ y) {
  // Eight independent accumulators break the FMA latency chain; the
  // summation order is fixed, so results stay reproducible.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * k;
    double* __restrict__ yi = y + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* __restrict__ wj = w + static_cast<std::size_t>(j) * k;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      double a4 = 0.0, a5 = 0.0, a6 = 0.0, a7 = 0.0;
      int t = 0;
      for (; t + 8 <= k; t += 8) {
        a0 += xi[t] * wj[t];
        a1 += xi[t + 1] * wj[t + 1];
        a2 += xi[t + 2] * wj[t + 2];
        a3 += xi[t + 3] * wj[t + 3];
        a4 += xi[t + 4] * wj[t + 4];
        a5 += xi[t + 5] * wj[t + 5];
        a6 += xi[t + 6] * wj[t + 6];
        a7 += xi[t + 7] * wj[t + 7];
      }
      double acc = ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7));
      for (; t < k; ++t) acc += xi[t] * wj[t];
      yi[j] = acc;
    }
  }
}

void matmul_nn(const double* __restrict__ a, int n, int k, const double* __restrict__ b, int m, double* __restrict__ y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ ai = a + static_cast<std::size_t>(i) * k;
    double* __restrict__ yi = y + static_cast<std::size_t>(i) * m;
    zero(yi, m);
    for (int t = 0; t < k; ++t) {
      const double av = ai[t];
      if (av == 0.0) continue;
      const double* __restrict__ bt = b + static_cast<std::size_t>(t) * m;
      for (int j = 0; j < m; ++j) yi[j] += av * bt[j];
    }
  }
}

void matmul_tn(const double* __restrict__ a, int n, int m, const double* __restrict__ b, int k, double* __restrict__ y) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < m; ++o) {
    double* __restrict__ yo = y + static_cast<std::size_t>(o) * k;
    zero(yo, k);
    for (int t = 0; t < n; ++t) {
      const double av = a[static_cast<std::size_t>(t) * m + o];
      if (av == 0.0) continue;
      const double* __restrict__ bt = b + static_cast<std::size_t>(t) * k;
      for (int i = 0; i < k; ++i) yo[i] += av * bt[i];
    }
  }
}

void conv1d(const double* __restrict__ x, int L, int cin, const double* __restrict__ w, int cout, int k,
            const double* __restrict__ bias, double* __restrict__ y) {
  const int off = k / 2;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < L; ++t) {
    double* __restrict__ yt = y + static_cast<std::size_t>(t) * cout;
    for (int co = 0; co < cout; ++co) {
      double acc = bias[co];
      for (int dt = 0; dt < k; ++dt) {
        const int s = t + dt - off;
        if (s < 0 || s >= L) continue;
        const double* __restrict__ xs = x + static_cast<std::size_t>(s) * cin;
        const double* __restrict__ wr = w + (static_cast<std::size_t>(co) * cin) * k + dt;
        for (int ci = 0; ci < cin; ++ci) acc += wr[static_cast<std::size_t>(ci) * k] * xs[ci];
      }
      yt[co] = acc;
    }
  }
}

void conv1d_bwd_input(const double* __restrict__ dy, int L, int cout, const double* __restrict__ w, int cin,
                      int k, double* __restrict__ dx) {
  const int off = k / 2;
#pragma omp parallel for schedule(static)
  for (int u = 0; u < L; ++u) {
    double* __restrict__ du = dx + static_cast<std::size_t>(u) * cin;
    for (int ci = 0; ci < cin; ++ci) {
      double acc = 0.0;
      for (int dt = 0; dt < k; ++dt) {
        const int s = u - dt + off;
        if (s < 0 || s >= L) continue;
        for (int co = 0; co < cout; ++co)
          acc += dy[static_cast<std::size_t>(s) * cout + co] *
                 w[(static_cast<std::size_t>(co) * cin + ci) * k + dt];
      }
      du[ci] += acc;
    }
  }
}

void conv1d_bwd_params(const double* __restrict__ dy, const double* __restrict__ x, int L, int cin, int cout,
                       int k, double* __restrict__ dw, double* __restrict__ db) {
  const int off = k / 2;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    double accb = 0.0;
    for (int t = 0; t < L; ++t) accb += dy[static_cast<std::size_t>(t) * cout + co];
    db[co] += accb;
    for (int ci = 0; ci < cin; ++ci) {
      for (int dt = 0; dt < k; ++dt) {
        double acc = 0.0;
        for (int t = 0; t < L; ++t) {
          const int s = t + dt - off;
          if (s < 0 || s >= L) continue;
          acc += dy[static_cast<std::size_t>(t) * cout + co] *
                 x[static_cast<std::size_t>(s) * cin + ci];
        }
        dw[(static_cast<std::size_t>(co) * cin + ci) * k + dt] += acc;
      }
    }
  }
}

void conv2d(const double* __restrict__ x, int cin, int H, int W, const double* __restrict__ w, int cout,
            int k, const double* __restrict__ bias, double* __restrict__ y) {
  const int off = k / 2;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    double* __restrict__ plane = y + static_cast<std::size_t>(co) * H * W;
    for (int yy = 0; yy < H; ++yy) {
      double* __restrict__ dst = plane + static_cast<std::size_t>(yy) * W;
      for (int xx = 0; xx < W; ++xx) dst[xx] = bias[co];
    }
    for (int ci = 0; ci < cin; ++ci) {
      const double* __restrict__ xplane = x + static_cast<std::size_t>(ci) * H * W;
      for (int dy = 0; dy < k; ++dy) {
        const int ylo = std::max(0, off - dy);
        const int yhi = std::min(H, H + off - dy);
        for (int dx = 0; dx < k; ++dx) {
          const double wv =
              w[((static_cast<std::size_t>(co) * cin + ci) * k + dy) * k + dx];
          if (wv == 0.0) continue;
          const int xlo = std::max(0, off - dx);
          const int xhi = std::min(W, W + off - dx);
          for (int yy = ylo; yy < yhi; ++yy) {
            double* __restrict__ dst = plane + static_cast<std::size_t>(yy) * W;
            const double* __restrict__ src =
                xplane + static_cast<std::size_t>(yy + dy - off) * W + (dx - off);
            for (int xx = xlo; xx < xhi; ++xx) dst[xx] += wv * src[xx];
          }
        }
      }
    }
  }
}

void conv2d_bwd_input(const double* __restrict__ dy, int cout, int H, int W, const double* __restrict__ w,
                      int cin, int k, double* __restrict__ dx) {
  const int off = k / 2;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    double* __restrict__ dplane = dx + static_cast<std::size_t>(ci) * H * W;
    for (int co = 0; co < cout; ++co) {
      const double* __restrict__ gplane = dy + static_cast<std::size_t>(co) * H * W;
      for (int dyk = 0; dyk < k; ++dyk) {
        const int slo = std::max(0, dyk - off);
        const int shi = std::min(H, H + dyk - off);
        for (int dxk = 0; dxk < k; ++dxk) {
          const double wv =
              w[((static_cast<std::size_t>(co) * cin + ci) * k + dyk) * k + dxk];
          if (wv == 0.0) continue;
          const int xlo = std::max(0, dxk - off);
          const int xhi = std::min(W, W + dxk - off);
          for (int sy = slo; sy < shi; ++sy) {
            double* __restrict__ dst = dplane + static_cast<std::size_t>(sy) * W;
            const double* __restrict__ src =
                gplane + static_cast<std::size_t>(sy - dyk + off) * W + (off - dxk);
            for (int sx = xlo; sx < xhi; ++sx) dst[sx] += wv * src[sx];
          }
        }
      }
    }
  }
}

void conv2d_bwd_params(const double* __restrict__ dy, const double* __restrict__ x, int cin, int H, int W,
                       int cout, int k, double* __restrict__ dw, double* __restrict__ db) {
  const int off = k / 2;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    const double* __restrict__ dyp = dy + static_cast<std::size_t>(co) * H * W;
    double accb = 0.0;
    for (int i = 0; i < H * W; ++i) accb += dyp[i];
    db[co] += accb;
    for (int ci = 0; ci < cin; ++ci) {
      const double* __restrict__ xp = x + static_cast<std::size_t>(ci) * H * W;
      for (int dyk = 0; dyk < k; ++dyk) {
        const int ylo = std::max(0, off - dyk);
        const int yhi = std::min(H, H + off - dyk);
        for (int dxk = 0; dxk < k; ++dxk) {
          const int xlo = std::max(0, off - dxk);
          const int xhi = std::min(W, W + off - dxk);
          double acc = 0.0;
          for (int yy = ylo; yy < yhi; ++yy) {
            const double* __restrict__ gr = dyp + static_cast<std::size_t>(yy) * W;
            const double* __restrict__ xr =
                xp + static_cast<std::size_t>(yy + dyk - off) * W + (dxk - off);
            // four independent chains; fixed order keeps this reproducible
            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
            int xx = xlo;
            for (; xx + 4 <= xhi; xx += 4) {
              a0 += gr[xx] * xr[xx];
              a1 += gr[xx + 1] * xr[xx + 1];
              a2 += gr[xx + 2] * xr[xx + 2];
              a3 += gr[xx + 3] * xr[xx + 3];
            }
            double row = (a0 + a1) + (a2 + a3);
            for (; xx < xhi; ++xx) row += gr[xx] * xr[xx];
            acc += row;
          }
          dw[((static_cast<std::size_t>(co) * cin + ci) * k + dyk) * k + dxk] += acc;
        }
      }
    }
  }
}

void pairwise_cosine(const double* __restrict__ x, int L, int d, double* __restrict__ s, bool* __restrict__ degenerate) {
  std::vector<double> inv(L);
  bool degen = false;
  for (int i = 0; i < L; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * d;
    double n2 = 0.0;
    for (int t = 0; t < d; ++t) n2 += xi[t] * xi[t];
    if (n2 < kZeroNorm2) {
      inv[i] = 0.0;
      degen = true;
    } else {
      inv[i] = 1.0 / std::sqrt(n2);
    }
  }
  if (degen && degenerate) *degenerate = true;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < L; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * d;
    double* __restrict__ si = s + static_cast<std::size_t>(i) * L;
    for (int j = 0; j < L; ++j) {
      if (inv[i] == 0.0 || inv[j] == 0.0) {
        si[j] = 0.0;
        continue;
      }
      const double* __restrict__ xj = x + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int t = 0; t < d; ++t) dot += xi[t] * xj[t];
      si[j] = dot * (inv[i] * inv[j]);
    }
  }
}

void pairwise_cosine_bwd(const double* __restrict__ x, int L, int d, const double* __restrict__ s,
                         const double* __restrict__ ds, double* __restrict__ dx) {
  std::vector<double> inv(L);
  serial::detail::row_norms(x, L, d, inv.data(), nullptr);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < L; ++i) {
    if (inv[i] == 0.0) continue;
    double* __restrict__ dxi = dx + static_cast<std::size_t>(i) * d;
    double self = 0.0;
    for (int j = 0; j < L; ++j) {
      const double g = ds[static_cast<std::size_t>(i) * L + j] +
                       ds[static_cast<std::size_t>(j) * L + i];
      if (inv[j] == 0.0 || g == 0.0) continue;
      const double* __restrict__ xj = x + static_cast<std::size_t>(j) * d;
      const double wj = g * (inv[i] * inv[j]);
      for (int t = 0; t < d; ++t) dxi[t] += wj * xj[t];
      self += g * s[static_cast<std::size_t>(i) * L + j];
    }
    const double ci = self * inv[i] * inv[i];
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * d;
    for (int t = 0; t < d; ++t) dxi[t] -= ci * xi[t];
  }
}

void cross_cosine(const double* __restrict__ a, const double* __restrict__ b, int L, int d, double* __restrict__ c,
                  bool* __restrict__ degenerate) {
  std::vector<double> ia(L), ib(L);
  serial::detail::row_norms(a, L, d, ia.data(), degenerate);
  serial::detail::row_norms(b, L, d, ib.data(), degenerate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < L; ++i) {
    const double* __restrict__ ai = a + static_cast<std::size_t>(i) * d;
    double* __restrict__ ci_row = c + static_cast<std::size_t>(i) * L;
    for (int j = 0; j < L; ++j) {
      if (ia[i] == 0.0 || ib[j] == 0.0) {
        ci_row[j] = 0.0;
        continue;
      }
      const double* __restrict__ bj = b + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int t = 0; t < d; ++t) dot += ai[t] * bj[t];
      ci_row[j] = dot * (ia[i] * ib[j]);
    }
  }
}

void cross_cosine_bwd(const double* __restrict__ a, const double* __restrict__ b, int L, int d,
                      const double* __restrict__ c, const double* __restrict__ dc, double* __restrict__ da, double* __restrict__ db) {
  std::vector<double> ia(L), ib(L);
  serial::detail::row_norms(a, L, d, ia.data(), nullptr);
  serial::detail::row_norms(b, L, d, ib.data(), nullptr);
  if (da != nullptr) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < L; ++i) {
      if (ia[i] == 0.0) continue;
      double* __restrict__ dai = da + static_cast<std::size_t>(i) * d;
      double self = 0.0;
      for (int j = 0; j < L; ++j) {
        const double g = dc[static_cast<std::size_t>(i) * L + j];
        if (ib[j] == 0.0 || g == 0.0) continue;
        const double* __restrict__ bj = b + static_cast<std::size_t>(j) * d;
        const double wj = g * (ia[i] * ib[j]);
        for (int t = 0; t < d; ++t) dai[t] += wj * bj[t];
        self += g * c[static_cast<std::size_t>(i) * L + j];
      }
      const double coef = self * ia[i] * ia[i];
      const double* __restrict__ arow = a + static_cast<std::size_t>(i) * d;
      for (int t = 0; t < d; ++t) dai[t] -= coef * arow[t];
    }
  }
#pragma omp parallel for schedule(static)
  for (int j = 0; j < L; ++j) {
    if (ib[j] == 0.0) continue;
    double* __restrict__ dbj = db + static_cast<std::size_t>(j) * d;
    double self = 0.0;
    for (int i = 0; i < L; ++i) {
      const double g = dc[static_cast<std::size_t>(i) * L + j];
      if (ia[i] == 0.0 || g == 0.0) continue;
      const double* __restrict__ ai = a + static_cast<std::size_t>(i) * d;
      const double wi = g * (ia[i] * ib[j]);
      for (int t = 0; t < d; ++t) dbj[t] += wi * ai[t];
      self += g * c[static_cast<std::size_t>(i) * L + j];
    }
    const double coef = self * ib[j] * ib[j];
    const double* __restrict__ brow = b + static_cast<std::size_t>(j) * d;
    for (int t = 0; t < d; ++t) dbj[t] -= coef * brow[t];
  }
}

void softmax_rows(const double* __restrict__ x, int n, int m, double* __restrict__ y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ xi = x + static_cast<std::size_t>(i) * m;
    double* __restrict__ yi = y + static_cast<std::size_t>(i) * m;
    double mx = xi[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const double invs = 1.0 / sum;
    for (int j = 0; j < m; ++j) yi[j] *= invs;
  }
}

void softmax_rows_bwd(const double* __restrict__ y, const double* __restrict__ dy, int n, int m, double* __restrict__ dx) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double* __restrict__ yi = y + static_cast<std::size_t>(i) * m;
    const double* __restrict__ di = dy + static_cast<std::size_t>(i) * m;
    double* __restrict__ oi = dx + static_cast<std::size_t>(i) * m;
    double dot = 0.0;
    for (int j = 0; j < m; ++j) dot += di[j] * yi[j];
    for (int j = 0; j < m; ++j) oi[j] += yi[j] * (di[j] - dot);
  }
}

}  // namespace omp

// ---------------------------------------------------------------------------
// Dispatch.
// ---------------------------------------------------------------------------
#define GEBD_DISPATCH(fn, ...)              \
  if (exec() == Exec::Serial)               \
    serial::fn(__VA_ARGS__);                \
  else                                      \
    omp::fn(__VA_ARGS__)

void matmul_nt(const double* __restrict__ x, int n, int k, const double* __restrict__ w, int m, double* __restrict__ y) {
  GEBD_DISPATCH(matmul_nt, x, n, k, w, m, y);
}
void matmul_nn(const double* __restrict__ a, int n, int k, const double* __restrict__ b, int m, double* __restrict__ y) {
  GEBD_DISPATCH(matmul_nn, a, n, k, b, m, y);
}
void matmul_tn(const double* __restrict__ a, int n, int m, const double* __restrict__ b, int k, double* __restrict__ y) {
  GEBD_DISPATCH(matmul_tn, a, n, m, b, k, y);
}
void conv1d(const double* __restrict__ x, int L, int cin, const double* __restrict__ w, int cout, int k,
            const double* __restrict__ bias, double* __restrict__ y) {
  GEBD_DISPATCH(conv1d, x, L, cin, w, cout, k, bias, y);
}
void conv1d_bwd_input(const double* __restrict__ dy, int L, int cout, const double* __restrict__ w, int cin,
                      int k, double* __restrict__ dx) {
  GEBD_DISPATCH(conv1d_bwd_input, dy, L, cout, w, cin, k, dx);
}
void conv1d_bwd_params(const double* __restrict__ dy, const double* __restrict__ x, int L, int cin, int cout,
                       int k, double* __restrict__ dw, double* __restrict__ db) {
  GEBD_DISPATCH(conv1d_bwd_params, dy, x, L, cin, cout, k, dw, db);
}
void conv2d(const double* __restrict__ x, int cin, int H, int W, const double* __restrict__ w, int cout,
            int k, const double* __restrict__ bias, double* __restrict__ y) {
  GEBD_DISPATCH(conv2d, x, cin, H, W, w, cout, k, bias, y);
}
void conv2d_bwd_input(const double* __restrict__ dy, int cout, int H, int W, const double* __restrict__ w,
                      int cin, int k, double* __restrict__ dx) {
  GEBD_DISPATCH(conv2d_bwd_input, dy, cout, H, W, w, cin, k, dx);
}
void conv2d_bwd_params(const double* __restrict__ dy, const double* __restrict__ x, int cin, int H, int W,
                       int cout, int k, double* __restrict__ dw, double* __restrict__ db) {
  GEBD_DISPATCH(conv2d_bwd_params, dy, x, cin, H, W, cout, k, dw, db);
}
void pairwise_cosine(const double* __restrict__ x, int L, int d, double* __restrict__ s, bool* __restrict__ degenerate) {
  GEBD_DISPATCH(pairwise_cosine, x, L, d, s, degenerate);
}
void pairwise_cosine_bwd(const double* __restrict__ x, int L, int d, const double* __restrict__ s,
                         const double* __restrict__ ds, double* __restrict__ dx) {
  GEBD_DISPATCH(pairwise_cosine_bwd, x, L, d, s, ds, dx);
}
void cross_cosine(const double* __restrict__ a, const double* __restrict__ b, int L, int d, double* __restrict__ c,
                  bool* __restrict__ degenerate) {
  GEBD_DISPATCH(cross_cosine, a, b, L, d, c, degenerate);
}
void cross_cosine_bwd(const double* __restrict__ a, const double* __restrict__ b, int L, int d,
                      const double* __restrict__ c, const double* __restrict__ dc, double* __restrict__ da, double* __restrict__ db) {
  GEBD_DISPATCH(cross_cosine_bwd, a, b, L, d, c, dc, da, db);
}
void softmax_rows(const double* __restrict__ x, int n, int m, double* __restrict__ y) {
  GEBD_DISPATCH(softmax_rows, x, n, m, y);
}
void softmax_rows_bwd(const double* __restrict__ y, const double* __restrict__ dy, int n, int m, double* __restrict__ dx) {
  GEBD_DISPATCH(softmax_rows_bwd, y, dy, n, m, dx);
}

#undef GEBD_DISPATCH

}  // namespace gebd::kernels
