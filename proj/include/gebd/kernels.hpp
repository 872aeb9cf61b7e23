#pragma once

#include <cstddef>

// Hot numeric kernels. Every kernel exists twice: a plain serial reference
// under kernels::serial and an OpenMP version under kernels::omp that
// parallelizes over independent output elements only, so a given build
// produces the same result for any thread count. The unqualified functions
// dispatch on the globally selected execution path.
//
// Conventions: forward kernels overwrite their output; backward kernels
// accumulate (+=) into their gradient outputs.

namespace gebd::kernels {

enum class Exec { Serial, Parallel };

Exec exec();
void set_exec(Exec e);

// Rows with squared norm below this are treated as zero vectors in the
// cosine kernels (similarity 0, zero gradient, degeneracy flag).
inline constexpr double kZeroNorm2 = 1e-290;

#define GEBD_KERNEL_SET                                                        \
  /* y[n x m] = x[n x k] . w[m x k]^T */                                       \
  void matmul_nt(const double* x, int n, int k, const double* w, int m,        \
                 double* y);                                                   \
  /* y[n x m] = a[n x k] . b[k x m] */                                         \
  void matmul_nn(const double* a, int n, int k, const double* b, int m,        \
                 double* y);                                                   \
  /* y[m x k] = a[n x m]^T . b[n x k] */                                       \
  void matmul_tn(const double* a, int n, int m, const double* b, int k,        \
                 double* y);                                                   \
                                                                               \
  /* 1-D convolution over time, zero padded, odd k, length preserved.    */    \
  /* x: L x cin, w: cout x cin x k, bias: cout, y: L x cout              */    \
  void conv1d(const double* x, int L, int cin, const double* w, int cout,      \
              int k, const double* bias, double* y);                           \
  void conv1d_bwd_input(const double* dy, int L, int cout, const double* w,    \
                        int cin, int k, double* dx);                           \
  void conv1d_bwd_params(const double* dy, const double* x, int L, int cin,    \
                         int cout, int k, double* dw, double* db);             \
                                                                               \
  /* 2-D convolution, zero padded, odd k, stride 1, H x W preserved.     */    \
  /* x: cin x H x W, w: cout x cin x k x k, y: cout x H x W              */    \
  void conv2d(const double* x, int cin, int H, int W, const double* w,         \
              int cout, int k, const double* bias, double* y);                 \
  void conv2d_bwd_input(const double* dy, int cout, int H, int W,              \
                        const double* w, int cin, int k, double* dx);          \
  void conv2d_bwd_params(const double* dy, const double* x, int cin, int H,    \
                         int W, int cout, int k, double* dw, double* db);      \
                                                                               \
  /* Cosine similarity between all row pairs of x (L x d). s is L x L.   */    \
  /* Zero-norm rows yield similarity 0 and set *degenerate.              */    \
  void pairwise_cosine(const double* x, int L, int d, double* s,               \
                       bool* degenerate);                                      \
  void pairwise_cosine_bwd(const double* x, int L, int d, const double* s,     \
                           const double* ds, double* dx);                      \
                                                                               \
  /* c[i][j] = cosine(a_i, b_j); a, b are L x d. da may be null          */    \
  /* (stop-gradient on the a branch).                                    */    \
  void cross_cosine(const double* a, const double* b, int L, int d, double* c, \
                    bool* degenerate);                                         \
  void cross_cosine_bwd(const double* a, const double* b, int L, int d,        \
                        const double* c, const double* dc, double* da,         \
                        double* db);                                           \
                                                                               \
  /* Row-wise softmax over an n x m matrix. */                                 \
  void softmax_rows(const double* x, int n, int m, double* y);                 \
  void softmax_rows_bwd(const double* y, const double* dy, int n, int m,       \
                        double* dx);

namespace serial {
GEBD_KERNEL_SET
}
namespace omp {
GEBD_KERNEL_SET
}
GEBD_KERNEL_SET

#undef GEBD_KERNEL_SET

}  // namespace gebd::kernels
