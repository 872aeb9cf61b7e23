// Times the serial reference kernels against their OpenMP counterparts.
// Usage: bench_kernels [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "gebd/kernels.hpp"
#include "gebd/rng.hpp"

using namespace gebd;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_of(const std::function<void()>& fn, int repeats) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / repeats;
}

void report(const char* name, double serial_s, double omp_s, double flops) {
  std::printf("%-24s serial %8.3f ms (%6.2f GF/s)   omp %8.3f ms (%6.2f GF/s)   speedup %.2fx\n",
              name, serial_s * 1e3, flops / serial_s * 1e-9, omp_s * 1e3,
              flops / omp_s * 1e-9, serial_s / omp_s);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  Rng rng(42);
  std::printf("threads available: %d\n\n", omp_get_max_threads());

  {
    const int n = 256, k = 384, m = 384;
    auto x = random_vec(rng, static_cast<std::size_t>(n) * k);
    auto w = random_vec(rng, static_cast<std::size_t>(m) * k);
    std::vector<double> y(static_cast<std::size_t>(n) * m);
    const double flops = 2.0 * n * k * m;
    const double ts = time_of(
        [&] { kernels::serial::matmul_nt(x.data(), n, k, w.data(), m, y.data()); },
        repeats);
    const double tp = time_of(
        [&] { kernels::omp::matmul_nt(x.data(), n, k, w.data(), m, y.data()); },
        repeats);
    report("matmul_nt 256x384x384", ts, tp, flops);
  }
  {
    const int L = 512, cin = 64, cout = 64, k = 7;
    auto x = random_vec(rng, static_cast<std::size_t>(L) * cin);
    auto w = random_vec(rng, static_cast<std::size_t>(cout) * cin * k);
    auto b = random_vec(rng, cout);
    std::vector<double> y(static_cast<std::size_t>(L) * cout);
    const double flops = 2.0 * L * cin * cout * k;
    const double ts = time_of(
        [&] {
          kernels::serial::conv1d(x.data(), L, cin, w.data(), cout, k, b.data(),
                                  y.data());
        },
        repeats);
    const double tp = time_of(
        [&] {
          kernels::omp::conv1d(x.data(), L, cin, w.data(), cout, k, b.data(),
                               y.data());
        },
        repeats);
    report("conv1d L512 64->64 k7", ts, tp, flops);
  }
  {
    const int H = 64, cin = 32, cout = 32, k = 3;
    auto x = random_vec(rng, static_cast<std::size_t>(cin) * H * H);
    auto w = random_vec(rng, static_cast<std::size_t>(cout) * cin * k * k);
    auto b = random_vec(rng, cout);
    std::vector<double> y(static_cast<std::size_t>(cout) * H * H);
    const double flops = 2.0 * H * H * cin * cout * k * k;
    const double ts = time_of(
        [&] {
          kernels::serial::conv2d(x.data(), cin, H, H, w.data(), cout, k,
                                  b.data(), y.data());
        },
        repeats);
    const double tp = time_of(
        [&] {
          kernels::omp::conv2d(x.data(), cin, H, H, w.data(), cout, k, b.data(),
                               y.data());
        },
        repeats);
    report("conv2d 64x64 32->32 k3", ts, tp, flops);
  }
  {
    const int L = 256, d = 32;
    auto x = random_vec(rng, static_cast<std::size_t>(L) * d);
    std::vector<double> s(static_cast<std::size_t>(L) * L);
    bool flag = false;
    const double flops = 2.0 * L * L * d;
    const double ts = time_of(
        [&] { kernels::serial::pairwise_cosine(x.data(), L, d, s.data(), &flag); },
        repeats);
    const double tp = time_of(
        [&] { kernels::omp::pairwise_cosine(x.data(), L, d, s.data(), &flag); },
        repeats);
    report("pairwise_cosine L256 d32", ts, tp, flops);
  }
  return 0;
}
