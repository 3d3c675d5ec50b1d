// Times the serial reference kernels against the OpenMP variants and checks
// that both produce identical bits. Thread count comes from OMP_NUM_THREADS.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <vector>

#include "fashionfb/kernels.hpp"
#include "fashionfb/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace k = fashionfb::kernels;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void fill(fashionfb::DetRng& rng, std::vector<double>& v) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::atoi(argv[1]);
  if (reps < 1) reps = 1;

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (no OpenMP)\n");
#endif
  std::printf("%-24s %10s %10s %8s %s\n", "kernel", "serial ms", "omp ms", "speedup", "bits");

  fashionfb::DetRng rng(1234);
  bool all_match = true;

  auto report = [&](const char* name, double ts, double tp, bool match) {
    std::printf("%-24s %10.3f %10.3f %8.2fx %s\n", name, ts, tp, ts / tp,
                match ? "identical" : "DIFFER");
    all_match = all_match && match;
  };

  {
    const int m = 256, kk = 512, n = 256;
    std::vector<double> a(static_cast<std::size_t>(m) * kk), b(static_cast<std::size_t>(kk) * n);
    std::vector<double> o1(static_cast<std::size_t>(m) * n), o2(o1.size());
    fill(rng, a);
    fill(rng, b);
    const double ts = time_ms([&] { k::matmul_nn_serial(a.data(), b.data(), o1.data(), m, kk, n); }, reps);
    const double tp = time_ms([&] { k::matmul_nn(a.data(), b.data(), o2.data(), m, kk, n); }, reps);
    report("matmul_nn 256x512x256", ts, tp, bits_equal(o1, o2));
  }
  {
    const int m = 256, n = 512, kk = 256;
    std::vector<double> a(static_cast<std::size_t>(m) * n), b(static_cast<std::size_t>(kk) * n);
    std::vector<double> o1(static_cast<std::size_t>(m) * kk), o2(o1.size());
    fill(rng, a);
    fill(rng, b);
    const double ts = time_ms([&] { k::matmul_nt_serial(a.data(), b.data(), o1.data(), m, n, kk); }, reps);
    const double tp = time_ms([&] { k::matmul_nt(a.data(), b.data(), o2.data(), m, n, kk); }, reps);
    report("matmul_nt 256x512x256", ts, tp, bits_equal(o1, o2));
  }
  {
    const int m = 512, kk = 256, n = 256;
    std::vector<double> a(static_cast<std::size_t>(m) * kk), b(static_cast<std::size_t>(m) * n);
    std::vector<double> o1(static_cast<std::size_t>(kk) * n), o2(o1.size());
    fill(rng, a);
    fill(rng, b);
    const double ts = time_ms([&] { k::matmul_tn_serial(a.data(), b.data(), o1.data(), m, kk, n); }, reps);
    const double tp = time_ms([&] { k::matmul_tn(a.data(), b.data(), o2.data(), m, kk, n); }, reps);
    report("matmul_tn 512x256x256", ts, tp, bits_equal(o1, o2));
  }
  {
    const std::size_t n = 1u << 20;
    std::vector<double> a(n), b(n), o1(n), o2(n);
    fill(rng, a);
    fill(rng, b);
    const double ts = time_ms([&] { k::mul_serial(a.data(), b.data(), o1.data(), n); }, reps);
    const double tp = time_ms([&] { k::mul(a.data(), b.data(), o2.data(), n); }, reps);
    report("mul 1M", ts, tp, bits_equal(o1, o2));
  }
  {
    const std::size_t n = 1u << 20;
    std::vector<double> a(n), o1(n), o2(n);
    fill(rng, a);
    const double ts = time_ms([&] { k::tanh_serial(a.data(), o1.data(), n); }, reps);
    const double tp = time_ms([&] { k::tanh(a.data(), o2.data(), n); }, reps);
    report("tanh 1M", ts, tp, bits_equal(o1, o2));
  }
  {
    const int m = 2048, n = 512;
    std::vector<double> a(static_cast<std::size_t>(m) * n), o1(a.size()), o2(a.size());
    fill(rng, a);
    const double ts = time_ms([&] { k::softmax_rows_serial(a.data(), o1.data(), m, n); }, reps);
    const double tp = time_ms([&] { k::softmax_rows(a.data(), o2.data(), m, n); }, reps);
    report("softmax_rows 2048x512", ts, tp, bits_equal(o1, o2));
  }
  {
    const int m = 98, aa = 256;
    std::vector<double> p(static_cast<std::size_t>(m) * aa), q(aa), u(aa);
    std::vector<double> o1(m), o2(m);
    fill(rng, p);
    fill(rng, q);
    fill(rng, u);
    const double ts = time_ms([&] { k::attn_scores_serial(p.data(), q.data(), u.data(), o1.data(), m, aa); }, 50 * reps);
    const double tp = time_ms([&] { k::attn_scores(p.data(), q.data(), u.data(), o2.data(), m, aa); }, 50 * reps);
    report("attn_scores 98x256", ts, tp, bits_equal(o1, o2));
  }

  std::printf("\n%s\n", all_match ? "all kernels bit-identical" : "MISMATCH DETECTED");
  return all_match ? 0 : 1;
}
