#include "fashionfb/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fashionfb::kernels {

namespace {

// Elementwise bodies are small; the OpenMP overhead only pays off past a few
// thousand elements.
constexpr std::size_t kParallelCutoff = 4096;

}  // namespace

void matmul_nn_serial(const double* a, const double* b, double* out, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    double* orow = out + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (int j = 0; j < n; ++j) orow[j] = 0.0;
    }
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_nn(const double* a, const double* b, double* out, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static) if (m > 1)
  for (int i = 0; i < m; ++i) {
    double* orow = out + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (int j = 0; j < n; ++j) orow[j] = 0.0;
    }
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_nt_serial(const double* a, const double* b, double* out, int m, int n, int k, bool acc) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * n;
    double* orow = out + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * n;
      double s = 0.0;
      for (int p = 0; p < n; ++p) s += arow[p] * brow[p];
      if (acc)
        orow[j] += s;
      else
        orow[j] = s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* out, int m, int n, int k, bool acc) {
#pragma omp parallel for schedule(static) if (m > 1)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * n;
    double* orow = out + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * n;
      double s = 0.0;
      for (int p = 0; p < n; ++p) s += arow[p] * brow[p];
      if (acc)
        orow[j] += s;
      else
        orow[j] = s;
    }
  }
}

void matmul_tn_serial(const double* a, const double* b, double* out, int m, int k, int n, bool acc) {
  for (int i = 0; i < k; ++i) {
    double* orow = out + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (int j = 0; j < n; ++j) orow[j] = 0.0;
    }
    for (int p = 0; p < m; ++p) {
      const double av = a[static_cast<std::size_t>(p) * k + i];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* out, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static) if (k > 1)
  for (int i = 0; i < k; ++i) {
    double* orow = out + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (int j = 0; j < n; ++j) orow[j] = 0.0;
    }
    for (int p = 0; p < m; ++p) {
      const double av = a[static_cast<std::size_t>(p) * k + i];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void add_serial(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a[i] + b[i];
}

void mul_serial(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a[i] * b[i];
}

void axpy_serial(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a * x[i];
}

void axpy(double a, const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] += a * x[i];
}

void scale_serial(const double* x, double a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void scale(const double* x, double a, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a * x[i];
}

void tanh_serial(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void tanh(const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = std::tanh(x[i]);
}

void sigmoid_serial(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void sigmoid(const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void relu_serial(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu(const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void log_serial(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

void log(const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = std::log(x[i]);
}

namespace {

inline void softmax_row(const double* xr, double* yr, int n) {
  double mx = xr[0];
  for (int j = 1; j < n; ++j)
    if (xr[j] > mx) mx = xr[j];
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    yr[j] = std::exp(xr[j] - mx);
    s += yr[j];
  }
  const double inv = 1.0 / s;
  for (int j = 0; j < n; ++j) yr[j] *= inv;
}

inline void log_softmax_row(const double* xr, double* yr, int n) {
  double mx = xr[0];
  for (int j = 1; j < n; ++j)
    if (xr[j] > mx) mx = xr[j];
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += std::exp(xr[j] - mx);
  const double lse = mx + std::log(s);
  for (int j = 0; j < n; ++j) yr[j] = xr[j] - lse;
}

}  // namespace

void softmax_rows_serial(const double* x, double* out, int m, int n) {
  for (int i = 0; i < m; ++i)
    softmax_row(x + static_cast<std::size_t>(i) * n, out + static_cast<std::size_t>(i) * n, n);
}

void softmax_rows(const double* x, double* out, int m, int n) {
#pragma omp parallel for schedule(static) if (m > 1)
  for (int i = 0; i < m; ++i)
    softmax_row(x + static_cast<std::size_t>(i) * n, out + static_cast<std::size_t>(i) * n, n);
}

void log_softmax_rows_serial(const double* x, double* out, int m, int n) {
  for (int i = 0; i < m; ++i)
    log_softmax_row(x + static_cast<std::size_t>(i) * n, out + static_cast<std::size_t>(i) * n, n);
}

void log_softmax_rows(const double* x, double* out, int m, int n) {
#pragma omp parallel for schedule(static) if (m > 1)
  for (int i = 0; i < m; ++i)
    log_softmax_row(x + static_cast<std::size_t>(i) * n, out + static_cast<std::size_t>(i) * n, n);
}

void mean_rows_serial(const double* x, double* out, int m, int n) {
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += x[static_cast<std::size_t>(i) * n + j];
    out[j] = s / m;
  }
}

void mean_rows(const double* x, double* out, int m, int n) {
#pragma omp parallel for schedule(static) if (n > 1)
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += x[static_cast<std::size_t>(i) * n + j];
    out[j] = s / m;
  }
}

double sum_serial(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void attn_scores_serial(const double* p, const double* q, const double* u, double* scores, int m, int a) {
  for (int i = 0; i < m; ++i) {
    const double* prow = p + static_cast<std::size_t>(i) * a;
    double s = 0.0;
    for (int j = 0; j < a; ++j) s += u[j] * std::tanh(prow[j] + q[j]);
    scores[i] = s;
  }
}

void attn_scores(const double* p, const double* q, const double* u, double* scores, int m, int a) {
#pragma omp parallel for schedule(static) if (m > 1)
  for (int i = 0; i < m; ++i) {
    const double* prow = p + static_cast<std::size_t>(i) * a;
    double s = 0.0;
    for (int j = 0; j < a; ++j) s += u[j] * std::tanh(prow[j] + q[j]);
    scores[i] = s;
  }
}

void attn_scores_backward_serial(const double* p, const double* q, const double* u,
                                 const double* dscores, double* dp, double* dq, double* du,
                                 int m, int a) {
  for (int i = 0; i < m; ++i) {
    const double* prow = p + static_cast<std::size_t>(i) * a;
    double* dprow = dp + static_cast<std::size_t>(i) * a;
    const double ds = dscores[i];
    for (int j = 0; j < a; ++j) {
      const double z = std::tanh(prow[j] + q[j]);
      const double dz = ds * u[j] * (1.0 - z * z);
      dprow[j] += dz;
      dq[j] += dz;
      du[j] += ds * z;
    }
  }
}

bool all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace fashionfb::kernels
