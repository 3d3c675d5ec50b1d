#pragma once

#include <cstddef>

// Dense math kernels. Every kernel comes in a *_serial reference form and a
// default form that parallelizes with OpenMP across independent output
// elements. Each output element is always produced by the same serial
// reduction order, so the parallel forms are bit-identical to the serial
// ones for any thread count.

namespace fashionfb::kernels {

// out[m x n] = a[m x k] * b[k x n]; accumulates into out when acc is set.
void matmul_nn_serial(const double* a, const double* b, double* out, int m, int k, int n, bool acc = false);
void matmul_nn(const double* a, const double* b, double* out, int m, int k, int n, bool acc = false);

// out[m x k] = a[m x n] * b[k x n]^T
void matmul_nt_serial(const double* a, const double* b, double* out, int m, int n, int k, bool acc = false);
void matmul_nt(const double* a, const double* b, double* out, int m, int n, int k, bool acc = false);

// out[k x n] = a[m x k]^T * b[m x n]
void matmul_tn_serial(const double* a, const double* b, double* out, int m, int k, int n, bool acc = false);
void matmul_tn(const double* a, const double* b, double* out, int m, int k, int n, bool acc = false);

void add_serial(const double* a, const double* b, double* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);

void mul_serial(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);

// out += a * x, elementwise
void axpy_serial(double a, const double* x, double* out, std::size_t n);
void axpy(double a, const double* x, double* out, std::size_t n);

void scale_serial(const double* x, double a, double* out, std::size_t n);
void scale(const double* x, double a, double* out, std::size_t n);

void tanh_serial(const double* x, double* out, std::size_t n);
void tanh(const double* x, double* out, std::size_t n);

void sigmoid_serial(const double* x, double* out, std::size_t n);
void sigmoid(const double* x, double* out, std::size_t n);

void relu_serial(const double* x, double* out, std::size_t n);
void relu(const double* x, double* out, std::size_t n);

void log_serial(const double* x, double* out, std::size_t n);
void log(const double* x, double* out, std::size_t n);

// Row-wise softmax / log-softmax over an m x n matrix, max-subtracted.
void softmax_rows_serial(const double* x, double* out, int m, int n);
void softmax_rows(const double* x, double* out, int m, int n);

void log_softmax_rows_serial(const double* x, double* out, int m, int n);
void log_softmax_rows(const double* x, double* out, int m, int n);

// out[n] = column means of x[m x n]
void mean_rows_serial(const double* x, double* out, int m, int n);
void mean_rows(const double* x, double* out, int m, int n);

double sum_serial(const double* x, std::size_t n);

// scores[m] = u^T tanh(p_i + q) per row i of p[m x a]; q and u have length a.
// The tanh matrix is never materialized.
void attn_scores_serial(const double* p, const double* q, const double* u, double* scores, int m, int a);
void attn_scores(const double* p, const double* q, const double* u, double* scores, int m, int a);

// Backward of attn_scores: recomputes z = tanh(p_i + q) row by row and
// accumulates dp[m x a], dq[a], du[a] given dscores[m].
void attn_scores_backward_serial(const double* p, const double* q, const double* u,
                                 const double* dscores, double* dp, double* dq, double* du,
                                 int m, int a);

bool all_finite(const double* x, std::size_t n);

}  // namespace fashionfb::kernels
