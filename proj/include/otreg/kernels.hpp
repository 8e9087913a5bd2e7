#pragma once

// Dense kernels backing the tape and the solvers. Every kernel exists twice:
// kernels::serial is the reference implementation, kernels::par the
// OpenMP-parallel one. Both produce bit-identical results: parallel loops
// only split independent output elements, and the reduction inside each
// element keeps the serial evaluation order. The unqualified functions
// dispatch on problem size.

#include <cmath>
#include <cstdint>

#include "otreg/matrix.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otreg::kernels {

// Work threshold (flops or elements) below which dispatch stays serial.
inline constexpr std::int64_t kParallelGrain = 1 << 15;

bool parallel_enabled();
void set_parallel_enabled(bool on);

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out);     // a * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);  // a^T * b
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);  // a * b^T
void transpose(const Matrix& a, Matrix& out);
void row_norms(const Matrix& a, Matrix& out);     // n x 1, L2 norm per row
void lse_rows(const Matrix& a, Matrix& out);      // n x 1, log-sum-exp per row
void lse_cols(const Matrix& a, Matrix& out);      // 1 x m
void softmax_rows(const Matrix& a, Matrix& out);  // same shape
void softmax_cols(const Matrix& a, Matrix& out);
void row_sums(const Matrix& a, Matrix& out);  // n x 1
void col_sums(const Matrix& a, Matrix& out);  // 1 x m
double sum_all(const Matrix& a);

template <class F>
void map1(const Matrix& a, Matrix& out, F f) {
  const size_t n = a.size();
  const double* x = a.data().data();
  double* y = out.data().data();
  for (size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class F>
void map2(const Matrix& a, const Matrix& b, Matrix& out, F f) {
  const size_t n = a.size();
  const double* x = a.data().data();
  const double* yb = b.data().data();
  double* y = out.data().data();
  for (size_t i = 0; i < n; ++i) y[i] = f(x[i], yb[i]);
}

// out(i,j) = f(m(i,j), c(i,0)) with c an n x 1 column.
template <class F>
void map_bcast_col(const Matrix& m, const Matrix& c, Matrix& out, F f) {
  for (int i = 0; i < m.rows(); ++i) {
    const double ci = c(i, 0);
    for (int j = 0; j < m.cols(); ++j) out(i, j) = f(m(i, j), ci);
  }
}

// out(i,j) = f(m(i,j), r(0,j)) with r a 1 x m row.
template <class F>
void map_bcast_row(const Matrix& m, const Matrix& r, Matrix& out, F f) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) = f(m(i, j), r(0, j));
}

}  // namespace serial

namespace par {

void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void transpose(const Matrix& a, Matrix& out);
void row_norms(const Matrix& a, Matrix& out);
void lse_rows(const Matrix& a, Matrix& out);
void lse_cols(const Matrix& a, Matrix& out);
void softmax_rows(const Matrix& a, Matrix& out);
void softmax_cols(const Matrix& a, Matrix& out);
void row_sums(const Matrix& a, Matrix& out);
void col_sums(const Matrix& a, Matrix& out);

template <class F>
void map1(const Matrix& a, Matrix& out, F f) {
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  const double* x = a.data().data();
  double* y = out.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class F>
void map2(const Matrix& a, const Matrix& b, Matrix& out, F f) {
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  const double* x = a.data().data();
  const double* yb = b.data().data();
  double* y = out.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i], yb[i]);
}

template <class F>
void map_bcast_col(const Matrix& m, const Matrix& c, Matrix& out, F f) {
  const int rows = m.rows(), cols = m.cols();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double ci = c(i, 0);
    for (int j = 0; j < cols; ++j) out(i, j) = f(m(i, j), ci);
  }
}

template <class F>
void map_bcast_row(const Matrix& m, const Matrix& r, Matrix& out, F f) {
  const int rows = m.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) = f(m(i, j), r(0, j));
}

}  // namespace par

inline bool use_par(std::int64_t work) {
#ifdef _OPENMP
  return parallel_enabled() && work >= kParallelGrain && !omp_in_parallel();
#else
  (void)work;
  return false;
#endif
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void transpose(const Matrix& a, Matrix& out);
void row_norms(const Matrix& a, Matrix& out);
void lse_rows(const Matrix& a, Matrix& out);
void lse_cols(const Matrix& a, Matrix& out);
void softmax_rows(const Matrix& a, Matrix& out);
void softmax_cols(const Matrix& a, Matrix& out);
void row_sums(const Matrix& a, Matrix& out);
void col_sums(const Matrix& a, Matrix& out);
double sum_all(const Matrix& a);

template <class F>
void map1(const Matrix& a, Matrix& out, F f) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::map1(a, out, f);
  else
    serial::map1(a, out, f);
}

template <class F>
void map2(const Matrix& a, const Matrix& b, Matrix& out, F f) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::map2(a, b, out, f);
  else
    serial::map2(a, b, out, f);
}

template <class F>
void map_bcast_col(const Matrix& m, const Matrix& c, Matrix& out, F f) {
  if (use_par(static_cast<std::int64_t>(m.size())))
    par::map_bcast_col(m, c, out, f);
  else
    serial::map_bcast_col(m, c, out, f);
}

template <class F>
void map_bcast_row(const Matrix& m, const Matrix& r, Matrix& out, F f) {
  if (use_par(static_cast<std::int64_t>(m.size())))
    par::map_bcast_row(m, r, out, f);
  else
    serial::map_bcast_row(m, r, out, f);
}

}  // namespace otreg::kernels
