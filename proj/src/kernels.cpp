#include "otreg/kernels.hpp"

#include <atomic>

namespace otreg::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

namespace detail {

inline double lse_span(const double* x, size_t n, size_t stride) {
  double mx = x[0];
  for (size_t j = 1; j < n; ++j)
    if (x[j * stride] > mx) mx = x[j * stride];
  double s = 0.0;
  for (size_t j = 0; j < n; ++j) s += std::exp(x[j * stride] - mx);
  return mx + std::log(s);
}

inline void softmax_span(const double* x, double* y, size_t n, size_t stride) {
  double mx = x[0];
  for (size_t j = 1; j < n; ++j)
    if (x[j * stride] > mx) mx = x[j * stride];
  double s = 0.0;
  for (size_t j = 0; j < n; ++j) {
    y[j * stride] = std::exp(x[j * stride] - mx);
    s += y[j * stride];
  }
  for (size_t j = 0; j < n; ++j) y[j * stride] /= s;
}

}  // namespace detail

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    double* oi = out.data().data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) oi[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* bp = b.data().data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) oi[j] += aip * bp[j];
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  // out = a^T * b, a is k x m, b is k x n, out m x n
  const int k = a.rows(), m = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    double* oi = out.data().data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) oi[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double api = a(p, i);
      const double* bp = b.data().data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) oi[j] += api * bp[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  // out = a * b^T, a is m x k, b is n x k, out m x n
  const int m = a.rows(), k = a.cols(), n = b.rows();
  for (int i = 0; i < m; ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* bj = b.data().data() + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      out(i, j) = s;
    }
  }
}

void transpose(const Matrix& a, Matrix& out) {
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
}

void row_norms(const Matrix& a, Matrix& out) {
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * a.cols();
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += ai[j] * ai[j];
    out(i, 0) = std::sqrt(s);
  }
}

void lse_rows(const Matrix& a, Matrix& out) {
  for (int i = 0; i < a.rows(); ++i)
    out(i, 0) = detail::lse_span(a.data().data() + static_cast<size_t>(i) * a.cols(), a.cols(), 1);
}

void lse_cols(const Matrix& a, Matrix& out) {
  for (int j = 0; j < a.cols(); ++j)
    out(0, j) = detail::lse_span(a.data().data() + j, a.rows(), a.cols());
}

void softmax_rows(const Matrix& a, Matrix& out) {
  for (int i = 0; i < a.rows(); ++i) {
    const size_t off = static_cast<size_t>(i) * a.cols();
    detail::softmax_span(a.data().data() + off, out.data().data() + off, a.cols(), 1);
  }
}

void softmax_cols(const Matrix& a, Matrix& out) {
  for (int j = 0; j < a.cols(); ++j)
    detail::softmax_span(a.data().data() + j, out.data().data() + j, a.rows(), a.cols());
}

void row_sums(const Matrix& a, Matrix& out) {
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * a.cols();
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += ai[j];
    out(i, 0) = s;
  }
}

void col_sums(const Matrix& a, Matrix& out) {
  for (int j = 0; j < a.cols(); ++j) out(0, j) = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * a.cols();
    for (int j = 0; j < a.cols(); ++j) out(0, j) += ai[j];
  }
}

double sum_all(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

}  // namespace serial

namespace par {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* oi = out.data().data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) oi[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* bp = b.data().data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) oi[j] += aip * bp[j];
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const int k = a.rows(), m = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* oi = out.data().data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) oi[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double api = a(p, i);
      const double* bp = b.data().data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) oi[j] += api * bp[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const int m = a.rows(), k = a.cols(), n = b.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* bj = b.data().data() + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      out(i, j) = s;
    }
  }
}

void transpose(const Matrix& a, Matrix& out) {
  const int rows = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
}

void row_norms(const Matrix& a, Matrix& out) {
  const int rows = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * a.cols();
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += ai[j] * ai[j];
    out(i, 0) = std::sqrt(s);
  }
}

void lse_rows(const Matrix& a, Matrix& out) {
  const int rows = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    out(i, 0) = detail::lse_span(a.data().data() + static_cast<size_t>(i) * a.cols(), a.cols(), 1);
}

void lse_cols(const Matrix& a, Matrix& out) {
  const int cols = a.cols();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j)
    out(0, j) = detail::lse_span(a.data().data() + j, a.rows(), a.cols());
}

void softmax_rows(const Matrix& a, Matrix& out) {
  const int rows = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const size_t off = static_cast<size_t>(i) * a.cols();
    detail::softmax_span(a.data().data() + off, out.data().data() + off, a.cols(), 1);
  }
}

void softmax_cols(const Matrix& a, Matrix& out) {
  const int cols = a.cols();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j)
    detail::softmax_span(a.data().data() + j, out.data().data() + j, a.rows(), a.cols());
}

void row_sums(const Matrix& a, Matrix& out) {
  const int rows = a.rows();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* ai = a.data().data() + static_cast<size_t>(i) * a.cols();
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += ai[j];
    out(i, 0) = s;
  }
}

void col_sums(const Matrix& a, Matrix& out) {
  const int cols = a.cols();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += a(i, j);
    out(0, j) = s;
  }
}

}  // namespace par

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::int64_t work = static_cast<std::int64_t>(a.rows()) * a.cols() * b.cols();
  if (use_par(work))
    par::matmul(a, b, out);
  else
    serial::matmul(a, b, out);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::int64_t work = static_cast<std::int64_t>(a.rows()) * a.cols() * b.cols();
  if (use_par(work))
    par::matmul_tn(a, b, out);
  else
    serial::matmul_tn(a, b, out);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::int64_t work = static_cast<std::int64_t>(a.rows()) * a.cols() * b.rows();
  if (use_par(work))
    par::matmul_nt(a, b, out);
  else
    serial::matmul_nt(a, b, out);
}

void transpose(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::transpose(a, out);
  else
    serial::transpose(a, out);
}

void row_norms(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::row_norms(a, out);
  else
    serial::row_norms(a, out);
}

void lse_rows(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::lse_rows(a, out);
  else
    serial::lse_rows(a, out);
}

void lse_cols(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::lse_cols(a, out);
  else
    serial::lse_cols(a, out);
}

void softmax_rows(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::softmax_rows(a, out);
  else
    serial::softmax_rows(a, out);
}

void softmax_cols(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::softmax_cols(a, out);
  else
    serial::softmax_cols(a, out);
}

void row_sums(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::row_sums(a, out);
  else
    serial::row_sums(a, out);
}

void col_sums(const Matrix& a, Matrix& out) {
  if (use_par(static_cast<std::int64_t>(a.size())))
    par::col_sums(a, out);
  else
    serial::col_sums(a, out);
}

double sum_all(const Matrix& a) { return serial::sum_all(a); }

}  // namespace otreg::kernels
