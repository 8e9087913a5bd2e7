#include "otreg/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otreg/kernels.hpp"

namespace otreg {

CostMatrix build_cost(const Matrix& source, const Matrix& target) {
  Tape t;
  return CostMatrix{build_cost(t.constant(source), t.constant(target)).value()};
}

Var build_cost(Var source, Var target) {
  Var sim = cosine_similarity(source, target);
  // 1 - sim is in [0,2] up to rounding; the clamp removes FP spill just
  // outside and passes gradients through on the closed interval.
  return clamp(add_scalar(scale(sim, -1.0), 1.0), 0.0, 2.0);
}

double marginal_violation(const Matrix& gamma) {
  const int n_a = gamma.rows(), n_g = gamma.cols();
  const double ra = 1.0 / n_a, rb = 1.0 / n_g;
  Matrix rs(n_a, 1), cs(1, n_g);
  kernels::row_sums(gamma, rs);
  kernels::col_sums(gamma, cs);
  double err = 0.0;
  for (int i = 0; i < n_a; ++i) err = std::max(err, std::fabs(rs(i, 0) - ra));
  for (int j = 0; j < n_g; ++j) err = std::max(err, std::fabs(cs(0, j) - rb));
  return err;
}

namespace {

void check_config(const SinkhornConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw domain_error("sinkhorn: epsilon must be positive");
  if (cfg.max_iterations < 1) throw domain_error("sinkhorn: max_iterations must be >= 1");
  if (cfg.tolerance < 0.0) throw domain_error("sinkhorn: tolerance must be nonnegative");
}

void check_cost(const Matrix& c) {
  if (c.rows() < 1 || c.cols() < 1) throw dimension_error("sinkhorn: empty cost matrix");
  if (!c.all_finite()) throw domain_error("sinkhorn: cost matrix has non-finite entries");
}

bool finite(const Matrix& m) { return m.all_finite(); }

}  // namespace

// Both solver domains run the convergence check on untracked values each
// iteration and materialize the final coupling once, so the tracked and the
// plain solver execute the same kernel sequence and agree bitwise.

TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornConfig& cfg) {
  check_config(cfg);
  check_cost(cost.values);
  const Matrix& c = cost.values;
  const int n_a = c.rows(), n_g = c.cols();
  const double inv_eps = -1.0 / cfg.epsilon;

  TransportPlan plan;
  plan.epsilon = cfg.epsilon;

  if (cfg.log_domain) {
    Matrix log_k(n_a, n_g);
    kernels::map1(c, log_k, [inv_eps](double x) { return x * inv_eps; });
    const double log_a = -std::log(static_cast<double>(n_a));
    const double log_b = -std::log(static_cast<double>(n_g));
    Matrix f(n_a, 1), g(1, n_g);
    Matrix shifted(n_a, n_g), lse(n_a, 1), lse_c(1, n_g), gamma(n_a, n_g);
    int it = 0;
    double err = std::numeric_limits<double>::infinity();
    while (it < cfg.max_iterations) {
      ++it;
      kernels::map_bcast_row(log_k, g, shifted, [](double x, double y) { return x + y; });
      kernels::lse_rows(shifted, lse);
      kernels::map1(lse, f, [log_a](double x) { return log_a - x; });
      kernels::map_bcast_col(log_k, f, shifted, [](double x, double y) { return x + y; });
      kernels::lse_cols(shifted, lse_c);
      kernels::map1(lse_c, g, [log_b](double x) { return log_b - x; });

      kernels::map_bcast_col(log_k, f, gamma, [](double x, double y) { return x + y; });
      kernels::map_bcast_row(gamma, g, gamma, [](double x, double y) { return x + y; });
      kernels::map1(gamma, gamma, [](double x) { return std::exp(x); });
      err = marginal_violation(gamma);
      if (err <= cfg.tolerance) break;
    }
    plan.gamma = std::move(gamma);
    plan.iterations_used = it;
    plan.marginal_error = err;
    return plan;
  }

  // Linear domain: u <- a / (K v), v <- b / (K^T u) with K = exp(-C/eps).
  Matrix kmat(n_a, n_g);
  kernels::map1(c, kmat, [inv_eps](double x) { return std::exp(x * inv_eps); });
  Matrix kt(n_g, n_a);
  kernels::transpose(kmat, kt);
  const double a_mass = 1.0 / n_a, b_mass = 1.0 / n_g;
  Matrix u = Matrix::filled(n_a, 1, 1.0);
  Matrix v = Matrix::filled(n_g, 1, 1.0);
  Matrix kv(n_a, 1), ktu(n_g, 1), gamma(n_a, n_g);
  int it = 0;
  double err = std::numeric_limits<double>::infinity();
  while (it < cfg.max_iterations) {
    ++it;
    kernels::matmul(kmat, v, kv);
    kernels::map1(kv, u, [a_mass](double x) { return a_mass / x; });
    kernels::matmul(kt, u, ktu);
    kernels::map1(ktu, v, [b_mass](double x) { return b_mass / x; });
    if (!finite(u) || !finite(v))
      throw numeric_error(
          "sinkhorn: non-finite scaling vector in the linear domain (epsilon too small); "
          "use log_domain");
    kernels::map_bcast_col(kmat, u, gamma, [](double x, double y) { return x * y; });
    for (int i = 0; i < n_a; ++i)
      for (int j = 0; j < n_g; ++j) gamma(i, j) *= v(j, 0);
    err = marginal_violation(gamma);
    if (err <= cfg.tolerance) break;
  }
  plan.gamma = std::move(gamma);
  plan.iterations_used = it;
  plan.marginal_error = err;
  return plan;
}

TrackedPlan sinkhorn(Var cost, const SinkhornConfig& cfg) {
  check_config(cfg);
  check_cost(cost.value());
  Tape& t = *cost.tape();
  const int n_a = cost.value().rows(), n_g = cost.value().cols();

  TrackedPlan plan;
  plan.epsilon = cfg.epsilon;

  if (cfg.log_domain) {
    Var log_k = t.scale(cost, -1.0 / cfg.epsilon);
    const double log_a = -std::log(static_cast<double>(n_a));
    const double log_b = -std::log(static_cast<double>(n_g));
    Var f = t.constant(Matrix(n_a, 1));
    Var g = t.constant(Matrix(1, n_g));
    Matrix probe(n_a, n_g);
    int it = 0;
    double err = std::numeric_limits<double>::infinity();
    while (it < cfg.max_iterations) {
      ++it;
      f = add_scalar(scale(lse_rows(add_row(log_k, g)), -1.0), log_a);
      g = add_scalar(scale(lse_cols(add_col(log_k, f)), -1.0), log_b);
      // Convergence probe on raw values; not recorded.
      kernels::map_bcast_col(log_k.value(), f.value(), probe,
                             [](double x, double y) { return x + y; });
      kernels::map_bcast_row(probe, g.value(), probe, [](double x, double y) { return x + y; });
      kernels::map1(probe, probe, [](double x) { return std::exp(x); });
      err = marginal_violation(probe);
      if (err <= cfg.tolerance) break;
    }
    plan.gamma = exp(add_row(add_col(log_k, f), g));
    plan.iterations_used = it;
    plan.marginal_error = err;
    return plan;
  }

  Var kmat = exp(scale(cost, -1.0 / cfg.epsilon));
  Var kt = transpose(kmat);
  Var a = t.constant(Matrix::filled(n_a, 1, 1.0 / n_a));
  Var b = t.constant(Matrix::filled(n_g, 1, 1.0 / n_g));
  Var u = t.constant(Matrix::filled(n_a, 1, 1.0));
  Var v = t.constant(Matrix::filled(n_g, 1, 1.0));
  Matrix probe(n_a, n_g);
  int it = 0;
  double err = std::numeric_limits<double>::infinity();
  while (it < cfg.max_iterations) {
    ++it;
    u = div(a, matmul(kmat, v));
    v = div(b, matmul(kt, u));
    if (!finite(u.value()) || !finite(v.value()))
      throw numeric_error(
          "sinkhorn: non-finite scaling vector in the linear domain (epsilon too small); "
          "use log_domain");
    kernels::map_bcast_col(kmat.value(), u.value(), probe,
                           [](double x, double y) { return x * y; });
    for (int i = 0; i < n_a; ++i)
      for (int j = 0; j < n_g; ++j) probe(i, j) *= v.value()(j, 0);
    err = marginal_violation(probe);
    if (err <= cfg.tolerance) break;
  }
  plan.gamma = mul_row(mul_col(kmat, u), transpose(v));
  plan.iterations_used = it;
  plan.marginal_error = err;
  return plan;
}

std::pair<std::vector<int>, double> exact_uniform_ot_oracle(const CostMatrix& cost) {
  const Matrix& c = cost.values;
  const int n = c.rows();
  if (n != c.cols()) throw dimension_error("exact oracle: cost matrix must be square");
  if (n < 1 || n > 8) throw domain_error("exact oracle: size limit is 1 <= n <= 8");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += c(i, perm[i]);
    if (s < best_cost) {
      best_cost = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, best_cost / n};
}

double entropy(const Matrix& gamma) {
  double h = 0.0;
  for (double v : gamma.data()) {
    if (v < 0.0) throw domain_error("entropy: negative entry");
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace otreg
