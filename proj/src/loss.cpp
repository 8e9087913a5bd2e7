#include "otreg/loss.hpp"

namespace otreg {

Var transport_cost(Var plan, Var cost) {
  require_same_shape(plan.value(), cost.value(), "transport_cost");
  return sum_all(mul(plan, cost));
}

double transport_cost(const Matrix& plan, const Matrix& cost) {
  Tape t;
  return transport_cost(t.constant(plan), t.constant(cost)).scalar();
}

Var row_normalize(Var plan) {
  Tape& t = *plan.tape();
  const Matrix& p = plan.value();
  Var ones = t.constant(Matrix::filled(p.cols(), 1, 1.0));
  Var sums = matmul(plan, ones);
  for (int i = 0; i < p.rows(); ++i)
    if (!(sums.value()(i, 0) > 0.0))
      throw domain_error("row_normalize: degenerate plan row " + std::to_string(i));
  Var inv = div(t.constant(Matrix::filled(p.rows(), 1, 1.0)), sums);
  return mul_col(plan, inv);
}

Matrix row_normalize(const Matrix& plan) {
  Tape t;
  return row_normalize(t.constant(plan)).value();
}

Var sparsity_loss(Var plan) {
  Tape& t = *plan.tape();
  const int n_a = plan.value().rows();
  Var rn = row_normalize(plan);
  Var sq = mul(rn, rn);
  Var norm_sq = matmul(sq, t.constant(Matrix::filled(plan.value().cols(), 1, 1.0)));
  Var norms = sqrt(norm_sq);
  return add_scalar(scale(sum_all(norms), -1.0 / n_a), 1.0);
}

double sparsity_loss(const Matrix& plan) {
  Tape t;
  return sparsity_loss(t.constant(plan)).scalar();
}

TrackedOtLoss ot_loss(Var plan, Var cost, double lambda_spr) {
  if (lambda_spr < 0.0) throw domain_error("ot_loss: lambda_spr must be nonnegative");
  TrackedOtLoss out;
  out.l_cost = transport_cost(plan, cost);
  out.l_spr = sparsity_loss(plan);
  out.l_ot = add(out.l_cost, scale(out.l_spr, lambda_spr));
  return out;
}

OtLossBreakdown ot_loss(const Matrix& plan, const Matrix& cost, double lambda_spr) {
  Tape t;
  return ot_loss(t.constant(plan), t.constant(cost), lambda_spr).values(lambda_spr);
}

}  // namespace otreg
