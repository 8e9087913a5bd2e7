#pragma once

// Regularization losses derived from a transport plan: total transport cost,
// the row-sparsity penalty, and their weighted combination. Tape overloads
// are differentiable; matrix overloads are for evaluation and tests.

#include "otreg/matrix.hpp"
#include "otreg/ot.hpp"
#include "otreg/tape.hpp"

namespace otreg {

struct OtLossBreakdown {
  double l_cost = 0.0;  // in [0, 2]
  double l_spr = 0.0;   // in [0, 1]
  double l_ot = 0.0;    // l_cost + lambda_spr * l_spr
  double lambda_spr = 0.0;
};

struct TrackedOtLoss {
  Var l_cost;
  Var l_spr;
  Var l_ot;
  OtLossBreakdown values(double lambda_spr) const {
    return {l_cost.scalar(), l_spr.scalar(), l_ot.scalar(), lambda_spr};
  }
};

// sum_ij gamma_ij * C_ij
Var transport_cost(Var plan, Var cost);
double transport_cost(const Matrix& plan, const Matrix& cost);

// Rescales each plan row to sum to 1; errors on a zero row.
Var row_normalize(Var plan);
Matrix row_normalize(const Matrix& plan);

// (1/n_a) sum_i (1 - |row_i|_2) on the row-normalized plan.
Var sparsity_loss(Var plan);
double sparsity_loss(const Matrix& plan);

TrackedOtLoss ot_loss(Var plan, Var cost, double lambda_spr);
OtLossBreakdown ot_loss(const Matrix& plan, const Matrix& cost, double lambda_spr);

}  // namespace otreg
