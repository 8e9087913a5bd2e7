#pragma once

// Entropic optimal transport with uniform marginals: cosine cost matrix,
// Sinkhorn solver (linear and log-domain), and an exhaustive small-instance
// oracle for tests. The solver exists in two forms that execute identical
// kernel sequences: a plain one over matrices and a tape-recorded one whose
// every iteration participates in backpropagation.

#include <utility>
#include <vector>

#include "otreg/matrix.hpp"
#include "otreg/tape.hpp"

namespace otreg {

struct CostMatrix {
  Matrix values;  // n_a x n_g, entries in [0, 2]
};

struct SinkhornConfig {
  double epsilon = 0.1;
  int max_iterations = 500;
  double tolerance = 1e-8;
  bool log_domain = true;
};

struct TransportPlan {
  Matrix gamma;  // n_a x n_g, nonnegative, total mass 1
  double epsilon = 0.0;
  int iterations_used = 0;
  double marginal_error = 0.0;
};

// Tape-recorded plan; gamma.value() is the coupling matrix.
struct TrackedPlan {
  Var gamma;
  double epsilon = 0.0;
  int iterations_used = 0;
  double marginal_error = 0.0;
};

// C_ij = 1 - cos(source_i, target_j) on unit-normalized rows; entries in [0,2].
CostMatrix build_cost(const Matrix& source, const Matrix& target);
Var build_cost(Var source, Var target);

// Minimizes <gamma,C> - eps*H(gamma) under uniform marginals 1/n_a, 1/n_g.
// Returns the current plan with its marginal error when max_iterations is hit.
TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornConfig& cfg);
TrackedPlan sinkhorn(Var cost, const SinkhornConfig& cfg);

// Max deviation of row sums from 1/n_a and column sums from 1/n_g.
double marginal_violation(const Matrix& gamma);

// Exhaustive search over all n! assignments for square uniform-marginal
// instances, n <= 8. Returns the optimal permutation and (1/n) sum_i C[i,perm[i]].
std::pair<std::vector<int>, double> exact_uniform_ot_oracle(const CostMatrix& cost);

// H(gamma) = -sum gamma*log(gamma) with 0*log0 = 0; natural log.
double entropy(const Matrix& gamma);

}  // namespace otreg
