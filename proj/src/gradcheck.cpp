#include "otreg/gradcheck.hpp"

#include <cmath>

#include "otreg/errors.hpp"

namespace otreg {

namespace {

double eval_scalar(const ScalarBuilder& build, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.constant(p));
  const double v = build(tape, leaves).scalar();
  if (!std::isfinite(v)) throw numeric_error("grad_check: objective is not finite");
  return v;
}

}  // namespace

double grad_check(const ScalarBuilder& build, std::span<const Matrix> params, double step) {
  if (!(step > 0.0)) throw domain_error("grad_check: step must be positive");

  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.param(p));
  Var root = build(tape, leaves);
  if (!std::isfinite(root.scalar())) throw numeric_error("grad_check: objective is not finite");
  std::vector<Matrix> analytic = tape.backward(root, leaves);

  std::vector<Matrix> work(params.begin(), params.end());
  double worst = 0.0;
  for (size_t p = 0; p < work.size(); ++p) {
    for (size_t i = 0; i < work[p].size(); ++i) {
      const double saved = work[p].data()[i];
      work[p].data()[i] = saved + step;
      const double fp = eval_scalar(build, work);
      work[p].data()[i] = saved - step;
      const double fm = eval_scalar(build, work);
      work[p].data()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[p].data()[i];
      const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace otreg
