#pragma once

#include <functional>
#include <span>
#include <vector>

#include "otreg/tape.hpp"

namespace otreg {

// Builds a scalar node from tracked leaves; called once per evaluation.
using ScalarBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Compares the tape gradient of `build` against central finite differences.
// Returns max over all parameter coordinates of
//   |analytic - numeric| / max(1, |analytic|).
double grad_check(const ScalarBuilder& build, std::span<const Matrix> params, double step);

}  // namespace otreg
