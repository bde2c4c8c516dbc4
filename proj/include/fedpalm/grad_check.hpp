#pragma once

#include <functional>

#include "fedpalm/array.hpp"
#include "fedpalm/params.hpp"

namespace fedpalm {

// Central finite differences (f(t+h e_i) - f(t-h e_i)) / 2h per coordinate.
// The verification oracle for every analytic gradient in the repo.
DenseArray finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                            const ParamVector& theta, double h);

// Comparison rule used by the gradient tests. A coordinate passes when
// its absolute error is under abs_tol (the finite-difference noise floor
// allowance) or its relative error is under rel_tol; every coordinate
// must pass.
struct GradCheckResult {
  bool pass = true;
  std::size_t worst_index = 0;
  double max_rel_err = 0.0;  // over coordinates not absolved by abs_tol
  double max_abs_err = 0.0;
  bool ok() const { return pass; }
};

GradCheckResult compare_gradients(const DenseArray& analytic, const DenseArray& numeric,
                                  double rel_tol = 1e-3, double abs_tol = 1e-6);

}  // namespace fedpalm
