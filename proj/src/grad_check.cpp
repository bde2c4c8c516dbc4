#include "fedpalm/grad_check.hpp"

#include <cmath>

#include "fedpalm/errors.hpp"

namespace fedpalm {

DenseArray finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                            const ParamVector& theta, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: h must be positive");
  ParamVector probe = theta;
  DenseArray grad({theta.size()});
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(probe);
    probe.data()[i] = orig - h;
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

GradCheckResult compare_gradients(const DenseArray& analytic, const DenseArray& numeric,
                                  double rel_tol, double abs_tol) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("compare_gradients: length mismatch");
  }
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double err = std::abs(a - n);
    r.max_abs_err = std::max(r.max_abs_err, err);
    if (err < abs_tol) continue;
    const double rel = err / std::max(std::abs(a), std::abs(n));
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = i;
    }
    if (rel >= rel_tol) r.pass = false;
  }
  return r;
}

}  // namespace fedpalm
