#pragma once

#include <cstdint>
#include <vector>

#include "fedpalm/params.hpp"

namespace fedpalm {

// Adam with bias correction. One state per ParamVector; moments persist
// across rounds even when the parameters are overwritten by a broadcast.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // theta -= lr * mhat / (sqrt(vhat) + eps), elementwise.
  void step(ParamVector& theta, const ParamVector& grad);

  // A single transformed update for external verification: returns the
  // delta that step() would apply, without mutating internal state.
  std::vector<double> peek_update(const ParamVector& theta, const ParamVector& grad) const;

  double lr() const { return lr_; }
  std::uint64_t steps_taken() const { return t_; }

 private:
  double lr_ = 0.01;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace fedpalm
