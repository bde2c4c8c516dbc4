#include "fedpalm/adam.hpp"

#include <cmath>

#include "fedpalm/errors.hpp"

namespace fedpalm {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr < 0.0) throw ConfigError("adam: negative learning rate");
}

void Adam::step(ParamVector& theta, const ParamVector& grad) {
  if (!theta.same_layout(grad)) throw ProtocolError("adam: gradient layout mismatch");
  if (m_.empty()) {
    m_.assign(theta.size(), 0.0);
    v_.assign(theta.size(), 0.0);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad.data()[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    theta.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

std::vector<double> Adam::peek_update(const ParamVector& theta, const ParamVector& grad) const {
  if (!theta.same_layout(grad)) throw ProtocolError("adam: gradient layout mismatch");
  std::vector<double> delta(theta.size());
  const std::uint64_t t = t_ + 1;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad.data()[i];
    const double m = (m_.empty() ? 0.0 : beta1_ * m_[i]) + (1.0 - beta1_) * g;
    const double v = (v_.empty() ? 0.0 : beta2_ * v_[i]) + (1.0 - beta2_) * g * g;
    delta[i] = -lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
  }
  return delta;
}

}  // namespace fedpalm
