#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedpalm/adam.hpp"
#include "fedpalm/errors.hpp"
#include "fedpalm/rng.hpp"

using namespace fedpalm;

namespace {

ParamVector vec(std::initializer_list<double> vals) {
  ParamVector p;
  p.add("x", {vals.size()});
  std::size_t i = 0;
  for (double v : vals) p.data()[i++] = v;
  return p;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  auto theta = vec({1.25, -0.5, 3.0});
  auto before = theta.data();
  Adam opt(0.0);
  opt.step(theta, vec({10.0, -3.0, 0.5}));
  CHECK(theta.data() == before);
}

TEST_CASE("first step matches the closed-form Adam update") {
  auto theta = vec({1.0, -2.0});
  auto grad = vec({0.3, -0.7});
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Adam opt(lr, b1, b2, eps);
  auto before = theta.data();
  opt.step(theta, grad);
  for (std::size_t i = 0; i < 2; ++i) {
    const double g = grad.data()[i];
    const double mhat = (1 - b1) * g / (1 - b1);
    const double vhat = (1 - b2) * g * g / (1 - b2);
    const double expect = before[i] - lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(theta.data()[i] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("peek_update equals the delta applied by step") {
  Rng rng(5);
  auto theta = vec({0.1, 0.2, 0.3, 0.4});
  Adam opt(0.02);
  for (int it = 0; it < 5; ++it) {
    ParamVector grad = ParamVector::zeros_like(theta);
    for (auto& g : grad.data()) g = rng.uniform(-1.0, 1.0);
    auto predicted = opt.peek_update(theta, grad);
    auto before = theta.data();
    opt.step(theta, grad);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      CHECK(theta.data()[i] == before[i] + predicted[i]);
    }
  }
}

TEST_CASE("moments persist when parameters are overwritten") {
  auto theta = vec({1.0});
  Adam opt(0.1);
  opt.step(theta, vec({1.0}));
  // Overwrite (a broadcast) and take a zero-gradient step: the decayed
  // first moment still moves the parameter.
  theta.data()[0] = 5.0;
  opt.step(theta, vec({0.0}));
  CHECK(theta.data()[0] != 5.0);
  CHECK(opt.steps_taken() == 2);
}

TEST_CASE("layout mismatch is rejected") {
  auto theta = vec({1.0, 2.0});
  ParamVector grad;
  grad.add("y", {2});
  Adam opt(0.1);
  CHECK_THROWS_AS(opt.step(theta, grad), ProtocolError);
}
