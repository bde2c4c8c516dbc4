#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedpalm/array.hpp"
#include "fedpalm/errors.hpp"
#include "fedpalm/rng.hpp"

using namespace fedpalm;

namespace {

DenseArray random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  DenseArray a({r, c});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1.0, 1.0);
  return a;
}

// Brute-force triple loop, the oracle for matmul.
DenseArray matmul_oracle(const DenseArray& a, const DenseArray& b) {
  DenseArray out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k)
        out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

}  // namespace

TEST_CASE("matmul identity") {
  auto eye = DenseArray::row_major(2, 2, {1, 0, 0, 1});
  auto b = DenseArray::row_major(2, 2, {3, 4, 5, 6});
  auto out = matmul(eye, b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == b[i]);
}

TEST_CASE("matmul 1x2 by 2x1 dot product") {
  auto a = DenseArray::row_major(1, 2, {1, 2});
  auto b = DenseArray::row_major(2, 1, {3, 4});
  auto out = matmul(a, b);
  CHECK(out.size() == 1);
  CHECK(out[0] == 11.0);
}

TEST_CASE("matmul matches brute-force oracle on random 5x7 * 7x3") {
  Rng rng(42);
  auto a = random_matrix(5, 7, rng);
  auto b = random_matrix(7, 3, rng);
  auto got = matmul(a, b);
  auto expect = matmul_oracle(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-14));
  }
}

TEST_CASE("matmul shape mismatch throws") {
  auto a = DenseArray::row_major(2, 3, {1, 2, 3, 4, 5, 6});
  auto b = DenseArray::row_major(2, 2, {1, 2, 3, 4});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul rejects non-finite results") {
  auto a = DenseArray::row_major(1, 1, {1e308});
  auto b = DenseArray::row_major(1, 1, {1e308});
  CHECK_THROWS_AS(matmul(a, b), NumericError);
}

TEST_CASE("matmul associativity within 1e-9 relative") {
  Rng rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    auto a = random_matrix(4, 6, rng);
    auto b = random_matrix(6, 5, rng);
    auto c = random_matrix(5, 3, rng);
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double denom = std::max({std::abs(left[i]), std::abs(right[i]), 1e-30});
      CHECK(std::abs(left[i] - right[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("parallel matmul is bitwise identical to the serial reference") {
  Rng rng(99);
  // Big enough to take the threaded path.
  auto a = random_matrix(96, 80, rng);
  auto b = random_matrix(80, 64, rng);
  auto par = matmul(a, b);
  auto ser = serial::matmul(a, b);
  for (std::size_t i = 0; i < par.size(); ++i) CHECK(par[i] == ser[i]);
}

TEST_CASE("cosine similarity basics") {
  CHECK(cosine_similarity(DenseArray::vector({1, 2, 3}), DenseArray::vector({1, 2, 3})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(DenseArray::vector({1, 0}), DenseArray::vector({0, 1})) == 0.0);
  CHECK(cosine_similarity(DenseArray::vector({1, 1}), DenseArray::vector({1, -1})) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(DenseArray::vector({0, 0}), DenseArray::vector({1, 0})),
                  DegenerateInputError);
}

TEST_CASE("cosine similarity is scale invariant within 1e-12") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = rng.uniform(-1.0, 1.0);
    const double c = rng.uniform(0.1, 10.0);
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = c * a[i];
    CHECK(std::abs(cosine_similarity(a, b) - 1.0) < 1e-12);
  }
}
