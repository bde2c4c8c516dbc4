#include "fedpalm/array.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedpalm/errors.hpp"

namespace fedpalm {

DenseArray::DenseArray(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("DenseArray: zero dimension");
    n *= d;
  }
  data_.assign(n, fill);
}

DenseArray DenseArray::row_major(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) throw DimensionError("DenseArray::row_major: size mismatch");
  DenseArray a;
  a.shape_ = {rows, cols};
  a.data_ = std::move(values);
  return a;
}

DenseArray DenseArray::vector(std::vector<double> values) {
  DenseArray a;
  a.shape_ = {values.size()};
  a.data_ = std::move(values);
  return a;
}

std::size_t DenseArray::rows() const {
  if (shape_.size() != 2) throw DimensionError("DenseArray::rows: not a matrix");
  return shape_[0];
}

std::size_t DenseArray::cols() const {
  if (shape_.size() != 2) throw DimensionError("DenseArray::cols: not a matrix");
  return shape_[1];
}

double& DenseArray::at(std::size_t r, std::size_t c) {
  return data_[r * cols() + c];
}

double DenseArray::at(std::size_t r, std::size_t c) const {
  return data_[r * cols() + c];
}

void ensure_finite(const std::vector<double>& v, const char* context) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      std::ostringstream os;
      os << context << ": non-finite value " << x;
      throw NumericError(os.str());
    }
  }
}

void ensure_finite(const DenseArray& a, const char* context) {
  ensure_finite(a.data(), context);
}

namespace {

void check_matmul_shapes(const DenseArray& a, const DenseArray& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: rank-2 inputs required");
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimensions disagree (" << a.rows() << "x" << a.cols() << " * "
       << b.rows() << "x" << b.cols() << ")";
    throw DimensionError(os.str());
  }
}

// Row-major, left-to-right accumulation for every output element.
inline void matmul_rows(const DenseArray& a, const DenseArray& b, DenseArray& out,
                        std::size_t r0, std::size_t r1) {
  const std::size_t k = a.cols(), n = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += ad[i * k + p] * bd[p * n + j];
      }
      od[i * n + j] = acc;
    }
  }
}

}  // namespace

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  check_matmul_shapes(a, b);
  const std::size_t m = a.rows(), n = b.cols();
  DenseArray out({m, n});
#ifdef _OPENMP
  if (m * n * a.cols() >= 1u << 16) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
      matmul_rows(a, b, out, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
    }
  } else {
    matmul_rows(a, b, out, 0, m);
  }
#else
  matmul_rows(a, b, out, 0, m);
#endif
  ensure_finite(out, "matmul");
  return out;
}

namespace serial {

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  check_matmul_shapes(a, b);
  DenseArray out({a.rows(), b.cols()});
  matmul_rows(a, b, out, 0, a.rows());
  ensure_finite(out, "matmul");
  return out;
}

}  // namespace serial

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const std::vector<double>& v) {
  return std::sqrt(dot(v, v));
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm input");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const DenseArray& a, const DenseArray& b) {
  return cosine_similarity(a.data(), b.data());
}

}  // namespace fedpalm
