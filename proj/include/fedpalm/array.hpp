#pragma once

#include <cstddef>
#include <vector>

namespace fedpalm {

// Dense row-major array of doubles. Rank 1 or 2 in practice; shape is
// kept explicit so dimension errors surface early.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0);
  static DenseArray row_major(std::size_t rows, std::size_t cols, std::vector<double> values);
  static DenseArray vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseArray& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws NumericError if any element is non-finite.
void ensure_finite(const DenseArray& a, const char* context);
void ensure_finite(const std::vector<double>& v, const char* context);

// Matrix product, OpenMP-parallel over output rows. Each output element is
// a left-to-right dot product, so results are bitwise identical to the
// serial reference for any thread count.
DenseArray matmul(const DenseArray& a, const DenseArray& b);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& v);

// (a.b)/(|a||b|), clamped to [-1,1]. Zero-norm input -> DegenerateInputError.
double cosine_similarity(const DenseArray& a, const DenseArray& b);
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

namespace serial {
// Reference kernels kept for testing and benchmarking against the
// parallel versions above.
DenseArray matmul(const DenseArray& a, const DenseArray& b);
}  // namespace serial

}  // namespace fedpalm
