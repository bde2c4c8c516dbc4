#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fedpalm/array.hpp"
#include "fedpalm/params.hpp"
#include "fedpalm/rng.hpp"

namespace fedpalm {

// Architecture of a textural expert: a bank of learnable Gabor filters,
// valid-padding convolution, ReLU and grid average pooling.
struct GaborBankConfig {
  std::size_t filters = 8;      // C
  std::size_t kernel_size = 9;  // k, odd
  std::size_t stride = 2;
  std::size_t pool_grid = 4;  // P; feature length is filters * P^2

  std::size_t feature_len() const { return filters * pool_grid * pool_grid; }
  void validate() const;
};

// Constrained per-filter parameters. lambda > 1, sigma > 0, gamma > 0 are
// maintained by a softplus reparameterization of the stored values.
struct GaborFilterParams {
  double theta = 0.0;   // orientation, radians
  double lambda = 6.0;  // wavelength, pixels
  double sigma = 3.0;   // envelope
  double psi = 0.0;     // phase
  double gamma = 1.0;   // aspect ratio
};

double softplus(double x);
double softplus_inv(double y);  // inverse, y > 0
double sigmoid(double x);

// Unconstrained storage layout: segments gabor.theta, gabor.lambda_u,
// gabor.sigma_u, gabor.psi, gabor.gamma_u, each of length filters.
ParamVector init_gabor_params(const GaborBankConfig& cfg, Rng& rng);
GaborFilterParams constrained_filter(const ParamVector& p, std::size_t f);

// k x k kernel centered at the origin:
//   g(x,y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x'/lambda + psi)
//   x' = x cos(theta) + y sin(theta),  y' = -x sin(theta) + y cos(theta)
// with x the column offset and y the row offset.
DenseArray gabor_kernel(const GaborFilterParams& p, std::size_t k);

// d(kernel)/d(theta, lambda, sigma, psi, gamma), one k x k grid each.
std::array<DenseArray, 5> gabor_kernel_grads(const GaborFilterParams& p, std::size_t k);

// Per-forward cache needed to backpropagate into the bank parameters.
struct ExpertCache {
  std::vector<DenseArray> conv_pre;  // per filter, pre-ReLU conv maps
};

// Convolve with every filter, ReLU, average-pool over a pool_grid x
// pool_grid partition, flatten filter-major. Throws DimensionError when
// the image is smaller than the kernel or the conv output smaller than
// the pooling grid.
DenseArray expert_forward(const GaborBankConfig& cfg, const ParamVector& params,
                          const DenseArray& image, ExpertCache* cache = nullptr);

// Gradient of a scalar loss w.r.t. the unconstrained bank parameters given
// dL/d(feature). Accumulates into grad (layout of init_gabor_params).
void expert_backward(const GaborBankConfig& cfg, const ParamVector& params,
                     const DenseArray& image, const ExpertCache& cache,
                     const std::vector<double>& dfeature, ParamVector& grad);

namespace serial {
// Brute-force valid convolution, reference for the banked path.
DenseArray conv_valid(const DenseArray& image, const DenseArray& kernel, std::size_t stride);
}  // namespace serial

}  // namespace fedpalm
