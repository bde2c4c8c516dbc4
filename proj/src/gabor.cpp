#include "fedpalm/gabor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "fedpalm/errors.hpp"

namespace fedpalm {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct PoolCell {
  std::size_t r0, r1, c0, c1;
  double inv_count;
};

std::vector<PoolCell> pool_cells(std::size_t out_h, std::size_t out_w, std::size_t grid) {
  std::vector<PoolCell> cells;
  cells.reserve(grid * grid);
  for (std::size_t pr = 0; pr < grid; ++pr) {
    const std::size_t r0 = pr * out_h / grid;
    const std::size_t r1 = (pr + 1) * out_h / grid;
    for (std::size_t pc = 0; pc < grid; ++pc) {
      const std::size_t c0 = pc * out_w / grid;
      const std::size_t c1 = (pc + 1) * out_w / grid;
      const std::size_t count = (r1 - r0) * (c1 - c0);
      cells.push_back({r0, r1, c0, c1, 1.0 / static_cast<double>(count)});
    }
  }
  return cells;
}

}  // namespace

void GaborBankConfig::validate() const {
  if (filters == 0) throw ConfigError("gabor bank: filters must be positive");
  if (kernel_size % 2 == 0 || kernel_size == 0) throw ConfigError("gabor bank: kernel size must be odd");
  if (stride == 0) throw ConfigError("gabor bank: stride must be positive");
  if (pool_grid == 0) throw ConfigError("gabor bank: pool grid must be positive");
}

double softplus(double x) {
  // log(1 + e^x) without overflow.
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
  if (!(y > 0.0)) throw NumericError("softplus_inv: argument must be positive");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ParamVector init_gabor_params(const GaborBankConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t c = cfg.filters;
  ParamVector p;
  p.add("gabor.theta", {c});
  p.add("gabor.lambda_u", {c});
  p.add("gabor.sigma_u", {c});
  p.add("gabor.psi", {c});
  p.add("gabor.gamma_u", {c});
  auto theta = p.seg("gabor.theta");
  auto lam = p.seg("gabor.lambda_u");
  auto sig = p.seg("gabor.sigma_u");
  auto psi = p.seg("gabor.psi");
  auto gam = p.seg("gabor.gamma_u");
  for (std::size_t f = 0; f < c; ++f) {
    // Orientations evenly spaced in [0, pi); scale params at classical
    // defaults; all of it jittered ~5% so seeds differ.
    auto jit = [&] { return rng.uniform(-0.05, 0.05); };
    theta[f] = std::numbers::pi * static_cast<double>(f) / static_cast<double>(c) + jit();
    lam[f] = softplus_inv((6.0 * (1.0 + jit())) - 1.0);
    sig[f] = softplus_inv(3.0 * (1.0 + jit()));
    psi[f] = jit();
    gam[f] = softplus_inv(1.0 * (1.0 + jit()));
  }
  return p;
}

GaborFilterParams constrained_filter(const ParamVector& p, std::size_t f) {
  GaborFilterParams g;
  g.theta = p.seg("gabor.theta")[f];
  g.lambda = 1.0 + softplus(p.seg("gabor.lambda_u")[f]);
  g.sigma = softplus(p.seg("gabor.sigma_u")[f]);
  g.psi = p.seg("gabor.psi")[f];
  g.gamma = softplus(p.seg("gabor.gamma_u")[f]);
  return g;
}

DenseArray gabor_kernel(const GaborFilterParams& p, std::size_t k) {
  if (k == 0 || k % 2 == 0) throw ConfigError("gabor_kernel: k must be odd");
  const double half = static_cast<double>(k - 1) / 2.0;
  const double ct = std::cos(p.theta), st = std::sin(p.theta);
  const double inv2s2 = 1.0 / (2.0 * p.sigma * p.sigma);
  DenseArray ker({k, k});
  for (std::size_t r = 0; r < k; ++r) {
    const double y = static_cast<double>(r) - half;
    for (std::size_t c = 0; c < k; ++c) {
      const double x = static_cast<double>(c) - half;
      const double xp = x * ct + y * st;
      const double yp = -x * st + y * ct;
      const double env = std::exp(-(xp * xp + p.gamma * p.gamma * yp * yp) * inv2s2);
      const double carrier = std::cos(kTwoPi * xp / p.lambda + p.psi);
      ker.at(r, c) = env * carrier;
    }
  }
  return ker;
}

std::array<DenseArray, 5> gabor_kernel_grads(const GaborFilterParams& p, std::size_t k) {
  const double half = static_cast<double>(k - 1) / 2.0;
  const double ct = std::cos(p.theta), st = std::sin(p.theta);
  const double s2 = p.sigma * p.sigma;
  const double inv2s2 = 1.0 / (2.0 * s2);
  std::array<DenseArray, 5> g{DenseArray({k, k}), DenseArray({k, k}), DenseArray({k, k}),
                              DenseArray({k, k}), DenseArray({k, k})};
  for (std::size_t r = 0; r < k; ++r) {
    const double y = static_cast<double>(r) - half;
    for (std::size_t c = 0; c < k; ++c) {
      const double x = static_cast<double>(c) - half;
      const double xp = x * ct + y * st;
      const double yp = -x * st + y * ct;
      const double env = std::exp(-(xp * xp + p.gamma * p.gamma * yp * yp) * inv2s2);
      const double arg = kTwoPi * xp / p.lambda + p.psi;
      const double carrier = std::cos(arg);
      const double dcarrier = -std::sin(arg);
      // d(xp)/d(theta) = yp, d(yp)/d(theta) = -xp.
      const double denv_dtheta = env * (-(xp * yp - p.gamma * p.gamma * yp * xp) / s2);
      const double dtheta = denv_dtheta * carrier + env * dcarrier * (kTwoPi / p.lambda) * yp;
      const double dlambda = env * dcarrier * (-kTwoPi * xp / (p.lambda * p.lambda));
      const double dsigma = env * carrier * (xp * xp + p.gamma * p.gamma * yp * yp) / (s2 * p.sigma);
      const double dpsi = env * dcarrier;
      const double dgamma = -env * carrier * (p.gamma * yp * yp) / s2;
      g[0].at(r, c) = dtheta;
      g[1].at(r, c) = dlambda;
      g[2].at(r, c) = dsigma;
      g[3].at(r, c) = dpsi;
      g[4].at(r, c) = dgamma;
    }
  }
  return g;
}

namespace serial {

DenseArray conv_valid(const DenseArray& image, const DenseArray& kernel, std::size_t stride) {
  if (image.rank() != 2 || kernel.rank() != 2) throw DimensionError("conv_valid: rank-2 inputs required");
  const std::size_t h = image.rows(), w = image.cols();
  const std::size_t k = kernel.rows();
  if (kernel.cols() != k) throw DimensionError("conv_valid: square kernel required");
  if (h < k || w < k) {
    std::ostringstream os;
    os << "conv_valid: image " << h << "x" << w << " smaller than kernel " << k;
    throw DimensionError(os.str());
  }
  const std::size_t out_h = (h - k) / stride + 1;
  const std::size_t out_w = (w - k) / stride + 1;
  DenseArray out({out_h, out_w});
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          acc += image.at(r * stride + i, c * stride + j) * kernel.at(i, j);
        }
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

}  // namespace serial

DenseArray expert_forward(const GaborBankConfig& cfg, const ParamVector& params,
                          const DenseArray& image, ExpertCache* cache) {
  cfg.validate();
  if (image.rank() != 2) throw DimensionError("expert_forward: rank-2 image required");
  if (image.rows() < cfg.kernel_size || image.cols() < cfg.kernel_size) {
    throw DimensionError("expert_forward: image smaller than kernel");
  }
  DenseArray feature({cfg.feature_len()});
  if (cache) {
    cache->conv_pre.clear();
    cache->conv_pre.reserve(cfg.filters);
  }
  const std::size_t p2 = cfg.pool_grid * cfg.pool_grid;
  std::vector<DenseArray> conv_maps(cfg.filters);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (cfg.filters > 1)
#endif
  for (long long fi = 0; fi < static_cast<long long>(cfg.filters); ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    const DenseArray ker = gabor_kernel(constrained_filter(params, f), cfg.kernel_size);
    conv_maps[f] = serial::conv_valid(image, ker, cfg.stride);
  }

  for (std::size_t f = 0; f < cfg.filters; ++f) {
    const DenseArray& conv = conv_maps[f];
    const std::size_t out_h = conv.rows(), out_w = conv.cols();
    if (out_h < cfg.pool_grid || out_w < cfg.pool_grid) {
      throw DimensionError("expert_forward: conv output smaller than pooling grid");
    }
    const auto cells = pool_cells(out_h, out_w, cfg.pool_grid);
    for (std::size_t ci = 0; ci < p2; ++ci) {
      const PoolCell& cell = cells[ci];
      double acc = 0.0;
      for (std::size_t r = cell.r0; r < cell.r1; ++r) {
        for (std::size_t c = cell.c0; c < cell.c1; ++c) {
          const double v = conv.at(r, c);
          acc += v > 0.0 ? v : 0.0;
        }
      }
      feature[f * p2 + ci] = acc * cell.inv_count;
    }
    if (cache) cache->conv_pre.push_back(conv_maps[f]);
  }
  ensure_finite(feature, "expert_forward");
  return feature;
}

void expert_backward(const GaborBankConfig& cfg, const ParamVector& params,
                     const DenseArray& image, const ExpertCache& cache,
                     const std::vector<double>& dfeature, ParamVector& grad) {
  if (dfeature.size() != cfg.feature_len()) throw DimensionError("expert_backward: feature grad length");
  if (cache.conv_pre.size() != cfg.filters) throw DimensionError("expert_backward: stale cache");
  const std::size_t p2 = cfg.pool_grid * cfg.pool_grid;
  const std::size_t k = cfg.kernel_size;
  auto g_theta = grad.seg("gabor.theta");
  auto g_lambda = grad.seg("gabor.lambda_u");
  auto g_sigma = grad.seg("gabor.sigma_u");
  auto g_psi = grad.seg("gabor.psi");
  auto g_gamma = grad.seg("gabor.gamma_u");

  for (std::size_t f = 0; f < cfg.filters; ++f) {
    const DenseArray& conv = cache.conv_pre[f];
    const std::size_t out_h = conv.rows(), out_w = conv.cols();
    const auto cells = pool_cells(out_h, out_w, cfg.pool_grid);

    // dL/d(kernel) accumulated over all pooled, ReLU-masked positions.
    DenseArray dker({k, k});
    for (std::size_t ci = 0; ci < p2; ++ci) {
      const PoolCell& cell = cells[ci];
      const double up = dfeature[f * p2 + ci] * cell.inv_count;
      if (up == 0.0) continue;
      for (std::size_t r = cell.r0; r < cell.r1; ++r) {
        for (std::size_t c = cell.c0; c < cell.c1; ++c) {
          if (conv.at(r, c) <= 0.0) continue;
          for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              dker.at(i, j) += up * image.at(r * cfg.stride + i, c * cfg.stride + j);
            }
          }
        }
      }
    }

    const GaborFilterParams cp = constrained_filter(params, f);
    const auto kgrads = gabor_kernel_grads(cp, k);
    double d[5] = {0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < k * k; ++i) {
      const double dk = dker[i];
      d[0] += dk * kgrads[0][i];
      d[1] += dk * kgrads[1][i];
      d[2] += dk * kgrads[2][i];
      d[3] += dk * kgrads[3][i];
      d[4] += dk * kgrads[4][i];
    }
    // Chain through the softplus reparameterization.
    g_theta[f] += d[0];
    g_lambda[f] += d[1] * sigmoid(params.seg("gabor.lambda_u")[f]);
    g_sigma[f] += d[2] * sigmoid(params.seg("gabor.sigma_u")[f]);
    g_psi[f] += d[3];
    g_gamma[f] += d[4] * sigmoid(params.seg("gabor.gamma_u")[f]);
  }
}

}  // namespace fedpalm
