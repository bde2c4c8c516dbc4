#pragma once

#include <cstddef>
#include <vector>

#include "fedpalm/array.hpp"
#include "fedpalm/gabor.hpp"
#include "fedpalm/params.hpp"
#include "fedpalm/rng.hpp"

namespace fedpalm {

// Embedding-layer architecture: one hidden layer, a template head and a
// classifier head over the shared global identity index space.
struct EmbeddingConfig {
  std::size_t input_len = 128;  // d_t = filters * pool_grid^2
  std::size_t hidden = 64;
  std::size_t embed_dim = 32;  // d_e
  std::size_t classes = 0;     // M_total

  void validate() const;
};

struct ModelOutput {
  std::vector<double> logits;    // p, length classes
  std::vector<double> tmpl;      // z, unit norm, length embed_dim
  std::vector<double> feature;   // the (possibly enhanced) input feature
};

// Forward cache for the analytic backward pass.
struct EmbedCache {
  std::vector<double> input;       // feature fed to the layers
  std::vector<double> hidden_pre;  // before ReLU
  std::vector<double> hidden;      // after ReLU
  std::vector<double> tmpl_pre;    // before normalization
  std::vector<double> tmpl;        // unit norm
};

// Segments: emb.W1 [hidden x input], emb.b1, emb.W2 [embed x hidden],
// emb.b2, emb.Wc [classes x hidden], emb.bc, plus the blend pair
// teim.alpha / teim.beta (scalars, init 1 and 0).
ParamVector init_embedding_params(const EmbeddingConfig& cfg, Rng& rng);

// hidden = relu(W1 f + b1); z = normalize(W2 hidden + b2); p = Wc hidden + bc.
// Throws DegenerateInputError when the pre-normalization template is zero.
ModelOutput model_forward(const EmbeddingConfig& cfg, const ParamVector& params,
                          const std::vector<double>& feature, EmbedCache* cache = nullptr);

// Backward from upstream gradients dL/dp and dL/dz. Accumulates parameter
// gradients into grad (same layout) and returns dL/d(feature).
std::vector<double> model_backward(const EmbeddingConfig& cfg, const ParamVector& params,
                                   const EmbedCache& cache, const std::vector<double>& dlogits,
                                   const std::vector<double>& dtemplate, ParamVector& grad);

// One full verification model M = (textural expert T, embedding layers Q).
struct ModelBundle {
  GaborBankConfig bank;
  EmbeddingConfig emb;
  ParamVector expert;     // gabor.* segments
  ParamVector embedding;  // emb.* + teim.* segments
};

ModelBundle make_model(const GaborBankConfig& bank, std::size_t hidden, std::size_t embed_dim,
                       std::size_t classes, std::uint64_t init_seed);

}  // namespace fedpalm
