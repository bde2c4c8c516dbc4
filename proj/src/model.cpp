#include "fedpalm/model.hpp"

#include <cmath>

#include "fedpalm/errors.hpp"

namespace fedpalm {

void EmbeddingConfig::validate() const {
  if (input_len == 0 || hidden == 0) throw ConfigError("embedding: zero layer width");
  if (embed_dim < 2) throw ConfigError("embedding: embed_dim must be >= 2");
  if (classes == 0) throw ConfigError("embedding: class count must be positive");
}

namespace {

void he_uniform(std::span<double> w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& x : w) x = rng.uniform(-limit, limit);
}

// y += W x + b, W stored row-major [rows x cols].
void affine(std::span<const double> w, std::span<const double> b, const std::vector<double>& x,
            std::vector<double>& y) {
  const std::size_t rows = b.size(), cols = x.size();
  y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

}  // namespace

ParamVector init_embedding_params(const EmbeddingConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamVector p;
  p.add("emb.W1", {cfg.hidden, cfg.input_len});
  p.add("emb.b1", {cfg.hidden});
  p.add("emb.W2", {cfg.embed_dim, cfg.hidden});
  p.add("emb.b2", {cfg.embed_dim});
  p.add("emb.Wc", {cfg.classes, cfg.hidden});
  p.add("emb.bc", {cfg.classes});
  p.add("teim.alpha", {1}, 1.0);
  p.add("teim.beta", {1}, 0.0);
  he_uniform(p.seg("emb.W1"), cfg.input_len, rng);
  he_uniform(p.seg("emb.W2"), cfg.hidden, rng);
  he_uniform(p.seg("emb.Wc"), cfg.hidden, rng);
  return p;
}

ModelOutput model_forward(const EmbeddingConfig& cfg, const ParamVector& params,
                          const std::vector<double>& feature, EmbedCache* cache) {
  if (feature.size() != cfg.input_len) throw DimensionError("model_forward: feature length mismatch");
  EmbedCache local;
  EmbedCache& c = cache ? *cache : local;
  c.input = feature;

  affine(params.seg("emb.W1"), params.seg("emb.b1"), feature, c.hidden_pre);
  c.hidden = c.hidden_pre;
  for (double& h : c.hidden) h = h > 0.0 ? h : 0.0;

  affine(params.seg("emb.W2"), params.seg("emb.b2"), c.hidden, c.tmpl_pre);
  const double r = norm(c.tmpl_pre);
  if (r == 0.0) throw DegenerateInputError("model_forward: zero-norm pre-normalization template");
  c.tmpl = c.tmpl_pre;
  for (double& t : c.tmpl) t /= r;

  ModelOutput out;
  affine(params.seg("emb.Wc"), params.seg("emb.bc"), c.hidden, out.logits);
  out.tmpl = c.tmpl;
  out.feature = feature;
  ensure_finite(out.logits, "model_forward logits");
  ensure_finite(out.tmpl, "model_forward template");
  return out;
}

std::vector<double> model_backward(const EmbeddingConfig& cfg, const ParamVector& params,
                                   const EmbedCache& cache, const std::vector<double>& dlogits,
                                   const std::vector<double>& dtemplate, ParamVector& grad) {
  if (dlogits.size() != cfg.classes || dtemplate.size() != cfg.embed_dim) {
    throw DimensionError("model_backward: upstream gradient shape mismatch");
  }

  // Through the normalization z = t / |t|:
  //   dL/dt = dL/dz / r - t (t . dL/dz) / r^3
  const double r = norm(cache.tmpl_pre);
  const double tdz = dot(cache.tmpl_pre, dtemplate);
  std::vector<double> dtmpl_pre(cfg.embed_dim);
  for (std::size_t i = 0; i < cfg.embed_dim; ++i) {
    dtmpl_pre[i] = dtemplate[i] / r - cache.tmpl_pre[i] * tdz / (r * r * r);
  }

  auto gW2 = grad.seg("emb.W2");
  auto gb2 = grad.seg("emb.b2");
  auto gWc = grad.seg("emb.Wc");
  auto gbc = grad.seg("emb.bc");
  auto gW1 = grad.seg("emb.W1");
  auto gb1 = grad.seg("emb.b1");
  const auto W2 = params.seg("emb.W2");
  const auto Wc = params.seg("emb.Wc");
  const auto W1 = params.seg("emb.W1");

  std::vector<double> dhidden(cfg.hidden, 0.0);
  for (std::size_t i = 0; i < cfg.embed_dim; ++i) {
    const double d = dtmpl_pre[i];
    gb2[i] += d;
    for (std::size_t j = 0; j < cfg.hidden; ++j) {
      gW2[i * cfg.hidden + j] += d * cache.hidden[j];
      dhidden[j] += W2[i * cfg.hidden + j] * d;
    }
  }
  for (std::size_t i = 0; i < cfg.classes; ++i) {
    const double d = dlogits[i];
    gbc[i] += d;
    if (d == 0.0) continue;
    for (std::size_t j = 0; j < cfg.hidden; ++j) {
      gWc[i * cfg.hidden + j] += d * cache.hidden[j];
      dhidden[j] += Wc[i * cfg.hidden + j] * d;
    }
  }

  // ReLU mask, then the first affine layer.
  std::vector<double> dinput(cfg.input_len, 0.0);
  for (std::size_t j = 0; j < cfg.hidden; ++j) {
    const double d = cache.hidden_pre[j] > 0.0 ? dhidden[j] : 0.0;
    gb1[j] += d;
    if (d == 0.0) continue;
    for (std::size_t c = 0; c < cfg.input_len; ++c) {
      gW1[j * cfg.input_len + c] += d * cache.input[c];
      dinput[c] += W1[j * cfg.input_len + c] * d;
    }
  }
  return dinput;
}

ModelBundle make_model(const GaborBankConfig& bank, std::size_t hidden, std::size_t embed_dim,
                       std::size_t classes, std::uint64_t init_seed) {
  ModelBundle m;
  m.bank = bank;
  m.emb.input_len = bank.feature_len();
  m.emb.hidden = hidden;
  m.emb.embed_dim = embed_dim;
  m.emb.classes = classes;
  Rng rng(init_seed);
  m.expert = init_gabor_params(bank, rng);
  m.embedding = init_embedding_params(m.emb, rng);
  return m;
}

}  // namespace fedpalm
