#include "fedpalm/trainer.hpp"

#include <algorithm>

#include "fedpalm/errors.hpp"

namespace fedpalm {

double BatchGradients::total_ce() const {
  return (closed ? closed->ce : 0.0) + (open ? open->ce : 0.0);
}

double BatchGradients::total_con() const {
  return (closed ? closed->con : 0.0) + (open ? open->con : 0.0);
}

double BatchGradients::total_hybrid() const {
  return (closed ? closed->hybrid : 0.0) + (open ? open->hybrid : 0.0);
}

namespace {

struct ForwardState {
  // textural features per entry
  std::vector<std::vector<double>> f_closed, f_open;
  std::vector<ExpertCache> cache_closed, cache_open;
  std::vector<std::vector<std::vector<double>>> f_peers;  // [entry][client]
  // routed inputs per entry per model
  std::vector<std::vector<double>> in_closed, in_open;
  std::vector<RouteResult> route_closed, route_open;
  BlendParams bp_closed, bp_open;
};

BlendParams blend_of(const ParamVector& embedding, bool pinned) {
  if (pinned) return {1.0, 0.0};
  return {embedding.seg("teim.alpha")[0], embedding.seg("teim.beta")[0]};
}

ForwardState features_forward(const StepContext& ctx, const ModelBundle* closed,
                              bool want_closed_cache, const ModelBundle* open,
                              const std::vector<DenseArray>& images) {
  const std::size_t n = images.size();
  ForwardState st;
  if (closed) {
    st.f_closed.resize(n);
    if (want_closed_cache) st.cache_closed.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      st.f_closed[e] = expert_forward(closed->bank, closed->expert, images[e],
                                      want_closed_cache ? &st.cache_closed[e] : nullptr)
                           .data();
    }
  }
  if (open) {
    st.f_open.resize(n);
    st.cache_open.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      st.f_open[e] = expert_forward(open->bank, open->expert, images[e], &st.cache_open[e]).data();
    }
  }

  if (ctx.teim_active) {
    if (!closed || !open) throw ProtocolError("trainer: TEIM step needs both models");
    if (!ctx.peer_experts || ctx.peer_experts->size() != ctx.n_clients) {
      throw ProtocolError("trainer: TEIM step without peer experts");
    }
    st.f_peers.assign(n, std::vector<std::vector<double>>(ctx.n_clients));
    for (std::size_t e = 0; e < n; ++e) {
      for (std::size_t j = 0; j < ctx.n_clients; ++j) {
        if (static_cast<int>(j) == ctx.self_id) {
          st.f_peers[e][j] = st.f_closed[e];
        } else {
          st.f_peers[e][j] =
              expert_forward(closed->bank, (*ctx.peer_experts)[j], images[e]).data();
        }
      }
    }
    st.bp_closed = blend_of(closed->embedding, ctx.teim_pinned_identity);
    st.bp_open = blend_of(open->embedding, ctx.teim_pinned_identity);
    const int global_id = static_cast<int>(ctx.n_clients);
    st.in_closed.resize(n);
    st.in_open.resize(n);
    st.route_closed.resize(n);
    st.route_open.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      FeaturePool pool;
      for (std::size_t j = 0; j < ctx.n_clients; ++j) pool.add(static_cast<int>(j), st.f_peers[e][j]);
      pool.add(global_id, st.f_open[e]);
      st.in_closed[e] = enhance(ctx.self_id, pool, ctx.top_k, st.bp_closed, &st.route_closed[e]);
      st.in_open[e] = enhance(global_id, pool, ctx.top_k, st.bp_open, &st.route_open[e]);
    }
  } else {
    st.in_closed = st.f_closed;
    st.in_open = st.f_open;
  }
  return st;
}

struct ModelEval {
  std::vector<EmbedCache> caches;
  std::vector<double> logits;
  ContrastiveBatch batch;
  double ce = 0.0, con = 0.0;
};

ModelEval embed_forward(const ModelBundle& model, const std::vector<std::vector<double>>& inputs,
                        const std::vector<int>& labels, double tau) {
  const std::size_t n = inputs.size();
  const std::size_t classes = model.emb.classes;
  ModelEval ev;
  ev.caches.resize(n);
  ev.logits.resize(n * classes);
  ev.batch.tau = tau;
  ev.batch.labels = labels;
  ev.batch.templates.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    ModelOutput out = model_forward(model.emb, model.embedding, inputs[e], &ev.caches[e]);
    std::copy(out.logits.begin(), out.logits.end(), ev.logits.begin() + e * classes);
    ev.batch.templates[e] = std::move(out.tmpl);
  }
  ev.ce = cross_entropy(ev.logits, classes, labels);
  ev.con = sup_contrastive(ev.batch);
  return ev;
}

// dL/d(embedding input) per entry for one model, with parameter gradients
// accumulated into grads.embedding.
std::vector<std::vector<double>> embed_backward(const StepContext& ctx, const ModelBundle& model,
                                                const ModelEval& ev, const std::vector<int>& labels,
                                                ParamVector& grad_embedding) {
  const std::size_t n = ev.caches.size();
  const std::size_t classes = model.emb.classes;
  auto dlogits = cross_entropy_grad(ev.logits, classes, labels);
  for (double& g : dlogits) g *= ctx.weights.w_ce;
  auto dz = sup_contrastive_grad(ev.batch);

  std::vector<std::vector<double>> dinput(n);
  std::vector<double> dlog_row(classes);
  for (std::size_t e = 0; e < n; ++e) {
    std::copy(dlogits.begin() + static_cast<std::ptrdiff_t>(e * classes),
              dlogits.begin() + static_cast<std::ptrdiff_t>((e + 1) * classes), dlog_row.begin());
    for (double& g : dz[e]) g *= ctx.weights.w_con;
    dinput[e] = model_backward(model.emb, model.embedding, ev.caches[e], dlog_row, dz[e],
                               grad_embedding);
  }
  return dinput;
}

}  // namespace

BatchGradients batch_gradients(const StepContext& ctx, const ModelBundle* closed,
                               bool closed_expert_trainable, const ModelBundle* open,
                               const std::vector<DenseArray>& images,
                               const std::vector<int>& labels) {
  if (!closed && !open) throw ProtocolError("trainer: no model to train");
  if (images.size() != labels.size() || images.empty()) {
    throw BatchError("trainer: image/label count mismatch");
  }
  const std::size_t n = images.size();
  const int global_id = static_cast<int>(ctx.n_clients);

  ForwardState st = features_forward(ctx, closed, closed_expert_trainable, open, images);

  BatchGradients out;
  std::vector<std::vector<double>> dfeat_open(open ? n : 0);

  auto handle_model = [&](const ModelBundle& model, bool is_closed) {
    ModelGrads g;
    g.expert = ParamVector::zeros_like(model.expert);
    g.embedding = ParamVector::zeros_like(model.embedding);

    const auto& inputs = is_closed ? st.in_closed : st.in_open;
    ModelEval ev = embed_forward(model, inputs, labels, ctx.tau);
    g.ce = ev.ce;
    g.con = ev.con;
    g.hybrid = hybrid_loss(ev.ce, ev.con, ctx.weights);
    auto dinput = embed_backward(ctx, model, ev, labels, g.embedding);

    if (ctx.teim_active) {
      const auto& routes = is_closed ? st.route_closed : st.route_open;
      const auto& anchors = is_closed ? st.f_closed : st.f_open;
      const BlendParams& bp = is_closed ? st.bp_closed : st.bp_open;
      auto galpha = g.embedding.seg("teim.alpha");
      auto gbeta = g.embedding.seg("teim.beta");
      const double inv_k = 1.0 / static_cast<double>(ctx.top_k);
      for (std::size_t e = 0; e < n; ++e) {
        BlendBackward bb = blend_backward(dinput[e], anchors[e], routes[e].side_feature, bp);
        galpha[0] += bb.dalpha;
        gbeta[0] += bb.dbeta;
        if (!is_closed) {
          // The open anchor path: alpha * f_open.
          if (dfeat_open[e].empty()) dfeat_open[e].assign(bb.danchor.size(), 0.0);
          for (std::size_t i = 0; i < bb.danchor.size(); ++i) dfeat_open[e][i] += bb.danchor[i];
        }
        for (int sel : routes[e].selected_ids) {
          if (sel == global_id) {
            if (dfeat_open[e].empty()) dfeat_open[e].assign(bb.dside.size(), 0.0);
            for (std::size_t i = 0; i < bb.dside.size(); ++i) dfeat_open[e][i] += bb.dside[i] * inv_k;
          }
          // Closed experts are frozen whenever TEIM is active; their share
          // of the side gradient is dropped.
        }
      }
      if (ctx.teim_pinned_identity) {
        galpha[0] = 0.0;
        gbeta[0] = 0.0;
      }
    } else {
      if (!is_closed) {
        for (std::size_t e = 0; e < n; ++e) dfeat_open[e] = dinput[e];
      } else if (closed_expert_trainable) {
        for (std::size_t e = 0; e < n; ++e) {
          expert_backward(model.bank, model.expert, images[e], st.cache_closed[e], dinput[e],
                          g.expert);
        }
      }
    }

    if (is_closed) {
      out.closed = std::move(g);
    } else {
      out.open = std::move(g);
    }
  };

  if (closed) handle_model(*closed, true);
  if (open) handle_model(*open, false);

  if (open) {
    for (std::size_t e = 0; e < n; ++e) {
      if (dfeat_open[e].empty()) continue;
      expert_backward(open->bank, open->expert, images[e], st.cache_open[e], dfeat_open[e],
                      out.open->expert);
    }
  }
  return out;
}

double batch_loss(const StepContext& ctx, const ModelBundle* closed, const ModelBundle* open,
                  const std::vector<DenseArray>& images, const std::vector<int>& labels) {
  ForwardState st = features_forward(ctx, closed, false, open, images);
  double total = 0.0;
  if (closed) {
    ModelEval ev = embed_forward(*closed, st.in_closed, labels, ctx.tau);
    total += hybrid_loss(ev.ce, ev.con, ctx.weights);
  }
  if (open) {
    ModelEval ev = embed_forward(*open, st.in_open, labels, ctx.tau);
    total += hybrid_loss(ev.ce, ev.con, ctx.weights);
  }
  return total;
}

}  // namespace fedpalm
