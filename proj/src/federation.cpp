#include "fedpalm/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>

#include "fedpalm/errors.hpp"
#include "fedpalm/rng.hpp"
#include "fedpalm/trainer.hpp"

namespace fedpalm {

Method method_from_string(const std::string& s) {
  if (s == "fedpalm") return Method::kFedPalm;
  if (s == "fedavg") return Method::kFedAvg;
  if (s == "local") return Method::kLocal;
  throw ConfigError("unknown method '" + s + "' (expected fedpalm, fedavg or local)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kFedPalm: return "fedpalm";
    case Method::kFedAvg: return "fedavg";
    case Method::kLocal: return "local";
  }
  return "?";
}

std::size_t FederationConfig::phase_boundary() const {
  if (teim_from_start) return 0;
  return (rounds + 2) / 3;  // ceil(R/3)
}

void FederationConfig::validate(bool allow_single_client) const {
  if (clients < (allow_single_client ? 1u : 2u)) throw ConfigError("federation: N must be >= 2");
  if (rounds < 3) throw ConfigError("federation: R must be >= 3");
  if (local_epochs < 1) throw ConfigError("federation: E must be >= 1");
  if (top_k < 1 || (!allow_single_client && top_k > clients)) {
    throw ConfigError("federation: K must satisfy 1 <= K <= N");
  }
  if (lr < 0.0) throw ConfigError("federation: negative learning rate");
  if (batch_size < 1) throw ConfigError("federation: batch size must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("federation: tau must be positive");
  weights.validate();
  bank.validate();
}

std::string RoundLog::to_csv() const {
  std::ostringstream os;
  os << "round,client,epoch,loss_ce,loss_con,n_i\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.round << "," << r.client << "," << r.epoch << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.loss_ce);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.loss_con);
    os << buf << "," << r.n_i << "\n";
  }
  return os.str();
}

std::vector<MessageRecord> MessageLog::server_bound() const {
  std::vector<MessageRecord> out;
  for (const auto& r : records)
    if (r.destination == kServer) out.push_back(r);
  return out;
}

ParamVector aggregate(const std::vector<std::pair<ParamVector, double>>& weighted_params) {
  if (weighted_params.empty()) throw ProtocolError("aggregate: no updates");
  const ParamVector& first = weighted_params.front().first;
  double total = 0.0;
  bool uniform = true;
  for (const auto& [p, w] : weighted_params) {
    if (!p.same_layout(first)) throw ProtocolError("aggregate: layout mismatch");
    if (w < 0.0) throw ProtocolError("aggregate: negative weight");
    if (w != weighted_params.front().second) uniform = false;
    total += w;
  }
  if (!(total > 0.0)) throw ProtocolError("aggregate: zero total weight");

  ParamVector out = ParamVector::zeros_like(first);
  // Division (not multiplication by a rounded reciprocal) keeps the
  // uniform case an exact arithmetic mean and a single client bitwise.
  if (uniform) {
    for (const auto& [p, w] : weighted_params) out.axpy(1.0, p);
    const auto n = static_cast<double>(weighted_params.size());
    for (double& x : out.data()) x /= n;
  } else {
    for (const auto& [p, w] : weighted_params) out.axpy(w, p);
    for (double& x : out.data()) x /= total;
  }
  ensure_finite(out.data(), "aggregate");
  return out;
}

namespace {

struct StepSpec {
  bool has_closed = false;
  bool closed_expert_trainable = false;
  bool has_open = false;
  bool teim_active = false;
};

StepSpec fedpalm_spec(const FederationConfig& cfg, std::size_t round) {
  StepSpec spec;
  const bool phase2 = round >= cfg.phase_boundary();
  spec.has_closed = cfg.include_closed;
  spec.closed_expert_trainable = cfg.include_closed && !phase2;
  spec.has_open = true;
  spec.teim_active = phase2 && cfg.include_closed && cfg.teim_mode != TeimMode::kDisabled;
  return spec;
}

std::uint64_t client_stream_seed(const FederationConfig& cfg, int client, std::size_t round) {
  const std::uint64_t c = cfg.shared_client_streams ? 0 : static_cast<std::uint64_t>(client);
  return derive_seed(cfg.seed, {stream::kRound, c, round});
}

DenseArray augment(const DenseArray& img, Rng& rng) {
  const long long h = static_cast<long long>(img.rows());
  const long long w = static_cast<long long>(img.cols());
  const long long dx = static_cast<long long>(rng.below(2 * kAugShiftPx + 1)) - kAugShiftPx;
  const long long dy = static_cast<long long>(rng.below(2 * kAugShiftPx + 1)) - kAugShiftPx;
  DenseArray out({img.rows(), img.cols()});
  for (long long r = 0; r < h; ++r) {
    const long long sr = std::clamp(r + dy, 0ll, h - 1);
    for (long long c = 0; c < w; ++c) {
      const long long sc = std::clamp(c + dx, 0ll, w - 1);
      double v = img.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
      v += rng.normal(0.0, kAugNoiseSigma);
      out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

StepContext make_context(const FederationConfig& cfg, const ClientState& cs, const StepSpec& spec) {
  StepContext ctx;
  ctx.n_clients = cfg.clients;
  ctx.self_id = cs.client_id;
  ctx.teim_active = spec.teim_active;
  ctx.teim_pinned_identity = cfg.teim_mode == TeimMode::kPinnedIdentity;
  ctx.top_k = cfg.top_k;
  ctx.tau = cfg.tau;
  ctx.weights = cfg.weights;
  ctx.peer_experts = spec.teim_active ? &cs.received_experts : nullptr;
  return ctx;
}

// E epochs over the shard under the given step spec; one log row per
// epoch. Shuffling and augmentation draws are data-level and happen once
// per batch regardless of which models train, so methods that share a
// seed consume identical streams.
void run_local_epochs(ClientState& cs, const FederationConfig& cfg, const StepSpec& spec,
                      std::size_t round, std::vector<RoundLogRow>& log_rows) {
  if (spec.teim_active && !cs.experts_received) {
    throw ProtocolError("local training: peer experts not yet received");
  }
  Rng rng(client_stream_seed(cfg, cs.client_id, round));
  const std::size_t n = cs.shard.size();
  if (n == 0) throw ProtocolError("local training: empty shard");

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    double ce_sum = 0.0, con_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<DenseArray> images;
      std::vector<int> labels;
      images.reserve(2 * (stop - start));
      labels.reserve(2 * (stop - start));
      for (std::size_t i = start; i < stop; ++i) {
        const Sample& s = cs.shard[order[i]];
        if (s.label < 0) throw ProtocolError("local training: unlabeled sample in shard");
        images.push_back(s.image);
        labels.push_back(s.label);
        images.push_back(augment(s.image, rng));
        labels.push_back(s.label);
      }

      const StepContext ctx = make_context(cfg, cs, spec);
      BatchGradients g = batch_gradients(ctx, spec.has_closed ? &cs.closed : nullptr,
                                         spec.closed_expert_trainable,
                                         spec.has_open ? &cs.open : nullptr, images, labels);
      if (g.closed) {
        if (spec.closed_expert_trainable) cs.adam_closed_expert.step(cs.closed.expert, g.closed->expert);
        cs.adam_closed_embed.step(cs.closed.embedding, g.closed->embedding);
      }
      if (g.open) {
        cs.adam_open_expert.step(cs.open.expert, g.open->expert);
        cs.adam_open_embed.step(cs.open.embedding, g.open->embedding);
      }
      ce_sum += g.total_ce();
      con_sum += g.total_con();
      ++batches;
    }
    log_rows.push_back({round, cs.client_id, epoch, ce_sum / static_cast<double>(batches),
                        con_sum / static_cast<double>(batches), n});
  }
}

std::uint64_t model_update_hash(const ParamVector& expert, const ParamVector& embedding) {
  return mix64(expert.content_hash() ^ mix64(embedding.content_hash()));
}

std::vector<std::string> segment_names(const ParamVector& a, const ParamVector& b) {
  std::vector<std::string> names;
  for (const auto& s : a.segments()) names.push_back("expert:" + s.name);
  for (const auto& s : b.segments()) names.push_back("embedding:" + s.name);
  return names;
}

void relay_frozen_experts(std::vector<ClientState>& clients, std::size_t round, MessageLog& log) {
  std::vector<ParamVector> experts;
  experts.reserve(clients.size());
  for (auto& cs : clients) {
    experts.push_back(cs.closed.expert);
    std::vector<std::string> segs;
    for (const auto& s : cs.closed.expert.segments()) segs.push_back("expert:" + s.name);
    log.records.push_back({MessageKind::kExpertShare, round, cs.client_id, kAllClients, 0, segs,
                           cs.closed.expert.content_hash()});
  }
  for (auto& cs : clients) {
    cs.received_experts = experts;
    cs.experts_received = true;
  }
}

// Per-round client loop, parallel or sequential; bitwise identical either
// way since each client owns its state and its output slots.
template <typename Fn>
void for_each_client(std::size_t n, bool parallel, Fn&& fn) {
  std::exception_ptr err;
#ifdef _OPENMP
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#else
  (void)parallel;
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

FederationResult run_engine(Method method, const FederationConfig& cfg, const BenchmarkSplit& split) {
  cfg.validate(method != Method::kFedPalm);
  if (split.train_shards.size() != cfg.clients) {
    throw ConfigError("federation: split has " + std::to_string(split.train_shards.size()) +
                      " shards for " + std::to_string(cfg.clients) + " clients");
  }
  const std::size_t classes = split.total_classes;
  const bool has_closed = method != Method::kFedAvg && cfg.include_closed;
  const bool has_open = method != Method::kLocal;
  if (method == Method::kLocal && !cfg.include_closed) {
    throw ConfigError("federation: the local baseline is the closed models");
  }

  // The server draws one closed and one open initialization and sends
  // both to every client. The no-communication baseline trains the same
  // model fedavg does, starting from the same draw.
  const std::uint64_t closed_stream =
      method == Method::kLocal ? stream::kInitOpen : stream::kInitClosed;
  const ModelBundle closed_init =
      make_model(cfg.bank, cfg.hidden, cfg.embed_dim, classes, derive_seed(cfg.seed, {closed_stream}));
  const ModelBundle open_init = make_model(cfg.bank, cfg.hidden, cfg.embed_dim, classes,
                                           derive_seed(cfg.seed, {stream::kInitOpen}));

  std::vector<ClientState> clients(cfg.clients);
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    ClientState& cs = clients[i];
    cs.client_id = static_cast<int>(i);
    cs.shard = split.train_shards[i];
    cs.n_i = cs.shard.size();
    if (has_closed) {
      cs.closed = closed_init;
      cs.adam_closed_expert = Adam(cfg.lr);
      cs.adam_closed_embed = Adam(cfg.lr);
    }
    if (has_open) {
      cs.open = open_init;
      cs.adam_open_expert = Adam(cfg.lr);
      cs.adam_open_embed = Adam(cfg.lr);
    }
  }

  ServerState server;
  if (has_open) {
    server.global_expert = open_init.expert;
    server.global_embedding = open_init.embedding;
  }

  FederationResult result;
  result.method = method;
  const bool fedpalm = method == Method::kFedPalm;
  const std::size_t boundary = cfg.phase_boundary();

  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    server.round = round;
    if (fedpalm && has_closed && round == boundary) {
      relay_frozen_experts(clients, round, result.messages);
      result.has_boundary_snapshot = true;
      for (const auto& cs : clients) result.boundary_closed_models.push_back(cs.closed);
      result.boundary_global_model = open_init;
      result.boundary_global_model.expert = server.global_expert;
      result.boundary_global_model.embedding = server.global_embedding;
    }

    if (has_open) {
      result.messages.records.push_back(
          {MessageKind::kBroadcast, round, kServer, kAllClients, 0,
           segment_names(server.global_expert, server.global_embedding),
           model_update_hash(server.global_expert, server.global_embedding)});
    }

    std::vector<std::vector<RoundLogRow>> rows(cfg.clients);
    std::vector<std::pair<ParamVector, ParamVector>> updates(cfg.clients);

    for_each_client(cfg.clients, cfg.parallel_clients, [&](std::size_t i) {
      ClientState& cs = clients[i];
      StepSpec spec;
      if (method == Method::kFedPalm) {
        spec = fedpalm_spec(cfg, round);
      } else if (method == Method::kFedAvg) {
        spec.has_open = true;
      } else {
        spec.has_closed = true;
        spec.closed_expert_trainable = true;
      }
      if (has_open) {
        cs.open.expert = server.global_expert;
        cs.open.embedding = server.global_embedding;
      }
      run_local_epochs(cs, cfg, spec, round, rows[i]);
      if (has_open) updates[i] = {cs.open.expert, cs.open.embedding};
    });

    for (std::size_t i = 0; i < cfg.clients; ++i) {
      for (const auto& r : rows[i]) result.round_log.rows.push_back(r);
    }

    if (has_open) {
      std::vector<std::pair<ParamVector, double>> expert_updates, embed_updates;
      for (std::size_t i = 0; i < cfg.clients; ++i) {
        result.messages.records.push_back(
            {MessageKind::kModelUpdate, round, static_cast<int>(i), kServer, clients[i].n_i,
             segment_names(updates[i].first, updates[i].second),
             model_update_hash(updates[i].first, updates[i].second)});
        const double w = static_cast<double>(clients[i].n_i);
        expert_updates.emplace_back(std::move(updates[i].first), w);
        embed_updates.emplace_back(std::move(updates[i].second), w);
      }
      server.global_expert = aggregate(expert_updates);
      server.global_embedding = aggregate(embed_updates);
    }

    if (has_closed) {
      std::vector<std::uint64_t> hashes;
      hashes.reserve(cfg.clients);
      for (const auto& cs : clients) hashes.push_back(cs.closed.expert.content_hash());
      result.closed_expert_hashes.push_back(std::move(hashes));
    }
  }

  if (has_closed) {
    for (auto& cs : clients) result.closed_models.push_back(cs.closed);
  }
  if (has_open) {
    result.global_model = open_init;
    result.global_model.expert = server.global_expert;
    result.global_model.embedding = server.global_embedding;
  }
  if (fedpalm && has_closed) {
    // Deployment: each client uploads its textural expert; all N are
    // redistributed to everyone.
    relay_frozen_experts(clients, cfg.rounds, result.messages);
    for (const auto& cs : clients) result.shared_experts.push_back(cs.closed.expert);
  }
  return result;
}

}  // namespace

std::pair<ParamVector, ParamVector> local_training(ClientState& client, std::size_t round,
                                                   const ParamVector& broadcast_expert,
                                                   const ParamVector& broadcast_embedding,
                                                   const FederationConfig& cfg,
                                                   std::vector<RoundLogRow>& log_rows) {
  if (round >= cfg.rounds) throw ProtocolError("local_training: round index out of range");
  if (!client.open.expert.same_layout(broadcast_expert) ||
      !client.open.embedding.same_layout(broadcast_embedding)) {
    throw ProtocolError("local_training: broadcast layout mismatch");
  }
  // The broadcast overwrites parameters; optimizer moments persist.
  client.open.expert = broadcast_expert;
  client.open.embedding = broadcast_embedding;
  run_local_epochs(client, cfg, fedpalm_spec(cfg, round), round, log_rows);
  return {client.open.expert, client.open.embedding};
}

FederationResult run_federation(const FederationConfig& cfg, const BenchmarkSplit& split) {
  return run_engine(Method::kFedPalm, cfg, split);
}

FederationResult run_fedavg_baseline(const FederationConfig& cfg, const BenchmarkSplit& split) {
  return run_engine(Method::kFedAvg, cfg, split);
}

FederationResult run_local_baseline(const FederationConfig& cfg, const BenchmarkSplit& split) {
  return run_engine(Method::kLocal, cfg, split);
}

FederationResult run_method(Method m, const FederationConfig& cfg, const BenchmarkSplit& split) {
  return run_engine(m, cfg, split);
}

}  // namespace fedpalm
