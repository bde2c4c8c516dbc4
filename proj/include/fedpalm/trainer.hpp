#pragma once

#include <optional>
#include <vector>

#include "fedpalm/losses.hpp"
#include "fedpalm/model.hpp"
#include "fedpalm/teim.hpp"

namespace fedpalm {

// Per-batch training context shared by the federation engine and the
// gradient tests. When teim_active is set, features are routed through
// the interaction module over the pool {peer experts} + {open expert};
// peer_experts must then hold one frozen expert per client.
struct StepContext {
  std::size_t n_clients = 0;
  int self_id = 0;  // anchor id of the closed model
  bool teim_active = false;
  bool teim_pinned_identity = false;  // hold the blend at (1,0), no blend grads
  std::size_t top_k = 3;
  double tau = 0.07;
  LossWeights weights;
  const std::vector<ParamVector>* peer_experts = nullptr;
};

struct ModelGrads {
  ParamVector expert;     // zero segments when the expert is frozen
  ParamVector embedding;  // includes teim.alpha / teim.beta
  double ce = 0.0;
  double con = 0.0;
  double hybrid = 0.0;
};

struct BatchGradients {
  std::optional<ModelGrads> closed;
  std::optional<ModelGrads> open;
  double total_ce() const;
  double total_con() const;
  double total_hybrid() const;
};

// Hybrid loss (and analytic gradients) of the models present on one batch
// of augmented entries. Pure: no state is mutated. The closed expert only
// receives gradient when closed_expert_trainable is set; in TEIM-active
// steps the open expert accumulates gradient through its own anchor path
// and through every route that selected its feature.
BatchGradients batch_gradients(const StepContext& ctx, const ModelBundle* closed,
                               bool closed_expert_trainable, const ModelBundle* open,
                               const std::vector<DenseArray>& images,
                               const std::vector<int>& labels);

// Loss-only evaluation of the same composition, for finite differences.
double batch_loss(const StepContext& ctx, const ModelBundle* closed, const ModelBundle* open,
                  const std::vector<DenseArray>& images, const std::vector<int>& labels);

}  // namespace fedpalm
