#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedpalm/adam.hpp"
#include "fedpalm/data.hpp"
#include "fedpalm/losses.hpp"
#include "fedpalm/model.hpp"
#include "fedpalm/params.hpp"

namespace fedpalm {

enum class Method { kFedPalm, kFedAvg, kLocal };

Method method_from_string(const std::string& s);
std::string method_name(Method m);

// How the feature-interaction module participates in a run. kPinnedIdentity
// keeps it structurally active but holds the blend at (1, 0) and skips its
// updates; used to verify that this configuration is a bitwise no-op.
enum class TeimMode { kNormal, kDisabled, kPinnedIdentity };

struct FederationConfig {
  std::size_t clients = 8;       // N
  std::size_t rounds = 9;        // R
  std::size_t local_epochs = 1;  // E
  std::size_t top_k = 3;         // K
  double lr = 0.01;
  std::size_t batch_size = 8;  // originals per batch; entries are doubled
  double tau = 0.07;
  LossWeights weights;
  std::uint64_t seed = 1;
  bool teim_from_start = false;  // flips the phase boundary to round 0
  TeimMode teim_mode = TeimMode::kNormal;
  bool include_closed = true;  // test hook: drop closed models entirely
  bool parallel_clients = true;
  // Test hook: one training stream for every client (instead of the
  // per-(client, round) derivation), for symmetry harnesses.
  bool shared_client_streams = false;

  GaborBankConfig bank;
  std::size_t hidden = 64;
  std::size_t embed_dim = 32;

  // First round of phase 2: TEIM active, closed experts frozen.
  std::size_t phase_boundary() const;
  // The full protocol needs N >= 2 and 1 <= K <= N; the interaction-free
  // baselines degenerate cleanly to a single client.
  void validate(bool allow_single_client = false) const;
};

// Training-time augmentation constants: integer translation up to 2 px
// plus Gaussian pixel noise.
inline constexpr int kAugShiftPx = 2;
inline constexpr double kAugNoiseSigma = 0.02;

struct RoundLogRow {
  std::size_t round;
  int client;
  std::size_t epoch;
  double loss_ce;   // summed over the models trained this epoch
  double loss_con;
  std::size_t n_i;
};

struct RoundLog {
  std::vector<RoundLogRow> rows;
  std::string to_csv() const;  // header: round,client,epoch,loss_ce,loss_con,n_i
};

// Typed message log. The aggregation stream (kModelUpdate) is the only
// server-bound kind; frozen-expert redistribution travels client-to-peers
// as kExpertShare and is only forwarded, never consumed, by the server.
enum class MessageKind { kModelUpdate, kBroadcast, kExpertShare };

inline constexpr int kServer = -1;
inline constexpr int kAllClients = -2;

struct MessageRecord {
  MessageKind kind;
  std::size_t round;
  int origin;
  int destination;
  std::size_t sample_count;  // n_i on updates, 0 otherwise
  std::vector<std::string> segments;
  std::uint64_t payload_hash;
};

struct MessageLog {
  std::vector<MessageRecord> records;
  std::vector<MessageRecord> server_bound() const;
};

struct ClientState {
  int client_id = -1;
  ModelBundle closed;  // personalized; never aggregated
  ModelBundle open;    // local replica of the shared model
  Adam adam_closed_expert, adam_closed_embed;
  Adam adam_open_expert, adam_open_embed;
  std::vector<Sample> shard;
  std::size_t n_i = 0;
  // Frozen peers' experts, by client id; valid once experts_received.
  std::vector<ParamVector> received_experts;
  bool experts_received = false;
};

struct ServerState {
  std::size_t round = 0;
  ParamVector global_expert;
  ParamVector global_embedding;
};

// Sample-weighted coordinatewise mean in ascending client order. Uniform
// weights reduce to the exact arithmetic mean (single client: identity).
ParamVector aggregate(const std::vector<std::pair<ParamVector, double>>& weighted_params);

// One client round: install the broadcast, run E local epochs under the
// phase schedule, return the updated open components. Appends one log row
// per epoch.
std::pair<ParamVector, ParamVector> local_training(ClientState& client, std::size_t round,
                                                   const ParamVector& broadcast_expert,
                                                   const ParamVector& broadcast_embedding,
                                                   const FederationConfig& cfg,
                                                   std::vector<RoundLogRow>& log_rows);

struct FederationResult {
  Method method = Method::kFedPalm;
  std::vector<ModelBundle> closed_models;    // per client; empty for fedavg
  ModelBundle global_model;                  // open/shared model; empty for local
  std::vector<ParamVector> shared_experts;   // redistributed frozen experts (fedpalm)
  RoundLog round_log;
  MessageLog messages;
  // closed-expert content hash per round per client (fedpalm), for the
  // freeze audit.
  std::vector<std::vector<std::uint64_t>> closed_expert_hashes;
  // Model state at the phase barrier (fedpalm), for boundary checkpoints.
  bool has_boundary_snapshot = false;
  std::vector<ModelBundle> boundary_closed_models;
  ModelBundle boundary_global_model;
};

FederationResult run_federation(const FederationConfig& cfg, const BenchmarkSplit& split);
FederationResult run_fedavg_baseline(const FederationConfig& cfg, const BenchmarkSplit& split);
FederationResult run_local_baseline(const FederationConfig& cfg, const BenchmarkSplit& split);

FederationResult run_method(Method m, const FederationConfig& cfg, const BenchmarkSplit& split);

}  // namespace fedpalm
