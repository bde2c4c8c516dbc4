#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpalm/data.hpp"
#include "fedpalm/federation.hpp"

namespace fedpalm {

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (FAR, GAR), FAR ascending
  double auc = 0.0;
};

// Cosine of unit-norm templates, i.e. their dot product.
double score_pair(const std::vector<double>& q, const std::vector<double>& g);

// Threshold sweep over the unique scores with FAR(t) = fraction of
// impostor scores >= t and FRR(t) = fraction of genuine scores < t; the
// crossing is resolved in integer arithmetic and linearly interpolated
// between the bracketing thresholds, so exact cases (perfect separation,
// identical distributions) come out exact.
EerResult compute_eer(const ScoreSet& s);

// Points at every unique threshold plus both endpoints; AUC by the
// trapezoidal rule (equals the pair-ranking statistic with ties at 1/2).
RocCurve compute_roc(const ScoreSet& s);

// Rank-1: fraction of queries whose highest-scoring gallery template
// (ties -> lowest gallery index) carries the query identity.
double identification_acc(const std::vector<std::vector<double>>& gallery_templates,
                          const std::vector<int>& gallery_ids,
                          const std::vector<std::vector<double>>& query_templates,
                          const std::vector<int>& query_ids);

// --- deployment pipelines ---

// Shared read-only state for template extraction after a run.
struct DeploymentContext {
  const FederationResult* run = nullptr;
  std::size_t top_k = 3;
  TeimMode teim_mode = TeimMode::kNormal;
};

// Anchor = the client's own closed expert; candidates = the other N-1
// frozen experts plus the global one; blend with the client's closed pair;
// embed through the client's closed embedding layers.
std::vector<double> deploy_closed_template(const DeploymentContext& ctx, int client,
                                           const DenseArray& image);

// Anchor = the globally shared expert; candidates = the N frozen local
// experts; blend with the open pair; embed through the open embedding.
std::vector<double> deploy_open_template(const DeploymentContext& ctx, const DenseArray& image);

// Plain template without feature interaction (baselines).
std::vector<double> plain_template(const ModelBundle& model, const DenseArray& image);

// --- benchmark scenarios ---

enum class Scenario { kClosed, kOpen };

struct ScenarioReport {
  std::vector<double> per_client_eer;  // empty when the scenario uses one shared model
  double mean_eer = 0.0;
  RocCurve roc;  // pooled scores
  double auc = 0.0;
  double acc = 0.0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
};

ScenarioReport evaluate_scenario(const BenchmarkSplit& split, const FederationResult& run,
                                 Scenario scenario, std::size_t top_k);

struct EvalReport {
  std::string method;
  ScenarioReport closed;
  ScenarioReport open;
};

EvalReport evaluate_run(const BenchmarkSplit& split, const FederationResult& run, std::size_t top_k);

std::string eval_report_to_json(const EvalReport& report, std::uint64_t config_hash);
std::string roc_to_csv(const RocCurve& roc);

}  // namespace fedpalm
