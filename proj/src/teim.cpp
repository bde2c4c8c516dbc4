#include "fedpalm/teim.hpp"

#include <algorithm>

#include "fedpalm/errors.hpp"

namespace fedpalm {

void FeaturePool::add(int expert_id, std::vector<double> feature) {
  if (has(expert_id)) throw ConfigError("FeaturePool: duplicate expert id");
  if (!entries.empty() && entries.front().feature.size() != feature.size()) {
    throw DimensionError("FeaturePool: feature length mismatch");
  }
  entries.push_back({expert_id, std::move(feature)});
}

bool FeaturePool::has(int expert_id) const {
  for (const auto& e : entries)
    if (e.expert_id == expert_id) return true;
  return false;
}

const std::vector<double>& FeaturePool::feature_of(int expert_id) const {
  for (const auto& e : entries)
    if (e.expert_id == expert_id) return e.feature;
  throw ConfigError("FeaturePool: unknown expert id");
}

std::vector<ScoredCandidate> score_candidates(const std::vector<double>& anchor,
                                              const FeaturePool& candidates) {
  std::vector<ScoredCandidate> scores;
  scores.reserve(candidates.entries.size());
  for (const auto& e : candidates.entries) {
    scores.push_back({e.expert_id, cosine_similarity(anchor, e.feature)});
  }
  return scores;
}

RouteResult route(const std::vector<ScoredCandidate>& scores, const FeaturePool& candidates,
                  std::size_t k) {
  if (k < 1 || k > scores.size()) throw ConfigError("route: K out of range");
  std::vector<ScoredCandidate> ranked = scores;
  std::stable_sort(ranked.begin(), ranked.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.expert_id < b.expert_id;
  });

  RouteResult r;
  r.ranked_ids.reserve(ranked.size());
  r.similarities.reserve(ranked.size());
  for (const auto& s : ranked) {
    r.ranked_ids.push_back(s.expert_id);
    r.similarities.push_back(s.similarity);
  }
  r.selected_ids.assign(r.ranked_ids.begin(), r.ranked_ids.begin() + static_cast<std::ptrdiff_t>(k));

  const std::size_t d = candidates.entries.front().feature.size();
  r.side_feature.assign(d, 0.0);
  for (int id : r.selected_ids) {
    const auto& f = candidates.feature_of(id);
    for (std::size_t i = 0; i < d; ++i) r.side_feature[i] += f[i];
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  for (double& v : r.side_feature) v *= inv_k;
  return r;
}

std::vector<double> blend(const std::vector<double>& anchor, const std::vector<double>& side,
                          const BlendParams& bp) {
  if (anchor.size() != side.size()) throw DimensionError("blend: length mismatch");
  std::vector<double> out(anchor.size());
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    out[i] = bp.alpha * anchor[i] + bp.beta * side[i];
  }
  return out;
}

std::vector<double> enhance(int anchor_expert_id, const FeaturePool& pool, std::size_t k,
                            const BlendParams& bp, RouteResult* route_out) {
  if (!pool.has(anchor_expert_id)) throw ConfigError("enhance: anchor not in pool");
  if (pool.entries.size() < k + 1) throw ConfigError("enhance: pool smaller than K+1");
  FeaturePool candidates;
  for (const auto& e : pool.entries) {
    if (e.expert_id != anchor_expert_id) candidates.add(e.expert_id, e.feature);
  }
  const auto& anchor = pool.feature_of(anchor_expert_id);
  RouteResult r = route(score_candidates(anchor, candidates), candidates, k);
  auto enhanced = blend(anchor, r.side_feature, bp);
  if (route_out) *route_out = std::move(r);
  return enhanced;
}

BlendBackward blend_backward(const std::vector<double>& upstream, const std::vector<double>& anchor,
                             const std::vector<double>& side, const BlendParams& bp) {
  BlendBackward b;
  b.dalpha = dot(anchor, upstream);
  b.dbeta = dot(side, upstream);
  b.danchor.resize(upstream.size());
  b.dside.resize(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    b.danchor[i] = bp.alpha * upstream[i];
    b.dside[i] = bp.beta * upstream[i];
  }
  return b;
}

}  // namespace fedpalm
