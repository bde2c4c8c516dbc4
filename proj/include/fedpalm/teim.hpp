#pragma once

#include <cstddef>
#include <vector>

#include "fedpalm/array.hpp"

namespace fedpalm {

// The set of textural features extracted from one image by every expert.
// Ids are client ids for the personalized experts plus one id for the
// globally shared expert; uniqueness is enforced.
struct FeaturePool {
  struct Entry {
    int expert_id;
    std::vector<double> feature;
  };
  std::vector<Entry> entries;

  void add(int expert_id, std::vector<double> feature);
  const std::vector<double>& feature_of(int expert_id) const;
  bool has(int expert_id) const;
};

// Learnable blend pair, one per model.
struct BlendParams {
  double alpha = 1.0;
  double beta = 0.0;
};

struct ScoredCandidate {
  int expert_id;
  double similarity;  // d_i, cosine
};

struct RouteResult {
  std::vector<int> ranked_ids;          // descending similarity, ties by ascending id
  std::vector<double> similarities;     // matching ranked_ids
  std::vector<int> selected_ids;        // the top-K prefix
  std::vector<double> side_feature;     // mean of the selected features
};

// d_i for every candidate, in pool order.
std::vector<ScoredCandidate> score_candidates(const std::vector<double>& anchor,
                                              const FeaturePool& candidates);

// Rank descending by similarity (ties broken by ascending expert id) and
// average the features of the top-K prefix into the side feature.
RouteResult route(const std::vector<ScoredCandidate>& scores, const FeaturePool& candidates,
                  std::size_t k);

// alpha * anchor + beta * side, elementwise.
std::vector<double> blend(const std::vector<double>& anchor, const std::vector<double>& side,
                          const BlendParams& bp);

// score -> route -> blend over pool \ {anchor}. The route is recorded so
// gradients can flow back through alpha, beta and the selected features.
std::vector<double> enhance(int anchor_expert_id, const FeaturePool& pool, std::size_t k,
                            const BlendParams& bp, RouteResult* route_out = nullptr);

// Gradients of a scalar loss through blend. The routing selection is
// piecewise-constant and receives no gradient.
struct BlendBackward {
  double dalpha;
  double dbeta;
  std::vector<double> danchor;  // alpha * upstream
  std::vector<double> dside;    // beta * upstream; split as dside/K per selected feature
};

BlendBackward blend_backward(const std::vector<double>& upstream, const std::vector<double>& anchor,
                             const std::vector<double>& side, const BlendParams& bp);

}  // namespace fedpalm
