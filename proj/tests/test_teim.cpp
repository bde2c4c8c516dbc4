#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedpalm/errors.hpp"
#include "fedpalm/rng.hpp"
#include "fedpalm/teim.hpp"

using namespace fedpalm;

namespace {

std::vector<double> random_feature(std::size_t d, Rng& rng) {
  std::vector<double> f(d);
  for (auto& x : f) x = rng.uniform(-1.0, 1.0);
  return f;
}

}  // namespace

TEST_CASE("score_candidates: orthogonal candidates score zero, scaled anchor scores one") {
  FeaturePool pool;
  pool.add(0, {0.0, 1.0, 0.0});
  pool.add(1, {2.0, 0.0, 0.0});
  const std::vector<double> anchor = {1.0, 0.0, 0.0};
  auto scores = score_candidates(anchor, pool);
  CHECK(scores[0].similarity == 0.0);
  CHECK(scores[1].similarity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("score_candidates matches per-pair recomputation on a random pool") {
  Rng rng(11);
  const std::vector<double> anchor = random_feature(6, rng);
  FeaturePool pool;
  for (int i = 0; i < 7; ++i) pool.add(i, random_feature(6, rng));
  auto scores = score_candidates(anchor, pool);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double num = 0.0, na = 0.0, nb = 0.0;
    const auto& f = pool.entries[i].feature;
    for (std::size_t j = 0; j < f.size(); ++j) {
      num += anchor[j] * f[j];
      na += anchor[j] * anchor[j];
      nb += f[j] * f[j];
    }
    CHECK(scores[i].similarity == doctest::Approx(num / std::sqrt(na * nb)).epsilon(1e-12));
  }
}

TEST_CASE("route ranks descending, averages the prefix") {
  FeaturePool pool;
  pool.add(0, {1.0, 0.0});  // A, d = 0.9
  pool.add(1, {0.0, 1.0});  // B, d = 0.2
  pool.add(2, {1.0, 1.0});  // C, d = 0.5
  pool.add(3, {2.0, 0.0});  // D, d = 0.7
  std::vector<ScoredCandidate> scores = {{0, 0.9}, {1, 0.2}, {2, 0.5}, {3, 0.7}};
  auto r = route(scores, pool, 3);
  CHECK(r.ranked_ids == std::vector<int>{0, 3, 2, 1});
  CHECK(r.selected_ids == std::vector<int>{0, 3, 2});
  CHECK(r.side_feature[0] == doctest::Approx((1.0 + 2.0 + 1.0) / 3.0).epsilon(1e-15));
  CHECK(r.side_feature[1] == doctest::Approx((0.0 + 0.0 + 1.0) / 3.0).epsilon(1e-15));
  // Similarities non-increasing.
  CHECK(std::is_sorted(r.similarities.rbegin(), r.similarities.rend()));
}

TEST_CASE("route with K equal to the pool size averages everything") {
  FeaturePool pool;
  pool.add(0, {1.0});
  pool.add(1, {3.0});
  std::vector<ScoredCandidate> scores = {{0, 0.4}, {1, 0.6}};
  auto r = route(scores, pool, 2);
  CHECK(r.side_feature[0] == 2.0);
}

TEST_CASE("route ties break by ascending expert id") {
  FeaturePool pool;
  pool.add(5, {1.0});
  pool.add(2, {2.0});
  pool.add(9, {3.0});
  std::vector<ScoredCandidate> scores = {{5, 0.5}, {2, 0.5}, {9, 0.5}};
  auto r = route(scores, pool, 2);
  CHECK(r.ranked_ids == std::vector<int>{2, 5, 9});
  CHECK(r.selected_ids == std::vector<int>{2, 5});
}

TEST_CASE("route prefix equals a brute-force full sort on 100 random vectors") {
  Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 6;
    FeaturePool pool;
    std::vector<ScoredCandidate> scores;
    for (std::size_t i = 0; i < n; ++i) {
      pool.add(static_cast<int>(i), random_feature(3, rng));
      scores.push_back({static_cast<int>(i), rng.uniform(-1.0, 1.0)});
    }
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, n - 1}) {
      auto r = route(scores, pool, k);
      auto sorted = scores;
      std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.expert_id < b.expert_id;
      });
      for (std::size_t i = 0; i < k; ++i) CHECK(r.selected_ids[i] == sorted[i].expert_id);
    }
  }
}

TEST_CASE("route rejects K out of range") {
  FeaturePool pool;
  pool.add(0, {1.0});
  std::vector<ScoredCandidate> scores = {{0, 0.5}};
  CHECK_THROWS_AS(route(scores, pool, 0), ConfigError);
  CHECK_THROWS_AS(route(scores, pool, 2), ConfigError);
}

TEST_CASE("blend configurations") {
  const std::vector<double> anchor = {1.0, 0.0};
  const std::vector<double> side = {0.0, 1.0};
  auto a = blend(anchor, side, {1.0, 0.0});
  CHECK(a == anchor);
  auto b = blend(anchor, side, {0.0, 1.0});
  CHECK(b == side);
  auto c = blend(anchor, side, {0.7, 0.3});
  CHECK(c[0] == 0.7);
  CHECK(c[1] == 0.3);
}

TEST_CASE("enhance over a pool of identical features gives (alpha+beta) * anchor") {
  const std::vector<double> f = {0.5, -0.25, 1.0};
  FeaturePool pool;
  for (int i = 0; i < 4; ++i) pool.add(i, f);
  auto out = enhance(0, pool, 2, {0.6, 0.4});
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(out[i] == doctest::Approx(1.0 * f[i]).epsilon(1e-15));
  }
}

TEST_CASE("enhance with beta = 0 returns alpha * anchor regardless of the pool") {
  Rng rng(31);
  FeaturePool pool;
  for (int i = 0; i < 5; ++i) pool.add(i, random_feature(4, rng));
  auto out = enhance(2, pool, 3, {0.9, 0.0});
  const auto& anchor = pool.feature_of(2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] == 0.9 * anchor[i]);
  }
}

TEST_CASE("enhance equals the manual composition of score/route/blend") {
  Rng rng(41);
  FeaturePool pool;
  for (int i = 0; i < 6; ++i) pool.add(i, random_feature(5, rng));
  const BlendParams bp{0.8, 0.5};
  RouteResult route_out;
  auto got = enhance(3, pool, 3, bp, &route_out);

  FeaturePool candidates;
  for (const auto& e : pool.entries)
    if (e.expert_id != 3) candidates.add(e.expert_id, e.feature);
  auto r = route(score_candidates(pool.feature_of(3), candidates), candidates, 3);
  auto expect = blend(pool.feature_of(3), r.side_feature, bp);
  CHECK(got == expect);
  CHECK(route_out.selected_ids == r.selected_ids);
}

TEST_CASE("enhance rejects pools smaller than K+1 and missing anchors") {
  FeaturePool pool;
  pool.add(0, {1.0});
  pool.add(1, {2.0});
  CHECK_THROWS_AS(enhance(0, pool, 2, {1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(enhance(7, pool, 1, {1.0, 0.0}), ConfigError);
}

TEST_CASE("routing is invariant to positive rescaling of the candidates") {
  Rng rng(51);
  for (int rep = 0; rep < 20; ++rep) {
    FeaturePool pool, scaled;
    const std::vector<double> anchor = random_feature(4, rng);
    const double c = rng.uniform(0.1, 7.0);
    for (int i = 0; i < 5; ++i) {
      auto f = random_feature(4, rng);
      pool.add(i, f);
      for (auto& x : f) x *= c;
      scaled.add(i, f);
    }
    auto r1 = route(score_candidates(anchor, pool), pool, 2);
    auto r2 = route(score_candidates(anchor, scaled), scaled, 2);
    CHECK(r1.ranked_ids == r2.ranked_ids);
  }
}

TEST_CASE("blend gradient: d/dalpha is the anchor, d/dbeta is the side") {
  Rng rng(61);
  const auto anchor = random_feature(5, rng);
  const auto side = random_feature(5, rng);
  const auto upstream = random_feature(5, rng);
  const BlendParams bp{0.4, 1.3};
  auto bb = blend_backward(upstream, anchor, side, bp);

  // Finite differences on g(alpha, beta) = upstream . blend(...).
  auto g = [&](double a, double b) {
    auto out = blend(anchor, side, {a, b});
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += upstream[i] * out[i];
    return acc;
  };
  const double h = 1e-6;
  CHECK(bb.dalpha == doctest::Approx((g(bp.alpha + h, bp.beta) - g(bp.alpha - h, bp.beta)) / (2 * h))
                         .epsilon(1e-6));
  CHECK(bb.dbeta == doctest::Approx((g(bp.alpha, bp.beta + h) - g(bp.alpha, bp.beta - h)) / (2 * h))
                        .epsilon(1e-6));
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    CHECK(bb.danchor[i] == bp.alpha * upstream[i]);
    CHECK(bb.dside[i] == bp.beta * upstream[i]);
  }
}

TEST_CASE("feature pool rejects duplicates and mismatched lengths") {
  FeaturePool pool;
  pool.add(0, {1.0, 2.0});
  CHECK_THROWS_AS(pool.add(0, {3.0, 4.0}), ConfigError);
  CHECK_THROWS_AS(pool.add(1, {1.0}), DimensionError);
}
