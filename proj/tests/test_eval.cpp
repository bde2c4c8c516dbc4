#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedpalm/errors.hpp"
#include "fedpalm/eval.hpp"
#include "fedpalm/rng.hpp"
#include "fedpalm/teim.hpp"

using namespace fedpalm;

namespace {

ScoreSet random_scores(std::size_t ng, std::size_t ni, Rng& rng, double shift = 0.3) {
  ScoreSet s;
  for (std::size_t i = 0; i < ng; ++i) s.genuine.push_back(rng.normal(shift, 1.0));
  for (std::size_t i = 0; i < ni; ++i) s.impostor.push_back(rng.normal(-shift, 1.0));
  return s;
}

// Dense 1e6-point threshold sweep with linear interpolation across the
// sign change; the independent oracle for compute_eer.
double dense_sweep_eer(const ScoreSet& s, std::size_t grid = 1000000) {
  double lo = 1e300, hi = -1e300;
  for (double v : s.genuine) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : s.impostor) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lo -= 1e-9;
  hi += 1e-6;
  auto far_frr = [&](double t) {
    std::size_t fa = 0, fr = 0;
    for (double v : s.impostor) fa += v >= t;
    for (double v : s.genuine) fr += v < t;
    return std::pair<double, double>(static_cast<double>(fa) / s.impostor.size(),
                                     static_cast<double>(fr) / s.genuine.size());
  };
  double prev_t = lo;
  auto [pf, pr] = far_frr(lo);
  for (std::size_t i = 1; i <= grid; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid);
    auto [f, r] = far_frr(t);
    if (f - r <= 0.0) {
      const double d0 = pf - pr, d1 = f - r;
      if (d1 == 0.0) return (f + r) / 2.0;
      const double u = d0 / (d0 - d1);
      const double far_x = pf + (f - pf) * u;
      const double frr_x = pr + (r - pr) * u;
      (void)prev_t;
      return (far_x + frr_x) / 2.0;
    }
    prev_t = t;
    pf = f;
    pr = r;
  }
  return (pf + pr) / 2.0;
}

// Pair-ranking (Mann-Whitney) statistic, ties at 1/2.
double mann_whitney_auc(const ScoreSet& s) {
  long double acc = 0.0L;
  for (double g : s.genuine) {
    for (double i : s.impostor) {
      if (g > i) {
        acc += 1.0L;
      } else if (g == i) {
        acc += 0.5L;
      }
    }
  }
  return static_cast<double>(acc / (static_cast<long double>(s.genuine.size()) *
                                    static_cast<long double>(s.impostor.size())));
}

}  // namespace

TEST_CASE("score_pair is the dot product of unit templates") {
  CHECK(score_pair({1.0, 0.0}, {1.0, 0.0}) == 1.0);
  CHECK(score_pair({1.0, 0.0}, {0.0, 1.0}) == 0.0);
  Rng rng(3);
  std::vector<double> a(5), b(5);
  for (auto& x : a) x = rng.uniform(-1, 1);
  for (auto& x : b) x = rng.uniform(-1, 1);
  double expect = 0;
  for (std::size_t i = 0; i < 5; ++i) expect += a[i] * b[i];
  CHECK(score_pair(a, b) == expect);
}

TEST_CASE("perfect separation gives EER exactly zero") {
  ScoreSet s;
  s.genuine.assign(10, 0.9);
  s.impostor.assign(10, 0.1);
  auto r = compute_eer(s);
  CHECK(r.eer == 0.0);
  CHECK(r.threshold == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("identical score multisets give EER exactly 0.5") {
  Rng rng(5);
  for (std::size_t n : {10u, 11u, 100u, 101u}) {
    ScoreSet s;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = rng.uniform(-1.0, 1.0);
      s.genuine.push_back(v);
      s.impostor.push_back(v);
    }
    CHECK(compute_eer(s).eer == 0.5);
  }
}

TEST_CASE("compute_eer matches the dense threshold sweep within 1e-3") {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    auto s = random_scores(100, 100, rng);  // 200 scores
    const double got = compute_eer(s).eer;
    const double oracle = dense_sweep_eer(s);
    CHECK(std::abs(got - oracle) < 1e-3);
  }
}

TEST_CASE("eer bounds: slack bound when polarity is right, [0,1] always") {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    auto s = random_scores(5 + rng.below(40), 5 + rng.below(40), rng, rng.uniform(0.0, 1.0));
    const double eer = compute_eer(s).eer;
    CHECK(eer >= 0.0);
    CHECK(eer <= 0.5 + 1.0 / std::min(s.genuine.size(), s.impostor.size()));
  }
  // Reversed polarity drives the crossing all the way to 1.
  ScoreSet reversed;
  reversed.genuine.assign(10, 0.1);
  reversed.impostor.assign(10, 0.9);
  const double eer = compute_eer(reversed).eer;
  CHECK(eer >= 0.0);
  CHECK(eer <= 1.0);
  CHECK(eer == 1.0);
}

TEST_CASE("empty score sets are rejected") {
  ScoreSet s;
  s.genuine = {1.0};
  CHECK_THROWS_AS(compute_eer(s), MetricError);
  CHECK_THROWS_AS(compute_roc(s), MetricError);
}

TEST_CASE("roc endpoints and monotonicity; perfect AUC = 1") {
  ScoreSet s;
  s.genuine.assign(8, 0.8);
  s.impostor.assign(8, 0.2);
  auto roc = compute_roc(s);
  CHECK(roc.auc == 1.0);
  CHECK(roc.points.front().first == 0.0);
  CHECK(roc.points.back().first == 1.0);
  CHECK(roc.points.back().second == 1.0);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].first >= roc.points[i - 1].first);
    CHECK(roc.points[i].second >= roc.points[i - 1].second);
  }
}

TEST_CASE("identical distributions give chance-level AUC") {
  Rng rng(11);
  ScoreSet s = random_scores(1500, 1500, rng, 0.0);
  auto roc = compute_roc(s);
  CHECK(std::abs(roc.auc - 0.5) < 0.02);
}

TEST_CASE("trapezoid AUC equals the pair-ranking statistic within 1e-9") {
  Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    auto s = random_scores(60, 80, rng, rng.uniform(0.0, 0.8));
    // Inject ties to exercise the 1/2 credit.
    for (int i = 0; i < 10; ++i) s.impostor.push_back(s.genuine[static_cast<std::size_t>(i)]);
    const auto roc = compute_roc(s);
    CHECK(std::abs(roc.auc - mann_whitney_auc(s)) < 1e-9);
  }
}

TEST_CASE("rank metrics are invariant under strictly increasing transforms") {
  Rng rng(17);
  auto s = random_scores(80, 90, rng);
  const double eer = compute_eer(s).eer;
  const double auc = compute_roc(s).auc;
  auto transform = [](double x) { return std::tanh(0.7 * x) * 3.0 + 1.0; };
  ScoreSet t;
  for (double v : s.genuine) t.genuine.push_back(transform(v));
  for (double v : s.impostor) t.impostor.push_back(transform(v));
  CHECK(compute_eer(t).eer == doctest::Approx(eer).epsilon(1e-12));
  CHECK(compute_roc(t).auc == doctest::Approx(auc).epsilon(1e-9));
}

TEST_CASE("identification accuracy: self-query and orthogonal identities are perfect") {
  std::vector<std::vector<double>> g = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<int> gid = {0, 1, 2};
  CHECK(identification_acc(g, gid, g, gid) == 1.0);
  std::vector<std::vector<double>> q = {{0.9, 0.1, 0}, {0, 0.8, 0.2}};
  std::vector<int> qid = {0, 1};
  CHECK(identification_acc(g, gid, q, qid) == 1.0);
  CHECK_THROWS_AS(identification_acc(g, gid, q, {0, 7}), EvaluationError);
}

TEST_CASE("identification accuracy matches an exhaustive oracle with tie rule") {
  Rng rng(19);
  std::vector<std::vector<double>> g, q;
  std::vector<int> gid, qid;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-1, 1);
    g.push_back(v);
    gid.push_back(i % 5);
  }
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-1, 1);
    q.push_back(v);
    qid.push_back(static_cast<int>(rng.below(5)));
  }
  const double got = identification_acc(g, gid, q, qid);

  std::size_t hits = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double best = -1e300;
    std::size_t best_idx = 0;
    // Reverse traversal; explicit tie rule: lowest index wins.
    for (std::size_t j = g.size(); j-- > 0;) {
      const double sc = score_pair(q[i], g[j]);
      if (sc > best || (sc == best && j < best_idx)) {
        best = sc;
        best_idx = j;
      }
    }
    hits += gid[best_idx] == qid[i];
  }
  CHECK(got == static_cast<double>(hits) / q.size());
}

// --- deployment + scenarios over a tiny trained run ---

namespace {

struct TinyRun {
  FederationConfig cfg;
  BenchmarkSplit split;
  FederationResult result;
};

TinyRun tiny_fedpalm(std::uint64_t seed, double lr = 0.01) {
  SynthConfig synth;
  synth.clients = 2;
  synth.identities_per_client = 4;
  synth.samples_per_identity = 4;
  synth.image_size = 16;
  synth.seed = seed;
  auto ds = generate_synthetic(synth);

  TinyRun t;
  t.split = make_benchmark_split(ds, 2, seed);
  t.cfg.clients = 2;
  t.cfg.rounds = 3;
  t.cfg.local_epochs = 1;
  t.cfg.top_k = 2;
  t.cfg.lr = lr;
  t.cfg.batch_size = 4;
  t.cfg.seed = seed;
  t.cfg.bank.filters = 2;
  t.cfg.bank.kernel_size = 5;
  t.cfg.bank.stride = 2;
  t.cfg.bank.pool_grid = 2;
  t.cfg.hidden = 8;
  t.cfg.embed_dim = 4;
  t.cfg.parallel_clients = false;
  t.result = run_federation(t.cfg, t.split);
  return t;
}

}  // namespace

TEST_CASE("deployed templates are unit norm and deterministic") {
  auto t = tiny_fedpalm(101);
  DeploymentContext ctx{&t.result, t.cfg.top_k, TeimMode::kNormal};
  const auto& img = t.split.closed_query[0][0].image;
  auto z1 = deploy_closed_template(ctx, 0, img);
  auto z2 = deploy_closed_template(ctx, 0, img);
  CHECK(z1 == z2);
  double n = 0;
  for (double v : z1) n += v * v;
  CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
  auto zo = deploy_open_template(ctx, img);
  CHECK(zo.size() == t.cfg.embed_dim);
}

TEST_CASE("pinned blend deployment equals the model applied alone, bitwise") {
  auto t = tiny_fedpalm(103);
  DeploymentContext pinned{&t.result, t.cfg.top_k, TeimMode::kPinnedIdentity};
  DeploymentContext off{&t.result, t.cfg.top_k, TeimMode::kDisabled};
  const auto& img = t.split.closed_query[1][0].image;
  CHECK(deploy_closed_template(pinned, 1, img) == deploy_closed_template(off, 1, img));
  CHECK(deploy_closed_template(off, 1, img) == plain_template(t.result.closed_models[1], img));
  CHECK(deploy_open_template(pinned, img) == plain_template(t.result.global_model, img));
}

TEST_CASE("deployment equals the manual composition of the three stages") {
  auto t = tiny_fedpalm(107);
  DeploymentContext ctx{&t.result, t.cfg.top_k, TeimMode::kNormal};
  const auto& img = t.split.open_query[0].image;

  FeaturePool pool;
  for (std::size_t j = 0; j < 2; ++j) {
    pool.add(static_cast<int>(j),
             expert_forward(t.cfg.bank, t.result.shared_experts[j], img).data());
  }
  pool.add(2, expert_forward(t.cfg.bank, t.result.global_model.expert, img).data());
  const ModelBundle& m = t.result.closed_models[0];
  BlendParams bp{m.embedding.seg("teim.alpha")[0], m.embedding.seg("teim.beta")[0]};
  auto enhanced = enhance(0, pool, t.cfg.top_k, bp);
  auto expect = model_forward(m.emb, m.embedding, enhanced).tmpl;
  CHECK(deploy_closed_template(ctx, 0, img) == expect);
}

TEST_CASE("missing redistribution state raises a deployment error") {
  auto t = tiny_fedpalm(109);
  t.result.shared_experts.clear();
  DeploymentContext ctx{&t.result, t.cfg.top_k, TeimMode::kNormal};
  CHECK_THROWS_AS(deploy_closed_template(ctx, 0, t.split.open_query[0].image), DeploymentError);
}

TEST_CASE("evaluate_scenario: smoke contract on an untrained run") {
  auto t = tiny_fedpalm(113, 0.0);  // lr = 0, models stay at initialization
  auto closed = evaluate_scenario(t.split, t.result, Scenario::kClosed, t.cfg.top_k);
  auto open = evaluate_scenario(t.split, t.result, Scenario::kOpen, t.cfg.top_k);
  CHECK(closed.per_client_eer.size() == 2);
  // Untrained models on separable data: strictly between chance and perfect.
  CHECK(closed.mean_eer > 0.0);
  CHECK(closed.mean_eer < 0.5);
  CHECK(open.mean_eer > 0.0);
  CHECK(open.mean_eer < 0.5);
  CHECK(std::isfinite(open.auc));

  // The closed average is the mean of the per-client values.
  CHECK(closed.mean_eer ==
        doctest::Approx((closed.per_client_eer[0] + closed.per_client_eer[1]) / 2.0).epsilon(1e-15));
}

TEST_CASE("pair counts match the combinatorial formula") {
  auto t = tiny_fedpalm(127);
  auto closed = evaluate_scenario(t.split, t.result, Scenario::kClosed, t.cfg.top_k);
  // Per client: 2 identities, gallery 2 x 2, query 2 x 2. Genuine pairs
  // per client: sum over ids of n_q * n_g = 2*2 + 2*2 = 8; impostor:
  // 4*4 - 8 = 8. Two clients pooled.
  CHECK(closed.genuine_pairs == 16);
  CHECK(closed.impostor_pairs == 16);

  auto open = evaluate_scenario(t.split, t.result, Scenario::kOpen, t.cfg.top_k);
  // Open pool: 4 identities, gallery 2 each, query 2 each: genuine
  // 4 * (2*2) = 16 of 8*8 = 64 pairs.
  CHECK(open.genuine_pairs == 16);
  CHECK(open.impostor_pairs == 48);
}

TEST_CASE("local baseline reports per-client open-set rows") {
  auto t = tiny_fedpalm(131);
  auto local = run_local_baseline(t.cfg, t.split);
  auto open = evaluate_scenario(t.split, local, Scenario::kOpen, t.cfg.top_k);
  CHECK(open.per_client_eer.size() == 2);
  double m = (open.per_client_eer[0] + open.per_client_eer[1]) / 2.0;
  CHECK(open.mean_eer == doctest::Approx(m).epsilon(1e-15));
}
