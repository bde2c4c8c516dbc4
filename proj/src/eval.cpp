#include "fedpalm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedpalm/errors.hpp"
#include "fedpalm/teim.hpp"

namespace fedpalm {

double score_pair(const std::vector<double>& q, const std::vector<double>& g) {
  return dot(q, g);
}

namespace {

void validate_scores(const ScoreSet& s) {
  if (s.genuine.empty() || s.impostor.empty()) {
    throw MetricError("score set: genuine and impostor must both be non-empty");
  }
  ensure_finite(s.genuine, "genuine scores");
  ensure_finite(s.impostor, "impostor scores");
}

// Counts at every unique threshold t (ascending): impostors >= t and
// genuines < t.
struct SweepPoint {
  double t;
  long long imp_ge;  // FAR numerator
  long long gen_lt;  // FRR numerator
};

std::vector<SweepPoint> threshold_sweep(const ScoreSet& s) {
  std::vector<double> gen = s.genuine, imp = s.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> uniq;
  uniq.reserve(gen.size() + imp.size());
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(), std::back_inserter(uniq));
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  std::vector<SweepPoint> pts;
  pts.reserve(uniq.size() + 1);
  for (double t : uniq) {
    const auto imp_ge = imp.end() - std::lower_bound(imp.begin(), imp.end(), t);
    const auto gen_lt = std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    pts.push_back({t, static_cast<long long>(imp_ge), static_cast<long long>(gen_lt)});
  }
  // Sentinel past the maximum: FAR = 0, FRR = 1.
  pts.push_back({uniq.back() + 1.0, 0, static_cast<long long>(gen.size())});
  return pts;
}

}  // namespace

EerResult compute_eer(const ScoreSet& s) {
  validate_scores(s);
  const auto pts = threshold_sweep(s);
  const long long ni = static_cast<long long>(s.impostor.size());
  const long long ng = static_cast<long long>(s.genuine.size());

  // d(t) = FAR - FRR is non-increasing; its sign is the sign of
  // imp_ge * ng - gen_lt * ni.
  auto dsign = [&](const SweepPoint& p) -> __int128 {
    return static_cast<__int128>(p.imp_ge) * ng - static_cast<__int128>(p.gen_lt) * ni;
  };

  for (std::size_t j = 0; j < pts.size(); ++j) {
    const __int128 d = dsign(pts[j]);
    if (d == 0) {
      return {static_cast<double>(pts[j].imp_ge) / static_cast<double>(ni), pts[j].t};
    }
    if (d < 0) {
      if (j == 0) throw MetricError("compute_eer: no crossing bracket");
      const SweepPoint& p0 = pts[j - 1];
      const SweepPoint& p1 = pts[j];
      // Linear interpolation between the bracketing thresholds, carried
      // out over the integer numerators a = d(t0), b = d(t1) (both scaled
      // by ni*ng): s* = a / (a - b) and
      //   eer = (f0 * (a - b) + (f1 - f0) * a) / (ni * (a - b)).
      const __int128 a = dsign(p0);
      const __int128 b = d;
      const __int128 num = static_cast<__int128>(p0.imp_ge) * (a - b) +
                           static_cast<__int128>(p1.imp_ge - p0.imp_ge) * a;
      const __int128 den = static_cast<__int128>(ni) * (a - b);
      const double eer = static_cast<double>(num) / static_cast<double>(den);
      const double frac = static_cast<double>(a) / static_cast<double>(a - b);
      return {eer, p0.t + (p1.t - p0.t) * frac};
    }
  }
  throw MetricError("compute_eer: sweep never crossed");
}

RocCurve compute_roc(const ScoreSet& s) {
  validate_scores(s);
  const auto pts = threshold_sweep(s);
  const double ni = static_cast<double>(s.impostor.size());
  const double ng = static_cast<double>(s.genuine.size());

  RocCurve roc;
  roc.points.reserve(pts.size());
  // Descending threshold gives ascending FAR; GAR = 1 - FRR = gen >= t.
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    const double far = static_cast<double>(it->imp_ge) / ni;
    const double gar = static_cast<double>(static_cast<long long>(s.genuine.size()) - it->gen_lt) / ng;
    roc.points.emplace_back(far, gar);
  }
  double auc = 0.0;
  for (std::size_t j = 1; j < roc.points.size(); ++j) {
    const auto& [f0, g0] = roc.points[j - 1];
    const auto& [f1, g1] = roc.points[j];
    auc += (f1 - f0) * (g0 + g1) * 0.5;
  }
  roc.auc = auc;
  return roc;
}

double identification_acc(const std::vector<std::vector<double>>& gallery_templates,
                          const std::vector<int>& gallery_ids,
                          const std::vector<std::vector<double>>& query_templates,
                          const std::vector<int>& query_ids) {
  if (gallery_templates.size() != gallery_ids.size() || query_templates.size() != query_ids.size()) {
    throw EvaluationError("identification_acc: id/template count mismatch");
  }
  if (gallery_templates.empty() || query_templates.empty()) {
    throw EvaluationError("identification_acc: empty gallery or query");
  }
  const std::set<int> covered(gallery_ids.begin(), gallery_ids.end());
  for (int q : query_ids) {
    if (!covered.count(q)) throw EvaluationError("identification_acc: query identity not enrolled");
  }
  std::size_t hits = 0;
  for (std::size_t q = 0; q < query_templates.size(); ++q) {
    std::size_t best = 0;
    double best_score = score_pair(query_templates[q], gallery_templates[0]);
    for (std::size_t g = 1; g < gallery_templates.size(); ++g) {
      const double sc = score_pair(query_templates[q], gallery_templates[g]);
      if (sc > best_score) {
        best_score = sc;
        best = g;
      }
    }
    if (gallery_ids[best] == query_ids[q]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(query_templates.size());
}

// --- deployment ---

namespace {

FeaturePool deployment_pool(const DeploymentContext& ctx, const DenseArray& image) {
  const FederationResult& run = *ctx.run;
  const std::size_t n = run.closed_models.size();
  if (run.shared_experts.size() != n || n == 0) {
    throw DeploymentError("deployment: expert redistribution incomplete");
  }
  FeaturePool pool;
  const GaborBankConfig& bank = run.global_model.bank;
  for (std::size_t j = 0; j < n; ++j) {
    pool.add(static_cast<int>(j), expert_forward(bank, run.shared_experts[j], image).data());
  }
  pool.add(static_cast<int>(n),
           expert_forward(bank, run.global_model.expert, image).data());
  return pool;
}

BlendParams deployment_blend(const ParamVector& embedding, TeimMode mode) {
  if (mode == TeimMode::kPinnedIdentity) return {1.0, 0.0};
  return {embedding.seg("teim.alpha")[0], embedding.seg("teim.beta")[0]};
}

}  // namespace

std::vector<double> deploy_closed_template(const DeploymentContext& ctx, int client,
                                           const DenseArray& image) {
  const FederationResult& run = *ctx.run;
  if (client < 0 || static_cast<std::size_t>(client) >= run.closed_models.size()) {
    throw DeploymentError("deploy_closed_template: unknown client");
  }
  const ModelBundle& model = run.closed_models[static_cast<std::size_t>(client)];
  if (ctx.teim_mode == TeimMode::kDisabled) return plain_template(model, image);
  FeaturePool pool = deployment_pool(ctx, image);
  const BlendParams bp = deployment_blend(model.embedding, ctx.teim_mode);
  const auto enhanced = enhance(client, pool, ctx.top_k, bp);
  return model_forward(model.emb, model.embedding, enhanced).tmpl;
}

std::vector<double> deploy_open_template(const DeploymentContext& ctx, const DenseArray& image) {
  const FederationResult& run = *ctx.run;
  const ModelBundle& model = run.global_model;
  if (ctx.teim_mode == TeimMode::kDisabled) return plain_template(model, image);
  FeaturePool pool = deployment_pool(ctx, image);
  const BlendParams bp = deployment_blend(model.embedding, ctx.teim_mode);
  const auto enhanced = enhance(static_cast<int>(run.closed_models.size()), pool, ctx.top_k, bp);
  return model_forward(model.emb, model.embedding, enhanced).tmpl;
}

std::vector<double> plain_template(const ModelBundle& model, const DenseArray& image) {
  const auto feature = expert_forward(model.bank, model.expert, image);
  return model_forward(model.emb, model.embedding, feature.data()).tmpl;
}

// --- scenarios ---

namespace {

using Extractor = std::function<std::vector<double>(const DenseArray&)>;

std::vector<std::vector<double>> extract_all(const Extractor& fn, const std::vector<Sample>& samples) {
  std::vector<std::vector<double>> out(samples.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long i = 0; i < static_cast<long long>(samples.size()); ++i) {
    out[static_cast<std::size_t>(i)] = fn(samples[static_cast<std::size_t>(i)].image);
  }
  return out;
}

std::vector<int> ids_of(const std::vector<Sample>& samples) {
  std::vector<int> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.identity);
  return ids;
}

// All query-vs-gallery pair scores, split genuine/impostor by identity.
ScoreSet pair_scores(const std::vector<std::vector<double>>& query, const std::vector<int>& qids,
                     const std::vector<std::vector<double>>& gallery, const std::vector<int>& gids) {
  ScoreSet s;
  for (std::size_t q = 0; q < query.size(); ++q) {
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const double sc = score_pair(query[q], gallery[g]);
      (qids[q] == gids[g] ? s.genuine : s.impostor).push_back(sc);
    }
  }
  return s;
}

struct SetEval {
  ScoreSet scores;
  double eer;
  double acc;
};

SetEval eval_one_extractor(const Extractor& fn, const std::vector<Sample>& gallery,
                           const std::vector<Sample>& query) {
  SetEval ev;
  const auto gt = extract_all(fn, gallery);
  const auto qt = extract_all(fn, query);
  const auto gids = ids_of(gallery);
  const auto qids = ids_of(query);
  ev.scores = pair_scores(qt, qids, gt, gids);
  ev.eer = compute_eer(ev.scores).eer;
  ev.acc = identification_acc(gt, gids, qt, qids);
  return ev;
}

}  // namespace

ScenarioReport evaluate_scenario(const BenchmarkSplit& split, const FederationResult& run,
                                 Scenario scenario, std::size_t top_k) {
  DeploymentContext ctx{&run, top_k, TeimMode::kNormal};
  ScenarioReport report;
  ScoreSet pooled;
  double acc_sum = 0.0;
  std::size_t acc_count = 0;

  auto absorb = [&](const SetEval& ev) {
    pooled.genuine.insert(pooled.genuine.end(), ev.scores.genuine.begin(), ev.scores.genuine.end());
    pooled.impostor.insert(pooled.impostor.end(), ev.scores.impostor.begin(), ev.scores.impostor.end());
    acc_sum += ev.acc;
    ++acc_count;
  };

  if (scenario == Scenario::kClosed) {
    const std::size_t n_clients = split.closed_gallery.size();
    for (std::size_t i = 0; i < n_clients; ++i) {
      Extractor fn;
      switch (run.method) {
        case Method::kFedPalm:
          fn = [&, i](const DenseArray& img) { return deploy_closed_template(ctx, static_cast<int>(i), img); };
          break;
        case Method::kFedAvg:
          fn = [&](const DenseArray& img) { return plain_template(run.global_model, img); };
          break;
        case Method::kLocal:
          fn = [&, i](const DenseArray& img) { return plain_template(run.closed_models[i], img); };
          break;
      }
      const SetEval ev = eval_one_extractor(fn, split.closed_gallery[i], split.closed_query[i]);
      report.per_client_eer.push_back(ev.eer);
      absorb(ev);
    }
    double sum = 0.0;
    for (double e : report.per_client_eer) sum += e;
    report.mean_eer = sum / static_cast<double>(report.per_client_eer.size());
  } else {
    if (run.method == Method::kLocal) {
      // Personalized baselines have no open-set model; average the local
      // models' performance on the open sets.
      for (std::size_t i = 0; i < run.closed_models.size(); ++i) {
        Extractor fn = [&, i](const DenseArray& img) { return plain_template(run.closed_models[i], img); };
        const SetEval ev = eval_one_extractor(fn, split.open_gallery, split.open_query);
        report.per_client_eer.push_back(ev.eer);
        absorb(ev);
      }
      double sum = 0.0;
      for (double e : report.per_client_eer) sum += e;
      report.mean_eer = sum / static_cast<double>(report.per_client_eer.size());
    } else {
      Extractor fn;
      if (run.method == Method::kFedPalm) {
        fn = [&](const DenseArray& img) { return deploy_open_template(ctx, img); };
      } else {
        fn = [&](const DenseArray& img) { return plain_template(run.global_model, img); };
      }
      const SetEval ev = eval_one_extractor(fn, split.open_gallery, split.open_query);
      report.mean_eer = ev.eer;
      absorb(ev);
    }
  }

  report.genuine_pairs = pooled.genuine.size();
  report.impostor_pairs = pooled.impostor.size();
  report.roc = compute_roc(pooled);
  report.auc = report.roc.auc;
  report.acc = acc_sum / static_cast<double>(acc_count);
  return report;
}

EvalReport evaluate_run(const BenchmarkSplit& split, const FederationResult& run, std::size_t top_k) {
  EvalReport rep;
  rep.method = method_name(run.method);
  rep.closed = evaluate_scenario(split, run, Scenario::kClosed, top_k);
  rep.open = evaluate_scenario(split, run, Scenario::kOpen, top_k);
  return rep;
}

namespace {

nlohmann::json scenario_to_json(const ScenarioReport& r) {
  nlohmann::json j;
  j["per_client_eer"] = r.per_client_eer;
  j["mean_eer"] = r.mean_eer;
  j["auc"] = r.auc;
  j["acc"] = r.acc;
  j["genuine_pairs"] = r.genuine_pairs;
  j["impostor_pairs"] = r.impostor_pairs;
  return j;
}

}  // namespace

std::string eval_report_to_json(const EvalReport& report, std::uint64_t config_hash) {
  nlohmann::json j;
  j["format"] = "fedpalm-eval-report";
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["method"] = report.method;
  j["closed_set"] = scenario_to_json(report.closed);
  j["open_set"] = scenario_to_json(report.open);
  return j.dump(2) + "\n";
}

std::string roc_to_csv(const RocCurve& roc) {
  std::ostringstream os;
  os << "far,gar\n";
  char buf[80];
  for (const auto& [far, gar] : roc.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", far, gar);
    os << buf;
  }
  return os.str();
}

}  // namespace fedpalm
