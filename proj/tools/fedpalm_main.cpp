// Command-line front end: data generation, training (fedpalm / fedavg /
// local), evaluation and the routing-width ablation.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedpalm/checkpoint.hpp"
#include "fedpalm/data.hpp"
#include "fedpalm/errors.hpp"
#include "fedpalm/eval.hpp"
#include "fedpalm/federation.hpp"
#include "fedpalm/params.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedpalm;

namespace {

// ---------------------------------------------------------------------
// Config handling: flat JSON, explicit schema, unknown keys rejected.
// ---------------------------------------------------------------------

json default_config() {
  return json{
      {"seed", 1},
      {"method", "fedpalm"},
      {"out", "runs/out"},
      {"data_dir", "data/synth"},
      // federation
      {"clients", 8},
      {"rounds", 9},
      {"local_epochs", 2},
      {"k", 3},
      {"lr", 0.01},
      {"batch_size", 8},
      {"tau", 0.07},
      {"w_ce", 0.8},
      {"w_con", 0.2},
      {"teim_from_start", false},
      {"parallel", true},
      // model
      {"filters", 8},
      {"kernel_size", 9},
      {"stride", 2},
      {"pool_grid", 4},
      {"hidden", 64},
      {"embed_dim", 32},
      // synthetic data
      {"identities_per_client", 16},
      {"samples_per_identity", 10},
      {"image_size", 32},
      {"gratings_min", 3},
      {"gratings_max", 5},
      {"jitter_px", 2.5},
      {"jitter_rot", 0.15},
      {"noise_sigma", 0.08},
      {"domain_strength", 1.2},
  };
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json user;
  try {
    is >> user;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  json cfg = default_config();
  for (const auto& [key, value] : user.items()) {
    if (!cfg.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (cfg[key].type() != value.type() &&
        !(cfg[key].is_number() && value.is_number())) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
    cfg[key] = value;
  }
  return cfg;
}

// Hash of the semantic configuration; the output location does not
// influence any computed value, so moving a run must not change its hash.
std::uint64_t config_hash(const json& cfg) {
  json semantic = cfg;
  semantic.erase("out");
  return fnv1a(semantic.dump());
}

FederationConfig to_federation_config(const json& cfg) {
  FederationConfig f;
  f.clients = cfg.at("clients").get<std::size_t>();
  f.rounds = cfg.at("rounds").get<std::size_t>();
  f.local_epochs = cfg.at("local_epochs").get<std::size_t>();
  f.top_k = cfg.at("k").get<std::size_t>();
  f.lr = cfg.at("lr").get<double>();
  f.batch_size = cfg.at("batch_size").get<std::size_t>();
  f.tau = cfg.at("tau").get<double>();
  f.weights.w_ce = cfg.at("w_ce").get<double>();
  f.weights.w_con = cfg.at("w_con").get<double>();
  f.seed = cfg.at("seed").get<std::uint64_t>();
  f.teim_from_start = cfg.at("teim_from_start").get<bool>();
  f.parallel_clients = cfg.at("parallel").get<bool>();
  f.bank.filters = cfg.at("filters").get<std::size_t>();
  f.bank.kernel_size = cfg.at("kernel_size").get<std::size_t>();
  f.bank.stride = cfg.at("stride").get<std::size_t>();
  f.bank.pool_grid = cfg.at("pool_grid").get<std::size_t>();
  f.hidden = cfg.at("hidden").get<std::size_t>();
  f.embed_dim = cfg.at("embed_dim").get<std::size_t>();
  f.validate();
  return f;
}

SynthConfig to_synth_config(const json& cfg) {
  SynthConfig s;
  s.clients = cfg.at("clients").get<std::size_t>();
  s.identities_per_client = cfg.at("identities_per_client").get<std::size_t>();
  s.samples_per_identity = cfg.at("samples_per_identity").get<std::size_t>();
  s.image_size = cfg.at("image_size").get<std::size_t>();
  s.gratings_min = cfg.at("gratings_min").get<std::size_t>();
  s.gratings_max = cfg.at("gratings_max").get<std::size_t>();
  s.jitter_px = cfg.at("jitter_px").get<double>();
  s.jitter_rot = cfg.at("jitter_rot").get<double>();
  s.noise_sigma = cfg.at("noise_sigma").get<double>();
  s.domain_strength = cfg.at("domain_strength").get<double>();
  s.seed = cfg.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for hashing: " + path.string());
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a(data.data(), data.size());
}

// ---------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------

int cmd_gen_data(const json& cfg) {
  const SynthConfig synth = to_synth_config(cfg);
  const std::size_t n_clients = cfg.at("clients").get<std::size_t>();
  const std::string out = cfg.at("data_dir").get<std::string>();
  const std::uint64_t hash = config_hash(cfg);

  Dataset ds = generate_synthetic(synth);
  BenchmarkSplit split = make_benchmark_split(ds, n_clients, synth.seed);
  write_dataset_tree(out, ds);
  write_text(fs::path(out) / "manifest.json",
             manifest_to_json(split, ds, hash, synth.seed, n_clients));
  std::cout << "wrote " << ds.samples.size() << " images for " << ds.identity_count
            << " identities under " << out << "\n";
  std::cout << "training classes: " << split.total_classes << ", open identities: "
            << (ds.identity_count - static_cast<int>(split.label_of_identity.size())) << "\n";
  return 0;
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

struct LoadedData {
  Dataset dataset;
  BenchmarkSplit split;
  std::uint64_t manifest_hash;
};

LoadedData load_data(const std::string& data_dir) {
  LoadedData d;
  const fs::path manifest = fs::path(data_dir) / "manifest.json";
  if (!fs::exists(manifest)) throw IoError("no manifest at " + manifest.string() + " (run gen-data first)");
  d.dataset = load_image_directory(data_dir);
  std::ifstream is(manifest);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  d.split = split_from_manifest_json(d.dataset, text);
  d.manifest_hash = fnv1a(text.data(), text.size());
  return d;
}

void write_model_checkpoint(const fs::path& path, const ModelBundle& model, std::uint64_t hash) {
  Checkpoint ck;
  ck.config_hash = hash;
  ck.components.emplace_back("expert", model.expert);
  ck.components.emplace_back("embedding", model.embedding);
  fs::create_directories(path.parent_path());
  save_checkpoint(path.string(), ck);
}

std::vector<std::string> write_checkpoints(const fs::path& dir, const FederationResult& run,
                                           std::uint64_t hash) {
  std::vector<std::string> files;
  auto emit = [&](const fs::path& p, const ModelBundle& m) {
    write_model_checkpoint(p, m, hash);
    files.push_back(p.string());
  };
  switch (run.method) {
    case Method::kFedPalm:
      for (std::size_t i = 0; i < run.closed_models.size(); ++i) {
        emit(dir / ("client" + std::to_string(i) + "_closed.fpck"), run.closed_models[i]);
      }
      emit(dir / "global_open.fpck", run.global_model);
      break;
    case Method::kFedAvg:
      emit(dir / "global.fpck", run.global_model);
      break;
    case Method::kLocal:
      for (std::size_t i = 0; i < run.closed_models.size(); ++i) {
        emit(dir / ("client" + std::to_string(i) + ".fpck"), run.closed_models[i]);
      }
      break;
  }
  return files;
}

int cmd_train(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const FederationConfig fed = to_federation_config(cfg);
  const Method method = method_from_string(cfg.at("method").get<std::string>());
  const fs::path out = cfg.at("out").get<std::string>();
  const std::uint64_t hash = config_hash(cfg);

  LoadedData data = load_data(cfg.at("data_dir").get<std::string>());
  FederationResult run = run_method(method, fed, data.split);

  write_text(out / "round_log.csv", run.round_log.to_csv());
  std::vector<std::string> final_files = write_checkpoints(out / "checkpoints" / "final", run, hash);
  if (run.has_boundary_snapshot) {
    const fs::path bdir = out / "checkpoints" / "boundary";
    for (std::size_t i = 0; i < run.boundary_closed_models.size(); ++i) {
      write_model_checkpoint(bdir / ("client" + std::to_string(i) + "_closed.fpck"),
                             run.boundary_closed_models[i], hash);
    }
    write_model_checkpoint(bdir / "global_open.fpck", run.boundary_global_model, hash);
  }

  json hashes_by_round = json::array();
  for (const auto& per_client : run.closed_expert_hashes) {
    json row = json::array();
    for (auto h : per_client) row.push_back(h);
    hashes_by_round.push_back(row);
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json meta{{"format", "fedpalm-run-meta"},
            {"version", 1},
            {"config", cfg},
            {"config_hash", hash},
            {"method", method_name(method)},
            {"seed", fed.seed},
            {"phase_boundary", fed.phase_boundary()},
            {"total_classes", data.split.total_classes},
            {"data_manifest_hash", data.manifest_hash},
            {"closed_expert_hashes_by_round", hashes_by_round},
            {"wall_time_s", wall}};
  json file_hashes = json::object();
  file_hashes["round_log.csv"] = hash_file(out / "round_log.csv");
  for (const auto& f : final_files) {
    file_hashes[fs::relative(f, out).string()] = hash_file(f);
  }
  meta["file_hashes"] = file_hashes;
  write_text(out / "run_meta.json", meta.dump(2) + "\n");

  std::cout << "trained " << method_name(method) << " for " << fed.rounds << " rounds ("
            << fed.clients << " clients) in " << wall << " s\n";
  std::cout << "artifacts under " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

ModelBundle load_model_checkpoint(const fs::path& path, const FederationConfig& fed,
                                  std::size_t classes, std::uint64_t expected_hash) {
  Checkpoint ck = load_checkpoint(path.string());
  if (ck.config_hash != expected_hash) {
    throw ConfigError("checkpoint " + path.string() + " was written by a different config (hash mismatch)");
  }
  ModelBundle m;
  m.bank = fed.bank;
  m.emb.input_len = fed.bank.feature_len();
  m.emb.hidden = fed.hidden;
  m.emb.embed_dim = fed.embed_dim;
  m.emb.classes = classes;
  m.expert = ck.component("expert");
  m.embedding = ck.component("embedding");
  return m;
}

FederationResult load_run(const fs::path& run_dir, const json& meta, const FederationConfig& fed) {
  const std::uint64_t hash = meta.at("config_hash").get<std::uint64_t>();
  const std::size_t classes = meta.at("total_classes").get<std::size_t>();
  const Method method = method_from_string(meta.at("method").get<std::string>());
  const fs::path dir = run_dir / "checkpoints" / "final";

  FederationResult run;
  run.method = method;
  switch (method) {
    case Method::kFedPalm:
      for (std::size_t i = 0; i < fed.clients; ++i) {
        run.closed_models.push_back(load_model_checkpoint(
            dir / ("client" + std::to_string(i) + "_closed.fpck"), fed, classes, hash));
        run.shared_experts.push_back(run.closed_models.back().expert);
      }
      run.global_model = load_model_checkpoint(dir / "global_open.fpck", fed, classes, hash);
      break;
    case Method::kFedAvg:
      run.global_model = load_model_checkpoint(dir / "global.fpck", fed, classes, hash);
      break;
    case Method::kLocal:
      for (std::size_t i = 0; i < fed.clients; ++i) {
        run.closed_models.push_back(load_model_checkpoint(
            dir / ("client" + std::to_string(i) + ".fpck"), fed, classes, hash));
      }
      break;
  }
  return run;
}

int cmd_eval(const std::string& run_dir_arg) {
  const fs::path run_dir = run_dir_arg;
  const fs::path meta_path = run_dir / "run_meta.json";
  if (!fs::exists(meta_path)) throw IoError("no run_meta.json under " + run_dir.string());
  std::ifstream is(meta_path);
  json meta;
  is >> meta;

  const json cfg = meta.at("config");
  const std::uint64_t hash = meta.at("config_hash").get<std::uint64_t>();
  if (config_hash(cfg) != hash) {
    throw ConfigError("run_meta.json is inconsistent: recorded hash does not match its config");
  }
  const FederationConfig fed = to_federation_config(cfg);

  LoadedData data = load_data(cfg.at("data_dir").get<std::string>());
  if (data.manifest_hash != meta.at("data_manifest_hash").get<std::uint64_t>()) {
    throw ConfigError("dataset manifest changed since training (hash mismatch)");
  }

  FederationResult run = load_run(run_dir, meta, fed);
  EvalReport report = evaluate_run(data.split, run, fed.top_k);

  write_text(run_dir / "eval_report.json", eval_report_to_json(report, hash));
  write_text(run_dir / "roc_closed.csv", roc_to_csv(report.closed.roc));
  write_text(run_dir / "roc_open.csv", roc_to_csv(report.open.roc));

  std::cout << "method: " << report.method << "\n";
  std::cout << "closed-set EER per client:";
  for (double e : report.closed.per_client_eer) std::cout << " " << e * 100 << "%";
  std::cout << "\nclosed-set mean EER: " << report.closed.mean_eer * 100 << "%  (AUC "
            << report.closed.auc << ", ACC " << report.closed.acc * 100 << "%)\n";
  std::cout << "open-set EER: " << report.open.mean_eer * 100 << "%  (AUC " << report.open.auc
            << ", ACC " << report.open.acc * 100 << "%)\n";
  return 0;
}

// ---------------------------------------------------------------------
// ablate-k
// ---------------------------------------------------------------------

int cmd_ablate_k(const json& base_cfg, const std::vector<std::size_t>& k_list) {
  const fs::path out = base_cfg.at("out").get<std::string>();
  LoadedData data = load_data(base_cfg.at("data_dir").get<std::string>());

  struct Row {
    std::string name;
    double eer, acc, auc;
  };
  std::vector<Row> rows;

  auto run_variant = [&](const std::string& name, json cfg) {
    const FederationConfig fed = to_federation_config(cfg);
    const Method method = method_from_string(cfg.at("method").get<std::string>());
    FederationResult run = run_method(method, fed, data.split);
    EvalReport report = evaluate_run(data.split, run, fed.top_k);
    write_text(out / name / "round_log.csv", run.round_log.to_csv());
    write_text(out / name / "eval_report.json", eval_report_to_json(report, config_hash(cfg)));
    rows.push_back({name, report.open.mean_eer, report.open.acc, report.open.auc});
    std::cout << "variant " << name << " done (open EER " << report.open.mean_eer * 100 << "%)\n";
  };

  {
    json cfg = base_cfg;
    cfg["method"] = "fedavg";
    run_variant("baseline", cfg);
  }
  {
    json cfg = base_cfg;
    cfg["method"] = "fedpalm";
    cfg["teim_from_start"] = true;
    run_variant("fedpalm-star", cfg);
  }
  for (std::size_t k : k_list) {
    json cfg = base_cfg;
    cfg["method"] = "fedpalm";
    cfg["k"] = k;
    run_variant("fedpalm-" + std::to_string(k), cfg);
  }

  // Merged report: variants as columns, EER/ACC/AUC as rows.
  std::ostringstream table;
  table << "metric";
  for (const auto& r : rows) table << "," << r.name;
  table << "\nEER";
  for (const auto& r : rows) table << "," << r.eer;
  table << "\nACC";
  for (const auto& r : rows) table << "," << r.acc;
  table << "\nAUC";
  for (const auto& r : rows) table << "," << r.auc;
  table << "\n";

  json jrows = json::array();
  for (const auto& r : rows) {
    jrows.push_back({{"variant", r.name}, {"eer", r.eer}, {"acc", r.acc}, {"auc", r.auc}});
  }
  json report{{"format", "fedpalm-ablation-report"},
              {"version", 1},
              {"config_hash", config_hash(base_cfg)},
              {"rows", jrows},
              {"reference_note",
               "Full-scale reference trend (8 clients, licensed palmprint data): EER 6.71% at K=1, "
               "6.18% at K=3, 7.89% at K=8; from-start integration 7.90%. Informational only; not "
               "reproducible at desk scale."}};
  write_text(out / "ablation_report.json", report.dump(2) + "\n");
  write_text(out / "ablation_table.csv", table.str());

  std::cout << "\n" << table.str();
  std::cout << "note: full-scale reference trend: K=1 6.71%, K=3 6.18%, K=8 7.89%, from-start "
               "7.90% (informational; not reproducible at desk scale)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated palmprint verification simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> method_override, out_override;
  std::optional<std::size_t> k_override;
  bool teim_from_start = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "path to the flat JSON config");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--out", out_override, "override the output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark dataset");
  add_common(gen, true);

  auto* train = app.add_subcommand("train", "train fedpalm or a baseline on generated data");
  add_common(train, true);
  train->add_option("--method", method_override, "fedpalm | fedavg | local");
  train->add_option("--k", k_override, "routing width K");
  train->add_flag("--teim-from-start", teim_from_start, "activate feature interaction from round 0");

  std::string run_dir;
  auto* eval = app.add_subcommand("eval", "evaluate a finished run directory");
  eval->add_option("--run", run_dir, "run directory written by train")->required();

  std::string k_list_arg = "";
  bool ablate_star = false;
  auto* ablate = app.add_subcommand("ablate-k", "routing-width ablation study");
  add_common(ablate, true);
  ablate->add_option("--k", k_list_arg, "comma-separated K list (default: 1,3,N)");
  ablate->add_flag("--teim-from-start", ablate_star,
                   "include the from-start variant (always included)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (eval->parsed()) return cmd_eval(run_dir);

    json cfg = load_config(config_path);
    if (seed_override) cfg["seed"] = *seed_override;
    if (method_override) cfg["method"] = *method_override;
    if (out_override) cfg["out"] = *out_override;
    if (k_override) cfg["k"] = *k_override;
    if (teim_from_start) cfg["teim_from_start"] = true;
    // A data override doubles as the gen-data output directory.
    if (out_override && gen->parsed()) cfg["data_dir"] = *out_override;

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (ablate->parsed()) {
      (void)ablate_star;  // the from-start variant always runs
      cfg["teim_from_start"] = false;  // per-variant, not inherited
      std::vector<std::size_t> k_list;
      if (k_list_arg.empty()) {
        k_list = {1, 3, cfg.at("clients").get<std::size_t>()};
      } else {
        std::stringstream ss(k_list_arg);
        std::string item;
        while (std::getline(ss, item, ',')) {
          k_list.push_back(static_cast<std::size_t>(std::stoul(item)));
        }
      }
      return cmd_ablate_k(cfg, k_list);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
