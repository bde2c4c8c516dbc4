#include "fedpalm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedpalm/errors.hpp"
#include "fedpalm/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedpalm {

void SynthConfig::validate() const {
  if (clients == 0 || identities_per_client == 0 || samples_per_identity == 0) {
    throw ConfigError("synth: counts must be positive");
  }
  if (image_size < 16) throw ConfigError("synth: image_size must be >= 16");
  if (gratings_min < 1 || gratings_max < gratings_min) throw ConfigError("synth: bad grating range");
  if (jitter_px < 0 || jitter_rot < 0 || noise_sigma < 0 || domain_strength < 0) {
    throw ConfigError("synth: negative jitter/noise/domain strength");
  }
}

namespace {

struct Grating {
  double orient, freq, phase, amp;
};

struct IdentityTexture {
  std::vector<Grating> gratings;
  double bg_fx, bg_fy, bg_phase;
  double total_amp;
};

IdentityTexture identity_texture(const SynthConfig& cfg, int identity) {
  Rng rng(derive_seed(cfg.seed, {stream::kSynthIdentity, static_cast<std::uint64_t>(identity)}));
  IdentityTexture t;
  const std::size_t count =
      cfg.gratings_min + static_cast<std::size_t>(rng.below(cfg.gratings_max - cfg.gratings_min + 1));
  t.total_amp = 0.3;  // background share
  for (std::size_t g = 0; g < count; ++g) {
    Grating gr;
    gr.orient = rng.uniform(0.0, std::numbers::pi);
    gr.freq = rng.uniform(2.0, 6.0);  // cycles per image
    gr.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    gr.amp = rng.uniform(0.5, 1.0);
    t.total_amp += gr.amp;
    t.gratings.push_back(gr);
  }
  t.bg_fx = rng.uniform(0.3, 1.0);
  t.bg_fy = rng.uniform(0.3, 1.0);
  t.bg_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return t;
}

struct Domain {
  double gamma = 1.0, contrast = 1.0;
  std::size_t blur_passes = 0;
};

Domain client_domain(const SynthConfig& cfg, std::size_t client) {
  Rng rng(derive_seed(cfg.seed, {stream::kSynthDomain, client}));
  Domain d;
  const double s = cfg.domain_strength;
  d.gamma = std::exp(rng.uniform(-0.35, 0.35) * s);
  d.contrast = 1.0 + rng.uniform(-0.3, 0.3) * s;
  d.blur_passes = s > 0.0 ? static_cast<std::size_t>(rng.below(3)) : 0;
  return d;
}

void blur3(DenseArray& img) {
  const std::size_t h = img.rows(), w = img.cols();
  DenseArray out({h, w});
  auto px = [&](long long r, long long c) {
    r = std::clamp<long long>(r, 0, static_cast<long long>(h) - 1);
    c = std::clamp<long long>(c, 0, static_cast<long long>(w) - 1);
    return img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  static const double k[3] = {0.25, 0.5, 0.25};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
          acc += k[i + 1] * k[j + 1] * px(static_cast<long long>(r) + i, static_cast<long long>(c) + j);
      out.at(r, c) = acc;
    }
  }
  img = std::move(out);
}

std::string pad4(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", v);
  return buf;
}

std::string pad3(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", v);
  return buf;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.image_size = cfg.image_size;
  const std::size_t s = cfg.image_size;
  const double half = static_cast<double>(s) / 2.0;
  const double inv_s = 1.0 / static_cast<double>(s);
  const double two_pi = 2.0 * std::numbers::pi;

  for (std::size_t client = 0; client < cfg.clients; ++client) {
    const Domain dom = client_domain(cfg, client);
    for (std::size_t local = 0; local < cfg.identities_per_client; ++local) {
      const int identity = static_cast<int>(client * cfg.identities_per_client + local);
      const IdentityTexture tex = identity_texture(cfg, identity);
      for (std::size_t si = 0; si < cfg.samples_per_identity; ++si) {
        Rng rng(derive_seed(cfg.seed, {stream::kSynthSample, static_cast<std::uint64_t>(identity), si}));
        const double dx = rng.uniform(-cfg.jitter_px, cfg.jitter_px);
        const double dy = rng.uniform(-cfg.jitter_px, cfg.jitter_px);
        const double rot = rng.uniform(-cfg.jitter_rot, cfg.jitter_rot);
        const double cr = std::cos(rot), sr = std::sin(rot);

        DenseArray img({s, s});
        for (std::size_t r = 0; r < s; ++r) {
          const double v0 = static_cast<double>(r) - half;
          for (std::size_t c = 0; c < s; ++c) {
            const double u0 = static_cast<double>(c) - half;
            const double u = u0 * cr - v0 * sr + dx;
            const double v = u0 * sr + v0 * cr + dy;
            double raw = 0.3 * std::sin(two_pi * (tex.bg_fx * u + tex.bg_fy * v) * inv_s + tex.bg_phase);
            for (const Grating& g : tex.gratings) {
              const double axis = u * std::cos(g.orient) + v * std::sin(g.orient);
              raw += g.amp * std::cos(two_pi * g.freq * axis * inv_s + g.phase);
            }
            double p = 0.5 + 0.5 * raw / tex.total_amp;
            if (cfg.noise_sigma > 0.0) p += rng.normal(0.0, cfg.noise_sigma);
            img.at(r, c) = std::clamp(p, 0.0, 1.0);
          }
        }

        // Per-origin-client appearance transform.
        for (double& p : img.data()) {
          double v = std::pow(p, dom.gamma);
          v = dom.contrast * (v - 0.5) + 0.5;
          p = std::clamp(v, 0.0, 1.0);
        }
        for (std::size_t b = 0; b < dom.blur_passes; ++b) blur3(img);

        Sample smp;
        smp.image = std::move(img);
        smp.identity = identity;
        smp.client_hint = static_cast<int>(client);
        smp.id_name = pad4(identity);
        smp.file_name = pad3(static_cast<int>(si)) + ".pgm";
        ds.samples.push_back(std::move(smp));
      }
    }
  }
  ds.identity_count = static_cast<int>(cfg.clients * cfg.identities_per_client);
  return ds;
}

void BenchmarkSplit::audit() const {
  auto ids_of = [](const std::vector<Sample>& v) {
    std::set<int> ids;
    for (const auto& s : v) ids.insert(s.identity);
    return ids;
  };
  std::set<int> train_ids;
  for (std::size_t i = 0; i < train_shards.size(); ++i) {
    const auto shard_ids = ids_of(train_shards[i]);
    for (int id : shard_ids) {
      if (train_ids.count(id)) throw DatasetError("split audit: identity in two shards");
      train_ids.insert(id);
    }
  }
  const auto open_ids_g = ids_of(open_gallery);
  const auto open_ids_q = ids_of(open_query);
  for (int id : open_ids_g)
    if (train_ids.count(id)) throw DatasetError("split audit: open-gallery identity seen in training");
  for (int id : open_ids_q)
    if (train_ids.count(id)) throw DatasetError("split audit: open-query identity seen in training");

  auto keys_of = [](const std::vector<Sample>& v) {
    std::set<std::string> keys;
    for (const auto& s : v) keys.insert(s.id_name + "/" + s.file_name);
    return keys;
  };
  for (std::size_t i = 0; i < closed_gallery.size(); ++i) {
    const auto g = keys_of(closed_gallery[i]);
    for (const auto& s : closed_query[i]) {
      if (g.count(s.id_name + "/" + s.file_name)) {
        throw DatasetError("split audit: sample in both closed gallery and query");
      }
    }
    if (ids_of(closed_gallery[i]) != ids_of(closed_query[i])) {
      throw DatasetError("split audit: closed gallery/query identity mismatch");
    }
  }
  const auto og = keys_of(open_gallery);
  for (const auto& s : open_query) {
    if (og.count(s.id_name + "/" + s.file_name)) {
      throw DatasetError("split audit: sample in both open gallery and query");
    }
  }
}

namespace {

// Samples grouped per identity, preserving dataset order.
std::map<int, std::vector<const Sample*>> group_by_identity(const Dataset& ds) {
  std::map<int, std::vector<const Sample*>> g;
  for (const auto& s : ds.samples) g[s.identity].push_back(&s);
  return g;
}

}  // namespace

BenchmarkSplit make_benchmark_split(const Dataset& dataset, std::size_t n_clients,
                                    std::uint64_t seed) {
  if (n_clients < 2) throw ConfigError("split: need at least 2 clients");
  auto groups = group_by_identity(dataset);
  if (groups.size() < 2 * n_clients) throw ConfigError("split: need at least 2N identities");
  for (const auto& [id, samples] : groups) {
    if (samples.size() < 2) throw ConfigError("split: every identity needs >= 2 samples");
  }

  // Origin hints are usable when every identity maps to one hint in [0, N).
  bool hinted = true;
  std::map<int, int> hint_of;
  for (const auto& [id, samples] : groups) {
    const int h = samples.front()->client_hint;
    if (h < 0 || static_cast<std::size_t>(h) >= n_clients) {
      hinted = false;
      break;
    }
    for (const auto* s : samples) {
      if (s->client_hint != h) {
        hinted = false;
        break;
      }
    }
    hint_of[id] = h;
    if (!hinted) break;
  }

  std::vector<std::vector<int>> shard_ids(n_clients);
  std::vector<int> open_ids;
  if (hinted) {
    // Stratified: halve each origin domain; training identities stay on
    // their own domain's shard so shards keep distinct appearance.
    std::map<int, std::vector<int>> by_hint;
    for (const auto& [id, h] : hint_of) by_hint[h].push_back(id);
    for (auto& [h, ids] : by_hint) {
      Rng rng(derive_seed(seed, {stream::kSplit, static_cast<std::uint64_t>(h)}));
      rng.shuffle(ids);
      const std::size_t half = ids.size() / 2;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i < half) {
          shard_ids[static_cast<std::size_t>(h)].push_back(ids[i]);
        } else {
          open_ids.push_back(ids[i]);
        }
      }
    }
  } else {
    std::vector<int> ids;
    for (const auto& [id, samples] : groups) ids.push_back(id);
    Rng rng(derive_seed(seed, {stream::kSplit}));
    rng.shuffle(ids);
    const std::size_t half = ids.size() / 2;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i < half) {
        shard_ids[i % n_clients].push_back(ids[i]);
      } else {
        open_ids.push_back(ids[i]);
      }
    }
  }
  for (const auto& ids : shard_ids) {
    if (ids.empty()) throw ConfigError("split: a shard received no identities");
  }
  std::sort(open_ids.begin(), open_ids.end());

  BenchmarkSplit split;
  split.train_shards.resize(n_clients);
  split.closed_gallery.resize(n_clients);
  split.closed_query.resize(n_clients);

  // Dense training labels, contiguous per client in client order.
  int next_label = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    std::sort(shard_ids[c].begin(), shard_ids[c].end());
    for (int id : shard_ids[c]) split.label_of_identity[id] = next_label++;
  }
  split.total_classes = static_cast<std::size_t>(next_label);

  auto halve = [&](int id, std::vector<Sample>& first_half, std::vector<Sample>& second_half,
                   int label) {
    const auto& samples = groups.at(id);
    const std::size_t g = (samples.size() + 1) / 2;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Sample s = *samples[i];
      s.label = label;
      (i < g ? first_half : second_half).push_back(std::move(s));
    }
  };

  for (std::size_t c = 0; c < n_clients; ++c) {
    for (int id : shard_ids[c]) {
      halve(id, split.closed_gallery[c], split.closed_query[c], split.label_of_identity.at(id));
    }
    split.train_shards[c] = split.closed_gallery[c];
  }
  for (int id : open_ids) halve(id, split.open_gallery, split.open_query, -1);

  split.audit();
  return split;
}

// --- PGM ---

void write_pgm(const std::string& path, const DenseArray& image) {
  if (image.rank() != 2) throw DimensionError("write_pgm: rank-2 image required");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("write_pgm: cannot open " + path);
  os << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  std::vector<unsigned char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write_pgm: write failed " + path);
}

namespace {

int pgm_token(std::istream& is, const std::string& path) {
  // Skip whitespace and '#' comment lines, then read one integer.
  int ch = is.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = is.get();
    } else if (std::isspace(ch)) {
      ch = is.get();
    } else {
      break;
    }
  }
  if (ch == EOF || !std::isdigit(ch)) throw ParseError("read_pgm: malformed header in " + path);
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > 1 << 24) throw ParseError("read_pgm: absurd header value in " + path);
    ch = is.get();
  }
  return static_cast<int>(v);
}

}  // namespace

DenseArray read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_pgm: cannot open " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5') throw ParseError("read_pgm: not a binary PGM (P5): " + path);
  const int w = pgm_token(is, path);
  const int h = pgm_token(is, path);
  const int maxval = pgm_token(is, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw ParseError("read_pgm: unsupported dimensions/maxval in " + path);
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw ParseError("read_pgm: truncated raster in " + path);
  DenseArray img({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = bytes[i] * inv;
  return img;
}

Dataset load_image_directory(const std::string& root) {
  Dataset ds;
  if (!fs::exists(root)) throw IoError("load_image_directory: no such directory: " + root);
  std::vector<std::string> id_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) id_dirs.push_back(entry.path().filename().string());
  }
  std::sort(id_dirs.begin(), id_dirs.end());
  for (std::size_t idx = 0; idx < id_dirs.size(); ++idx) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / id_dirs[idx])) {
      if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
        files.push_back(entry.path().filename().string());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Sample s;
      s.image = read_pgm((fs::path(root) / id_dirs[idx] / f).string());
      s.identity = static_cast<int>(idx);
      s.id_name = id_dirs[idx];
      s.file_name = f;
      if (ds.image_size == 0) {
        ds.image_size = s.image.rows();
      }
      if (s.image.rows() != ds.image_size || s.image.cols() != ds.image_size) {
        throw DatasetError("load_image_directory: inconsistent dimensions at " + id_dirs[idx] + "/" + f);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  ds.identity_count = static_cast<int>(id_dirs.size());
  return ds;
}

void write_dataset_tree(const std::string& root, const Dataset& dataset) {
  fs::create_directories(root);
  for (const auto& s : dataset.samples) {
    const fs::path dir = fs::path(root) / s.id_name;
    fs::create_directories(dir);
    write_pgm((dir / s.file_name).string(), s.image);
  }
}

// --- Manifest ---

std::string manifest_to_json(const BenchmarkSplit& split, const Dataset& dataset,
                             std::uint64_t config_hash, std::uint64_t seed,
                             std::size_t n_clients) {
  (void)dataset;
  json identities = json::object();
  json samples = json::object();
  for (std::size_t c = 0; c < split.train_shards.size(); ++c) {
    for (const auto& s : split.closed_gallery[c]) {
      identities[s.id_name] = {{"role", "shard"},
                               {"shard", c},
                               {"label", split.label_of_identity.at(s.identity)}};
      samples[s.id_name + "/" + s.file_name] = "closed_gallery";
    }
    for (const auto& s : split.closed_query[c]) {
      samples[s.id_name + "/" + s.file_name] = "closed_query";
    }
  }
  for (const auto& s : split.open_gallery) {
    identities[s.id_name] = {{"role", "open"}};
    samples[s.id_name + "/" + s.file_name] = "open_gallery";
  }
  for (const auto& s : split.open_query) {
    identities[s.id_name] = {{"role", "open"}};
    samples[s.id_name + "/" + s.file_name] = "open_query";
  }
  json j = {{"format", "fedpalm-split-manifest"},
            {"version", 1},
            {"config_hash", config_hash},
            {"seed", seed},
            {"clients", n_clients},
            {"total_classes", split.total_classes},
            {"identities", identities},
            {"samples", samples}};
  return j.dump(2) + "\n";
}

BenchmarkSplit split_from_manifest_json(const Dataset& dataset, const std::string& json_text) {
  json j = json::parse(json_text);
  if (j.value("format", "") != "fedpalm-split-manifest") {
    throw ParseError("manifest: unrecognized format");
  }
  const std::size_t n_clients = j.at("clients").get<std::size_t>();
  BenchmarkSplit split;
  split.train_shards.resize(n_clients);
  split.closed_gallery.resize(n_clients);
  split.closed_query.resize(n_clients);
  split.total_classes = j.at("total_classes").get<std::size_t>();

  const auto& identities = j.at("identities");
  const auto& samples = j.at("samples");
  for (const auto& s : dataset.samples) {
    if (!identities.contains(s.id_name)) {
      throw DatasetError("manifest: identity not in manifest: " + s.id_name);
    }
    const auto& ident = identities.at(s.id_name);
    const std::string key = s.id_name + "/" + s.file_name;
    if (!samples.contains(key)) throw DatasetError("manifest: sample not in manifest: " + key);
    const std::string role = samples.at(key).get<std::string>();

    Sample copy = s;
    if (ident.at("role") == "shard") {
      const std::size_t shard = ident.at("shard").get<std::size_t>();
      if (shard >= n_clients) throw DatasetError("manifest: shard index out of range");
      copy.label = ident.at("label").get<int>();
      split.label_of_identity[copy.identity] = copy.label;
      if (role == "closed_gallery") {
        split.closed_gallery[shard].push_back(copy);
      } else if (role == "closed_query") {
        split.closed_query[shard].push_back(copy);
      } else {
        throw DatasetError("manifest: bad role for training identity: " + role);
      }
    } else {
      copy.label = -1;
      if (role == "open_gallery") {
        split.open_gallery.push_back(copy);
      } else if (role == "open_query") {
        split.open_query.push_back(copy);
      } else {
        throw DatasetError("manifest: bad role for open identity: " + role);
      }
    }
  }
  for (std::size_t c = 0; c < n_clients; ++c) split.train_shards[c] = split.closed_gallery[c];
  split.audit();
  return split;
}

}  // namespace fedpalm
