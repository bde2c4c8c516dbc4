#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedpalm/array.hpp"

namespace fedpalm {

struct Sample {
  DenseArray image;  // H x W grayscale in [0,1]
  int identity = -1;      // global identity id
  int client_hint = -1;   // origin client/domain, -1 when unknown
  int label = -1;         // dense training label, -1 for open identities
  std::string id_name;    // identity directory name
  std::string file_name;  // sample file name
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t image_size = 0;
  int identity_count = 0;
};

// Synthetic palmprint-texture generator: each identity is a fixed mixture
// of oriented sinusoidal gratings on a smooth background; samples add
// seeded translation/rotation jitter and pixel noise; every origin
// client's identities pass through that client's appearance transform
// (gamma / contrast / blur), so shards end up non-IID.
struct SynthConfig {
  std::size_t clients = 4;
  std::size_t identities_per_client = 16;
  std::size_t samples_per_identity = 10;
  std::size_t image_size = 32;
  std::size_t gratings_min = 3;
  std::size_t gratings_max = 5;
  double jitter_px = 2.5;
  double jitter_rot = 0.15;
  double noise_sigma = 0.08;
  double domain_strength = 1.2;
  std::uint64_t seed = 1;

  void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

// The benchmark split: identity-isolated training shards, closed-set
// gallery/query over training identities, open-set gallery/query over
// identities no client ever trains on. Training shards are the gallery
// halves, so query samples never enter training.
struct BenchmarkSplit {
  std::vector<std::vector<Sample>> train_shards;    // == closed_gallery per client
  std::vector<std::vector<Sample>> closed_gallery;  // per client
  std::vector<std::vector<Sample>> closed_query;    // per client
  std::vector<Sample> open_gallery;
  std::vector<Sample> open_query;
  std::map<int, int> label_of_identity;  // training identities only
  std::size_t total_classes = 0;         // M_total

  // Throws if any identity-isolation or gallery/query invariant is broken.
  void audit() const;
};

BenchmarkSplit make_benchmark_split(const Dataset& dataset, std::size_t n_clients,
                                    std::uint64_t seed);

// --- PGM (P5, 8-bit) ---
void write_pgm(const std::string& path, const DenseArray& image);
DenseArray read_pgm(const std::string& path);

// Layout <root>/<identity>/<sample>.pgm; identities map to dense indices
// in lexicographic directory order.
Dataset load_image_directory(const std::string& root);
void write_dataset_tree(const std::string& root, const Dataset& dataset);

// --- Split manifest (JSON) ---
// identity -> shard index or "open"; sample -> gallery/query role.
std::string manifest_to_json(const BenchmarkSplit& split, const Dataset& dataset,
                             std::uint64_t config_hash, std::uint64_t seed,
                             std::size_t n_clients);
BenchmarkSplit split_from_manifest_json(const Dataset& dataset, const std::string& json_text);

}  // namespace fedpalm
