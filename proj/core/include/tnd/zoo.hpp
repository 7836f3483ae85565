#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnd/data.hpp"
#include "tnd/nn.hpp"
#include "tnd/trigger.hpp"

namespace tnd {

struct ZooConfig {
  std::size_t num_clean = 10;
  std::size_t num_trojan = 10;
  std::size_t num_classes = 5;
  Shape image_shape{3, 16, 16};
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 200;
  /// Trojan model i uses poison_ratios[i % size].
  std::vector<double> poison_ratios{0.1};
  /// Trojan model i uses shapes[i % size]; colour, position and target are drawn from the seed.
  std::vector<TriggerShape> shapes{TriggerShape::dot, TriggerShape::cross, TriggerShape::triangle,
                                   TriggerShape::square};
  std::size_t trigger_side = 3;
  /// Conv channel counts and the width d of r(x).
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t hidden_width = 256;
  /// Every n-th Trojan model (n > 0) carries a second trigger with its own target label.
  std::size_t two_target_every = 0;
  TrainConfig train{.epochs = 6, .batch_size = 32, .learning_rate = 0.02, .momentum = 0.9, .seed = 0};
  /// Validity floors for Trojan entries.
  double min_asr = 0.95;
  double max_accuracy_gap = 0.03;
  std::uint64_t seed = 1;
  /// Seeds the synthetic data; zoos sharing it see identical train and test sets.
  std::uint64_t data_seed = 1;
  std::string id_prefix;
  std::size_t threads = 0;
};

nlohmann::json zoo_config_to_json(const ZooConfig& cfg);
ZooConfig zoo_config_from_json(const nlohmann::json& j);

enum class EntryStatus { valid, rejected, failed };
std::string to_string(EntryStatus status);

struct ZooEntry {
  std::string model_id;
  std::string path;  ///< relative to the zoo directory
  Provenance provenance;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t data_seed = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double attack_success_rate = 0.0;  ///< min over attacks; 0 for clean models
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  EntryStatus status = EntryStatus::valid;
  std::string note;
  std::string hash;  ///< FNV-1a of the model file
};

struct ZooManifest {
  std::string name;
  ZooConfig config;
  std::vector<ZooEntry> entries;
  std::string test_set_path;  ///< relative path of the saved clean test split
  double clean_accuracy_mean = 0.0;

  /// Entries with status valid, clean first.
  std::vector<const ZooEntry*> usable() const;
  std::vector<const ZooEntry*> rejected() const;
};

nlohmann::json to_json(const ZooManifest& m);
ZooManifest manifest_from_json(const nlohmann::json& j);

/// Trains and saves every model under `dir` (models/, test.tscp, manifest.json). Trojan entries
/// below the ASR floor or outside the accuracy gap are marked rejected; a diverging model is
/// marked failed and the build continues.
ZooManifest build_zoo(const ZooConfig& cfg, const std::filesystem::path& dir);

ZooManifest load_manifest(const std::filesystem::path& dir);
ModelBundle load_entry(const std::filesystem::path& dir, const ZooEntry& entry);
DatasetBundle load_test_set(const std::filesystem::path& dir, const ZooManifest& m);

struct ValidationIssue {
  std::string model_id;
  std::string message;
};

/// Re-hashes every file, re-checks the validity floors from the stored numbers and, with
/// `recompute`, re-measures ASR and accuracy from the saved weights.
std::vector<ValidationIssue> validate_zoo(const std::filesystem::path& dir, bool recompute = false);

/// The training and test splits a config describes.
DatasetBundle zoo_train_set(const ZooConfig& cfg);
DatasetBundle zoo_test_set(const ZooConfig& cfg);

}  // namespace tnd
