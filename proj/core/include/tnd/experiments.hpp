#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnd/df_tnd.hpp"
#include "tnd/dl_tnd.hpp"
#include "tnd/metrics.hpp"
#include "tnd/zoo.hpp"

namespace tnd {

/// One model's detector output next to its ground truth.
struct ModelScore {
  std::string model_id;
  bool trojan = false;
  std::vector<int> true_targets;
  double suspicion = 0.0;
  /// argmax label of the per-label statistic.
  std::size_t top_label = 0;
  std::vector<double> per_label;
  /// DF only: per-seed l1-mass ratio inside the trigger box over the area baseline. Trojan models use
  /// their own trigger box (best over attacks), clean models the mean over the zoo's trigger boxes.
  std::vector<double> mass_ratio;
  bool failed = false;
  std::string note;
  nlohmann::json report;
};

struct MetricsReport {
  std::string detector;  ///< "dl" or "df"
  std::string variant;   ///< e.g. "q50" or "noise"
  std::vector<ModelScore> models;
  RocCurve roc;
  PrCurve pr;
  RocPoint youden;
  Confusion at_youden;
  /// Share of Trojan models flagged at the Youden threshold whose top label is a true target.
  double target_accuracy = 0.0;
  std::size_t detected_trojans = 0;
  /// Thresholds reaching TPR >= 0.9 at FPR <= 0.1.
  ThresholdRange calibrated_range;
};

/// ROC, PR, Youden point, target-label accuracy and threshold range over the non-failed scores.
/// Throws DataError if the surviving models are all of one class.
MetricsReport summarize(std::string detector, std::string variant, std::vector<ModelScore> models);

/// Keeps the models whose ids pass `keep`, then summarizes again.
MetricsReport subset(const MetricsReport& r, const std::function<bool(const ModelScore&)>& keep,
                     const std::string& variant);

struct DLExperimentConfig {
  std::size_t per_class = 5;
  std::uint64_t valset_seed = 7;
  DLConfig detector;
  std::vector<double> quantiles{25.0, 50.0, 75.0};
  std::size_t threads = 0;
};

struct DFExperimentConfig {
  DFConfig detector;
  std::vector<SeedSource> sources{SeedSource::noise, SeedSource::clean};
  std::uint64_t seed = 11;
  std::size_t threads = 0;
};

/// A zoo directory with its manifest; detectors only ever receive the loaded network.
struct ZooHandle {
  std::filesystem::path dir;
  ZooManifest manifest;

  static ZooHandle open(const std::filesystem::path& dir);
};

/// DL-TND on every usable model of every zoo; one report per quantile level (same solves).
std::vector<MetricsReport> run_dl_experiment(const std::vector<ZooHandle>& zoos, const DLExperimentConfig& cfg);
/// DF-TND on every usable model; one report per seed source.
std::vector<MetricsReport> run_df_experiment(const std::vector<ZooHandle>& zoos, const DFExperimentConfig& cfg);

/// PR curve for a zoo with few positives: keeps the first `positives` Trojan models and every clean one.
MetricsReport imbalanced_eval(const MetricsReport& full, std::size_t positives);

nlohmann::json to_json(const MetricsReport& r, bool include_reports = false);

}  // namespace tnd
