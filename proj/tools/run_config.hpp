#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "tnd/df_tnd.hpp"
#include "tnd/dl_tnd.hpp"
#include "tnd/experiments.hpp"
#include "tnd/zoo.hpp"

namespace tnd::cli {

/// Contents of a --config file. Every section is optional:
///
///   {
///     "seed": 1,
///     "threads": 0,
///     "zoo": { ZooConfig fields },
///     "dl": { DLConfig fields, "solver": { SolverConfig fields } },
///     "df": { DFConfig fields, "solver": { SolverConfig fields } },
///     "experiment": { "per_class": 5, "valset_seed": 7, "quantiles": [25, 50, 75],
///                     "df_seed": 11, "sources": ["noise", "clean"] }
///   }
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  ZooConfig zoo;
  DLConfig dl;
  DFConfig df;
  DLExperimentConfig dl_experiment;
  DFExperimentConfig df_experiment;
};

/// Defaults when `path` is empty. Throws FormatError for unparsable JSON and UsageError for unknown
/// keys or values of the wrong type.
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace tnd::cli
