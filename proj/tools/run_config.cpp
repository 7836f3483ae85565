#include "run_config.hpp"

#include <set>
#include <string>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"

namespace tnd::cli {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw UsageError("unknown key '" + key + "' in " + where);
  }
}

void apply_experiment(const nlohmann::json& j, RunConfig& cfg) {
  check_keys(j, {"per_class", "valset_seed", "quantiles", "df_seed", "sources"}, "experiment");
  auto& dl = cfg.dl_experiment;
  dl.per_class = j.value("per_class", dl.per_class);
  dl.valset_seed = j.value("valset_seed", dl.valset_seed);
  dl.quantiles = j.value("quantiles", dl.quantiles);
  auto& df = cfg.df_experiment;
  df.seed = j.value("df_seed", df.seed);
  if (j.contains("sources")) {
    df.sources.clear();
    for (const auto& s : j.at("sources")) df.sources.push_back(seed_source_from_string(s.get<std::string>()));
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  check_keys(j, {"seed", "threads", "zoo", "dl", "df", "experiment"}, "config");
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<std::size_t>();
    if (j.contains("zoo")) cfg.zoo = zoo_config_from_json(j.at("zoo"));
    if (j.contains("dl")) cfg.dl = dl_config_from_json(j.at("dl"));
    if (j.contains("df")) cfg.df = df_config_from_json(j.at("df"));
    if (j.contains("experiment")) apply_experiment(j.at("experiment"), cfg);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json sources = nlohmann::json::array();
  for (auto s : cfg.df_experiment.sources) sources.push_back(to_string(s));
  nlohmann::json j{{"zoo", zoo_config_to_json(cfg.zoo)},
                   {"dl", dl_config_to_json(cfg.dl)},
                   {"df", df_config_to_json(cfg.df)},
                   {"experiment",
                    {{"per_class", cfg.dl_experiment.per_class},
                     {"valset_seed", cfg.dl_experiment.valset_seed},
                     {"quantiles", cfg.dl_experiment.quantiles},
                     {"df_seed", cfg.df_experiment.seed},
                     {"sources", sources}}}};
  if (cfg.seed) j["seed"] = *cfg.seed;
  if (cfg.threads) j["threads"] = *cfg.threads;
  return j;
}

}  // namespace tnd::cli
