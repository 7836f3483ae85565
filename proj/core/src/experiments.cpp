#include "tnd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"
#include "tnd/parallel.hpp"

namespace tnd {

ZooHandle ZooHandle::open(const std::filesystem::path& dir) { return {dir, load_manifest(dir)}; }

MetricsReport summarize(std::string detector, std::string variant, std::vector<ModelScore> models) {
  MetricsReport r;
  r.detector = std::move(detector);
  r.variant = std::move(variant);
  r.models = std::move(models);
  std::vector<double> scores;
  std::size_t n = 0;
  for (const auto& m : r.models) n += m.failed ? 0 : 1;
  // std::vector<bool> has no contiguous storage, so the flags live in a plain array.
  std::unique_ptr<bool[]> flags(new bool[n]);
  for (const auto& m : r.models) {
    if (m.failed) continue;
    flags[scores.size()] = m.trojan;
    scores.push_back(m.suspicion);
  }
  const std::span<const bool> truth(flags.get(), n);
  r.roc = roc_curve(scores, truth);
  r.pr = pr_curve(scores, truth);
  r.youden = youden_point(r.roc);
  r.at_youden = confusion_at(scores, truth, r.youden.threshold);
  r.calibrated_range = threshold_range(scores, truth, 0.9, 0.1);
  std::size_t correct = 0;
  for (const auto& m : r.models) {
    if (m.failed || !m.trojan || m.suspicion < r.youden.threshold) continue;
    ++r.detected_trojans;
    if (std::find(m.true_targets.begin(), m.true_targets.end(), static_cast<int>(m.top_label)) != m.true_targets.end()) {
      ++correct;
    }
  }
  r.target_accuracy = r.detected_trojans == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.detected_trojans);
  return r;
}

MetricsReport subset(const MetricsReport& r, const std::function<bool(const ModelScore&)>& keep,
                     const std::string& variant) {
  std::vector<ModelScore> kept;
  for (const auto& m : r.models) {
    if (keep(m)) kept.push_back(m);
  }
  return summarize(r.detector, variant, std::move(kept));
}

namespace {

struct Task {
  const ZooHandle* zoo;
  const ZooEntry* entry;
};

std::vector<Task> tasks_of(const std::vector<ZooHandle>& zoos) {
  std::vector<Task> tasks;
  for (const auto& z : zoos) {
    for (const ZooEntry* e : z.manifest.usable()) tasks.push_back({&z, e});
  }
  if (tasks.empty()) throw DataError("no usable models in the given zoos");
  return tasks;
}

ModelScore score_from(const ZooEntry& e, std::vector<double> per_label) {
  ModelScore s;
  s.model_id = e.model_id;
  s.per_label = std::move(per_label);
  s.top_label = static_cast<std::size_t>(std::max_element(s.per_label.begin(), s.per_label.end()) - s.per_label.begin());
  s.suspicion = s.per_label.empty() ? 0.0 : s.per_label[s.top_label];
  return s;
}

// Ground truth joins the score only after the detector has run.
void attach_truth(ModelScore& s, const ZooEntry& e) {
  s.trojan = e.provenance.is_trojan();
  s.true_targets = e.provenance.target_labels();
}

ModelScore failed_score(const ZooEntry& e, const std::exception& err) {
  ModelScore s;
  s.model_id = e.model_id;
  s.failed = true;
  s.note = err.what();
  return s;
}

std::vector<PixelBox> trigger_boxes(const std::vector<TrojanAttack>& attacks, const Shape& shape) {
  std::vector<PixelBox> boxes;
  for (const auto& a : attacks) boxes.push_back(TriggerSpec(a.trigger, shape).bounding_box());
  return boxes;
}

std::vector<double> mass_ratios(const DFReport& rep, const std::vector<PixelBox>& boxes, bool best) {
  std::vector<double> out;
  if (boxes.empty()) return out;
  for (const auto& inv : rep.inversions) {
    double acc = 0.0;
    for (const auto& box : boxes) {
      const double r = trigger_mass_fraction(inv.seed, inv.recovered, box).ratio();
      acc = best ? std::max(acc, r) : acc + r;
    }
    out.push_back(best ? acc : acc / static_cast<double>(boxes.size()));
  }
  return out;
}

}  // namespace

std::vector<MetricsReport> run_dl_experiment(const std::vector<ZooHandle>& zoos, const DLExperimentConfig& cfg) {
  if (cfg.quantiles.empty()) throw UsageError("DL experiment needs at least one quantile");
  const std::vector<Task> tasks = tasks_of(zoos);
  std::map<const ZooHandle*, ValidationSet> valsets;
  for (const auto& z : zoos) {
    valsets.emplace(&z, ValidationSet::from_dataset(load_test_set(z.dir, z.manifest), cfg.per_class, cfg.valset_seed));
  }
  DLConfig det = cfg.detector;
  det.threads = 1;
  const auto reports = parallel_map<std::optional<DLReport>>(tasks.size(), cfg.threads, [&](std::size_t i) {
    const ModelBundle b = load_entry(tasks[i].zoo->dir, *tasks[i].entry);
    try {
      return std::optional<DLReport>(run_dl_tnd(b.network, valsets.at(tasks[i].zoo), det, b.model_id));
    } catch (const NumericalError&) {
      return std::optional<DLReport>();
    }
  });
  std::vector<MetricsReport> out;
  for (double q : cfg.quantiles) {
    std::vector<ModelScore> scores;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const ZooEntry& e = *tasks[i].entry;
      if (!reports[i]) {
        scores.push_back(failed_score(e, NumericalError("detector failed numerically")));
        continue;
      }
      const DLReport rep = with_quantile(*reports[i], q);
      ModelScore s = score_from(e, rep.indices());
      s.report = to_json(rep);
      attach_truth(s, e);
      scores.push_back(std::move(s));
    }
    char variant[16];
    std::snprintf(variant, sizeof variant, "q%g", q);
    out.push_back(summarize("dl", variant, std::move(scores)));
  }
  return out;
}

std::vector<MetricsReport> run_df_experiment(const std::vector<ZooHandle>& zoos, const DFExperimentConfig& cfg) {
  if (cfg.sources.empty()) throw UsageError("DF experiment needs at least one seed source");
  const std::vector<Task> tasks = tasks_of(zoos);
  std::map<const ZooHandle*, DatasetBundle> tests;
  std::map<const ZooHandle*, std::vector<PixelBox>> reference_boxes;
  for (const auto& z : zoos) {
    tests.emplace(&z, load_test_set(z.dir, z.manifest));
    auto& boxes = reference_boxes[&z];
    for (const ZooEntry* e : z.manifest.usable()) {
      for (const auto& b : trigger_boxes(e->provenance.attacks, z.manifest.config.image_shape)) {
        const bool seen = std::any_of(boxes.begin(), boxes.end(), [&](const PixelBox& o) {
          return o.row_begin == b.row_begin && o.row_end == b.row_end && o.col_begin == b.col_begin && o.col_end == b.col_end;
        });
        if (!seen) boxes.push_back(b);
      }
    }
  }
  DFConfig det = cfg.detector;
  det.threads = 1;
  std::vector<MetricsReport> out;
  for (SeedSource source : cfg.sources) {
    det.source = source;
    std::vector<ModelScore> scores = parallel_map<ModelScore>(tasks.size(), cfg.threads, [&](std::size_t i) {
      const ZooEntry& e = *tasks[i].entry;
      const ModelBundle b = load_entry(tasks[i].zoo->dir, e);
      try {
        const DatasetBundle& test = tests.at(tasks[i].zoo);
        const SeedBatch seeds = source == SeedSource::noise ? noise_seeds(test.image_shape(), det.num_seeds, cfg.seed)
                                                            : clean_seeds(test, det.num_seeds, cfg.seed);
        const DFReport rep = run_df_tnd(b.network, seeds, det, b.model_id);
        ModelScore s = score_from(e, rep.increase);
        s.report = to_json(rep);
        attach_truth(s, e);
        s.mass_ratio = s.trojan ? mass_ratios(rep, trigger_boxes(e.provenance.attacks, test.image_shape()), true)
                                : mass_ratios(rep, reference_boxes.at(tasks[i].zoo), false);
        return s;
      } catch (const NumericalError& err) {
        return failed_score(e, err);
      }
    });
    out.push_back(summarize("df", to_string(source), std::move(scores)));
  }
  return out;
}

MetricsReport imbalanced_eval(const MetricsReport& full, std::size_t positives) {
  if (positives == 0) throw UsageError("imbalanced evaluation needs at least one positive");
  std::size_t taken = 0;
  std::vector<ModelScore> kept;
  for (const auto& m : full.models) {
    if (m.failed) continue;
    if (m.trojan) {
      if (taken == positives) continue;
      ++taken;
    }
    kept.push_back(m);
  }
  if (taken < positives) throw DataError("zoo has fewer Trojan models than requested positives");
  return summarize(full.detector, full.variant + "-imbalanced", std::move(kept));
}

nlohmann::json to_json(const MetricsReport& r, bool include_reports) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json j{{"model_id", m.model_id},
                     {"trojan", m.trojan},
                     {"true_targets", m.true_targets},
                     {"suspicion", m.suspicion},
                     {"top_label", m.top_label},
                     {"per_label", m.per_label},
                     {"failed", m.failed}};
    if (!m.mass_ratio.empty()) j["mass_ratio"] = m.mass_ratio;
    if (!m.note.empty()) j["note"] = m.note;
    if (!m.failed) j["flagged_at_youden"] = m.suspicion >= r.youden.threshold;
    if (include_reports) j["report"] = m.report;
    models.push_back(std::move(j));
  }
  nlohmann::json range = nullptr;
  if (!r.calibrated_range.empty) {
    range = {{"lo_exclusive", std::isinf(r.calibrated_range.lo) ? nlohmann::json("-inf") : nlohmann::json(r.calibrated_range.lo)},
             {"hi_inclusive", r.calibrated_range.hi},
             {"min_tpr", 0.9},
             {"max_fpr", 0.1}};
  }
  return {{"detector", r.detector},
          {"variant", r.variant},
          {"roc", to_json(r.roc)},
          {"pr", to_json(r.pr)},
          {"youden", {{"threshold", r.youden.threshold}, {"tpr", r.youden.tpr}, {"fpr", r.youden.fpr}}},
          {"confusion_at_youden", {{"tp", r.at_youden.tp}, {"fp", r.at_youden.fp}, {"tn", r.at_youden.tn}, {"fn", r.at_youden.fn}}},
          {"target_accuracy", r.target_accuracy},
          {"detected_trojans", r.detected_trojans},
          {"calibrated_threshold_range", range},
          {"models", models}};
}

}  // namespace tnd
