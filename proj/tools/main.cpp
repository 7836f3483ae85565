#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "tnd/container.hpp"
#include "tnd/df_tnd.hpp"
#include "tnd/dl_tnd.hpp"
#include "tnd/errors.hpp"
#include "tnd/experiments.hpp"
#include "tnd/metrics.hpp"
#include "tnd/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool with_out = true) {
  sub->add_option("--config", c.config, "JSON config file supplying defaults")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed for every random choice of this command");
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  if (with_out) sub->add_option("-o,--out", c.out, "Write the JSON result here");
}

tnd::cli::RunConfig resolve(const Common& c) {
  tnd::cli::RunConfig cfg = tnd::cli::load_run_config(c.config);
  if (c.seed) cfg.seed = c.seed;
  if (c.threads) cfg.threads = c.threads;
  return cfg;
}

void emit(const Common& c, const json& j) {
  if (!c.out.empty()) tnd::write_text_atomic(c.out, j.dump(2) + "\n");
}

template <typename T>
void set_if(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "-" : s;
}

// ---- zoo ----

struct ZooBuildArgs {
  std::string dir;
  std::optional<std::size_t> clean, trojan, epochs, hidden, two_target_every;
  std::vector<double> ratios;
  std::optional<double> min_asr;
  std::optional<std::uint64_t> data_seed;
  std::string prefix;
};

int zoo_build(const Common& c, const ZooBuildArgs& a) {
  auto cfg = resolve(c);
  tnd::ZooConfig z = cfg.zoo;
  set_if(a.clean, z.num_clean);
  set_if(a.trojan, z.num_trojan);
  set_if(a.epochs, z.train.epochs);
  set_if(a.hidden, z.hidden_width);
  set_if(a.two_target_every, z.two_target_every);
  set_if(a.min_asr, z.min_asr);
  set_if(a.data_seed, z.data_seed);
  if (!a.ratios.empty()) z.poison_ratios = a.ratios;
  if (!a.prefix.empty()) z.id_prefix = a.prefix;
  set_if(cfg.seed, z.seed);
  set_if(cfg.threads, z.threads);
  const tnd::ZooManifest m = tnd::build_zoo(z, a.dir);
  for (const auto& e : m.entries) {
    std::printf("%-16s %-8s acc=%.4f asr=%.4f %s\n", e.model_id.c_str(), tnd::to_string(e.status).c_str(),
                e.test_accuracy, e.attack_success_rate, e.note.c_str());
  }
  std::printf("zoo %s: %zu usable, %zu rejected, clean accuracy mean %.4f\n", a.dir.c_str(), m.usable().size(),
              m.rejected().size(), m.clean_accuracy_mean);
  emit(c, tnd::to_json(m));
  return 0;
}

int zoo_validate(const Common& c, const std::string& dir, bool recompute) {
  const auto issues = tnd::validate_zoo(dir, recompute);
  json out = json::array();
  for (const auto& i : issues) {
    std::printf("%s: %s\n", i.model_id.c_str(), i.message.c_str());
    out.push_back({{"model_id", i.model_id}, {"message", i.message}});
  }
  emit(c, {{"zoo", dir}, {"recompute", recompute}, {"issues", out}});
  if (!issues.empty()) {
    std::printf("%zu issue(s)\n", issues.size());
    return 2;
  }
  std::printf("zoo %s is valid\n", dir.c_str());
  return 0;
}

// ---- data sources ----

struct DataArgs {
  std::string data;
  std::string zoo;
};

tnd::DatasetBundle load_data(const DataArgs& d) {
  if (!d.data.empty()) return tnd::load_dataset(d.data);
  if (!d.zoo.empty()) {
    const auto m = tnd::load_manifest(d.zoo);
    return tnd::load_test_set(d.zoo, m);
  }
  throw tnd::UsageError("this command needs --data FILE or --zoo DIR");
}

void add_data(CLI::App* sub, DataArgs& d) {
  sub->add_option("--data", d.data, "Dataset container (.tscp)")->check(CLI::ExistingFile);
  sub->add_option("--zoo", d.zoo, "Use the test split of this zoo")->check(CLI::ExistingDirectory);
}

// ---- detect dl ----

struct DLArgs {
  std::string model;
  DataArgs data;
  std::optional<std::size_t> per_class, iterations;
  std::vector<double> lambdas;
  std::optional<double> tau, q, t1, lr;
  std::string rule;
};

void apply_dl(tnd::cli::RunConfig& cfg, const DLArgs& a) {
  auto& d = cfg.dl;
  if (!a.lambdas.empty()) d.lambdas = a.lambdas;
  set_if(a.tau, d.tau);
  set_if(a.q, d.q);
  set_if(a.t1, d.t1);
  set_if(a.lr, d.solver.learning_rate);
  set_if(a.iterations, d.solver.iterations);
  if (!a.rule.empty()) d.rule = tnd::decision_rule_from_string(a.rule);
  set_if(a.per_class, cfg.dl_experiment.per_class);
  if (cfg.seed) {
    d.solver.seed = *cfg.seed;
    cfg.dl_experiment.valset_seed = *cfg.seed;
  }
  set_if(cfg.threads, d.threads);
}

void add_dl_flags(CLI::App* sub, DLArgs& a) {
  sub->add_option("--per-class", a.per_class, "Validation samples per class");
  sub->add_option("--lambda", a.lambdas, "l1 weight per pixel and sample (repeat for a sweep)");
  sub->add_option("--tau", a.tau, "C&W confidence margin");
  sub->add_option("--q", a.q, "Percentile level of the detection index, in (0, 100)");
  sub->add_option("--t1", a.t1, "Threshold on the detection index");
  sub->add_option("--rule", a.rule, "Decision rule")->check(CLI::IsMember({"threshold", "mad"}));
  sub->add_option("--iterations", a.iterations, "Solver iterations");
  sub->add_option("--lr", a.lr, "Solver learning rate");
}

int detect_dl(const Common& c, const DLArgs& a) {
  auto cfg = resolve(c);
  apply_dl(cfg, a);
  const tnd::ModelBundle b = tnd::load_model(a.model);
  const auto valset =
      tnd::ValidationSet::from_dataset(load_data(a.data), cfg.dl_experiment.per_class, cfg.dl_experiment.valset_seed);
  const tnd::DLReport r = tnd::run_dl_tnd(b.network, valset, cfg.dl, b.model_id);
  const auto idx = r.indices();
  for (std::size_t k = 0; k < idx.size(); ++k) std::printf("label %zu  I=%.6f\n", k, idx[k]);
  std::printf("%s: %s (rule %s) targets %s\n", b.model_id.c_str(), r.decision.trojan ? "trojan" : "clean",
              tnd::to_string(cfg.dl.rule).c_str(), join(r.decision.targets).c_str());
  emit(c, tnd::to_json(r));
  return 0;
}

// ---- detect df / invert ----

struct DFArgs {
  std::string model;
  DataArgs data;
  std::optional<std::size_t> num_seeds, iterations;
  std::optional<double> lambda_per_pixel, t2, lr;
  std::string source;
  bool refine = false;
};

void apply_df(tnd::cli::RunConfig& cfg, const DFArgs& a) {
  auto& d = cfg.df;
  set_if(a.num_seeds, d.num_seeds);
  set_if(a.lambda_per_pixel, d.lambda_per_pixel);
  set_if(a.t2, d.t2);
  set_if(a.lr, d.solver.learning_rate);
  set_if(a.iterations, d.solver.iterations);
  if (!a.source.empty()) d.source = tnd::seed_source_from_string(a.source);
  if (a.refine) d.refine = true;
  if (cfg.seed) {
    d.solver.seed = *cfg.seed;
    cfg.df_experiment.seed = *cfg.seed;
  }
  set_if(cfg.threads, d.threads);
}

void add_df_flags(CLI::App* sub, DFArgs& a) {
  sub->add_option("--num-seeds", a.num_seeds, "Seed images per model");
  sub->add_option("--lambda-per-pixel", a.lambda_per_pixel, "l1 weight per pixel");
  sub->add_option("--t2", a.t2, "Threshold on the logit increase");
  sub->add_option("--source", a.source, "Seed images")->check(CLI::IsMember({"noise", "clean"}));
  sub->add_flag("--refine", a.refine, "Re-solve on the largest activation coordinate");
  sub->add_option("--iterations", a.iterations, "Solver iterations");
  sub->add_option("--lr", a.lr, "Solver learning rate");
}

tnd::SeedBatch make_seeds(const tnd::cli::RunConfig& cfg, const tnd::Network& net, const DataArgs& data) {
  if (cfg.df.source == tnd::SeedSource::noise) {
    return tnd::noise_seeds(net.input_shape(), cfg.df.num_seeds, cfg.df_experiment.seed);
  }
  return tnd::clean_seeds(load_data(data), cfg.df.num_seeds, cfg.df_experiment.seed);
}

int detect_df(const Common& c, const DFArgs& a) {
  auto cfg = resolve(c);
  apply_df(cfg, a);
  const tnd::ModelBundle b = tnd::load_model(a.model);
  const tnd::DFReport r = tnd::run_df_tnd(b.network, make_seeds(cfg, b.network, a.data), cfg.df, b.model_id);
  for (std::size_t k = 0; k < r.increase.size(); ++k) std::printf("label %zu  L=%.6f\n", k, r.increase[k]);
  std::printf("%s: %s (T2 %g) targets %s\n", b.model_id.c_str(), r.decision.trojan ? "trojan" : "clean", cfg.df.t2,
              join(r.decision.targets).c_str());
  emit(c, tnd::to_json(r));
  return 0;
}

int invert(const Common& c, const DFArgs& a, const std::string& out_dir) {
  auto cfg = resolve(c);
  apply_df(cfg, a);
  cfg.df.solver.record_trace = true;
  const tnd::ModelBundle b = tnd::load_model(a.model);
  const tnd::DFReport r = tnd::run_df_tnd(b.network, make_seeds(cfg, b.network, a.data), cfg.df, b.model_id);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  json files = json::array();
  for (std::size_t i = 0; i < r.inversions.size(); ++i) {
    const auto& inv = r.inversions[i];
    const std::string s = std::to_string(i);
    tnd::Tensor delta(inv.seed.shape());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = std::abs(inv.recovered[j] - inv.seed[j]);
    tnd::write_png(dir / ("seed_" + s + ".png"), inv.seed);
    tnd::write_png(dir / ("recovered_" + s + ".png"), inv.recovered);
    tnd::write_png(dir / ("perturbation_" + s + ".png"), delta);
    tnd::write_png(dir / ("mask_" + s + ".png"), inv.tuple.mask, 255.0);
    tnd::write_raw_f64(dir / ("recovered_" + s + ".f64"), inv.recovered);
    tnd::write_raw_f64(dir / ("mask_" + s + ".f64"), inv.tuple.mask);
    tnd::write_raw_f64(dir / ("pattern_" + s + ".f64"), inv.tuple.pattern);
    tnd::write_trace_csv(dir / ("trace_" + s + ".csv"), inv.tuple);
    files.push_back({{"seed", i},
                     {"shape", inv.seed.shape()},
                     {"images", {"seed_" + s + ".png", "recovered_" + s + ".png", "perturbation_" + s + ".png",
                                 "mask_" + s + ".png"}},
                     {"raw", {"recovered_" + s + ".f64", "mask_" + s + ".f64", "pattern_" + s + ".f64"}},
                     {"trace", "trace_" + s + ".csv"}});
  }
  json j = tnd::to_json(r);
  j["files"] = files;
  tnd::write_text_atomic(dir / "inversion.json", j.dump(2) + "\n");
  emit(c, j);
  std::printf("%s: %zu inversions written to %s, max L=%.6f\n", b.model_id.c_str(), r.inversions.size(),
              out_dir.c_str(), r.suspicion());
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::vector<std::string> zoos;
  std::string detector;
  std::string csv_prefix;
  std::optional<std::size_t> positives;
  bool include_reports = false;
  DLArgs dl;
  DFArgs df;
};

std::vector<tnd::MetricsReport> run_eval(const Common& c, const EvalArgs& a) {
  auto cfg = resolve(c);
  std::vector<tnd::ZooHandle> zoos;
  for (const auto& z : a.zoos) zoos.push_back(tnd::ZooHandle::open(z));
  if (a.detector == "dl") {
    apply_dl(cfg, a.dl);
    cfg.dl_experiment.detector = cfg.dl;
    set_if(cfg.threads, cfg.dl_experiment.threads);
    return tnd::run_dl_experiment(zoos, cfg.dl_experiment);
  }
  apply_df(cfg, a.df);
  if (!a.df.source.empty()) cfg.df_experiment.sources = {cfg.df.source};
  cfg.df_experiment.detector = cfg.df;
  set_if(cfg.threads, cfg.df_experiment.threads);
  return tnd::run_df_experiment(zoos, cfg.df_experiment);
}

int eval(const Common& c, const EvalArgs& a, bool pr) {
  auto reports = run_eval(c, a);
  if (pr && a.positives) {
    for (auto& r : reports) r = tnd::imbalanced_eval(r, *a.positives);
  }
  json out = json::array();
  for (const auto& r : reports) {
    std::printf("%s %-16s ROC-AUC=%.4f PR-AUC=%.4f youden=%.6g (TPR %.2f FPR %.2f) target-acc=%.2f\n",
                r.detector.c_str(), r.variant.c_str(), r.roc.auc, r.pr.auc, r.youden.threshold, r.youden.tpr,
                r.youden.fpr, r.target_accuracy);
    if (!a.csv_prefix.empty()) {
      const std::string path = a.csv_prefix + "-" + r.variant + ".csv";
      pr ? tnd::write_pr_csv(path, r.pr) : tnd::write_roc_csv(path, r.roc);
    }
    out.push_back(tnd::to_json(r, a.include_reports));
  }
  emit(c, {{"metric", pr ? "pr" : "roc"}, {"zoos", a.zoos}, {"reports", out}});
  return 0;
}

// ---- report ----

int report(const Common& c, const std::vector<std::string>& inputs, const std::vector<std::string>& zoo_dirs) {
  std::map<std::string, const tnd::ZooEntry*> truth;
  std::vector<tnd::ZooManifest> manifests;
  manifests.reserve(zoo_dirs.size());
  for (const auto& z : zoo_dirs) manifests.push_back(tnd::load_manifest(z));
  for (const auto& m : manifests) {
    for (const auto& e : m.entries) truth[e.model_id] = &e;
  }
  std::map<std::string, std::vector<tnd::ModelScore>> by_detector;
  json rows = json::array();
  std::printf("%-16s %-4s %12s %5s %-7s %s\n", "model", "det", "suspicion", "top", "verdict", "targets");
  for (const auto& path : inputs) {
    json j;
    try {
      j = json::parse(tnd::read_text(path));
    } catch (const json::parse_error& e) {
      throw tnd::FormatError(path + ": " + e.what());
    }
    if (!j.contains("detector") || !j.contains("model_id")) {
      throw tnd::FormatError(path + ": not a detector report");
    }
    const std::string det = j.at("detector");
    tnd::ModelScore s;
    s.model_id = j.at("model_id");
    if (det == "dl") {
      for (const auto& l : j.at("per_label")) s.per_label.push_back(l.at("index"));
    } else if (det == "df") {
      s.per_label = j.at("logit_increase").get<std::vector<double>>();
    } else {
      throw tnd::FormatError(path + ": unknown detector '" + det + "'");
    }
    if (s.per_label.empty()) throw tnd::FormatError(path + ": empty per-label statistic");
    s.top_label = static_cast<std::size_t>(std::max_element(s.per_label.begin(), s.per_label.end()) - s.per_label.begin());
    s.suspicion = s.per_label[s.top_label];
    const std::vector<std::size_t> targets = j.value("targets", std::vector<std::size_t>{});
    std::printf("%-16s %-4s %12.6f %5zu %-7s %s\n", s.model_id.c_str(), det.c_str(), s.suspicion, s.top_label,
                j.value("decision", std::string("?")).c_str(), join(targets).c_str());
    json row{{"file", path},      {"model_id", s.model_id},       {"detector", det},
             {"suspicion", s.suspicion}, {"top_label", s.top_label}, {"decision", j.value("decision", "")},
             {"targets", targets}};
    if (!zoo_dirs.empty()) {
      const auto it = truth.find(s.model_id);
      if (it == truth.end()) throw tnd::DataError(path + ": model '" + s.model_id + "' is in none of the zoos");
      s.trojan = it->second->provenance.is_trojan();
      s.true_targets = it->second->provenance.target_labels();
      row["trojan"] = s.trojan;
      row["true_targets"] = s.true_targets;
    }
    rows.push_back(row);
    by_detector[det].push_back(std::move(s));
  }
  json out{{"models", rows}};
  if (!zoo_dirs.empty()) {
    json metrics = json::array();
    for (auto& [det, scores] : by_detector) {
      const auto trojans = std::count_if(scores.begin(), scores.end(), [](const auto& s) { return s.trojan; });
      if (trojans == 0 || trojans == static_cast<long>(scores.size())) {
        std::printf("%s: metrics need both clean and Trojan models\n", det.c_str());
        continue;
      }
      const auto r = tnd::summarize(det, "report", std::move(scores));
      std::printf("%s over %zu models: ROC-AUC=%.4f PR-AUC=%.4f youden=%.6g target-acc=%.2f\n", det.c_str(),
                  r.models.size(), r.roc.auc, r.pr.auc, r.youden.threshold, r.target_accuracy);
      metrics.push_back(tnd::to_json(r));
    }
    out["metrics"] = metrics;
  }
  emit(c, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trojan network detection toolkit: model zoos, DL-TND, DF-TND and evaluation"};
  app.require_subcommand(1);
  Common common;

  auto* zoo = app.add_subcommand("zoo", "Build or validate a model zoo");
  zoo->require_subcommand(1);
  ZooBuildArgs zb;
  auto* zoo_build_cmd = zoo->add_subcommand("build", "Train and persist a zoo of clean and Trojan models");
  add_common(zoo_build_cmd, common);
  zoo_build_cmd->add_option("dir", zb.dir, "Output directory")->required();
  zoo_build_cmd->add_option("--clean", zb.clean, "Clean models");
  zoo_build_cmd->add_option("--trojan", zb.trojan, "Trojan models");
  zoo_build_cmd->add_option("--ratio", zb.ratios, "Poison ratio (repeat to cycle)");
  zoo_build_cmd->add_option("--epochs", zb.epochs, "Training epochs");
  zoo_build_cmd->add_option("--hidden", zb.hidden, "Width of the representation layer");
  zoo_build_cmd->add_option("--two-target-every", zb.two_target_every, "Every n-th Trojan gets a second trigger");
  zoo_build_cmd->add_option("--min-asr", zb.min_asr, "ASR floor for Trojan models");
  zoo_build_cmd->add_option("--data-seed", zb.data_seed, "Seed of the synthetic dataset");
  zoo_build_cmd->add_option("--prefix", zb.prefix, "Model id prefix");

  std::string validate_dir;
  bool recompute = false;
  auto* zoo_validate_cmd = zoo->add_subcommand("validate", "Check hashes and validity floors of a zoo");
  add_common(zoo_validate_cmd, common);
  zoo_validate_cmd->add_option("dir", validate_dir, "Zoo directory")->required()->check(CLI::ExistingDirectory);
  zoo_validate_cmd->add_flag("--recompute", recompute, "Re-measure ASR and accuracy from the weights");

  auto* detect = app.add_subcommand("detect", "Run one detector on one model");
  detect->require_subcommand(1);
  DLArgs dl;
  auto* detect_dl_cmd = detect->add_subcommand("dl", "Data-limited detection with a few validation images");
  add_common(detect_dl_cmd, common);
  detect_dl_cmd->add_option("model", dl.model, "Model container")->required()->check(CLI::ExistingFile);
  add_data(detect_dl_cmd, dl.data);
  add_dl_flags(detect_dl_cmd, dl);

  DFArgs df;
  auto* detect_df_cmd = detect->add_subcommand("df", "Data-free detection by activation maximisation");
  add_common(detect_df_cmd, common);
  detect_df_cmd->add_option("model", df.model, "Model container")->required()->check(CLI::ExistingFile);
  add_data(detect_df_cmd, df.data);
  add_df_flags(detect_df_cmd, df);

  DFArgs inv;
  std::string inv_dir;
  auto* invert_cmd = app.add_subcommand("invert", "DF inversion of one model with PNG, raw and trace export");
  add_common(invert_cmd, common);
  invert_cmd->add_option("model", inv.model, "Model container")->required()->check(CLI::ExistingFile);
  invert_cmd->add_option("--out-dir", inv_dir, "Directory for images, raw dumps and traces")->required();
  add_data(invert_cmd, inv.data);
  add_df_flags(invert_cmd, inv);

  auto* ev = app.add_subcommand("eval", "Detector metrics over one or more zoos");
  ev->require_subcommand(1);
  EvalArgs ea;
  auto add_eval = [&](const std::string& name, const std::string& help) {
    auto* sub = ev->add_subcommand(name, help);
    add_common(sub, common);
    sub->add_option("zoos", ea.zoos, "Zoo directories")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--detector", ea.detector, "Detector")->required()->check(CLI::IsMember({"dl", "df"}));
    sub->add_option("--csv-prefix", ea.csv_prefix, "Write <prefix>-<variant>.csv point lists");
    sub->add_flag("--include-reports", ea.include_reports, "Embed every per-model report in the JSON");
    sub->add_option("--per-class", ea.dl.per_class, "DL: validation samples per class");
    sub->add_option("--lambda", ea.dl.lambdas, "DL: l1 weight per pixel and sample");
    sub->add_option("--tau", ea.dl.tau, "DL: C&W confidence margin");
    sub->add_option("--lambda-per-pixel", ea.df.lambda_per_pixel, "DF: l1 weight per pixel");
    sub->add_option("--num-seeds", ea.df.num_seeds, "DF: seed images per model");
    sub->add_option("--source", ea.df.source, "DF: one seed source only")->check(CLI::IsMember({"noise", "clean"}));
    sub->add_flag("--refine", ea.df.refine, "DF: refine on the largest activation coordinate");
    return sub;
  };
  auto* eval_roc_cmd = add_eval("roc", "ROC curves, AUC, Youden point and calibrated threshold range");
  auto* eval_pr_cmd = add_eval("pr", "Precision-recall curves and PR-AUC");
  eval_pr_cmd->add_option("--positives", ea.positives, "Keep only this many Trojan models (imbalanced evaluation)");

  std::vector<std::string> report_inputs, report_zoos;
  auto* report_cmd = app.add_subcommand("report", "Tabulate detector reports, with metrics when zoos are given");
  add_common(report_cmd, common);
  report_cmd->add_option("reports", report_inputs, "JSON files written by detect dl/df")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--zoo", report_zoos, "Zoo directories holding the ground truth")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*zoo_build_cmd) return zoo_build(common, zb);
    if (*zoo_validate_cmd) return zoo_validate(common, validate_dir, recompute);
    if (*detect_dl_cmd) return detect_dl(common, dl);
    if (*detect_df_cmd) return detect_df(common, df);
    if (*invert_cmd) return invert(common, inv, inv_dir);
    if (*eval_roc_cmd) return eval(common, ea, false);
    if (*eval_pr_cmd) return eval(common, ea, true);
    if (*report_cmd) return report(common, report_inputs, report_zoos);
  } catch (const tnd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tnd::exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
