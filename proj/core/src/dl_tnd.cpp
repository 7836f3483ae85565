#include "tnd/dl_tnd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "tnd/errors.hpp"
#include "tnd/parallel.hpp"
#include "tnd/perturb.hpp"

namespace tnd {

ValidationSet ValidationSet::from_dataset(const DatasetBundle& ds, std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw DataError("validation set needs at least one sample per class");
  const DatasetBundle picked = take_per_class(ds, per_class, seed);
  if (picked.size() != per_class * ds.num_classes) {
    throw DataError("validation set: some class has fewer than " + std::to_string(per_class) + " samples");
  }
  ValidationSet v;
  v.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    v.images.push_back(picked.image(i));
    v.labels.push_back(picked.labels[i]);
  }
  return v;
}

std::vector<std::size_t> Partitions::members(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == k) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Partitions::non_members(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] != k) out.push_back(i);
  }
  return out;
}

Partitions partition(const Network& net, const ValidationSet& valset) {
  if (valset.size() == 0) throw DataError("validation set is empty");
  Partitions p;
  p.predicted.reserve(valset.size());
  for (const auto& x : valset.images) p.predicted.push_back(predict(net, x));
  return p;
}

Evaluation untargeted_universal_loss(const Network& net, const Tensor& mask, const Tensor& pattern,
                                     const LabelledImages& others, const LabelledImages& members, double tau,
                                     GradientRequest request) {
  StampAccumulator acc(mask, pattern, request);
  for (std::size_t i = 0; i < others.images.size(); ++i) {
    acc.add(net, others.images[i], heads::cw_untargeted(others.labels[i], tau));
  }
  for (std::size_t i = 0; i < members.images.size(); ++i) {
    acc.add(net, members.images[i], heads::cw_targeted(members.labels[i], tau));
  }
  return acc.take();
}

Evaluation targeted_loss(const Network& net, const Tensor& mask, const Tensor& pattern, const Tensor& x,
                         std::size_t target, double tau, GradientRequest request) {
  StampAccumulator acc(mask, pattern, request);
  acc.add(net, x, heads::cw_targeted(target, tau));
  return acc.take();
}

namespace {

LabelledImages gather(const ValidationSet& valset, const Partitions& parts, const std::vector<std::size_t>& idx,
                      std::optional<std::size_t> fixed_label) {
  LabelledImages out;
  for (std::size_t i : idx) {
    out.images.push_back(valset.images[i]);
    out.labels.push_back(fixed_label ? *fixed_label : parts.predicted[i]);
  }
  return out;
}

}  // namespace

UniversalPerturbation compute_universal_perturbation(const Network& net, const ValidationSet& valset,
                                                     const Partitions& parts, std::size_t k, double lambda,
                                                     double tau, const SolverConfig& cfg) {
  if (k >= net.num_classes()) throw UsageError("label " + std::to_string(k) + " outside the model's classes");
  if (tau < 0.0) throw UsageError("tau must be >= 0");
  const LabelledImages others = gather(valset, parts, parts.non_members(k), std::nullopt);
  const LabelledImages members = gather(valset, parts, parts.members(k), k);
  if (others.images.empty()) throw DataError("D_{k-} is empty for label " + std::to_string(k));

  CompositeProblem problem;
  problem.shape = net.input_shape();
  problem.lambda = lambda;
  problem.loss = [&](const Iterate& it, GradientRequest req) {
    return untargeted_universal_loss(net, it.mask, it.pattern, others, members, tau, req);
  };
  UniversalPerturbation out;
  out.tuple = solve(problem, cfg).best;

  std::size_t fooled = 0, to_k = 0, kept = 0;
  for (std::size_t i = 0; i < others.images.size(); ++i) {
    const std::size_t p = predict(net, blend(others.images[i], out.tuple.mask, out.tuple.pattern));
    if (p != others.labels[i]) ++fooled;
    if (p == k) ++to_k;
  }
  for (const auto& x : members.images) {
    if (predict(net, blend(x, out.tuple.mask, out.tuple.pattern)) == k) ++kept;
  }
  const auto n_others = static_cast<double>(others.images.size());
  out.fooling_rate = static_cast<double>(fooled) / n_others;
  out.target_rate = static_cast<double>(to_k) / n_others;
  out.retention_rate = members.images.empty() ? 1.0 : static_cast<double>(kept) / static_cast<double>(members.images.size());
  return out;
}

PerImagePerturbation compute_per_image_perturbation(const Network& net, const Tensor& x, std::size_t k,
                                                    double lambda, double tau, const SolverConfig& cfg) {
  if (k >= net.num_classes()) throw UsageError("label " + std::to_string(k) + " outside the model's classes");
  if (tau < 0.0) throw UsageError("tau must be >= 0");
  CompositeProblem problem;
  problem.shape = net.input_shape();
  problem.lambda = lambda;
  problem.loss = [&](const Iterate& it, GradientRequest req) {
    return targeted_loss(net, it.mask, it.pattern, x, k, tau, req);
  };
  PerImagePerturbation out;
  out.tuple = solve(problem, cfg).best;
  out.target_achieved = predict(net, blend(x, out.tuple.mask, out.tuple.pattern)) == k;
  return out;
}

double representation_similarity(std::span<const double> a, std::span<const double> b) {
  return cosine_similarity(a, b);
}

SimilarityScores similarity_scores(const Network& net, std::span<const Tensor> images, std::size_t k,
                                   const PerturbationTuple& universal, std::span<const PerturbationTuple> per_image) {
  if (images.size() != per_image.size()) throw ShapeError("similarity_scores: one per-image tuple per sample");
  SimilarityScores s;
  s.label = k;
  s.scores.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor ru = forward(net, blend(images[i], universal.mask, universal.pattern)).representation;
    const Tensor rs = forward(net, blend(images[i], per_image[i].mask, per_image[i].pattern)).representation;
    s.scores.push_back(representation_similarity(ru.values(), rs.values()));
  }
  return s;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty score vector");
  if (!(q > 0.0 && q < 100.0)) throw UsageError("quantile level q must lie in (0, 100)");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double detection_index(const SimilarityScores& scores, double q) { return percentile(scores.scores, q); }

std::string to_string(DecisionRule rule) { return rule == DecisionRule::mad ? "mad" : "threshold"; }

DecisionRule decision_rule_from_string(const std::string& name) {
  if (name == "threshold") return DecisionRule::threshold;
  if (name == "mad") return DecisionRule::mad;
  throw UsageError("unknown decision rule '" + name + "' (expected threshold or mad)");
}

Decision decide_threshold(std::span<const double> indices, double t1) {
  Decision d;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= t1) d.targets.push_back(k);
  }
  d.trojan = !d.targets.empty();
  return d;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr double kMadConsistency = 1.4826;
constexpr double kMadCutoff = 2.0;
constexpr double kDegenerateGap = 1e-6;

}  // namespace

std::vector<double> mad_anomaly_scores(std::span<const double> indices) {
  if (indices.size() < 3) throw UsageError("MAD rule needs at least 3 labels");
  const double med = median({indices.begin(), indices.end()});
  std::vector<double> dev;
  for (double v : indices) dev.push_back(std::abs(v - med));
  const double mad = kMadConsistency * median(dev);
  std::vector<double> out;
  for (double d : dev) {
    out.push_back(mad > 0.0 ? d / mad : (d > kDegenerateGap ? std::numeric_limits<double>::infinity() : 0.0));
  }
  return out;
}

Decision decide_mad(std::span<const double> indices) {
  const std::vector<double> scores = mad_anomaly_scores(indices);
  const double med = median({indices.begin(), indices.end()});
  Decision d;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] > med && scores[k] > kMadCutoff) d.targets.push_back(k);
  }
  d.trojan = !d.targets.empty();
  return d;
}

SolverConfig DLConfig::default_solver() {
  SolverConfig s;
  s.iterations = 150;
  s.learning_rate = 0.02;
  s.plateau_patience = 50;
  s.change_patience = 20;
  s.record_trace = false;
  return s;
}

std::vector<double> DLReport::indices() const {
  std::vector<double> out;
  for (const auto& l : labels) out.push_back(l.index);
  return out;
}

double DLReport::suspicion() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& l : labels) best = std::max(best, l.index);
  return best;
}

namespace {

struct LambdaRun {
  double index = -1.0;
  std::vector<double> scores;
  UniversalPerturbation universal;
};

LabelReport run_label(const Network& net, const ValidationSet& valset, const Partitions& parts, std::size_t k,
                      const DLConfig& cfg) {
  LabelReport rep;
  rep.label = k;
  const std::vector<std::size_t> others = parts.non_members(k);
  if (others.empty()) {
    rep.index = -1.0;
    rep.index_per_lambda.assign(cfg.lambdas.size(), -1.0);
    rep.scores_per_lambda.assign(cfg.lambdas.size(), {});
    return rep;
  }
  std::vector<Tensor> images;
  for (std::size_t i : others) images.push_back(valset.images[i]);

  std::optional<LambdaRun> best;
  for (double lambda : cfg.lambdas) {
    LambdaRun run;
    // Per pixel and per sample: the universal loss sums one hinge per validation sample.
    const double image_lambda = lambda * static_cast<double>(shape_volume(net.input_shape()));
    const double universal_lambda = image_lambda * static_cast<double>(valset.size());
    run.universal = compute_universal_perturbation(net, valset, parts, k, universal_lambda, cfg.tau, cfg.solver);
    std::vector<PerturbationTuple> singles;
    for (const auto& x : images) {
      singles.push_back(compute_per_image_perturbation(net, x, k, image_lambda, cfg.tau, cfg.solver).tuple);
    }
    run.scores = similarity_scores(net, images, k, run.universal.tuple, singles).scores;
    run.index = percentile(run.scores, cfg.q);
    rep.index_per_lambda.push_back(run.index);
    rep.scores_per_lambda.push_back(run.scores);
    if (!best || run.index > best->index) best = std::move(run);
  }
  rep.index = best->index;
  rep.scores = std::move(best->scores);
  rep.fooling_rate = best->universal.fooling_rate;
  rep.target_rate = best->universal.target_rate;
  rep.retention_rate = best->universal.retention_rate;
  rep.universal_iterations = best->universal.tuple.iterations_run;
  return rep;
}

}  // namespace

DLReport run_dl_tnd(const Network& net, const ValidationSet& valset, const DLConfig& cfg,
                    const std::string& model_id) {
  if (cfg.lambdas.empty()) throw UsageError("lambda sweep is empty");
  if (valset.num_classes != net.num_classes()) {
    throw DataError("validation set has " + std::to_string(valset.num_classes) + " classes, model has " +
                    std::to_string(net.num_classes()));
  }
  const Partitions parts = partition(net, valset);
  DLReport report;
  report.model_id = model_id;
  report.config = cfg;
  report.labels = parallel_map<LabelReport>(net.num_classes(), cfg.threads,
                                            [&](std::size_t k) { return run_label(net, valset, parts, k, cfg); });
  report.decision = decide(report, cfg.rule, cfg.t1);
  return report;
}

Decision decide(const DLReport& report, DecisionRule rule, double t1) {
  const std::vector<double> idx = report.indices();
  return rule == DecisionRule::mad ? decide_mad(idx) : decide_threshold(idx, t1);
}

DLReport with_quantile(const DLReport& report, double q) {
  DLReport out = report;
  out.config.q = q;
  for (auto& l : out.labels) {
    bool any = false;
    for (std::size_t j = 0; j < l.scores_per_lambda.size(); ++j) {
      if (l.scores_per_lambda[j].empty()) continue;
      const double idx = percentile(l.scores_per_lambda[j], q);
      l.index_per_lambda[j] = idx;
      if (!any || idx > l.index) {
        l.index = idx;
        l.scores = l.scores_per_lambda[j];
      }
      any = true;
    }
  }
  out.decision = decide(out, out.config.rule, out.config.t1);
  return out;
}

std::vector<std::size_t> score_histogram(std::span<const double> scores, std::size_t bins) {
  if (bins == 0) throw UsageError("histogram needs at least one bin");
  std::vector<std::size_t> out(bins, 0);
  for (double s : scores) {
    const double u = (std::clamp(s, -1.0, 1.0) + 1.0) / 2.0;
    out[std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)))]++;
  }
  return out;
}

nlohmann::json dl_config_to_json(const DLConfig& cfg) {
  return {{"lambdas", cfg.lambdas}, {"tau", cfg.tau},
          {"q", cfg.q},             {"T1", cfg.t1},
          {"rule", to_string(cfg.rule)}, {"solver", solver_config_to_json(cfg.solver)}};
}

DLConfig dl_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("DL-TND config must be a JSON object");
  DLConfig c;
  c.lambdas = j.value("lambdas", c.lambdas);
  c.tau = j.value("tau", c.tau);
  c.q = j.value("q", c.q);
  c.t1 = j.value("T1", c.t1);
  if (j.contains("rule")) c.rule = decision_rule_from_string(j.at("rule").get<std::string>());
  if (j.contains("solver")) c.solver = solver_config_from_json(j.at("solver"), c.solver);
  c.threads = j.value("threads", c.threads);
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  return c;
}

nlohmann::json to_json(const DLReport& report) {
  nlohmann::json per_label = nlohmann::json::array();
  for (const auto& l : report.labels) {
    per_label.push_back({{"label", l.label},
                         {"index", l.index},
                         {"index_per_lambda", l.index_per_lambda},
                         {"score_histogram", score_histogram(l.scores, report.config.histogram_bins)},
                         {"fooling_rate", l.fooling_rate},
                         {"target_rate", l.target_rate},
                         {"retention_rate", l.retention_rate}});
  }
  return {{"model_id", report.model_id},
          {"detector", "dl"},
          {"rule", to_string(report.config.rule)},
          {"q", report.config.q},
          {"T1", report.config.t1},
          {"tau", report.config.tau},
          {"lambda_sweep", report.config.lambdas},
          {"per_label", per_label},
          {"suspicion", report.suspicion()},
          {"decision", report.decision.trojan ? "trojan" : "clean"},
          {"targets", report.decision.targets}};
}

}  // namespace tnd
