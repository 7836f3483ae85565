#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnd/data.hpp"
#include "tnd/nn.hpp"
#include "tnd/prox.hpp"

namespace tnd {

/// A few clean samples per class. Partitions come from the model's predictions, not from `labels`.
struct ValidationSet {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return images.size(); }
  /// `per_class` samples of every class of `ds` (seeded choice). Throws DataError if a class has too few.
  static ValidationSet from_dataset(const DatasetBundle& ds, std::size_t per_class, std::uint64_t seed);
};

/// D_k and D_{k-} for every k under one model.
struct Partitions {
  std::vector<std::size_t> predicted;  ///< predicted label of every validation sample

  std::vector<std::size_t> members(std::size_t k) const;      ///< D_k
  std::vector<std::size_t> non_members(std::size_t k) const;  ///< D_{k-}
};

Partitions partition(const Network& net, const ValidationSet& valset);

/// Images with the (predicted) label each hinge term refers to.
struct LabelledImages {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
};

/// sum_{D_{k-}} max{f_y(x_hat) - max_{t!=y} f_t(x_hat), -tau}
///   + sum_{D_k} max{max_{t!=k} f_t(x_hat) - f_k(x_hat), -tau}
/// with gradients in m and delta as requested.
Evaluation untargeted_universal_loss(const Network& net, const Tensor& mask, const Tensor& pattern,
                                     const LabelledImages& others, const LabelledImages& members, double tau,
                                     GradientRequest request);

/// max{max_{t!=k} f_t(x_hat) - f_k(x_hat), -tau} for one image.
Evaluation targeted_loss(const Network& net, const Tensor& mask, const Tensor& pattern, const Tensor& x,
                         std::size_t target, double tau, GradientRequest request);

struct UniversalPerturbation {
  PerturbationTuple tuple;
  double fooling_rate = 0.0;    ///< share of D_{k-} no longer predicted as its own label
  double retention_rate = 1.0;  ///< share of D_k still predicted k (1 when D_k is empty)
  double target_rate = 0.0;     ///< share of D_{k-} pushed to exactly k
};

UniversalPerturbation compute_universal_perturbation(const Network& net, const ValidationSet& valset,
                                                     const Partitions& parts, std::size_t k, double lambda,
                                                     double tau, const SolverConfig& cfg);

struct PerImagePerturbation {
  PerturbationTuple tuple;
  bool target_achieved = false;
};

PerImagePerturbation compute_per_image_perturbation(const Network& net, const Tensor& x, std::size_t k,
                                                    double lambda, double tau, const SolverConfig& cfg);

/// Cosine similarity with the zero-vector convention (score 0).
double representation_similarity(std::span<const double> a, std::span<const double> b);

struct SimilarityScores {
  std::size_t label = 0;
  std::vector<double> scores;  ///< one per sample of D_{k-}
};

/// v_i = cos(r(x_hat_i(u)), r(x_hat_i(s_i))) over `images` (the samples of D_{k-}, in order).
SimilarityScores similarity_scores(const Network& net, std::span<const Tensor> images, std::size_t k,
                                   const PerturbationTuple& universal, std::span<const PerturbationTuple> per_image);

/// Percentile with linear interpolation between closest ranks: for sorted v of length n,
/// h = (n - 1) q / 100, I = v[floor h] + (h - floor h)(v[floor h + 1] - v[floor h]).
/// Throws DataError on empty input, UsageError for q outside (0, 100).
double percentile(std::span<const double> values, double q);
double detection_index(const SimilarityScores& scores, double q);

enum class DecisionRule { threshold, mad };
std::string to_string(DecisionRule rule);
DecisionRule decision_rule_from_string(const std::string& name);

struct Decision {
  bool trojan = false;
  std::vector<std::size_t> targets;  ///< nonempty iff trojan
};

/// Trojan iff some index reaches T1; every such label is a target.
Decision decide_threshold(std::span<const double> indices, double t1);

/// Median-absolute-deviation anomaly scores |med - I_k| / (1.4826 MAD).
std::vector<double> mad_anomaly_scores(std::span<const double> indices);
/// Upper-side MAD outliers with score > 2. With MAD = 0, labels more than 1e-6 above the median are
/// targets. Throws UsageError for fewer than 3 labels.
Decision decide_mad(std::span<const double> indices);

struct DLConfig {
  /// l1 weights per pixel and per sample. The per-image problem uses lambda * C*H*W, the universal
  /// problem that times the validation size. The report keeps the largest index over the sweep.
  std::vector<double> lambdas{4e-4};
  double tau = 10.0;
  double q = 50.0;
  double t1 = 0.97;
  DecisionRule rule = DecisionRule::threshold;
  SolverConfig solver = default_solver();
  std::size_t threads = 0;
  std::size_t histogram_bins = 10;

  static SolverConfig default_solver();
};

struct LabelReport {
  std::size_t label = 0;
  double index = 0.0;  ///< max over the lambda sweep
  std::vector<double> index_per_lambda;
  std::vector<double> scores;  ///< scores of the lambda attaining the max
  std::vector<std::vector<double>> scores_per_lambda;
  double fooling_rate = 0.0;
  double target_rate = 0.0;
  double retention_rate = 0.0;
  std::size_t universal_iterations = 0;
};

struct DLReport {
  std::string model_id;
  DLConfig config;
  std::vector<LabelReport> labels;
  Decision decision;

  std::vector<double> indices() const;
  /// max_k I^(k), the model-level suspicion score.
  double suspicion() const;
};

/// Partitions, universal and per-image solves for every label and lambda, scores and the decision.
/// Labels with empty D_{k-} get index -1.
DLReport run_dl_tnd(const Network& net, const ValidationSet& valset, const DLConfig& cfg,
                    const std::string& model_id = "");

/// Re-applies a rule to stored indices (no new solves).
Decision decide(const DLReport& report, DecisionRule rule, double t1);
/// The same report at another quantile level, recomputed from the stored scores.
DLReport with_quantile(const DLReport& report, double q);

nlohmann::json to_json(const DLReport& report);
nlohmann::json dl_config_to_json(const DLConfig& cfg);
DLConfig dl_config_from_json(const nlohmann::json& j);
/// Counts of `scores` in equal bins over [-1, 1].
std::vector<std::size_t> score_histogram(std::span<const double> scores, std::size_t bins);

}  // namespace tnd
