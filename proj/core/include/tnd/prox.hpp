#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnd/tensor.hpp"

namespace tnd {

/// Elementwise Clip_[0,hi](sign(a) * max(|a| - threshold, 0)): the minimiser of
/// threshold * |m| + (1/2)(m - a)^2 over m in [0, hi].
Tensor prox_l1_box(const Tensor& a, double threshold, double hi = 1.0);
/// Elementwise clamp to [lo, hi].
Tensor clip_box(const Tensor& b, double lo = 0.0, double hi = 255.0);

struct SimplexProjection {
  std::vector<double> w;
  /// The root mu of sum_i max(0, c_i - mu) = 1.
  double shift = 0.0;
};

/// Euclidean projection onto {w >= 0, sum w = 1} by sort-and-scan. Throws ShapeError on empty input.
SimplexProjection project_simplex(std::span<const double> c);

enum class Sense { descend, ascend };
enum class BlockOrder { mask_first, pattern_first };

/// Optimisation variables: relaxed mask m, pattern delta (same shape), optional simplex weights w.
struct Iterate {
  Tensor mask;
  Tensor pattern;
  std::vector<double> weights;
};

struct GradientRequest {
  bool mask = false;
  bool pattern = false;
  bool weights = false;
};

/// `value` is always the smooth loss F in minimisation form. `grad_mask` / `grad_pattern` are dF/dm
/// and dF/ddelta. `grad_weights` is the gradient of the objective the w block's sense applies to:
/// dF/dw for Sense::descend, d(-F)/dw for Sense::ascend. The two conventions describe the same step.
struct Evaluation {
  double value = 0.0;
  Tensor grad_mask;
  Tensor grad_pattern;
  std::vector<double> grad_weights;
};

using SmoothLoss = std::function<Evaluation(const Iterate&, GradientRequest)>;

/// min F(delta, m, w) + lambda ||m||_1 + I_[0,mask_bound](m) + I_[0,pattern_bound](delta) + I_simplex(w).
struct CompositeProblem {
  SmoothLoss loss;
  Shape shape;
  std::size_t weights_dim = 0;  ///< 0 disables the w block
  Sense weights_sense = Sense::ascend;
  double lambda = 0.0;
  double mask_bound = 1.0;
  double pattern_bound = 255.0;

  bool has_weights() const noexcept { return weights_dim > 0; }
};

struct SolverConfig {
  std::size_t iterations = 5000;
  double learning_rate = 0.05;
  /// Step multiplier for the pattern block. 255^2 makes a pattern step equal to a step on delta/255,
  /// so both box blocks move on the same [0,1] scale.
  double pattern_lr_scale = 255.0 * 255.0;
  double weights_lr_scale = 1.0;
  /// Halve the learning rate after this many iterations without objective improvement (0 = never).
  std::size_t plateau_patience = 200;
  double change_tolerance = 1e-7;
  /// Stop once the max iterate change stays below tolerance this many iterations in a row (0 = never).
  std::size_t change_patience = 100;

  double mask_init = 0.5;
  double pattern_init = 128.0;
  std::optional<Tensor> mask_start;
  std::optional<Tensor> pattern_start;
  std::optional<std::vector<double>> weights_start;
  /// Uniform random m and delta drawn from `seed` instead of the constant initialisation.
  bool random_init = false;
  std::uint64_t seed = 0;

  BlockOrder order = BlockOrder::mask_first;
  bool record_trace = true;
};

struct TraceRow {
  std::size_t iteration = 0;
  double objective = 0.0;
  double mask_l1 = 0.0;
  double learning_rate = 0.0;
  bool feasible = true;
};

struct PerturbationTuple {
  Tensor mask;
  Tensor pattern;
  std::vector<double> weights;
  /// Composite objective F + lambda ||m||_1 of this iterate.
  double objective = 0.0;
  bool feasible = true;
  std::size_t iterations_run = 0;
  std::vector<TraceRow> trace;

  /// Mask thresholded at 0.5, for visualisation only.
  Tensor binarized_mask() const;
};

struct SolveResult {
  PerturbationTuple final;
  PerturbationTuple best;
};

/// Alternating proximal gradient: per iteration an l1-box prox step on m, a clipped step on delta
/// (at the new m), then a projected simplex step on w (at the new m, delta).
/// Throws UsageError for learning_rate <= 0 or iterations == 0, NumericalError (with the iteration
/// index) on a non-finite gradient.
SolveResult solve(const CompositeProblem& problem, const SolverConfig& cfg);

bool is_feasible(const Iterate& it, double mask_bound = 1.0, double pattern_bound = 255.0);

/// CSV columns: iteration,objective,mask_l1,learning_rate,feasible
void write_trace_csv(const std::filesystem::path& path, const PerturbationTuple& tuple);

nlohmann::json solver_config_to_json(const SolverConfig& cfg);
/// Fields missing from `j` keep their value in `base`.
SolverConfig solver_config_from_json(const nlohmann::json& j, SolverConfig base = {});

}  // namespace tnd
