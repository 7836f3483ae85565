#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnd/data.hpp"
#include "tnd/nn.hpp"
#include "tnd/prox.hpp"
#include "tnd/trigger.hpp"

namespace tnd {

enum class SeedSource { noise, clean };
std::string to_string(SeedSource source);
SeedSource seed_source_from_string(const std::string& name);

struct SeedBatch {
  std::vector<Tensor> images;
  SeedSource source = SeedSource::noise;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return images.size(); }
};

/// N images with every pixel uniform on [0, 255]. Throws UsageError for N = 0.
SeedBatch noise_seeds(const Shape& image_shape, std::size_t n, std::uint64_t seed);
/// N samples of `ds` picked without replacement (seeded). Throws DataError if N exceeds the dataset.
SeedBatch clean_seeds(const DatasetBundle& ds, std::size_t n, std::uint64_t seed);

/// F = -sum_j w_j r_j(x_hat) in minimisation form; grad_weights = r(x_hat) for the ascent step on w.
/// The l1 term is left to the solver.
Evaluation inversion_objective(const Network& net, const Tensor& mask, const Tensor& pattern,
                               std::span<const double> weights, const Tensor& x, GradientRequest request);

struct InversionResult {
  PerturbationTuple tuple;
  Tensor seed;
  Tensor recovered;                ///< x_hat(m, delta)
  std::vector<double> activation;  ///< r(x_hat)
  /// Weighted activation sum_j w_j r_j(x_hat) per recorded iteration.
  std::vector<double> activation_trace;
  /// Coordinate held one-hot when refined, otherwise -1.
  long refined_coordinate = -1;
};

/// Maximises sum_j w_j r_j(x_hat) - lambda ||m||_1 over the box-constrained (m, delta) and w on the simplex.
InversionResult invert_input(const Network& net, const Tensor& x, double lambda, const SolverConfig& cfg);

/// Re-solves with w fixed one-hot at the largest coordinate of the base r(x_hat), warm-started
/// from the base (m, delta).
InversionResult refine(const Network& net, const InversionResult& base, double lambda, const SolverConfig& cfg);

/// L_k = (1/N) sum_i [f_k(x_hat_i) - f_k(x_i)]. Throws ShapeError if the counts differ or N = 0.
std::vector<double> logit_increase(const Network& net, std::span<const Tensor> seeds,
                                   std::span<const Tensor> recovered);
std::vector<double> logit_increase(const Network& net, std::span<const InversionResult> inversions);

struct DFDecision {
  bool trojan = false;
  std::vector<std::size_t> targets;
};

/// Trojan iff max_k L_k >= T2; every qualifying label is reported. Throws UsageError for non-finite T2.
DFDecision decide_df(std::span<const double> increase, double t2);

/// Share of |x_hat - x| l1 mass inside `box` (all channels), and the box's share of the image area.
struct MassFraction {
  double inside = 0.0;
  double baseline = 0.0;
  /// inside / baseline, 0 if there is no mass at all.
  double ratio() const noexcept { return baseline > 0.0 ? inside / baseline : 0.0; }
};
MassFraction trigger_mass_fraction(const Tensor& seed, const Tensor& recovered, const PixelBox& box);

struct DFConfig {
  /// Per-pixel l1 weight; the solver's lambda is this times the pixel count C*H*W.
  double lambda_per_pixel = 3e-4;
  std::size_t num_seeds = 10;
  SeedSource source = SeedSource::noise;
  double t2 = 2.0;
  bool refine = false;
  SolverConfig solver = default_solver();
  std::size_t threads = 0;

  double lambda(const Shape& image_shape) const;
  static SolverConfig default_solver();
};

struct DFReport {
  std::string model_id;
  DFConfig config;
  std::vector<InversionResult> inversions;  ///< refined ones when config.refine is set
  std::vector<double> increase;             ///< L
  std::vector<double> base_increase;        ///< L before refinement (equals `increase` without refine)
  DFDecision decision;

  double suspicion() const;
};

DFReport run_df_tnd(const Network& net, const SeedBatch& seeds, const DFConfig& cfg, const std::string& model_id = "");

nlohmann::json to_json(const DFReport& report);
nlohmann::json df_config_to_json(const DFConfig& cfg);
DFConfig df_config_from_json(const nlohmann::json& j);

/// 8-bit PNG of a (C, H, W) tensor with C in {1, 3}; values are rounded and clamped to [0, 255].
/// `scale` multiplies the values first (use 255 for masks).
void write_png(const std::filesystem::path& path, const Tensor& image, double scale = 1.0);
/// Raw little-endian f64 values; the shape goes in the JSON report.
void write_raw_f64(const std::filesystem::path& path, const Tensor& t);

}  // namespace tnd
