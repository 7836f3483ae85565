#include "tnd/prox.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"

namespace tnd {

Tensor prox_l1_box(const Tensor& a, double threshold, double hi) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double shrunk = std::max(std::abs(a[i]) - threshold, 0.0);
    out[i] = std::clamp(std::copysign(shrunk, a[i]), 0.0, hi);
  }
  return out;
}

Tensor clip_box(const Tensor& b, double lo, double hi) {
  Tensor out(b.shape());
  for (std::size_t i = 0; i < b.size(); ++i) out[i] = std::clamp(b[i], lo, hi);
  return out;
}

SimplexProjection project_simplex(std::span<const double> c) {
  if (c.empty()) throw ShapeError("project_simplex: empty vector");
  std::vector<double> sorted(c.begin(), c.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Largest rho with sorted[rho] - (prefix(rho) - 1) / (rho + 1) > 0.
  double prefix = 0.0;
  double shift = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    prefix += sorted[j];
    const double candidate = (prefix - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) shift = candidate;
  }
  SimplexProjection out;
  out.shift = shift;
  out.w.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out.w[i] = std::max(0.0, c[i] - shift);
  return out;
}

bool is_feasible(const Iterate& it, double mask_bound, double pattern_bound) {
  for (double v : it.mask.values()) {
    if (!(v >= 0.0 && v <= mask_bound)) return false;
  }
  for (double v : it.pattern.values()) {
    if (!(v >= 0.0 && v <= pattern_bound)) return false;
  }
  if (!it.weights.empty()) {
    double s = 0.0;
    for (double v : it.weights) {
      if (!(v >= 0.0)) return false;
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) return false;
  }
  return true;
}

Tensor PerturbationTuple::binarized_mask() const {
  Tensor out(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] >= 0.5 ? 1.0 : 0.0;
  return out;
}

namespace {

void require_finite(const Tensor& g, const char* block, std::size_t t) {
  if (!g.all_finite()) {
    throw NumericalError(std::string("non-finite ") + block + " gradient at iteration " + std::to_string(t));
  }
}

void require_shape(const Tensor& g, const Shape& shape, const char* block) {
  if (g.shape() != shape) throw ShapeError(std::string("solver: ") + block + " gradient has wrong shape");
}

double max_change(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

PerturbationTuple snapshot(const Iterate& it, double objective, bool feasible) {
  PerturbationTuple p;
  p.mask = it.mask;
  p.pattern = it.pattern;
  p.weights = it.weights;
  p.objective = objective;
  p.feasible = feasible;
  return p;
}

}  // namespace

SolveResult solve(const CompositeProblem& problem, const SolverConfig& cfg) {
  if (!problem.loss) throw UsageError("solver: problem has no loss");
  if (cfg.iterations == 0) throw UsageError("solver: iterations must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw UsageError("solver: learning rate must be positive");
  if (problem.lambda < 0.0) throw UsageError("solver: lambda must be >= 0");
  if (!(problem.mask_bound > 0.0 && problem.pattern_bound > 0.0)) throw UsageError("solver: bounds must be positive");

  Iterate it;
  if (cfg.random_init) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    it.mask = Tensor(problem.shape);
    it.pattern = Tensor(problem.shape);
    for (double& v : it.mask.values()) v = unit(rng) * problem.mask_bound;
    for (double& v : it.pattern.values()) v = unit(rng) * problem.pattern_bound;
  } else {
    it.mask = cfg.mask_start ? *cfg.mask_start : Tensor(problem.shape, cfg.mask_init);
    it.pattern = cfg.pattern_start ? *cfg.pattern_start : Tensor(problem.shape, cfg.pattern_init);
  }
  if (it.mask.shape() != problem.shape || it.pattern.shape() != problem.shape) {
    throw ShapeError("solver: initial mask/pattern shape does not match the problem");
  }
  it.mask = clip_box(it.mask, 0.0, problem.mask_bound);
  it.pattern = clip_box(it.pattern, 0.0, problem.pattern_bound);
  if (problem.has_weights()) {
    if (cfg.weights_start) {
      if (cfg.weights_start->size() != problem.weights_dim) throw ShapeError("solver: initial w has wrong length");
      it.weights = project_simplex(*cfg.weights_start).w;
    } else {
      it.weights.assign(problem.weights_dim, 1.0 / static_cast<double>(problem.weights_dim));
    }
  }

  double mu = cfg.learning_rate;
  const double lambda = problem.lambda;
  const auto composite = [&](double smooth) { return smooth + lambda * l1_norm(it.mask.values()); };

  SolveResult result;
  double best_objective = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  std::size_t quiet_iterations = 0;
  std::size_t t = 0;
  std::vector<TraceRow> trace;

  auto mask_step = [&](std::size_t iter) {
    Evaluation e = problem.loss(it, {.mask = true});
    require_shape(e.grad_mask, problem.shape, "mask");
    require_finite(e.grad_mask, "mask", iter);
    Tensor a(problem.shape);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = it.mask[i] - mu * e.grad_mask[i];
    return std::pair{e.value, prox_l1_box(a, lambda * mu, problem.mask_bound)};
  };
  auto pattern_step = [&](std::size_t iter) {
    Evaluation e = problem.loss(it, {.pattern = true});
    require_shape(e.grad_pattern, problem.shape, "pattern");
    require_finite(e.grad_pattern, "pattern", iter);
    Tensor b(problem.shape);
    const double step = mu * cfg.pattern_lr_scale;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = it.pattern[i] - step * e.grad_pattern[i];
    return std::pair{e.value, clip_box(b, 0.0, problem.pattern_bound)};
  };

  for (t = 0; t < cfg.iterations; ++t) {
    const Tensor prev_mask = it.mask;
    const Tensor prev_pattern = it.pattern;
    const std::vector<double> prev_weights = it.weights;

    // The first block evaluation happens at the current iterate, so its value is this iterate's F.
    double smooth_here = 0.0;
    if (cfg.order == BlockOrder::mask_first) {
      auto [value, next_mask] = mask_step(t);
      smooth_here = value;
      const double objective = composite(smooth_here);
      if (objective < best_objective) {
        best_objective = objective;
        result.best = snapshot(it, objective, is_feasible(it, problem.mask_bound, problem.pattern_bound));
        since_improvement = 0;
      } else {
        ++since_improvement;
      }
      if (cfg.record_trace) trace.push_back({t, objective, l1_norm(it.mask.values()), mu, true});
      it.mask = std::move(next_mask);
      it.pattern = pattern_step(t).second;
    } else {
      auto [value, next_pattern] = pattern_step(t);
      smooth_here = value;
      const double objective = composite(smooth_here);
      if (objective < best_objective) {
        best_objective = objective;
        result.best = snapshot(it, objective, is_feasible(it, problem.mask_bound, problem.pattern_bound));
        since_improvement = 0;
      } else {
        ++since_improvement;
      }
      if (cfg.record_trace) trace.push_back({t, objective, l1_norm(it.mask.values()), mu, true});
      it.pattern = std::move(next_pattern);
      it.mask = mask_step(t).second;
    }

    if (problem.has_weights()) {
      Evaluation e = problem.loss(it, {.weights = true});
      if (e.grad_weights.size() != problem.weights_dim) throw ShapeError("solver: weights gradient has wrong length");
      std::vector<double> c(problem.weights_dim);
      const double step = mu * cfg.weights_lr_scale;
      const double sign = problem.weights_sense == Sense::ascend ? 1.0 : -1.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (!std::isfinite(e.grad_weights[i])) {
          throw NumericalError("non-finite weights gradient at iteration " + std::to_string(t));
        }
        c[i] = it.weights[i] + sign * step * e.grad_weights[i];
      }
      it.weights = project_simplex(c).w;
    }

    const bool feasible = is_feasible(it, problem.mask_bound, problem.pattern_bound);
    assert(feasible);
    if (cfg.record_trace && !feasible) trace.back().feasible = false;

    double change = std::max(max_change(it.mask, prev_mask), max_change(it.pattern, prev_pattern));
    for (std::size_t i = 0; i < it.weights.size(); ++i) change = std::max(change, std::abs(it.weights[i] - prev_weights[i]));
    quiet_iterations = change < cfg.change_tolerance ? quiet_iterations + 1 : 0;
    if (cfg.plateau_patience > 0 && since_improvement >= cfg.plateau_patience) {
      mu *= 0.5;
      since_improvement = 0;
    }
    if (cfg.change_patience > 0 && quiet_iterations >= cfg.change_patience) {
      ++t;
      break;
    }
  }

  const double final_objective = composite(problem.loss(it, {}).value);
  const bool final_feasible = is_feasible(it, problem.mask_bound, problem.pattern_bound);
  if (cfg.record_trace) trace.push_back({t, final_objective, l1_norm(it.mask.values()), mu, final_feasible});
  result.final = snapshot(it, final_objective, final_feasible);
  if (final_objective < best_objective) result.best = result.final;
  result.final.iterations_run = t;
  result.best.iterations_run = t;
  result.final.trace = std::move(trace);
  return result;
}

void write_trace_csv(const std::filesystem::path& path, const PerturbationTuple& tuple) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,objective,mask_l1,learning_rate,feasible\n";
  for (const auto& row : tuple.trace) {
    out << row.iteration << ',' << row.objective << ',' << row.mask_l1 << ',' << row.learning_rate << ','
        << (row.feasible ? 1 : 0) << '\n';
  }
  write_text_atomic(path, out.str());
}

nlohmann::json solver_config_to_json(const SolverConfig& cfg) {
  return {{"iterations", cfg.iterations},
          {"learning_rate", cfg.learning_rate},
          {"pattern_lr_scale", cfg.pattern_lr_scale},
          {"weights_lr_scale", cfg.weights_lr_scale},
          {"plateau_patience", cfg.plateau_patience},
          {"change_tolerance", cfg.change_tolerance},
          {"change_patience", cfg.change_patience},
          {"mask_init", cfg.mask_init},
          {"pattern_init", cfg.pattern_init},
          {"random_init", cfg.random_init},
          {"seed", cfg.seed},
          {"order", cfg.order == BlockOrder::mask_first ? "mask_first" : "pattern_first"}};
}

SolverConfig solver_config_from_json(const nlohmann::json& j, SolverConfig s) {
  if (!j.is_object()) throw FormatError("solver config must be a JSON object");
  s.iterations = j.value("iterations", s.iterations);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.pattern_lr_scale = j.value("pattern_lr_scale", s.pattern_lr_scale);
  s.weights_lr_scale = j.value("weights_lr_scale", s.weights_lr_scale);
  s.plateau_patience = j.value("plateau_patience", s.plateau_patience);
  s.change_tolerance = j.value("change_tolerance", s.change_tolerance);
  s.change_patience = j.value("change_patience", s.change_patience);
  s.mask_init = j.value("mask_init", s.mask_init);
  s.pattern_init = j.value("pattern_init", s.pattern_init);
  s.random_init = j.value("random_init", s.random_init);
  s.seed = j.value("seed", s.seed);
  if (j.contains("order")) {
    const std::string order = j.at("order").get<std::string>();
    if (order == "mask_first") {
      s.order = BlockOrder::mask_first;
    } else if (order == "pattern_first") {
      s.order = BlockOrder::pattern_first;
    } else {
      throw FormatError("solver order must be mask_first or pattern_first");
    }
  }
  return s;
}

}  // namespace tnd
