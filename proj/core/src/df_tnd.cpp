#include "tnd/df_tnd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>
#include <png.h>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"
#include "tnd/parallel.hpp"
#include "tnd/perturb.hpp"

namespace tnd {

std::string to_string(SeedSource source) { return source == SeedSource::clean ? "clean" : "noise"; }

SeedSource seed_source_from_string(const std::string& name) {
  if (name == "noise") return SeedSource::noise;
  if (name == "clean") return SeedSource::clean;
  throw UsageError("unknown seed source '" + name + "' (expected noise or clean)");
}

SeedBatch noise_seeds(const Shape& image_shape, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("seed batch needs at least one image");
  SeedBatch b;
  b.source = SeedSource::noise;
  b.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pixel(0.0, 255.0);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x(image_shape);
    for (double& v : x.values()) v = pixel(rng);
    b.images.push_back(std::move(x));
  }
  return b;
}

SeedBatch clean_seeds(const DatasetBundle& ds, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("seed batch needs at least one image");
  if (n > ds.size()) throw DataError("asked for " + std::to_string(n) + " clean seeds from " + std::to_string(ds.size()));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  SeedBatch b;
  b.source = SeedSource::clean;
  b.seed = seed;
  for (std::size_t i = 0; i < n; ++i) b.images.push_back(ds.image(order[i]));
  return b;
}

Evaluation inversion_objective(const Network& net, const Tensor& mask, const Tensor& pattern,
                               std::span<const double> weights, const Tensor& x, GradientRequest request) {
  if (weights.size() != net.penultimate_dim()) throw ShapeError("inversion: w must have one entry per coordinate of r");
  std::vector<double> negated(weights.begin(), weights.end());
  for (double& v : negated) v = -v;
  StampAccumulator acc(mask, pattern, request);
  const ForwardTrace trace = acc.add(net, x, heads::weighted_activation(std::move(negated)));
  Evaluation e = acc.take();
  if (request.weights) e.grad_weights.assign(trace.representation.data(),
                                             trace.representation.data() + trace.representation.size());
  return e;
}

namespace {

InversionResult finish(const Network& net, const Tensor& x, PerturbationTuple tuple, long coordinate) {
  InversionResult r;
  r.seed = x;
  r.recovered = blend(x, tuple.mask, tuple.pattern);
  const Tensor rep = forward(net, r.recovered).representation;
  r.activation.assign(rep.data(), rep.data() + rep.size());
  for (const auto& row : tuple.trace) r.activation_trace.push_back(-row.objective);
  r.tuple = std::move(tuple);
  r.refined_coordinate = coordinate;
  return r;
}

}  // namespace

InversionResult invert_input(const Network& net, const Tensor& x, double lambda, const SolverConfig& cfg) {
  if (x.shape() != net.input_shape()) throw ShapeError("seed image shape does not match the model input");
  CompositeProblem problem;
  problem.shape = net.input_shape();
  problem.lambda = lambda;
  problem.weights_dim = net.penultimate_dim();
  problem.weights_sense = Sense::ascend;
  problem.loss = [&](const Iterate& it, GradientRequest req) {
    return inversion_objective(net, it.mask, it.pattern, it.weights, x, req);
  };
  return finish(net, x, solve(problem, cfg).best, -1);
}

InversionResult refine(const Network& net, const InversionResult& base, double lambda, const SolverConfig& cfg) {
  if (base.activation.size() != net.penultimate_dim()) throw ShapeError("refine: base inversion has no activation");
  const auto j = static_cast<std::size_t>(
      std::max_element(base.activation.begin(), base.activation.end()) - base.activation.begin());
  std::vector<double> one_hot(net.penultimate_dim(), 0.0);
  one_hot[j] = 1.0;
  const Tensor& x = base.seed;
  CompositeProblem problem;
  problem.shape = net.input_shape();
  problem.lambda = lambda;
  problem.loss = [&](const Iterate& it, GradientRequest req) {
    req.weights = false;
    return inversion_objective(net, it.mask, it.pattern, one_hot, x, req);
  };
  SolverConfig warm = cfg;
  warm.random_init = false;
  warm.mask_start = base.tuple.mask;
  warm.pattern_start = base.tuple.pattern;
  PerturbationTuple tuple = solve(problem, warm).best;
  tuple.weights = one_hot;
  return finish(net, x, std::move(tuple), static_cast<long>(j));
}

std::vector<double> logit_increase(const Network& net, std::span<const Tensor> seeds,
                                   std::span<const Tensor> recovered) {
  if (seeds.empty()) throw ShapeError("logit increase needs at least one seed");
  if (seeds.size() != recovered.size()) {
    throw ShapeError("logit increase: " + std::to_string(seeds.size()) + " seeds but " +
                     std::to_string(recovered.size()) + " recovered images");
  }
  std::vector<double> sum(net.num_classes(), 0.0);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const Tensor before = predict_logits(net, seeds[i]);
    const Tensor after = predict_logits(net, recovered[i]);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += after[k] - before[k];
  }
  for (double& v : sum) v /= static_cast<double>(seeds.size());
  return sum;
}

std::vector<double> logit_increase(const Network& net, std::span<const InversionResult> inversions) {
  std::vector<Tensor> seeds, recovered;
  for (const auto& inv : inversions) {
    seeds.push_back(inv.seed);
    recovered.push_back(inv.recovered);
  }
  return logit_increase(net, seeds, recovered);
}

DFDecision decide_df(std::span<const double> increase, double t2) {
  if (!std::isfinite(t2)) throw UsageError("T2 must be finite");
  DFDecision d;
  for (std::size_t k = 0; k < increase.size(); ++k) {
    if (increase[k] >= t2) d.targets.push_back(k);
  }
  d.trojan = !d.targets.empty();
  return d;
}

MassFraction trigger_mass_fraction(const Tensor& seed, const Tensor& recovered, const PixelBox& box) {
  if (seed.shape() != recovered.shape() || seed.rank() != 3) throw ShapeError("mass fraction needs two (C, H, W) images");
  const std::size_t C = seed.shape()[0], H = seed.shape()[1], W = seed.shape()[2];
  MassFraction f;
  f.baseline = static_cast<double>(box.area()) / static_cast<double>(H * W);
  double total = 0.0, inside = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t col = 0; col < W; ++col) {
        const std::size_t i = (c * H + r) * W + col;
        const double d = std::abs(recovered[i] - seed[i]);
        total += d;
        if (box.contains(r, col)) inside += d;
      }
    }
  }
  f.inside = total > 0.0 ? inside / total : 0.0;
  return f;
}

double DFConfig::lambda(const Shape& image_shape) const {
  return lambda_per_pixel * static_cast<double>(shape_volume(image_shape));
}

SolverConfig DFConfig::default_solver() {
  SolverConfig s;
  s.iterations = 300;
  s.learning_rate = 0.03;
  s.plateau_patience = 50;
  s.change_patience = 20;
  s.random_init = true;
  s.record_trace = true;
  return s;
}

double DFReport::suspicion() const {
  if (increase.empty()) return -std::numeric_limits<double>::infinity();
  return *std::max_element(increase.begin(), increase.end());
}

DFReport run_df_tnd(const Network& net, const SeedBatch& seeds, const DFConfig& cfg, const std::string& model_id) {
  if (seeds.size() == 0) throw UsageError("seed batch is empty");
  const double lambda = cfg.lambda(net.input_shape());
  DFReport report;
  report.model_id = model_id;
  report.config = cfg;
  report.inversions = parallel_map<InversionResult>(seeds.size(), cfg.threads, [&](std::size_t i) {
    SolverConfig sc = cfg.solver;
    sc.seed = cfg.solver.seed + i;
    InversionResult inv = invert_input(net, seeds.images[i], lambda, sc);
    return cfg.refine ? refine(net, inv, lambda, sc) : inv;
  });
  report.increase = logit_increase(net, report.inversions);
  report.base_increase = report.increase;
  if (cfg.refine) {
    // Base statistic for comparison: the unrefined solve is repeated, which keeps memory flat.
    std::vector<InversionResult> base = parallel_map<InversionResult>(seeds.size(), cfg.threads, [&](std::size_t i) {
      SolverConfig sc = cfg.solver;
      sc.seed = cfg.solver.seed + i;
      sc.record_trace = false;
      return invert_input(net, seeds.images[i], lambda, sc);
    });
    report.base_increase = logit_increase(net, base);
  }
  report.decision = decide_df(report.increase, cfg.t2);
  return report;
}

nlohmann::json df_config_to_json(const DFConfig& cfg) {
  return {{"lambda_per_pixel", cfg.lambda_per_pixel},
          {"num_seeds", cfg.num_seeds},
          {"source", to_string(cfg.source)},
          {"T2", cfg.t2},
          {"refine", cfg.refine},
          {"solver", solver_config_to_json(cfg.solver)}};
}

DFConfig df_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("DF-TND config must be a JSON object");
  DFConfig c;
  c.lambda_per_pixel = j.value("lambda_per_pixel", c.lambda_per_pixel);
  c.num_seeds = j.value("num_seeds", c.num_seeds);
  if (j.contains("source")) c.source = seed_source_from_string(j.at("source").get<std::string>());
  c.t2 = j.value("T2", c.t2);
  c.refine = j.value("refine", c.refine);
  if (j.contains("solver")) c.solver = solver_config_from_json(j.at("solver"), c.solver);
  c.threads = j.value("threads", c.threads);
  return c;
}

nlohmann::json to_json(const DFReport& report) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& inv : report.inversions) {
    seeds.push_back({{"mask_l1", l1_norm(inv.tuple.mask.values())},
                     {"objective", inv.tuple.objective},
                     {"iterations", inv.tuple.iterations_run},
                     {"refined_coordinate", inv.refined_coordinate}});
  }
  return {{"model_id", report.model_id},
          {"detector", "df"},
          {"source", to_string(report.config.source)},
          {"refine", report.config.refine},
          {"lambda", report.inversions.empty() ? 0.0 : report.config.lambda(report.inversions.front().seed.shape())},
          {"T2", report.config.t2},
          {"logit_increase", report.increase},
          {"base_logit_increase", report.base_increase},
          {"seeds", seeds},
          {"suspicion", report.suspicion()},
          {"decision", report.decision.trojan ? "trojan" : "clean"},
          {"targets", report.decision.targets}};
}

void write_png(const std::filesystem::path& path, const Tensor& image, double scale) {
  if (image.rank() != 3 || (image.shape()[0] != 1 && image.shape()[0] != 3)) {
    throw ShapeError("PNG export needs a (1|3, H, W) tensor, got " + shape_string(image.shape()));
  }
  const std::size_t C = image.shape()[0], H = image.shape()[1], W = image.shape()[2];
  std::vector<png_byte> pixels(H * W * C);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t ch = 0; ch < C; ++ch) {
        const double v = std::clamp(std::round(image[(ch * H + r) * W + c] * scale), 0.0, 255.0);
        pixels[(r * W + c) * C + ch] = static_cast<png_byte>(v);
      }
    }
  }
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(W);
  desc.height = static_cast<png_uint_32>(H);
  desc.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encoding failed: ") + desc.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&desc, bytes.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encoding failed: ") + desc.message);
  }
  bytes.resize(size);
  write_text_atomic(path, bytes);
}

void write_raw_f64(const std::filesystem::path& path, const Tensor& t) {
  std::string bytes(t.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t bits;
    const double v = t[i];
    std::memcpy(&bits, &v, sizeof bits);
    for (std::size_t b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  write_text_atomic(path, bytes);
}

}  // namespace tnd
