#include "tnd/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"

namespace tnd {

Shape DatasetBundle::image_shape() const {
  if (images.rank() != 4) return {};
  return Shape(images.shape().begin() + 1, images.shape().end());
}

Tensor stamp(const Tensor& x, const TriggerSpec& trigger) { return blend(x, trigger.mask(), trigger.pattern()); }

Tensor blend(const Tensor& x, const Tensor& mask, const Tensor& pattern) {
  if (x.shape() != mask.shape() || x.shape() != pattern.shape()) {
    throw ShapeError("stamp: image " + shape_string(x.shape()) + ", mask " + shape_string(mask.shape()) +
                     " and pattern " + shape_string(pattern.shape()) + " disagree");
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = mask[i];
    // Exact on the binary support so stamping never perturbs untouched pixels.
    out[i] = m == 0.0 ? x[i] : (m == 1.0 ? pattern[i] : (1.0 - m) * x[i] + m * pattern[i]);
  }
  return out;
}

DatasetBundle poison_dataset(const DatasetBundle& ds, const PoisonConfig& cfg, std::uint64_t seed) {
  if (!(cfg.poison_ratio > 0.0 && cfg.poison_ratio < 1.0)) throw UsageError("poison ratio must lie in (0, 1)");
  if (cfg.target_label < 0 || static_cast<std::size_t>(cfg.target_label) >= ds.num_classes) {
    throw UsageError("poison target label outside [0, K)");
  }
  if (cfg.trigger.image_shape() != ds.image_shape()) throw ShapeError("trigger shape does not match dataset images");
  const auto count = static_cast<std::size_t>(std::llround(cfg.poison_ratio * static_cast<double>(ds.size())));
  if (count == 0) throw DataError("poison ratio selects 0 samples out of " + std::to_string(ds.size()));

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool already = std::binary_search(ds.poisoned_indices.begin(), ds.poisoned_indices.end(), i);
    if (!already && (cfg.allow_target_poison || ds.labels[i] != cfg.target_label)) eligible.push_back(i);
  }
  if (count > eligible.size()) {
    throw DataError("poison count " + std::to_string(count) + " exceeds " + std::to_string(eligible.size()) +
                    " eligible samples");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());

  DatasetBundle out = ds;
  const std::size_t n = shape_volume(ds.image_shape());
  for (std::size_t idx : eligible) {
    Tensor stamped = stamp(ds.image(idx), cfg.trigger);
    std::copy(stamped.data(), stamped.data() + n, out.images.data() + idx * n);
    out.labels[idx] = cfg.target_label;
  }
  out.poisoned_indices.insert(out.poisoned_indices.end(), eligible.begin(), eligible.end());
  std::sort(out.poisoned_indices.begin(), out.poisoned_indices.end());
  return out;
}

namespace {

constexpr double kHalfBox = 0.28;

bool in_box(double u, double v) { return std::abs(u) <= kHalfBox && std::abs(v) <= kHalfBox; }

// Foreground intensity in [0, 1] for class k at normalised offset (u, v) from the archetype centre.
double archetype(std::size_t k, double u, double v) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (k) {
    case 0: {  // ring
      const double d = std::hypot(u, v);
      return std::exp(-std::pow((d - 0.22) / 0.05, 2));
    }
    case 1:  // horizontal bars
      return in_box(u, v) && std::cos(two_pi * u / 0.19) > 0.0 ? 1.0 : 0.0;
    case 2:  // checker
      return in_box(u, v) && std::cos(two_pi * u / 0.25) * std::cos(two_pi * v / 0.25) > 0.0 ? 1.0 : 0.0;
    case 3:  // diagonal
      return in_box(u, v) && std::abs(u - v) < 0.07 ? 1.0 : 0.0;
    case 4:  // blob
      return std::exp(-(u * u + v * v) / (2.0 * 0.12 * 0.12));
    case 5:  // vertical bars
      return in_box(u, v) && std::cos(two_pi * v / 0.19) > 0.0 ? 1.0 : 0.0;
    case 6:  // plus
      return in_box(u, v) && (std::abs(u) < 0.06 || std::abs(v) < 0.06) ? 1.0 : 0.0;
    case 7:  // anti-diagonal
      return in_box(u, v) && std::abs(u + v) < 0.07 ? 1.0 : 0.0;
    case 8:  // square outline
      return in_box(u, v) && std::max(std::abs(u), std::abs(v)) > kHalfBox - 0.08 ? 1.0 : 0.0;
    case 9:  // saltire
      return in_box(u, v) && (std::abs(u - v) < 0.06 || std::abs(u + v) < 0.06) ? 1.0 : 0.0;
    default:
      return 0.0;
  }
}

}  // namespace

DatasetBundle generate_synthetic_dataset(std::size_t num_classes, std::size_t per_class, const Shape& image_shape,
                                         std::uint64_t seed, Split split) {
  if (num_classes < 2) throw DataError("synthetic dataset needs K >= 2");
  if (num_classes > 10) throw DataError("synthetic dataset supports at most 10 archetypes");
  if (per_class == 0) throw DataError("synthetic dataset would be empty (per_class = 0)");
  if (image_shape.size() != 3 || image_shape[0] == 0 || image_shape[0] > 3) {
    throw ShapeError("synthetic images must be (C<=3, H, W)");
  }
  const std::size_t C = image_shape[0], H = image_shape[1], W = image_shape[2];
  if (H < 12 || W < 12) throw DataError("image too small for archetypes (needs at least 12x12)");

  const std::size_t n = num_classes * per_class;
  const std::size_t pixels = C * H * W;
  DatasetBundle ds;
  ds.images = Tensor({n, C, H, W});
  ds.labels.resize(n);
  ds.num_classes = num_classes;
  ds.split = split;
  ds.seed = seed;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::uniform_real_distribution<double> bg_dist(20.0, 60.0);
  std::uniform_real_distribution<double> fg_dist(170.0, 255.0);
  std::uniform_real_distribution<double> scale_dist(0.95, 1.05);
  std::uniform_real_distribution<double> shift_dist(-0.5, 0.5);
  std::normal_distribution<double> noise(0.0, 10.0);
  const double s = static_cast<double>(std::min(H, W));

  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t slot = order[j];
    const std::size_t k = j % num_classes;
    ds.labels[slot] = static_cast<int>(k);
    double bg[3], fg[3];
    for (std::size_t c = 0; c < 3; ++c) {
      bg[c] = bg_dist(rng);
      fg[c] = fg_dist(rng);
    }
    const double scale = scale_dist(rng);
    const double cy = (static_cast<double>(H) - 1.0) / 2.0 + shift_dist(rng);
    const double cx = (static_cast<double>(W) - 1.0) / 2.0 + shift_dist(rng);
    double* img = ds.images.data() + slot * pixels;
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const double u = (static_cast<double>(r) - cy) / (s * scale);
        const double v = (static_cast<double>(c) - cx) / (s * scale);
        const double f = archetype(k, u, v);
        for (std::size_t ch = 0; ch < C; ++ch) {
          const double value = bg[ch] + f * (fg[ch] - bg[ch]) + noise(rng);
          img[(ch * H + r) * W + c] = std::clamp(value, 0.0, 255.0);
        }
      }
    }
  }
  return ds;
}

double attack_success_rate(const Network& net, const DatasetBundle& test, const TriggerSpec& trigger, int target) {
  std::size_t eligible = 0, hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == target) continue;
    ++eligible;
    if (static_cast<int>(predict(net, stamp(test.image(i), trigger))) == target) ++hits;
  }
  if (eligible == 0) throw DataError("attack success rate: no non-target test samples");
  return static_cast<double>(hits) / static_cast<double>(eligible);
}

DatasetBundle take_per_class(const DatasetBundle& ds, std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw UsageError("take_per_class: per_class must be positive");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> chosen(ds.num_classes);
  for (std::size_t idx : order) {
    auto& bucket = chosen[static_cast<std::size_t>(ds.labels[idx])];
    if (bucket.size() < per_class) bucket.push_back(idx);
  }
  std::vector<std::size_t> picks;
  for (std::size_t k = 0; k < ds.num_classes; ++k) {
    if (chosen[k].empty()) throw DataError("take_per_class: class " + std::to_string(k) + " has no samples");
    picks.insert(picks.end(), chosen[k].begin(), chosen[k].end());
  }
  const Shape img = ds.image_shape();
  const std::size_t pixels = shape_volume(img);
  DatasetBundle out;
  Shape shape{picks.size()};
  shape.insert(shape.end(), img.begin(), img.end());
  out.images = Tensor(shape);
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.seed = ds.seed;
  for (std::size_t j = 0; j < picks.size(); ++j) {
    std::copy(ds.images.data() + picks[j] * pixels, ds.images.data() + (picks[j] + 1) * pixels,
              out.images.data() + j * pixels);
    out.labels.push_back(ds.labels[picks[j]]);
  }
  return out;
}

double nearest_centroid_accuracy(const DatasetBundle& train, const DatasetBundle& test) {
  const std::size_t pixels = shape_volume(train.image_shape());
  std::vector<std::vector<double>> centroid(train.num_classes, std::vector<double>(pixels, 0.0));
  std::vector<std::size_t> counts(train.num_classes, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto k = static_cast<std::size_t>(train.labels[i]);
    const double* img = train.images.data() + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) centroid[k][p] += img[p];
    ++counts[k];
  }
  for (std::size_t k = 0; k < train.num_classes; ++k) {
    for (double& v : centroid[k]) v /= static_cast<double>(std::max<std::size_t>(counts[k], 1));
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double* img = test.images.data() + i * pixels;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < train.num_classes; ++k) {
      double d = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) d += (img[p] - centroid[k][p]) * (img[p] - centroid[k][p]);
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    if (static_cast<int>(best_k) == test.labels[i]) ++correct;
  }
  return test.size() ? static_cast<double>(correct) / static_cast<double>(test.size()) : 0.0;
}

void save_dataset(const std::filesystem::path& path, const DatasetBundle& ds) {
  nlohmann::json header{{"kind", "dataset"},
                        {"num_classes", ds.num_classes},
                        {"split", ds.split == Split::train ? "train" : "test"},
                        {"seed", ds.seed},
                        {"labels", ds.labels},
                        {"poisoned_indices", ds.poisoned_indices}};
  write_container(path, std::move(header), {{"images", &ds.images}});
}

DatasetBundle load_dataset(const std::filesystem::path& path) {
  Container c = read_container(path);
  try {
    if (c.header.at("kind").get<std::string>() != "dataset") throw FormatError(path.string() + ": not a dataset file");
    if (c.blocks.size() != 1) throw FormatError(path.string() + ": dataset must hold exactly one image block");
    DatasetBundle ds;
    ds.images = Tensor(c.header.at("blocks")[0].at("shape").get<Shape>(), std::move(c.blocks[0]));
    ds.labels = c.header.at("labels").get<std::vector<int>>();
    ds.num_classes = c.header.at("num_classes").get<std::size_t>();
    ds.split = c.header.at("split").get<std::string>() == "test" ? Split::test : Split::train;
    ds.seed = c.header.at("seed").get<std::uint64_t>();
    ds.poisoned_indices = c.header.at("poisoned_indices").get<std::vector<std::size_t>>();
    if (ds.images.rank() != 4 || ds.images.shape()[0] != ds.labels.size()) {
      throw FormatError(path.string() + ": image block does not match label count");
    }
    for (int y : ds.labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes) throw DataError(path.string() + ": label out of range");
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed dataset header: " + e.what());
  }
}

}  // namespace tnd
