#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tnd/nn.hpp"
#include "tnd/tensor.hpp"
#include "tnd/trigger.hpp"

namespace tnd {

enum class Split { train, test };

/// Images (N, C, H, W) in [0, 255] with labels in [0, K).
struct DatasetBundle {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;
  /// Indices stamped by poison_dataset, ascending.
  std::vector<std::size_t> poisoned_indices;

  std::size_t size() const noexcept { return labels.size(); }
  Shape image_shape() const;
  Tensor image(std::size_t i) const { return sample(images, i); }

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

struct PoisonConfig {
  TriggerSpec trigger;
  int target_label = 0;
  double poison_ratio = 0.1;
  /// Off by default: stamping a target-class sample teaches the backdoor nothing.
  bool allow_target_poison = false;
};

/// x_hat = (1 - m) * x + m * delta.
Tensor stamp(const Tensor& x, const TriggerSpec& trigger);
/// Same blend for a relaxed mask m in [0,1]^n.
Tensor blend(const Tensor& x, const Tensor& mask, const Tensor& pattern);

/// Stamps and relabels exactly round(ratio * N) samples chosen uniformly (seeded) from the eligible
/// pool: non-target samples not already poisoned. Throws DataError if the count rounds to 0 or
/// exceeds the pool.
DatasetBundle poison_dataset(const DatasetBundle& ds, const PoisonConfig& cfg, std::uint64_t seed);

/// K geometric class archetypes (ring, bars, checker, diagonal, blob, ...) drawn in the image centre
/// with per-sample colour, jitter and pixel noise. Borders stay free for trigger placement.
/// Throws DataError for K < 2, K > 10, per_class == 0 or images smaller than 12x12.
DatasetBundle generate_synthetic_dataset(std::size_t num_classes, std::size_t per_class, const Shape& image_shape,
                                         std::uint64_t seed, Split split = Split::train);

/// Fraction of stamped non-target test images predicted as `target`. Throws DataError if no
/// eligible sample exists.
double attack_success_rate(const Network& net, const DatasetBundle& test, const TriggerSpec& trigger, int target);

/// The first `per_class` samples of each label after a seeded shuffle, ordered by label.
DatasetBundle take_per_class(const DatasetBundle& ds, std::size_t per_class, std::uint64_t seed);

/// Pixel mean per class; nearest-centroid accuracy on `test`. Used as a separability check.
double nearest_centroid_accuracy(const DatasetBundle& train, const DatasetBundle& test);

void save_dataset(const std::filesystem::path& path, const DatasetBundle& ds);
DatasetBundle load_dataset(const std::filesystem::path& path);

}  // namespace tnd
