#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace tnd {

/// A model counts as flagged at threshold t when score >= t.
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  /// From (0, 0) to (1, 1), one point per distinct score (descending threshold); ties form one step.
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Throws DataError unless both classes are present or if sizes differ.
RocCurve roc_curve(std::span<const double> scores, std::span<const bool> positive);
double roc_auc(std::span<const double> scores, std::span<const bool> positive);

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 1.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  /// Step interpolation: sum over thresholds of (R_i - R_{i-1}) * P_i (average precision).
  double auc = 0.0;
};

PrCurve pr_curve(std::span<const double> scores, std::span<const bool> positive);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double tpr() const noexcept;
  double fpr() const noexcept;
  double precision() const noexcept;
};

Confusion confusion_at(std::span<const double> scores, std::span<const bool> positive, double threshold);

/// ROC point maximising TPR - FPR (first on ties, i.e. the highest threshold).
RocPoint youden_point(const RocCurve& roc);

/// Thresholds t with TPR(t) >= min_tpr and FPR(t) <= max_fpr form the half-open interval (lo, hi].
struct ThresholdRange {
  bool empty = true;
  double lo = 0.0;  ///< exclusive
  double hi = 0.0;  ///< inclusive
};

ThresholdRange threshold_range(std::span<const double> scores, std::span<const bool> positive, double min_tpr,
                               double max_fpr);

nlohmann::json to_json(const RocCurve& roc);
nlohmann::json to_json(const PrCurve& pr);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);
void write_pr_csv(const std::filesystem::path& path, const PrCurve& pr);

}  // namespace tnd
