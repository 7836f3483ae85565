#include "tnd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"

namespace tnd {

namespace {

struct Sorted {
  std::vector<std::size_t> order;  // descending score
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Sorted sort_scores(std::span<const double> scores, std::span<const bool> positive, bool need_negatives) {
  if (scores.size() != positive.size()) throw DataError("scores and labels differ in length");
  Sorted s;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("score " + std::to_string(i) + " is not finite");
    (positive[i] ? s.positives : s.negatives)++;
  }
  if (s.positives == 0) throw DataError("ground truth has no positive model");
  if (need_negatives && s.negatives == 0) throw DataError("ground truth has no negative model");
  s.order.resize(scores.size());
  std::iota(s.order.begin(), s.order.end(), 0);
  std::stable_sort(s.order.begin(), s.order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return s;
}

// Calls step(threshold, tp, fp) once per distinct score, descending.
template <typename F>
void sweep(std::span<const double> scores, std::span<const bool> positive, const Sorted& s, F step) {
  std::size_t tp = 0, fp = 0;
  for (std::size_t j = 0; j < s.order.size();) {
    const double t = scores[s.order[j]];
    while (j < s.order.size() && scores[s.order[j]] == t) {
      (positive[s.order[j]] ? tp : fp)++;
      ++j;
    }
    step(t, tp, fp);
  }
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> positive) {
  const Sorted s = sort_scores(scores, positive, true);
  const auto P = static_cast<double>(s.positives), N = static_cast<double>(s.negatives);
  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  sweep(scores, positive, s, [&](double t, std::size_t tp, std::size_t fp) {
    const RocPoint& prev = roc.points.back();
    RocPoint p{t, static_cast<double>(fp) / N, static_cast<double>(tp) / P};
    roc.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
    roc.points.push_back(p);
  });
  return roc;
}

double roc_auc(std::span<const double> scores, std::span<const bool> positive) {
  return roc_curve(scores, positive).auc;
}

PrCurve pr_curve(std::span<const double> scores, std::span<const bool> positive) {
  const Sorted s = sort_scores(scores, positive, false);
  const auto P = static_cast<double>(s.positives);
  PrCurve pr;
  double prev_recall = 0.0;
  sweep(scores, positive, s, [&](double t, std::size_t tp, std::size_t fp) {
    PrPoint p{t, static_cast<double>(tp) / P, static_cast<double>(tp) / static_cast<double>(tp + fp)};
    pr.auc += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
    pr.points.push_back(p);
  });
  return pr;
}

double Confusion::tpr() const noexcept { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
double Confusion::fpr() const noexcept { return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn); }
double Confusion::precision() const noexcept {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

Confusion confusion_at(std::span<const double> scores, std::span<const bool> positive, double threshold) {
  if (scores.size() != positive.size()) throw DataError("scores and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool flagged = scores[i] >= threshold;
    if (positive[i]) {
      (flagged ? c.tp : c.fn)++;
    } else {
      (flagged ? c.fp : c.tn)++;
    }
  }
  return c;
}

RocPoint youden_point(const RocCurve& roc) {
  if (roc.points.size() < 2) throw DataError("ROC curve has no thresholds");
  RocPoint best = roc.points[1];
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const RocPoint& p = roc.points[i];
    if (p.tpr - p.fpr > best.tpr - best.fpr) best = p;
  }
  return best;
}

ThresholdRange threshold_range(std::span<const double> scores, std::span<const bool> positive, double min_tpr,
                               double max_fpr) {
  const RocCurve roc = roc_curve(scores, positive);
  // TPR and FPR are non-decreasing along the curve, so the qualifying points are contiguous.
  std::size_t first = 0, last = 0;
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const RocPoint& p = roc.points[i];
    if (p.tpr < min_tpr || p.fpr > max_fpr) continue;
    if (first == 0) first = i;
    last = i;
  }
  ThresholdRange r;
  if (first == 0) return r;
  r.empty = false;
  r.hi = roc.points[first].threshold;
  r.lo = last + 1 < roc.points.size() ? roc.points[last + 1].threshold : -std::numeric_limits<double>::infinity();
  return r;
}

nlohmann::json to_json(const RocCurve& roc) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : roc.points) {
    pts.push_back({{"threshold", std::isinf(p.threshold) ? nlohmann::json("inf") : nlohmann::json(p.threshold)},
                   {"fpr", p.fpr},
                   {"tpr", p.tpr}});
  }
  return {{"auc", roc.auc}, {"points", pts}};
}

nlohmann::json to_json(const PrCurve& pr) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : pr.points) pts.push_back({{"threshold", p.threshold}, {"recall", p.recall}, {"precision", p.precision}});
  return {{"auc", pr.auc}, {"points", pts}};
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) out << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
  write_text_atomic(path, out.str());
}

void write_pr_csv(const std::filesystem::path& path, const PrCurve& pr) {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,recall,precision\n";
  for (const auto& p : pr.points) out << p.threshold << ',' << p.recall << ',' << p.precision << '\n';
  write_text_atomic(path, out.str());
}

}  // namespace tnd
