#include <doctest.h>

#include <fstream>
#include <memory>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "tnd/errors.hpp"
#include "tnd/metrics.hpp"

using namespace tnd;

namespace {

// std::vector<bool> has no contiguous storage to span over
struct Labels {
  explicit Labels(std::initializer_list<bool> v) : n(v.size()), data(new bool[v.size()]) {
    std::copy(v.begin(), v.end(), data.get());
  }
  std::span<const bool> span() const { return {data.get(), n}; }
  std::size_t n;
  std::unique_ptr<bool[]> data;
};

}  // namespace

TEST_CASE("ROC AUC edge cases") {
  const std::vector<double> sep{0.9, 0.8, 0.1, 0.2};
  const Labels y{true, true, false, false};
  CHECK(roc_auc(sep, y.span()) == 1.0);
  const std::vector<double> same(4, 0.3);
  CHECK(roc_auc(same, y.span()) == doctest::Approx(0.5));
  const std::vector<double> inverted{0.1, 0.2, 0.9, 0.8};
  CHECK(roc_auc(inverted, y.span()) == 0.0);
  const Labels one_class{true, true, true, true};
  CHECK_THROWS_AS(roc_auc(sep, one_class.span()), DataError);
  const Labels short_labels{true, false};
  CHECK_THROWS_AS(roc_auc(sep, short_labels.span()), DataError);
}

TEST_CASE("ROC AUC equals the pairwise comparison count") {
  const std::vector<double> s{0.7, 0.3, 0.5, 0.5, 0.9, 0.1};
  const Labels y{true, false, true, false, false, true};
  const double ref = oracle::wilcoxon_auc(s, y.span());
  CHECK(roc_auc(s, y.span()) == doctest::Approx(ref).epsilon(1e-15));
  const RocCurve roc = roc_curve(s, y.span());
  CHECK(roc.points.front().fpr == 0.0);
  CHECK(roc.points.front().tpr == 0.0);
  CHECK(roc.points.back().fpr == 1.0);
  CHECK(roc.points.back().tpr == 1.0);
  // five distinct scores plus the origin
  CHECK(roc.points.size() == 6);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> sc(12);
    auto flags = std::make_unique<bool[]>(12);
    for (std::size_t i = 0; i < 12; ++i) {
      sc[i] = level(rng);
      flags[i] = i % 3 == 0;
    }
    const std::span<const bool> f(flags.get(), 12);
    CHECK(roc_auc(sc, f) == doctest::Approx(oracle::wilcoxon_auc(sc, f)).epsilon(1e-12));
  }
}

TEST_CASE("PR AUC is the step average precision") {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
  const Labels y{true, true, false, false};
  CHECK(pr_curve(s, y.span()).auc == 1.0);

  const std::vector<double> h{0.95, 0.9, 0.8, 0.8, 0.6, 0.4, 0.3, 0.3, 0.2};
  const Labels hy{true, false, true, false, true, false, false, true, false};
  CHECK(pr_curve(h, hy.span()).auc == doctest::Approx(oracle::step_average_precision(h, hy.span())).epsilon(1e-15));
  // recall steps at 0.95, 0.8, 0.6 and 0.3
  const double by_hand = 0.25 * 1.0 + 0.25 * (2.0 / 4.0) + 0.25 * (3.0 / 5.0) + 0.25 * (4.0 / 8.0);
  CHECK(pr_curve(h, hy.span()).auc == doctest::Approx(by_hand));
}

TEST_CASE("Youden point, confusion and threshold range") {
  const std::vector<double> s{0.9, 0.7, 0.6, 0.4, 0.3, 0.1};
  const Labels y{true, true, false, true, false, false};
  const RocPoint j = youden_point(roc_curve(s, y.span()));
  CHECK(j.threshold == doctest::Approx(0.4));
  CHECK(j.tpr == 1.0);
  CHECK(j.fpr == doctest::Approx(1.0 / 3.0));
  // 0.6 and 0.4 tie at J = 1/2; the higher threshold wins
  const std::vector<double> tie{0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
  const Labels tie_y{true, false, true, true, false, true, false, false};
  CHECK(youden_point(roc_curve(tie, tie_y.span())).threshold == doctest::Approx(0.6));
  const RocPoint first = youden_point(roc_curve(std::vector<double>{0.9, 0.7, 0.5, 0.4}, Labels{true, false, true, false}.span()));
  CHECK(first.threshold == doctest::Approx(0.9));

  const Confusion c = confusion_at(s, y.span(), 0.6);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.tn == 2);
  CHECK(c.fn == 1);
  CHECK(c.precision() == doctest::Approx(2.0 / 3.0));

  const ThresholdRange r = threshold_range(s, y.span(), 1.0, 0.34);
  REQUIRE_FALSE(r.empty);
  CHECK(r.lo == doctest::Approx(0.3));
  CHECK(r.hi == doctest::Approx(0.4));
  CHECK(threshold_range(s, y.span(), 1.0, 0.0).empty);
  const ThresholdRange loose = threshold_range(s, y.span(), 0.6, 0.0);
  CHECK(loose.hi == doctest::Approx(0.7));
  CHECK(loose.lo == doctest::Approx(0.6));
}

TEST_CASE("curve csv files") {
  test::TempDir dir("metrics");
  const std::vector<double> s{0.9, 0.1};
  const Labels y{true, false};
  write_roc_csv(dir / "roc.csv", roc_curve(s, y.span()));
  write_pr_csv(dir / "pr.csv", pr_curve(s, y.span()));
  std::ifstream roc(dir / "roc.csv");
  std::string header;
  std::getline(roc, header);
  CHECK(header == "threshold,fpr,tpr");
  std::ifstream pr(dir / "pr.csv");
  std::getline(pr, header);
  CHECK(header == "threshold,recall,precision");
}
