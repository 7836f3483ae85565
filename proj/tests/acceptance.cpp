// Acceptance suite: one PASS/FAIL line per criterion. Usage: tnd_acceptance WORK_DIR
// WORK_DIR is wiped and receives the zoos and JSON reports.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "tnd/container.hpp"
#include "tnd/dl_tnd.hpp"
#include "tnd/experiments.hpp"
#include "tnd/prox.hpp"
#include "tnd/zoo.hpp"

using namespace tnd;
namespace fs = std::filesystem;

namespace tol {
constexpr double prox_abs = 1e-3;
constexpr std::size_t prox_pairs = 10000;
constexpr double simplex_abs = 1e-9;
constexpr std::size_t simplex_vectors = 1000;
constexpr std::size_t simplex_max_len = 12;
constexpr double prox_seconds = 10.0;

constexpr std::size_t gradient_models = 50;
constexpr double gradient_rel = 1e-4;
constexpr double gradient_step = 1e-3;
/// One-sided differences further apart than this (relative) mark a kink inside the stencil.
constexpr double kink_rel = 1e-6;
constexpr double gradient_seconds = 60.0;

constexpr double min_asr = 0.95;
constexpr double max_accuracy_gap = 0.03;
constexpr double zoo_seconds = 15 * 60.0;

constexpr double dl_auc = 0.90;
constexpr double dl_target_accuracy = 0.80;
constexpr double dl_quantile = 50.0;
constexpr double dl_seconds = 10 * 60.0;

constexpr double df_auc = 0.90;
constexpr double df_auc_gap = 0.05;
constexpr double df_seconds = 10 * 60.0;

constexpr double trend_slack = 0.0;

constexpr double mass_factor = 3.0;
constexpr double mass_share = 0.80;
constexpr double clean_mass_factor = 1.5;

constexpr double mad_agreement = 0.85;
constexpr std::size_t mad_trials = 200;
constexpr double planted_z = 3.0;
}  // namespace tol

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool pass, const std::string& name, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion_prox() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> a(-3.0, 4.0), thr(0.0, 2.0), c(-3.0, 3.0);
  double prox_err = 0.0;
  for (std::size_t i = 0; i < tol::prox_pairs; ++i) {
    const double ai = a(rng), ti = thr(rng);
    prox_err = std::max(prox_err, std::abs(prox_l1_box(Tensor::vector({ai}), ti)[0] - oracle::grid_prox_l1_box(ai, ti)));
  }
  std::uniform_int_distribution<std::size_t> len(1, tol::simplex_max_len);
  double simplex_err = 0.0;
  for (std::size_t i = 0; i < tol::simplex_vectors; ++i) {
    std::vector<double> v(len(rng));
    for (double& x : v) x = c(rng);
    const auto w = project_simplex(v).w;
    const auto ref = oracle::brute_force_simplex(v);
    for (std::size_t j = 0; j < v.size(); ++j) simplex_err = std::max(simplex_err, std::abs(w[j] - ref[j]));
  }
  const double t = seconds_since(t0);
  verdict(1, prox_err <= tol::prox_abs && simplex_err <= tol::simplex_abs && t < tol::prox_seconds,
          "prox-operator oracle suite",
          fmt("prox max err %.2e (<= %.0e), simplex max err %.2e (<= %.0e), %.1f s (< %.0f s)", prox_err,
              tol::prox_abs, simplex_err, tol::simplex_abs, t, tol::prox_seconds));
}

void criterion_gradient() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0, excluded = 0;
  for (std::uint64_t m = 0; m < tol::gradient_models; ++m) {
    const Network net = test::toy_cnn(1000 + m, 3);
    const Tensor x = test::uniform_tensor(net.input_shape(), 0, 255, 2000 + m);
    std::vector<double> w(net.penultimate_dim());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::sin(1.0 + static_cast<double>(j + m));
    const std::vector<ScalarHead> hs{heads::cw_targeted(m % 3, 0.0), heads::cw_untargeted((m + 1) % 3, 0.0),
                                     heads::logit(m % 3), heads::weighted_activation(w),
                                     heads::sum_representation()};
    for (const auto& head : hs) {
      const InputGradient g = input_gradient(net, x, head);
      double scale = 1e-12;
      for (double v : g.gradient.values()) scale = std::max(scale, std::abs(v));
      const double f0 = g.value;
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto at = [&](double d) {
          Tensor y = x;
          y[i] += d;
          const ForwardTrace t = forward(net, y);
          return head(t.logits.values(), t.representation.values()).value;
        };
        const double fp = at(tol::gradient_step), fm = at(-tol::gradient_step);
        const double fwd = (fp - f0) / tol::gradient_step, bwd = (f0 - fm) / tol::gradient_step;
        if (std::abs(fwd - bwd) > tol::kink_rel * scale) {
          ++excluded;
          continue;
        }
        ++checked;
        worst = std::max(worst, std::abs(0.5 * (fwd + bwd) - g.gradient[i]) / scale);
      }
    }
  }
  const double t = seconds_since(t0);
  verdict(2, worst < tol::gradient_rel && t < tol::gradient_seconds && checked > 0, "gradient suite",
          fmt("max rel err %.2e (< %.0e) over %zu coordinates, %zu near ties excluded, %.1f s (< %.0f s)", worst,
              tol::gradient_rel, checked, excluded, t, tol::gradient_seconds));
}

struct Zoos {
  ZooHandle main;
  ZooHandle aux;
  std::map<std::string, double> ratio;  ///< model id -> poison ratio (0 for clean)
};

ZooConfig main_config() { return ZooConfig{}; }

ZooConfig aux_config() {
  ZooConfig c;
  c.num_clean = 2;
  c.num_trojan = 20;
  c.poison_ratios = {0.005, 0.01};
  c.min_asr = 0.0;
  c.max_accuracy_gap = 1.0;
  c.seed = 2;
  c.id_prefix = "aux-";
  return c;
}

Zoos criterion_zoo(const fs::path& work) {
  const auto t0 = Clock::now();
  build_zoo(main_config(), work / "zoo-main");
  const double t = seconds_since(t0);
  Zoos z{ZooHandle::open(work / "zoo-main"), {}, {}};

  double clean_sum = 0.0, min_asr = 1.0, max_gap = 0.0;
  std::size_t n_clean = 0, n_trojan = 0;
  for (const auto& e : z.main.manifest.entries) {
    if (!e.provenance.is_trojan()) {
      clean_sum += e.test_accuracy;
      ++n_clean;
    }
  }
  const double clean_mean = clean_sum / static_cast<double>(std::max<std::size_t>(n_clean, 1));
  for (const auto& e : z.main.manifest.entries) {
    z.ratio[e.model_id] = e.provenance.poison_ratio;
    if (!e.provenance.is_trojan()) continue;
    ++n_trojan;
    min_asr = std::min(min_asr, e.attack_success_rate);
    max_gap = std::max(max_gap, std::abs(e.test_accuracy - clean_mean));
  }
  const bool issues = !validate_zoo(work / "zoo-main").empty();
  verdict(3, n_trojan == 10 && n_clean == 10 && min_asr >= tol::min_asr && max_gap <= tol::max_accuracy_gap && !issues &&
                 t < tol::zoo_seconds,
          "zoo validity",
          fmt("%zu Trojan + %zu clean, min ASR %.4f (>= %.2f), max accuracy gap %.4f (<= %.2f), clean mean %.4f, "
              "manifest %s, build %.0f s (< %.0f s)",
              n_trojan, n_clean, min_asr, tol::min_asr, max_gap, tol::max_accuracy_gap, clean_mean,
              issues ? "has issues" : "valid", t, tol::zoo_seconds));

  build_zoo(aux_config(), work / "zoo-aux");
  z.aux = ZooHandle::open(work / "zoo-aux");
  for (const auto& e : z.aux.manifest.entries) z.ratio[e.model_id] = e.provenance.poison_ratio;
  return z;
}

const MetricsReport& variant(const std::vector<MetricsReport>& rs, const std::string& name) {
  for (const auto& r : rs) {
    if (r.variant == name) return r;
  }
  throw std::runtime_error("missing variant " + name);
}

/// AUC of every clean model against the Trojan models at one poison ratio.
double auc_at_ratio(const MetricsReport& main, const MetricsReport& aux, const Zoos& z, double ratio) {
  std::vector<ModelScore> models;
  for (const auto* r : {&main, &aux}) {
    for (const auto& m : r->models) {
      const double p = z.ratio.at(m.model_id);
      if (!m.trojan || std::abs(p - ratio) < 1e-12) models.push_back(m);
    }
  }
  return summarize(main.detector, main.variant, models).roc.auc;
}

void save(const fs::path& path, const std::vector<MetricsReport>& rs) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rs) j.push_back(to_json(r));
  write_text_atomic(path, j.dump(2) + "\n");
}

void criterion_mad_synthetic(const MetricsReport& dl) {
  std::size_t agree = 0, total = 0;
  for (const auto& m : dl.models) {
    if (m.failed) continue;
    ++total;
    const bool mad = decide_mad(m.per_label).trojan;
    const bool thr = decide_threshold(m.per_label, dl.youden.threshold).trojan;
    agree += mad == thr ? 1 : 0;
  }
  const double share = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;

  // K = 5 indices: four N(0, 1) draws plus a label whose anomaly score is exactly planted_z
  std::mt19937_64 rng(303);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> slot(0, 4);
  std::size_t exact = 0, trials = 0;
  while (trials < tol::mad_trials) {
    std::vector<double> others(4);
    for (double& v : others) v = normal(rng);
    std::vector<double> sorted = others;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted[2];
    std::vector<double> dev;
    for (double v : others) dev.push_back(std::abs(v - med));
    std::sort(dev.begin(), dev.end());
    const double mad = dev[2];
    const double planted = med + tol::planted_z * 1.4826 * mad;
    const std::size_t k = slot(rng);
    std::vector<double> idx = others;
    idx.insert(idx.begin() + static_cast<long>(k), planted);
    bool clean_rest = std::abs(oracle::mad_score(idx, k) - tol::planted_z) < 1e-9;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (j != k && oracle::mad_score(idx, j) > 2.0) clean_rest = false;
    }
    if (!clean_rest) continue;
    ++trials;
    const Decision d = decide_mad(idx);
    if (d.trojan && d.targets == std::vector<std::size_t>{k}) ++exact;
  }
  verdict(8, share >= tol::mad_agreement && exact == trials, "MAD rule",
          fmt("agreement with T1 = %.4f on %zu/%zu models (%.2f >= %.2f); planted z=%.0f outlier flagged alone in "
              "%zu/%zu vectors",
              dl.youden.threshold, agree, total, share, tol::mad_agreement, tol::planted_z, exact, trials));
}

void criterion_determinism(const fs::path& work) {
  ZooConfig c;
  c.num_clean = 1;
  c.num_trojan = 1;
  c.id_prefix = "det-";
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / "determinism";
    build_zoo(c, dir);
    const ZooHandle z = ZooHandle::open(dir);
    DLExperimentConfig dl;
    dl.quantiles = {tol::dl_quantile};
    nlohmann::json j;
    j["manifest"] = nlohmann::json::parse(read_text(dir / "manifest.json"));
    j["dl"] = to_json(run_dl_experiment({z}, dl).at(0), true);
    for (const auto& r : run_df_experiment({z}, DFExperimentConfig{})) j["df"].push_back(to_json(r, true));
    bytes[run] = j.dump();
    write_text_atomic(dir / "pipeline.json", j.dump(2) + "\n");
    // the rerun uses the same directory, so the first run is kept aside
    if (run == 0) fs::rename(dir, work / "determinism-first");
  }
  auto hash = [](const std::string& b) {
    return fnv1a_hex({reinterpret_cast<const unsigned char*>(b.data()), b.size()});
  };
  verdict(9, bytes[0] == bytes[1], "determinism",
          fmt("two full runs (zoo build, DL, DF): %zu vs %zu bytes, fnv1a %s vs %s; reports carry no timestamps",
              bytes[0].size(), bytes[1].size(), hash(bytes[0]).c_str(), hash(bytes[1]).c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s WORK_DIR\n", argv[0]);
    return 1;
  }
  const fs::path work = argv[1];
  fs::remove_all(work);
  fs::create_directories(work);

  criterion_prox();
  criterion_gradient();
  const Zoos z = criterion_zoo(work);

  DLExperimentConfig dl;
  dl.quantiles = {tol::dl_quantile};
  auto t0 = Clock::now();
  const auto dl_main = run_dl_experiment({z.main}, dl);
  const double dl_time = seconds_since(t0);
  const auto dl_aux = run_dl_experiment({z.aux}, dl);
  save(work / "dl-main.json", dl_main);
  const MetricsReport& dlr = dl_main.at(0);
  verdict(4, dlr.roc.auc >= tol::dl_auc && dlr.target_accuracy >= tol::dl_target_accuracy && dl_time < tol::dl_seconds,
          "DL-TND separation",
          fmt("AUC %.4f (>= %.2f), target label correct on %.2f of %zu detected Trojans (>= %.2f), %.0f s (< %.0f s)",
              dlr.roc.auc, tol::dl_auc, dlr.target_accuracy, dlr.detected_trojans, tol::dl_target_accuracy, dl_time,
              tol::dl_seconds));

  t0 = Clock::now();
  const auto df_main = run_df_experiment({z.main}, DFExperimentConfig{});
  const double df_time = seconds_since(t0);
  DFExperimentConfig df_noise;
  df_noise.sources = {SeedSource::noise};
  const auto df_aux = run_df_experiment({z.aux}, df_noise);
  save(work / "df-main.json", df_main);
  const MetricsReport& noise = variant(df_main, "noise");
  const MetricsReport& clean = variant(df_main, "clean");
  const double gap = std::abs(noise.roc.auc - clean.roc.auc);
  verdict(5, noise.roc.auc >= tol::df_auc && clean.roc.auc >= tol::df_auc && gap <= tol::df_auc_gap && df_time < tol::df_seconds,
          "DF-TND separation",
          fmt("noise AUC %.4f, clean AUC %.4f (both >= %.2f), gap %.4f (<= %.2f), %.0f s (< %.0f s)", noise.roc.auc,
              clean.roc.auc, tol::df_auc, gap, tol::df_auc_gap, df_time, tol::df_seconds));

  const double ratios[3] = {0.005, 0.01, 0.1};
  double dl_auc[3], df_auc[3];
  for (int i = 0; i < 3; ++i) {
    dl_auc[i] = auc_at_ratio(dlr, dl_aux.at(0), z, ratios[i]);
    df_auc[i] = auc_at_ratio(noise, variant(df_aux, "noise"), z, ratios[i]);
  }
  auto monotone = [](const double* a) { return a[1] >= a[0] - tol::trend_slack && a[2] >= a[1] - tol::trend_slack; };
  verdict(6, monotone(dl_auc) && monotone(df_auc), "poison-ratio trend",
          fmt("DL AUC %.4f / %.4f / %.4f, DF (noise) AUC %.4f / %.4f / %.4f at ratio 0.5%% / 1%% / 10%%, "
              "non-decreasing required",
              dl_auc[0], dl_auc[1], dl_auc[2], df_auc[0], df_auc[1], df_auc[2]));

  std::size_t hits = 0, pairs = 0, clean_pairs = 0;
  double clean_sum = 0.0;
  for (const auto& m : noise.models) {
    for (double r : m.mass_ratio) {
      if (m.trojan) {
        ++pairs;
        hits += r >= tol::mass_factor ? 1 : 0;
      } else {
        ++clean_pairs;
        clean_sum += r;
      }
    }
  }
  const double hit_share = pairs ? static_cast<double>(hits) / static_cast<double>(pairs) : 0.0;
  const double clean_mean = clean_pairs ? clean_sum / static_cast<double>(clean_pairs) : 0.0;
  verdict(7, hit_share >= tol::mass_share && clean_mean <= tol::clean_mass_factor && pairs > 0, "trigger recovery",
          fmt("%zu/%zu (Trojan, noise seed) pairs at >= %.0fx area baseline (%.2f, need >= %.2f); clean mean "
              "ratio %.2f (<= %.1f)",
              hits, pairs, tol::mass_factor, hit_share, tol::mass_share, clean_mean, tol::clean_mass_factor));

  criterion_mad_synthetic(dlr);
  criterion_determinism(work);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
