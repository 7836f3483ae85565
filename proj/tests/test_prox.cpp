#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "tnd/errors.hpp"
#include "tnd/prox.hpp"

using namespace tnd;

TEST_CASE("prox_l1_box closed form") {
  const Tensor out = prox_l1_box(Tensor::vector({0.5, -0.5, 2.0, 0.1}), 0.2);
  CHECK(out[0] == doctest::Approx(0.3));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 1.0);
  CHECK(out[3] == 0.0);
}

TEST_CASE("prox_l1_box matches the grid minimiser") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-2.0, 3.0), t(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double ai = a(rng), ti = t(rng);
    CHECK(prox_l1_box(Tensor::vector({ai}), ti)[0] == doctest::Approx(oracle::grid_prox_l1_box(ai, ti)).epsilon(0).scale(1).epsilon(1e-3));
  }
}

TEST_CASE("clip_box clamps to the pixel range") {
  CHECK(clip_box(Tensor::vector({300, -4, 128})) == Tensor::vector({255, 0, 128}));
}

TEST_CASE("project_simplex closed forms") {
  const std::vector<double> feasible{0.5, 0.5};
  const SimplexProjection a = project_simplex(feasible);
  CHECK(a.w[0] == doctest::Approx(0.5));
  CHECK(a.shift == doctest::Approx(0.0));
  const std::vector<double> two{0.8, 0.6};
  const SimplexProjection b = project_simplex(two);
  CHECK(b.w[0] == doctest::Approx(0.6));
  CHECK(b.w[1] == doctest::Approx(0.4));
  CHECK(b.shift == doctest::Approx(0.2));
  CHECK_THROWS_AS(project_simplex(std::vector<double>{}), ShapeError);
}

TEST_CASE("project_simplex matches support enumeration and commutes with permutations") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> c(1 + trial % 10);
    for (double& v : c) v = u(rng);
    const auto w = project_simplex(c).w;
    const auto ref = oracle::brute_force_simplex(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(std::abs(w[i] - ref[i]) < 1e-9);
      CHECK(w[i] >= 0.0);
      sum += w[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    std::vector<std::size_t> perm(c.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pc(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) pc[i] = c[perm[i]];
    const auto pw = project_simplex(pc).w;
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(pw[i] - w[perm[i]]) < 1e-12);
  }
}

namespace {

// F = ||m - m*||^2 + ||delta - delta*||^2
CompositeProblem separable_quadratic(const Tensor& m_star, const Tensor& d_star, double lambda) {
  CompositeProblem p;
  p.shape = m_star.shape();
  p.lambda = lambda;
  p.loss = [m_star, d_star](const Iterate& it, GradientRequest req) {
    Evaluation e;
    if (req.mask) e.grad_mask = Tensor(m_star.shape());
    if (req.pattern) e.grad_pattern = Tensor(m_star.shape());
    for (std::size_t i = 0; i < m_star.size(); ++i) {
      const double dm = it.mask[i] - m_star[i], dd = it.pattern[i] - d_star[i];
      e.value += dm * dm + dd * dd;
      if (req.mask) e.grad_mask[i] = 2.0 * dm;
      if (req.pattern) e.grad_pattern[i] = 2.0 * dd;
    }
    return e;
  };
  return p;
}

}  // namespace

TEST_CASE("solver reaches the minimiser of a separable quadratic") {
  const Tensor m_star = Tensor::vector({0.2, 0.9, 0.5});
  const Tensor d_star = Tensor::vector({10, 100, 250});
  SolverConfig cfg;
  cfg.iterations = 3000;
  cfg.learning_rate = 0.1;
  cfg.pattern_lr_scale = 1.0;
  cfg.change_patience = 0;
  const SolveResult r = solve(separable_quadratic(m_star, d_star, 0.0), cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(r.final.mask[i] - m_star[i]) < 1e-6);
    CHECK(std::abs(r.final.pattern[i] - d_star[i]) < 1e-6);
  }
  CHECK(r.final.feasible);
  CHECK(r.best.objective <= r.final.objective + 1e-12);
}

TEST_CASE("a large lambda zeroes the mask after one step") {
  SolverConfig cfg;
  cfg.iterations = 1;
  cfg.learning_rate = 0.1;
  const SolveResult r = solve(separable_quadratic(Tensor::vector({0.9, 0.9}), Tensor::vector({1, 1}), 1e6), cfg);
  CHECK(r.final.mask == Tensor::vector({0, 0}));
}

TEST_CASE("every iterate is feasible and the simplex block stays on the simplex") {
  CompositeProblem p;
  p.shape = {4};
  p.weights_dim = 3;
  p.weights_sense = Sense::ascend;
  p.lambda = 0.01;
  const std::vector<double> gain{1.0, 3.0, 2.0};
  // maximise sum_j w_j g_j * sum(m * delta) / 255
  p.loss = [gain](const Iterate& it, GradientRequest req) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += it.mask[i] * it.pattern[i] / 255.0;
    double wg = 0.0;
    for (std::size_t j = 0; j < 3; ++j) wg += it.weights[j] * gain[j];
    Evaluation e;
    e.value = -wg * s;
    if (req.mask) {
      e.grad_mask = Tensor({4});
      for (std::size_t i = 0; i < 4; ++i) e.grad_mask[i] = -wg * it.pattern[i] / 255.0;
    }
    if (req.pattern) {
      e.grad_pattern = Tensor({4});
      for (std::size_t i = 0; i < 4; ++i) e.grad_pattern[i] = -wg * it.mask[i] / 255.0;
    }
    if (req.weights) {
      for (std::size_t j = 0; j < 3; ++j) e.grad_weights.push_back(gain[j] * s);
    }
    return e;
  };
  SolverConfig cfg;
  cfg.iterations = 200;
  cfg.learning_rate = 0.05;
  cfg.random_init = true;
  cfg.seed = 3;
  const SolveResult r = solve(p, cfg);
  REQUIRE(r.final.trace.size() >= 1);
  for (const auto& row : r.final.trace) CHECK(row.feasible);
  double sum = 0.0;
  for (double w : r.final.weights) sum += w;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(r.final.weights[1] == doctest::Approx(1.0));
  CHECK(is_feasible(Iterate{r.final.mask, r.final.pattern, r.final.weights}));
}

TEST_CASE("solver finds the grid optimum of a 2-D nonconvex toy from most starts") {
  // F(m, d) = (m - 0.65)^2 - 0.05 cos(12 m) + (d / 255 - 0.4)^2 on [0, 1] x [0, 255]
  auto f = [](double m, double d) {
    return (m - 0.65) * (m - 0.65) - 0.05 * std::cos(12.0 * m) + (d / 255.0 - 0.4) * (d / 255.0 - 0.4);
  };
  double grid_best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 2000; ++i) {
    for (int j = 0; j <= 200; ++j) grid_best = std::min(grid_best, f(i / 2000.0, 255.0 * j / 200.0));
  }
  CompositeProblem p;
  p.shape = {1};
  p.loss = [&](const Iterate& it, GradientRequest req) {
    const double m = it.mask[0], d = it.pattern[0];
    Evaluation e;
    e.value = f(m, d);
    if (req.mask) e.grad_mask = Tensor::vector({2.0 * (m - 0.65) + 0.6 * std::sin(12.0 * m)});
    if (req.pattern) e.grad_pattern = Tensor::vector({2.0 * (d / 255.0 - 0.4) / 255.0});
    return e;
  };
  int hits = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    SolverConfig cfg;
    cfg.iterations = 2000;
    cfg.learning_rate = 0.05;
    cfg.random_init = true;
    cfg.seed = s;
    if (solve(p, cfg).best.objective <= grid_best + 1e-2) ++hits;
  }
  CHECK(hits >= 8);
}

TEST_CASE("solver configuration errors and JSON round trip") {
  auto p = separable_quadratic(Tensor::vector({0.5}), Tensor::vector({5}), 0.0);
  SolverConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(solve(p, bad), UsageError);
  bad.learning_rate = 0.1;
  bad.iterations = 0;
  CHECK_THROWS_AS(solve(p, bad), UsageError);

  CompositeProblem nan = p;
  nan.loss = [](const Iterate&, GradientRequest req) {
    Evaluation e;
    if (req.mask) e.grad_mask = Tensor::vector({std::nan("")});
    if (req.pattern) e.grad_pattern = Tensor::vector({0.0});
    return e;
  };
  CHECK_THROWS_AS(solve(nan, SolverConfig{}), NumericalError);

  SolverConfig cfg;
  cfg.iterations = 17;
  cfg.order = BlockOrder::pattern_first;
  cfg.seed = 99;
  const SolverConfig back = solver_config_from_json(solver_config_to_json(cfg));
  CHECK(back.iterations == 17);
  CHECK(back.order == BlockOrder::pattern_first);
  CHECK(back.seed == 99);
}

TEST_CASE("trace csv lists one row per recorded iteration") {
  test::TempDir dir("prox");
  SolverConfig cfg;
  cfg.iterations = 5;
  cfg.change_patience = 0;
  const SolveResult r = solve(separable_quadratic(Tensor::vector({0.5}), Tensor::vector({5}), 0.0), cfg);
  write_trace_csv(dir / "t.csv", r.final);
  std::ifstream in(dir / "t.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,objective,mask_l1,learning_rate,feasible");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == r.final.trace.size());
}
