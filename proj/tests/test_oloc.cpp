#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "thermograph/archgraph.hpp"
#include "thermograph/error.hpp"
#include "thermograph/oloc.hpp"

using namespace thermograph;

namespace {

double endurance_at(const Architecture& a, const Scenario& s, double f) {
  ControlSchedule u{1, {SplitControl{2, {f, 1.0 - f}}}};
  return simulate(a, s, u, PlantParams{}).t_end;
}

double grid_best(const Architecture& a, const Scenario& s, double step) {
  double best = 0.0;
  const int points = static_cast<int>(std::llround((1.0 - 2 * kMinFraction) / step)) + 1;
  for (int i = 0; i < points; ++i) best = std::max(best, endurance_at(a, s, kMinFraction + step * i));
  return best;
}

// Grid, then ternary search inside the best cell. The optimum sits on a kink
// (binding node switches) so a bare grid undershoots it.
double refined_best(const Architecture& a, const Scenario& s, double step) {
  double best = 0.0, arg = kMinFraction;
  const int points = static_cast<int>(std::llround((1.0 - 2 * kMinFraction) / step)) + 1;
  for (int i = 0; i < points; ++i) {
    const double f = kMinFraction + step * i, v = endurance_at(a, s, f);
    if (v > best) best = v, arg = f;
  }
  double lo = std::max(kMinFraction, arg - step), hi = std::min(1.0 - kMinFraction, arg + step);
  for (int it = 0; it < 80; ++it) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (endurance_at(a, s, m1) < endurance_at(a, s, m2)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  return std::max(best, endurance_at(a, s, 0.5 * (lo + hi)));
}

}  // namespace

TEST(Baseline, UniformFractions) {
  const auto two = baseline_uniform(parse_architecture("S;2;{[0],[1]}"), OlocConfig{});
  ASSERT_EQ(two.splits.size(), 1u);
  EXPECT_EQ(two.n_intervals, 4);
  for (double f : two.splits[0].fractions) EXPECT_EQ(f, 0.5);
  const auto three = baseline_uniform(parse_architecture("S;3;{[0],[1],[2]}"), OlocConfig{});
  for (double f : three.splits[0].fractions) EXPECT_DOUBLE_EQ(f, 1.0 / 3.0);
  EXPECT_TRUE(baseline_uniform(parse_architecture("S;3;{[0,1,2]}"), OlocConfig{}).splits.empty());
}

TEST(Logits, MapOntoFloorAndSimplex) {
  const auto a = parse_architecture("M;4;{[0{[1],[2],[3]}]}");
  EXPECT_EQ(decision_dim(a, 4), 8u);
  const auto u = schedule_from_logits(a, 4, {30, -30, 0, 1, 2, 3, -4, 5});
  EXPECT_NO_THROW(check_schedule(a, u));
  EXPECT_NEAR(u.splits[0].at(0, 0), 1.0 - 2 * kMinFraction, 1e-12);
  const auto z = schedule_from_logits(a, 4, std::vector<double>(8, 0.0));
  for (double f : z.splits[0].fractions) EXPECT_DOUBLE_EQ(f, 1.0 / 3.0);
}

TEST(NelderMead, MinimizesQuadratic) {
  const auto r = nelder_mead(
      [](const std::vector<double>& x) { return (x[0] - 1) * (x[0] - 1) + 4 * (x[1] + 2) * (x[1] + 2); }, {0, 0}, 1.0,
      1e-12, 2000);
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], -2.0, 1e-4);
  EXPECT_LE(r.evals, 2000);
}

TEST(Optimize, ChainUsesOneEvaluation) {
  const auto a = parse_architecture("S;3;{[1,0,2]}");
  const Scenario s{0, {12, 7, 9}};
  const auto label = optimize_endurance(a, s, PlantParams{}, OlocConfig{});
  EXPECT_EQ(label.evals_used, 1);
  EXPECT_EQ(label.J, simulate(a, s, baseline_uniform(a, OlocConfig{}), PlantParams{}).t_end);
}

TEST(Optimize, FavoursTheHotBranch) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  const Scenario s{0, {16, 4}};
  const auto label = optimize_endurance(a, s, PlantParams{}, OlocConfig{});
  const double uniform = simulate(a, s, baseline_uniform(a, OlocConfig{}), PlantParams{}).t_end;
  EXPECT_GE(label.J, uniform);
  EXPECT_GT(label.best_controls.splits[0].at(0, 0), 0.5);
}

TEST(Optimize, MatchesGridOracleSingleInterval) {
  OlocConfig cfg;
  cfg.n_intervals = 1;
  const auto a = parse_architecture("S;2;{[0],[1]}");
  for (const auto& loads : std::vector<std::vector<double>>{{16, 4}, {12, 9}, {5, 14}}) {
    const Scenario s{0, loads};
    const auto label = optimize_endurance(a, s, PlantParams{}, cfg);
    EXPECT_GE(label.J, grid_best(a, s, 0.02) - cfg.convergence_tol);
    // Upper bound: the optimizer cannot beat the true optimum.
    EXPECT_LE(label.J, refined_best(a, s, 0.002) + 1e-6);
  }
}

TEST(Optimize, SymmetricLoadsGainNothing) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  const Scenario s{0, {10, 10}};
  const auto label = optimize_endurance(a, s, PlantParams{}, OlocConfig{});
  const double uniform = simulate(a, s, baseline_uniform(a, OlocConfig{}), PlantParams{}).t_end;
  EXPECT_LE(label.J - uniform, OlocConfig{}.convergence_tol);
}

TEST(Optimize, NeverBelowBaselineAndNotPastHorizon) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(4, 16);
  const auto archs = enumerate_multi_split(3);
  for (const auto& a : archs) {
    const Scenario s{0, {d(rng), d(rng), d(rng)}};
    const auto label = optimize_endurance(a, s, PlantParams{}, OlocConfig{});
    const double base = simulate(a, s, baseline_uniform(a, OlocConfig{}), PlantParams{}).t_end;
    EXPECT_GE(label.J, base);
    EXPECT_LE(label.J, PlantParams{}.horizon);
    EXPECT_LE(label.evals_used, OlocConfig{}.max_evals);
    EXPECT_EQ(simulate(a, s, label.best_controls, PlantParams{}).t_end, label.J);
  }
}

TEST(Optimize, RelabelingInvariance) {
  const auto a = parse_architecture("S;3;{[0,1],[2]}");
  const auto b = parse_architecture("S;3;{[2,0],[1]}");  // 0->2, 1->0, 2->1
  const auto ja = optimize_endurance(a, Scenario{0, {13, 6, 9}}, PlantParams{}, OlocConfig{}).J;
  const auto jb = optimize_endurance(b, Scenario{0, {6, 9, 13}}, PlantParams{}, OlocConfig{}).J;
  EXPECT_LE(std::abs(ja - jb), OlocConfig{}.convergence_tol);
}

TEST(Optimize, Deterministic) {
  const auto a = parse_architecture("M;3;{[0{[1],[2]}]}");
  const Scenario s{0, {7, 15, 10}};
  const auto l1 = optimize_endurance(a, s, PlantParams{}, OlocConfig{});
  const auto l2 = optimize_endurance(a, s, PlantParams{}, OlocConfig{});
  EXPECT_EQ(l1.J, l2.J);
  EXPECT_EQ(l1.best_controls, l2.best_controls);
  EXPECT_EQ(l1.evals_used, l2.evals_used);
}

TEST(Optimize, InvalidConfigAndFailedBaseline) {
  OlocConfig bad;
  bad.max_evals = 0;
  EXPECT_THROW(bad.validate(), Error);
  const auto a = parse_architecture("S;2;{[0],[1]}");
  try {
    optimize_endurance(a, Scenario{0, {std::nan(""), 5}}, PlantParams{}, OlocConfig{});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLabel);
  }
}

TEST(Population, CardinalityAndOrder) {
  const auto archs = enumerate_single_split(3);
  const std::vector<Scenario> scenarios{{0, {12, 5, 8}}, {1, {4, 16, 10}}};
  const auto run = label_population(archs, scenarios, PlantParams{}, OlocConfig{});
  ASSERT_EQ(run.instances.size(), 26u);
  EXPECT_TRUE(run.failures.empty());
  EXPECT_EQ(run.instances[0].arch, archs[0]);
  EXPECT_EQ(run.instances[1].scenario.id, 1);
  EXPECT_EQ(run.instances[2].arch, archs[1]);
}

TEST(Population, RepeatedScenarioSameLabels) {
  const auto archs = enumerate_single_split(3);
  const std::vector<Scenario> scenarios{{0, {12, 5, 8}}, {1, {12, 5, 8}}};
  const auto run = label_population(archs, scenarios, PlantParams{}, OlocConfig{});
  for (std::size_t i = 0; i < run.instances.size(); i += 2) EXPECT_EQ(run.instances[i].J, run.instances[i + 1].J);
}

TEST(Population, WorkerCountDoesNotChangeResults) {
  const auto archs = enumerate_multi_split(3);
  const std::vector<Scenario> scenarios{{0, {12, 5, 8}}, {1, {4, 16, 10}}};
  const auto one = label_population(archs, scenarios, PlantParams{}, OlocConfig{}, 1);
  const auto eight = label_population(archs, scenarios, PlantParams{}, OlocConfig{}, 8);
  ASSERT_EQ(one.instances.size(), eight.instances.size());
  for (std::size_t i = 0; i < one.instances.size(); ++i) {
    EXPECT_EQ(one.instances[i].arch, eight.instances[i].arch);
    EXPECT_EQ(one.instances[i].J, eight.instances[i].J);
  }
}

TEST(Population, FailuresAreSkipped) {
  const auto archs = enumerate_single_split(2);
  const std::vector<Scenario> scenarios{{0, {12, 5}}, {1, {std::nan(""), 5}}};
  const auto run = label_population(archs, scenarios, PlantParams{}, OlocConfig{});
  EXPECT_EQ(run.instances.size(), 3u);
  EXPECT_EQ(run.failures.size(), 3u);
  EXPECT_EQ(run.failures[0].scenario_id, 1);
}

TEST(Population, HottestNodeNearestTank) {
  const auto archs = enumerate_single_split(3);
  const auto run = label_population(archs, {Scenario{0, {16, 10, 4}}}, PlantParams{}, OlocConfig{});
  const auto best = std::max_element(run.instances.begin(), run.instances.end(),
                                     [](const auto& x, const auto& y) { return x.J < y.J; });
  bool first_in_branch = false;
  for (const auto& b : best->arch.branches) first_in_branch |= b.cphx.front() == 0;
  EXPECT_TRUE(first_in_branch) << canonical_key(best->arch);
}
