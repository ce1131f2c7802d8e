#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>

#include "thermograph/archgraph.hpp"
#include "thermograph/error.hpp"
#include "thermograph/oloc.hpp"
#include "thermograph/thermalsim.hpp"

using namespace thermograph;

namespace {

ControlSchedule uniform(const Architecture& a, int intervals = 1) {
  OlocConfig cfg;
  cfg.n_intervals = intervals;
  return baseline_uniform(a, cfg);
}

std::vector<double> seeded_loads(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> d(4.0, 16.0);
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(d(rng));
  return out;
}

// Exact solution of the single-CPHX plant: x = [T_tank, T_wall] obeys the
// linear system dx/dt = A x + b, solved by eigendecomposition.
struct SingleCphxOracle {
  Eigen::Matrix2d A;
  Eigen::Vector2d b, x0;

  SingleCphxOracle(const PlantParams& p, double load_w) {
    const double mc = p.m_dot_total * p.c_p;
    const double g = p.hA0 / (1.0 + p.hA0 / (2.0 * mc));
    // Q = g (Tw - Tt); outlet = Tt + Q / mc; return = outlet - eps (outlet - Ts)
    // tank: Ct dTt = mc (return - Tt) = (1 - eps) Q - eps mc (Tt - Ts)
    A << (-(1 - p.eps_llhx) * g - p.eps_llhx * mc) / p.c_tank, (1 - p.eps_llhx) * g / p.c_tank,
        g / p.c_wall, -g / p.c_wall;
    b << p.eps_llhx * mc * p.t_sink / p.c_tank, load_w / p.c_wall;
    x0 << p.t_init, p.t_init;
  }

  Eigen::Vector2d at(double t) const {
    const Eigen::Vector2d xs = -A.inverse() * b;
    Eigen::EigenSolver<Eigen::Matrix2d> es(A);
    const Eigen::Matrix2cd V = es.eigenvectors();
    const Eigen::Vector2cd lam = es.eigenvalues();
    const Eigen::Vector2cd c = V.inverse() * (x0 - xs).cast<std::complex<double>>();
    Eigen::Vector2cd e;
    e << c[0] * std::exp(lam[0] * t), c[1] * std::exp(lam[1] * t);
    return xs + (V * e).real();
  }

  double crossing(double t_max, double horizon) const {
    if (at(horizon)[1] <= t_max) return horizon;
    double lo = 0.0, hi = horizon;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (at(mid)[1] > t_max ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

void expect_error(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(PlantParams, DefaultsValidate) { EXPECT_NO_THROW(PlantParams{}.validate()); }

TEST(PlantParams, ConfigRoundTrip) {
  PlantParams p;
  p.hA0 = 812.5;
  p.t_max = 50.0;
  p.dt = 0.25;
  EXPECT_EQ(parse_plant_params(to_config_text(p)), p);
  const auto q = parse_plant_params("# comment\n  hA0 = 700   # inline\n\nt_max=40\n");
  EXPECT_EQ(q.hA0, 700.0);
  EXPECT_EQ(q.t_max, 40.0);
  EXPECT_EQ(q.c_p, PlantParams{}.c_p);
}

TEST(PlantParams, Rejections) {
  expect_error(ErrorKind::kConfig, [] { parse_plant_params("bogus = 1\n"); });
  expect_error(ErrorKind::kConfig, [] { parse_plant_params("hA0 = abc\n"); });
  expect_error(ErrorKind::kConfig, [] { parse_plant_params("hA0 = -1\n"); });
  expect_error(ErrorKind::kConfig, [] { parse_plant_params("eps_llhx = 1.5\n"); });
  expect_error(ErrorKind::kConfig, [] { parse_plant_params("t_init = 50\n"); });
  expect_error(ErrorKind::kConfig, [] { parse_plant_params("hA0 1000\n"); });
}

TEST(FlowDistribution, ChainGetsFullFlow) {
  const auto a = parse_architecture("S;3;{[2,0,1]}");
  for (double m : flow_distribution(a, uniform(a), 0, 1.5)) EXPECT_EQ(m, 1.5);
}

TEST(FlowDistribution, EvenSplit) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  const auto f = flow_distribution(a, uniform(a), 0, 1.0);
  EXPECT_DOUBLE_EQ(f[0], 0.5);
  EXPECT_DOUBLE_EQ(f[1], 0.5);
}

TEST(FlowDistribution, NestedSplitsMultiplyAlongPath) {
  const auto a = parse_architecture("M;5;{[0{[1{[2],[3]}],[4]}]}");
  ControlSchedule u{1, {SplitControl{2, {0.6, 0.4}}, SplitControl{2, {0.5, 0.5}}}};
  const auto f = flow_distribution(a, u, 0, 1.0);
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], 0.6);
  EXPECT_DOUBLE_EQ(f[2], 0.3);
  EXPECT_DOUBLE_EQ(f[3], 0.3);
  EXPECT_DOUBLE_EQ(f[4], 0.4);
}

TEST(FlowDistribution, InvalidSchedules) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  expect_error(ErrorKind::kControl, [&] { flow_distribution(a, ControlSchedule{1, {SplitControl{2, {0.99, 0.01}}}}, 0, 1); });
  expect_error(ErrorKind::kControl, [&] { flow_distribution(a, ControlSchedule{1, {SplitControl{2, {0.5, 0.6}}}}, 0, 1); });
  expect_error(ErrorKind::kControl, [&] { flow_distribution(a, ControlSchedule{1, {}}, 0, 1); });
  expect_error(ErrorKind::kControl, [&] { flow_distribution(a, uniform(a), 1, 1); });
}

TEST(Simulate, ZeroLoadStaysAtEquilibrium) {
  const auto a = parse_architecture("S;3;{[0,1],[2]}");
  const auto r = simulate(a, Scenario{0, {0, 0, 0}}, uniform(a), PlantParams{}, {true});
  EXPECT_EQ(r.t_end, PlantParams{}.horizon);
  EXPECT_FALSE(r.binding_node.has_value());
  for (const auto& s : r.trajectory) {
    EXPECT_EQ(s.t_tank, 15.0);
    for (double w : s.t_wall) EXPECT_EQ(w, 15.0);
  }
  EXPECT_LE(r.energy_residual, 1e-12);
}

TEST(Simulate, MatchesClosedFormSingleCphx) {
  const auto a = parse_architecture("S;1;{[0]}");
  PlantParams p;
  for (double load : {6.0, 11.0, 16.0}) {
    const SingleCphxOracle oracle(p, load * 1000.0);
    const auto r = simulate(a, Scenario{0, {load}}, uniform(a), p, {true});
    const double expected = oracle.crossing(p.t_max, p.horizon);
    EXPECT_NEAR(r.t_end, expected, 1e-3) << "load " << load;
    // Wall and tank temperatures along the trajectory.
    for (std::size_t i = 0; i + 1 < r.trajectory.size(); i += 97) {
      const auto x = oracle.at(r.trajectory[i].t);
      EXPECT_NEAR(r.trajectory[i].t_tank, x[0], 1e-8);
      EXPECT_NEAR(r.trajectory[i].t_wall[0], x[1], 1e-8);
    }
  }
}

TEST(Simulate, SymmetricBranchesStayIdentical) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  const auto r = simulate(a, Scenario{0, {9.5, 9.5}}, uniform(a), PlantParams{}, {true});
  for (const auto& s : r.trajectory) EXPECT_LE(std::abs(s.t_wall[0] - s.t_wall[1]), 1e-9);
}

TEST(Simulate, RelabelingSymmetricSubBranches) {
  const auto a = parse_architecture("S;4;{[0,1],[2,3]}");
  const auto b = parse_architecture("S;4;{[2,3],[0,1]}");
  const auto ra = simulate(a, Scenario{0, {12, 5, 12, 5}}, uniform(a), PlantParams{});
  const auto rb = simulate(b, Scenario{0, {12, 5, 12, 5}}, uniform(b), PlantParams{});
  EXPECT_LE(std::abs(ra.t_end - rb.t_end), 1e-9);
}

TEST(Simulate, Deterministic) {
  const auto a = parse_architecture("M;3;{[0{[1],[2]}]}");
  const Scenario s{0, {13, 7, 10}};
  const auto r1 = simulate(a, s, uniform(a, 4), PlantParams{}, {true});
  const auto r2 = simulate(a, s, uniform(a, 4), PlantParams{}, {true});
  EXPECT_EQ(r1.t_end, r2.t_end);
  EXPECT_EQ(r1.heat_rejected, r2.heat_rejected);
  EXPECT_EQ(r1.trajectory.back().t_wall, r2.trajectory.back().t_wall);
}

TEST(Simulate, MonotoneInLoads) {
  std::mt19937_64 rng(11);
  const auto archs = enumerate_single_split(3);
  for (int c = 0; c < 20; ++c) {
    const auto& a = archs[static_cast<std::size_t>(c) % archs.size()];
    const auto loads = seeded_loads(rng, 3);
    const auto u = uniform(a, 4);
    const double base = simulate(a, Scenario{0, loads}, u, PlantParams{}).t_end;
    for (std::size_t i = 0; i < loads.size(); ++i) {
      auto more = loads;
      more[i] = std::min(16.0, more[i] + 2.0);
      EXPECT_LE(simulate(a, Scenario{0, more}, u, PlantParams{}).t_end, base);
    }
    auto doubled = loads;
    for (double& d : doubled) d *= 2.0;
    EXPECT_LE(simulate(a, Scenario{0, doubled}, u, PlantParams{}).t_end, base);
  }
}

TEST(Simulate, EnergyLedgerIndependentlyChecked) {
  const auto a = parse_architecture("S;3;{[0],[1,2]}");
  PlantParams p;
  const std::vector<double> loads{14, 6, 9};
  const auto r = simulate(a, Scenario{0, loads}, uniform(a), p, {true});
  EXPECT_NEAR(r.heat_in, (14 + 6 + 9) * 1000.0 * r.t_end, 1e-9 * r.heat_in);
  const auto& last = r.trajectory.back();
  double stored = p.c_tank * (last.t_tank - p.t_init);
  for (double w : last.t_wall) stored += p.c_wall * (w - p.t_init);
  EXPECT_NEAR(r.stored_change, stored, 1e-9 * r.heat_in);
  EXPECT_LE(r.energy_residual, 1e-6);
}

TEST(Simulate, EnergyResidualSmallOnSeededCases) {
  std::mt19937_64 rng(5);
  const auto archs = enumerate_single_split(3);
  PlantParams p;
  p.dt = 0.1;
  for (int c = 0; c < 10; ++c) {
    const auto& a = archs[static_cast<std::size_t>(c)];
    const auto r = simulate(a, Scenario{0, seeded_loads(rng, 3)}, uniform(a, 4), p);
    EXPECT_LE(r.energy_residual, 1e-6);
  }
}

TEST(Simulate, ResidualDoesNotGrowWhenHalvingDt) {
  const auto a = parse_architecture("S;3;{[0,1],[2]}");
  const Scenario s{0, {15, 8, 12}};
  double prev = std::numeric_limits<double>::infinity();
  for (double dt : {10.0, 5.0, 2.5}) {
    PlantParams p;
    p.dt = dt;
    const double res = simulate(a, s, uniform(a, 4), p).energy_residual;
    EXPECT_LE(res, prev) << "dt " << dt;
    prev = res;
  }
}

TEST(Simulate, StepRefinementWithinTenthPercent) {
  std::mt19937_64 rng(7);
  const auto archs = enumerate_single_split(3);
  PlantParams fine;
  fine.dt = 0.05;
  for (int c = 0; c < 8; ++c) {
    const auto& a = archs[static_cast<std::size_t>(c)];
    const Scenario s{0, seeded_loads(rng, 3)};
    const double coarse = simulate(a, s, uniform(a, 4), PlantParams{}).t_end;
    const double ref = simulate(a, s, uniform(a, 4), fine).t_end;
    EXPECT_LE(std::abs(coarse - ref), 1e-3 * ref);
  }
}

TEST(Simulate, BindingNodeIffCrossing) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  const auto hot = simulate(a, Scenario{0, {16, 4}}, uniform(a), PlantParams{});
  ASSERT_TRUE(hot.binding_node.has_value());
  EXPECT_EQ(*hot.binding_node, 0);
  EXPECT_LT(hot.t_end, PlantParams{}.horizon);
  const auto cold = simulate(a, Scenario{0, {0.1, 0.1}}, uniform(a), PlantParams{});
  EXPECT_FALSE(cold.binding_node.has_value());
}

TEST(Simulate, Errors) {
  const auto a = parse_architecture("S;2;{[0],[1]}");
  PlantParams p;
  p.dt = 0.3;
  expect_error(ErrorKind::kConfig, [&] { simulate(a, Scenario{0, {5, 5}}, uniform(a, 4), p); });
  expect_error(ErrorKind::kShape, [&] { simulate(a, Scenario{0, {5}}, uniform(a), PlantParams{}); });
  expect_error(ErrorKind::kIntegration,
               [&] { simulate(a, Scenario{0, {std::nan(""), 5}}, uniform(a), PlantParams{}); });
}
