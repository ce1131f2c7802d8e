#pragma once

// Lumped thermal plant for one architecture under a piecewise-constant valve
// schedule. Walls are capacitive; coolant through each CPHX is quasi-steady.
//
//   C_w dTw_i/dt = P_i - Q_i
//   Q_i = hA_i (Tw_i - (Tin_i + Tout_i) / 2) = m_i c_p (Tout_i - Tin_i)
//   hA_i = hA0 (m_i / m_total)^flow_exponent
//   Tmix = flow-weighted mean of branch outlets
//   Tret = Tmix - eps (Tmix - T_sink)          (LLHX)
//   C_t dTt/dt = m_total c_p (Tret - Tt)
//
// The branch head inlet is the tank temperature; a CPHX downstream of another
// takes that CPHX's outlet.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "thermograph/archgraph.hpp"

namespace thermograph {

struct PlantParams {
  double m_dot_total = 1.0;      // kg/s
  double c_p = 2000.0;           // J/(kg K)
  double c_wall = 5.0e4;         // J/K per CPHX wall
  double c_tank = 5.0e5;         // J/K
  double hA0 = 1000.0;           // W/K at full flow
  double flow_exponent = 0.8;
  double eps_llhx = 0.2;
  double t_sink = 15.0;          // degC
  double t_init = 15.0;          // degC
  double t_max = 45.0;           // degC
  double horizon = 2000.0;       // s
  double dt = 0.5;               // s

  void validate() const;
  bool operator==(const PlantParams&) const = default;
};

// Flat `key = value` text; `#` starts a comment. Unknown keys are rejected.
PlantParams parse_plant_params(std::string_view text);
PlantParams load_plant_params(const std::filesystem::path& path);
std::string to_config_text(const PlantParams& params);

inline constexpr double kMinFraction = 0.02;

// Outflow fractions for one split point, row-major [interval][child].
struct SplitControl {
  int n_children = 0;
  std::vector<double> fractions;

  double at(int interval, int child) const {
    return fractions[static_cast<std::size_t>(interval * n_children + child)];
  }
  bool operator==(const SplitControl&) const = default;
};

// Split points are ordered as the tank split (when there are >= 2 root
// branches) followed by mid-branch splits in depth-first order.
struct ControlSchedule {
  int n_intervals = 1;
  std::vector<SplitControl> splits;

  bool operator==(const ControlSchedule&) const = default;
};

// Number of children at every split point, in schedule order.
std::vector<int> split_arities(const Architecture& arch);

// Throws ErrorKind::kControl when the schedule does not fit the architecture
// or a fraction row violates the floor / unit-sum invariant.
void check_schedule(const Architecture& arch, const ControlSchedule& u);

// Mass flow through every CPHX (indexed by load index) during `interval`.
std::vector<double> flow_distribution(const Architecture& arch, const ControlSchedule& u,
                                      int interval, double m_dot_total);

struct TrajectorySample {
  double t = 0.0;
  double t_tank = 0.0;
  std::vector<double> t_wall;
};

struct SimResult {
  double t_end = 0.0;
  std::optional<int> binding_node;
  std::vector<TrajectorySample> trajectory;
  double energy_residual = 0.0;

  // Energy ledger over [0, t_end], joules.
  double heat_in = 0.0;
  double heat_rejected = 0.0;
  double stored_change = 0.0;
};

struct SimOptions {
  bool record_trajectory = false;
};

// Fixed-step RK4. Throws ErrorKind::kIntegration on a non-finite state and
// ErrorKind::kConfig when dt does not tile a control interval.
SimResult simulate(const Architecture& arch, const Scenario& scenario, const ControlSchedule& u,
                   const PlantParams& params, const SimOptions& options = {});

// |heat_in - heat_rejected - stored_change| / max(heat_in, eps).
double energy_residual(const SimResult& result);

void write_trajectory_csv(const SimResult& result, const std::filesystem::path& path);

}  // namespace thermograph
