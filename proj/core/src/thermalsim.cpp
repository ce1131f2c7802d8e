#include "thermograph/thermalsim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "thermograph/error.hpp"
#include "thermograph/io.hpp"

namespace thermograph {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::map<std::string, double PlantParams::*> plant_keys() {
  return {
      {"m_dot_total", &PlantParams::m_dot_total},
      {"c_p", &PlantParams::c_p},
      {"c_wall", &PlantParams::c_wall},
      {"c_tank", &PlantParams::c_tank},
      {"hA0", &PlantParams::hA0},
      {"flow_exponent", &PlantParams::flow_exponent},
      {"eps_llhx", &PlantParams::eps_llhx},
      {"t_sink", &PlantParams::t_sink},
      {"t_init", &PlantParams::t_init},
      {"t_max", &PlantParams::t_max},
      {"horizon", &PlantParams::horizon},
      {"dt", &PlantParams::dt},
  };
}

// Visits split points in schedule order. `on_split(arity)` returns the split
// point's schedule index.
void walk_splits(const Architecture& arch, const std::function<void(const Branch&)>& visit) {
  std::function<void(const Branch&)> rec = [&](const Branch& b) {
    if (!b.children.empty()) visit(b);
    for (const auto& c : b.children) rec(c);
  };
  for (const auto& b : arch.branches) rec(b);
}

// Architecture flattened into a topological CPHX order.
struct Plan {
  std::vector<int> order;     // load indices, upstream first
  std::vector<int> upstream;  // by load index; -1 = tank
  std::vector<int> leaves;    // load indices whose outlets return to the LLHX
};

Plan make_plan(const Architecture& arch) {
  Plan plan;
  plan.upstream.assign(static_cast<std::size_t>(arch.n_cphx), -1);
  std::function<void(int, const Branch&)> rec = [&](int from, const Branch& b) {
    int prev = from;
    for (int c : b.cphx) {
      plan.upstream[static_cast<std::size_t>(c)] = prev;
      plan.order.push_back(c);
      prev = c;
    }
    if (b.children.empty()) {
      plan.leaves.push_back(prev);
      return;
    }
    for (const auto& child : b.children) rec(prev, child);
  };
  for (const auto& b : arch.branches) rec(-1, b);
  return plan;
}

// Per-interval linear coefficients of the quasi-steady coolant network.
struct Network {
  const Plan* plan = nullptr;
  std::vector<double> conductance;  // effective UA of each CPHX, W/K
  std::vector<double> inv_capacity_rate;  // 1 / (m_i c_p)
  std::vector<double> leaf_weight;  // m_leaf / m_total, parallel to plan->leaves
  std::vector<double> power;        // W
  std::vector<double> q;            // scratch, W
  std::vector<double> t_out;        // scratch, degC
  double mc_total = 0.0;
  double eps = 0.0;
  double t_sink = 0.0;
  double inv_c_wall = 0.0;
  double inv_c_tank = 0.0;

  // Outlet mix temperature. Linear and homogeneous in (Tt, Tw), so it is also
  // the time derivative of Tmix when fed the state derivative.
  double mix(const double* y) {
    const double t_tank = y[0];
    for (int i : plan->order) {
      const auto k = static_cast<std::size_t>(i);
      const int up = plan->upstream[k];
      const double t_in = up < 0 ? t_tank : t_out[static_cast<std::size_t>(up)];
      q[k] = conductance[k] * (y[1 + k] - t_in);
      t_out[k] = t_in + q[k] * inv_capacity_rate[k];
    }
    double t_mix = 0.0;
    for (std::size_t l = 0; l < plan->leaves.size(); ++l) {
      t_mix += leaf_weight[l] * t_out[static_cast<std::size_t>(plan->leaves[l])];
    }
    return t_mix;
  }

  // Writes dy/dt; returns the LLHX rejected heat rate in W.
  double rhs(const double* y, double* dy) {
    const double t_mix = mix(y);
    const double q_rej = mc_total * eps * (t_mix - t_sink);
    for (std::size_t k = 0; k < power.size(); ++k) dy[1 + k] = (power[k] - q[k]) * inv_c_wall;
    dy[0] = (mc_total * (t_mix - y[0]) - q_rej) * inv_c_tank;
    return q_rej;
  }

  double rejected_rate_derivative(const double* dy) { return mc_total * eps * mix(dy); }
};

}  // namespace

void PlantParams::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      fail(ErrorKind::kConfig, std::string("plant parameter ") + name + " must be positive and finite");
    }
  };
  positive(m_dot_total, "m_dot_total");
  positive(c_p, "c_p");
  positive(c_wall, "c_wall");
  positive(c_tank, "c_tank");
  positive(hA0, "hA0");
  positive(horizon, "horizon");
  positive(dt, "dt");
  if (!std::isfinite(flow_exponent) || flow_exponent < 0.0) {
    fail(ErrorKind::kConfig, "plant parameter flow_exponent must be finite and >= 0");
  }
  if (!(eps_llhx > 0.0 && eps_llhx <= 1.0)) fail(ErrorKind::kConfig, "eps_llhx must lie in (0, 1]");
  if (!(t_init < t_max)) fail(ErrorKind::kConfig, "t_init must be below t_max");
  if (!std::isfinite(t_sink)) fail(ErrorKind::kConfig, "t_sink must be finite");
}

PlantParams parse_plant_params(std::string_view text) {
  PlantParams p;
  const auto keys = plant_keys();
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfig, "plant config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) {
      fail(ErrorKind::kConfig, "plant config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      fail(ErrorKind::kConfig, "plant config line " + std::to_string(line_no) + ": bad number '" + value + "'");
    }
    p.*(it->second) = v;
  }
  p.validate();
  return p;
}

PlantParams load_plant_params(const std::filesystem::path& path) {
  return parse_plant_params(read_file(path));
}

std::string to_config_text(const PlantParams& params) {
  std::string out;
  for (const char* key : {"m_dot_total", "c_p", "c_wall", "c_tank", "hA0", "flow_exponent", "eps_llhx",
                          "t_sink", "t_init", "t_max", "horizon", "dt"}) {
    out += key;
    out += " = ";
    out += format_double(params.*(plant_keys().at(key)));
    out += '\n';
  }
  return out;
}

std::vector<int> split_arities(const Architecture& arch) {
  std::vector<int> out;
  if (arch.branches.size() >= 2) out.push_back(static_cast<int>(arch.branches.size()));
  walk_splits(arch, [&](const Branch& b) { out.push_back(static_cast<int>(b.children.size())); });
  return out;
}

void check_schedule(const Architecture& arch, const ControlSchedule& u) {
  if (u.n_intervals < 1) fail(ErrorKind::kControl, "control schedule needs at least one interval");
  const auto arities = split_arities(arch);
  if (arities.size() != u.splits.size()) {
    fail(ErrorKind::kControl, "schedule has " + std::to_string(u.splits.size()) + " split points, architecture has " +
                                  std::to_string(arities.size()));
  }
  for (std::size_t s = 0; s < arities.size(); ++s) {
    const auto& sc = u.splits[s];
    if (sc.n_children != arities[s] ||
        sc.fractions.size() != static_cast<std::size_t>(u.n_intervals * sc.n_children)) {
      fail(ErrorKind::kControl, "split point " + std::to_string(s) + " has the wrong shape");
    }
    for (int k = 0; k < u.n_intervals; ++k) {
      double sum = 0.0;
      for (int c = 0; c < sc.n_children; ++c) {
        const double f = sc.at(k, c);
        if (!(f >= kMinFraction - 1e-12)) {
          fail(ErrorKind::kControl, "split point " + std::to_string(s) + " interval " + std::to_string(k) +
                                        ": fraction below floor");
        }
        sum += f;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        fail(ErrorKind::kControl, "split point " + std::to_string(s) + " interval " + std::to_string(k) +
                                      ": fractions do not sum to 1");
      }
    }
  }
}

std::vector<double> flow_distribution(const Architecture& arch, const ControlSchedule& u, int interval,
                                      double m_dot_total) {
  check_schedule(arch, u);
  if (interval < 0 || interval >= u.n_intervals) {
    fail(ErrorKind::kControl, "interval " + std::to_string(interval) + " outside schedule");
  }
  std::vector<double> flow(static_cast<std::size_t>(arch.n_cphx), 0.0);
  std::size_t next_split = 0;
  std::function<void(const Branch&, double)> rec = [&](const Branch& b, double m) {
    for (int c : b.cphx) flow[static_cast<std::size_t>(c)] = m;
    if (b.children.empty()) return;
    const auto& sc = u.splits[next_split++];
    for (std::size_t i = 0; i < b.children.size(); ++i) rec(b.children[i], m * sc.at(interval, static_cast<int>(i)));
  };
  if (arch.branches.size() >= 2) {
    const auto& sc = u.splits[next_split++];
    for (std::size_t i = 0; i < arch.branches.size(); ++i) {
      rec(arch.branches[i], m_dot_total * sc.at(interval, static_cast<int>(i)));
    }
  } else {
    rec(arch.branches.front(), m_dot_total);
  }
  return flow;
}

SimResult simulate(const Architecture& arch, const Scenario& scenario, const ControlSchedule& u,
                   const PlantParams& params, const SimOptions& options) {
  params.validate();
  check_schedule(arch, u);
  const auto n = static_cast<std::size_t>(arch.n_cphx);
  if (scenario.loads_kw.size() != n) {
    fail(ErrorKind::kShape, "scenario " + std::to_string(scenario.id) + " load count does not match architecture");
  }
  const double interval_len = params.horizon / u.n_intervals;
  const double steps_real = interval_len / params.dt;
  const auto steps_per_interval = static_cast<long>(std::llround(steps_real));
  if (steps_per_interval < 1 || std::abs(steps_real - static_cast<double>(steps_per_interval)) > 1e-6 * steps_real) {
    fail(ErrorKind::kConfig, "dt does not divide the control interval length");
  }
  const double h = interval_len / static_cast<double>(steps_per_interval);

  const Plan plan = make_plan(arch);
  Network net;
  net.plan = &plan;
  net.conductance.resize(n);
  net.inv_capacity_rate.resize(n);
  net.leaf_weight.resize(plan.leaves.size());
  net.q.resize(n);
  net.t_out.resize(n);
  net.power.resize(n);
  double total_power = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    net.power[k] = scenario.loads_kw[k] * 1000.0;
    total_power += net.power[k];
  }
  net.mc_total = params.m_dot_total * params.c_p;
  net.eps = params.eps_llhx;
  net.t_sink = params.t_sink;
  net.inv_c_wall = 1.0 / params.c_wall;
  net.inv_c_tank = 1.0 / params.c_tank;

  const std::size_t dim = n + 1;
  std::vector<double> y(dim, params.t_init), y_next(dim), tmp(dim);
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), dy_next(dim);
  const auto stored = [&](const std::vector<double>& s) {
    double e = params.c_tank * s[0];
    for (std::size_t k = 0; k < n; ++k) e += params.c_wall * s[1 + k];
    return e;
  };
  const double e0 = stored(y);

  SimResult result;
  const auto record = [&](double t, const std::vector<double>& s) {
    if (!options.record_trajectory) return;
    result.trajectory.push_back({t, s[0], std::vector<double>(s.begin() + 1, s.end())});
  };
  record(0.0, y);

  double rejected = 0.0;
  double t = 0.0;
  bool crossed = false;
  for (int interval = 0; interval < u.n_intervals && !crossed; ++interval) {
    const auto flow = flow_distribution(arch, u, interval, params.m_dot_total);
    for (std::size_t k = 0; k < n; ++k) {
      const double ua = params.hA0 * std::pow(flow[k] / params.m_dot_total, params.flow_exponent);
      const double cap = flow[k] * params.c_p;
      net.conductance[k] = ua / (1.0 + ua / (2.0 * cap));
      net.inv_capacity_rate[k] = 1.0 / cap;
    }
    for (std::size_t l = 0; l < plan.leaves.size(); ++l) {
      net.leaf_weight[l] = flow[static_cast<std::size_t>(plan.leaves[l])] / params.m_dot_total;
    }

    double q0 = net.rhs(y.data(), k1.data());
    double dq0 = net.rejected_rate_derivative(k1.data());
    for (long step = 0; step < steps_per_interval; ++step) {
      const double t0 = interval * interval_len + static_cast<double>(step) * h;
      for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
      net.rhs(tmp.data(), k2.data());
      for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
      net.rhs(tmp.data(), k3.data());
      for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + h * k3[i];
      net.rhs(tmp.data(), k4.data());
      for (std::size_t i = 0; i < dim; ++i) y_next[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

      for (std::size_t i = 0; i < dim; ++i) {
        if (!std::isfinite(y_next[i])) {
          const std::string where = i == 0 ? "tank" : "CPHX " + std::to_string(i - 1);
          fail(ErrorKind::kIntegration, "non-finite temperature at t=" + format_double(t0 + h) + " s in " + where);
        }
      }

      // Earliest wall crossing inside the step, by linear interpolation.
      double theta = 2.0;
      int binding = -1;
      for (std::size_t k = 0; k < n; ++k) {
        const double a = y[1 + k], b = y_next[1 + k];
        if (b > params.t_max && a <= params.t_max) {
          const double th = (params.t_max - a) / (b - a);
          if (th < theta) {
            theta = th;
            binding = static_cast<int>(k);
          }
        }
      }

      if (binding >= 0) {
        // Dense output at the crossing by cubic Hermite interpolation.
        double q1 = net.rhs(y_next.data(), dy_next.data());
        (void)q1;
        const double s = theta;
        const double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
        const double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
        for (std::size_t i = 0; i < dim; ++i) {
          tmp[i] = h00 * y[i] + h10 * h * k1[i] + h01 * y_next[i] + h11 * h * dy_next[i];
        }
        const double hs = s * h;
        const double qe = net.rhs(tmp.data(), dy_next.data());
        const double dqe = net.rejected_rate_derivative(dy_next.data());
        rejected += hs / 2.0 * (q0 + qe) + hs * hs / 12.0 * (dq0 - dqe);
        y = tmp;
        t = t0 + hs;
        result.binding_node = binding;
        crossed = true;
        record(t, y);
        break;
      }

      const double q1 = net.rhs(y_next.data(), dy_next.data());
      const double dq1 = net.rejected_rate_derivative(dy_next.data());
      rejected += h / 2.0 * (q0 + q1) + h * h / 12.0 * (dq0 - dq1);
      y.swap(y_next);
      k1.swap(dy_next);
      q0 = q1;
      dq0 = dq1;
      t = t0 + h;
      record(t, y);
    }
  }

  result.t_end = crossed ? t : params.horizon;
  result.heat_in = total_power * result.t_end;
  result.heat_rejected = rejected;
  result.stored_change = stored(y) - e0;
  result.energy_residual = energy_residual(result);
  return result;
}

double energy_residual(const SimResult& result) {
  constexpr double kEps = 1.0;  // J
  const double imbalance = result.heat_in - result.heat_rejected - result.stored_change;
  return std::abs(imbalance) / std::max(result.heat_in, kEps);
}

void write_trajectory_csv(const SimResult& result, const std::filesystem::path& path) {
  std::string out = "time,T_tank";
  const std::size_t n = result.trajectory.empty() ? 0 : result.trajectory.front().t_wall.size();
  for (std::size_t k = 0; k < n; ++k) out += ",T_w" + std::to_string(k);
  out += '\n';
  for (const auto& s : result.trajectory) {
    out += format_double(s.t) + ',' + format_double(s.t_tank);
    for (double w : s.t_wall) out += ',' + format_double(w);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace thermograph
