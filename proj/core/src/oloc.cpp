#include "thermograph/oloc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include "thermograph/error.hpp"

namespace thermograph {

namespace {

// Standard normal from two 53-bit uniforms (Box-Muller), so perturbations do
// not depend on the standard library's distribution implementation.
double standard_normal(std::mt19937_64& rng) {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * kScale;
  const double u2 = static_cast<double>(rng() >> 11) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

void OlocConfig::validate() const {
  if (n_intervals < 1 || max_evals < 1 || restarts < 0 || !(convergence_tol > 0.0)) {
    fail(ErrorKind::kConfig, "OLOC config values must be positive");
  }
}

ControlSchedule baseline_uniform(const Architecture& arch, const OlocConfig& cfg) {
  ControlSchedule u;
  u.n_intervals = cfg.n_intervals;
  for (int arity : split_arities(arch)) {
    u.splits.push_back(SplitControl{arity, std::vector<double>(static_cast<std::size_t>(cfg.n_intervals * arity),
                                                               1.0 / arity)});
  }
  return u;
}

std::size_t decision_dim(const Architecture& arch, int n_intervals) {
  std::size_t dim = 0;
  for (int arity : split_arities(arch)) dim += static_cast<std::size_t>((arity - 1) * n_intervals);
  return dim;
}

ControlSchedule schedule_from_logits(const Architecture& arch, int n_intervals, const std::vector<double>& logits) {
  if (logits.size() != decision_dim(arch, n_intervals)) {
    fail(ErrorKind::kShape, "logit vector has the wrong length for this architecture");
  }
  ControlSchedule u;
  u.n_intervals = n_intervals;
  std::size_t pos = 0;
  std::vector<double> z;
  for (int arity : split_arities(arch)) {
    SplitControl sc{arity, std::vector<double>(static_cast<std::size_t>(n_intervals * arity))};
    const double free_mass = 1.0 - arity * kMinFraction;
    for (int k = 0; k < n_intervals; ++k) {
      z.assign(static_cast<std::size_t>(arity), 0.0);
      for (int c = 0; c + 1 < arity; ++c) z[static_cast<std::size_t>(c)] = logits[pos++];
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double& v : z) sum += (v = std::exp(v - zmax));
      for (int c = 0; c < arity; ++c) {
        sc.fractions[static_cast<std::size_t>(k * arity + c)] = kMinFraction + free_mass * z[static_cast<std::size_t>(c)] / sum;
      }
    }
    u.splits.push_back(std::move(sc));
  }
  return u;
}

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             double step, double ftol, int max_evals) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  fv[0] = f(x0);
  res.evals = 1;
  for (std::size_t i = 0; i < n && res.evals < max_evals; ++i) {
    simplex[i + 1][i] += step;
    fv[i + 1] = f(simplex[i + 1]);
    ++res.evals;
  }
  if (res.evals < static_cast<int>(n + 1)) {
    // Budget ran out while building the simplex.
    const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.begin() + res.evals) - fv.begin());
    res.x = simplex[best];
    res.f = fv[best];
    return res;
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (fv[worst] - fv[best] <= ftol || res.evals >= max_evals) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
    }
    for (std::size_t d = 0; d < n; ++d) xr[d] = centroid[d] + (centroid[d] - simplex[worst][d]);
    const double fr = f(xr);
    ++res.evals;

    if (fr < fv[best]) {
      if (res.evals < max_evals) {
        for (std::size_t d = 0; d < n; ++d) xe[d] = centroid[d] + 2.0 * (centroid[d] - simplex[worst][d]);
        const double fe = f(xe);
        ++res.evals;
        if (fe < fr) {
          simplex[worst] = xe;
          fv[worst] = fe;
          continue;
        }
      }
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    if (res.evals >= max_evals) break;
    const bool outside = fr < fv[worst];
    for (std::size_t d = 0; d < n; ++d) {
      xc[d] = outside ? centroid[d] + 0.5 * (xr[d] - centroid[d]) : centroid[d] + 0.5 * (simplex[worst][d] - centroid[d]);
    }
    const double fc = f(xc);
    ++res.evals;
    if (fc < std::min(fr, fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t i = 0; i <= n && res.evals < max_evals; ++i) {
      if (i == best) continue;
      for (std::size_t d = 0; d < n; ++d) simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
      fv[i] = f(simplex[i]);
      ++res.evals;
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = simplex[best];
  res.f = fv[best];
  return res;
}

Label optimize_endurance(const Architecture& arch, const Scenario& scenario, const PlantParams& params,
                         const OlocConfig& cfg) {
  cfg.validate();
  const std::size_t dim = decision_dim(arch, cfg.n_intervals);
  const auto endurance = [&](const ControlSchedule& u) { return simulate(arch, scenario, u, params).t_end; };

  Label label;
  label.best_controls = baseline_uniform(arch, cfg);
  try {
    label.J = endurance(label.best_controls);
  } catch (const Error& e) {
    fail(ErrorKind::kLabel, canonical_key(arch) + " scenario " + std::to_string(scenario.id) +
                                ": baseline simulation failed: " + e.what());
  }
  label.evals_used = 1;

  if (dim > 0 && label.J < params.horizon) {
    std::vector<double> best_x(dim, 0.0);
    double best_f = -label.J;
    // Non-finite candidates are treated as infeasible rather than fatal.
    const auto objective = [&](const std::vector<double>& x) {
      try {
        return -endurance(schedule_from_logits(arch, cfg.n_intervals, x));
      } catch (const Error&) {
        return 0.0;
      }
    };
    std::mt19937_64 rng(cfg.seed);
    int budget = cfg.max_evals - 1;
    for (int start = 0; start <= cfg.restarts && budget > 0; ++start) {
      std::vector<double> x0 = best_x;
      if (start > 0) {
        for (double& v : x0) v += standard_normal(rng);
      }
      const int share = std::max(1, budget / (cfg.restarts + 1 - start));
      const auto res = nelder_mead(objective, x0, 1.0, cfg.convergence_tol, share);
      budget -= res.evals;
      label.evals_used += res.evals;
      if (res.f < best_f) {
        best_f = res.f;
        best_x = res.x;
      }
      if (-best_f >= params.horizon) break;
    }
    label.J = -best_f;
    label.best_controls = schedule_from_logits(arch, cfg.n_intervals, best_x);
  }
  label.saturated = label.J >= params.horizon;
  return label;
}

std::vector<LabelItem> label_items(const std::vector<Architecture>& archs, const std::vector<Scenario>& scenarios) {
  std::vector<LabelItem> items;
  for (std::size_t a = 0; a < archs.size(); ++a) {
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      if (scenarios[s].loads_kw.size() == static_cast<std::size_t>(archs[a].n_cphx)) items.push_back({a, s});
    }
  }
  return items;
}

bool label_items_parallel(const std::vector<Architecture>& archs, const std::vector<Scenario>& scenarios,
                          const std::vector<LabelItem>& items, const PlantParams& params, const OlocConfig& cfg,
                          const LabelRunOptions& options, const ItemDone& done) {
  cfg.validate();
  params.validate();
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> completed{0};
  std::atomic<bool> stopped{false};
  std::mutex done_mu;
  const auto work = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      if (i < options.skip.size() && options.skip[i]) continue;
      if (completed.load() >= options.stop_after) {
        stopped = true;
        return;
      }
      const auto& arch = archs[items[i].arch];
      const auto& sc = scenarios[items[i].scenario];
      std::optional<LabeledInstance> instance;
      std::optional<LabelFailure> failure;
      try {
        const Label l = optimize_endurance(arch, sc, params, cfg);
        instance = LabeledInstance{arch, sc, l.J, l.evals_used, l.saturated};
      } catch (const Error& e) {
        failure = LabelFailure{canonical_key(arch), sc.id, e.what()};
      }
      std::lock_guard lock(done_mu);
      if (completed.load() >= options.stop_after) {
        stopped = true;
        return;
      }
      ++completed;
      done(i, instance ? &*instance : nullptr, failure ? &*failure : nullptr);
    }
  };
  const int n_threads = std::max(1, std::min<int>(options.workers, static_cast<int>(items.size())));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
  }
  return !stopped.load();
}

LabelRun label_population(const std::vector<Architecture>& archs, const std::vector<Scenario>& scenarios,
                          const PlantParams& params, const OlocConfig& cfg, int workers,
                          const LabelProgress& progress) {
  if (archs.empty() || scenarios.empty()) fail(ErrorKind::kConfig, "labeling needs architectures and scenarios");
  const auto items = label_items(archs, scenarios);
  std::vector<std::optional<LabeledInstance>> instances(items.size());
  std::vector<std::optional<LabelFailure>> failures(items.size());
  LabelRunOptions options;
  options.workers = workers;
  label_items_parallel(archs, scenarios, items, params, cfg, options,
                       [&](std::size_t i, const LabeledInstance* inst, const LabelFailure* failure) {
                         if (inst) {
                           instances[i] = *inst;
                           if (progress) progress(*inst);
                         } else {
                           failures[i] = *failure;
                         }
                       });
  LabelRun run;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (instances[i]) run.instances.push_back(std::move(*instances[i]));
    if (failures[i]) run.failures.push_back(std::move(*failures[i]));
  }
  return run;
}

}  // namespace thermograph
