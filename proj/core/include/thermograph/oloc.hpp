#pragma once

// Endurance labels: maximize the time to the first wall-temperature violation
// over piecewise-constant valve schedules (direct single shooting).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thermograph/archgraph.hpp"
#include "thermograph/thermalsim.hpp"

namespace thermograph {

struct OlocConfig {
  int n_intervals = 4;
  int max_evals = 400;
  int restarts = 3;
  std::uint64_t seed = 0;
  double convergence_tol = 0.5;  // s

  void validate() const;
};

struct Label {
  double J = 0.0;  // s
  ControlSchedule best_controls;
  int evals_used = 0;
  bool saturated = false;  // J reached the horizon
};

ControlSchedule baseline_uniform(const Architecture& arch, const OlocConfig& cfg);

// Maps unconstrained logits to a schedule: per split point and interval the
// first (arity - 1) entries are logits, the last child's logit is pinned to
// zero, and fractions = f_min + (1 - arity f_min) softmax(logits).
ControlSchedule schedule_from_logits(const Architecture& arch, int n_intervals,
                                     const std::vector<double>& logits);
std::size_t decision_dim(const Architecture& arch, int n_intervals);

// Throws ErrorKind::kLabel when the uniform baseline cannot be simulated.
Label optimize_endurance(const Architecture& arch, const Scenario& scenario, const PlantParams& params,
                         const OlocConfig& cfg);

struct LabeledInstance {
  Architecture arch;
  Scenario scenario;
  double J = 0.0;
  int evals_used = 0;
  bool saturated = false;
};

struct LabelFailure {
  std::string arch_key;
  int scenario_id = 0;
  std::string reason;
};

struct LabelRun {
  std::vector<LabeledInstance> instances;
  std::vector<LabelFailure> failures;
};

using LabelProgress = std::function<void(const LabeledInstance&)>;

struct LabelItem {
  std::size_t arch = 0;      // index into the architecture list
  std::size_t scenario = 0;  // index into the scenario list
};

// Architecture-major cross product restricted to matching CPHX counts.
std::vector<LabelItem> label_items(const std::vector<Architecture>& archs, const std::vector<Scenario>& scenarios);

// Exactly one of `instance` / `failure` is non-null. Calls are serialized.
using ItemDone = std::function<void(std::size_t item, const LabeledInstance* instance, const LabelFailure* failure)>;

struct LabelRunOptions {
  int workers = 1;
  std::vector<bool> skip;                 // items already done, indexed like `items`
  std::size_t stop_after = static_cast<std::size_t>(-1);  // new completions before stopping
};

// Labels `items` on a pool of worker threads. Returns false when it stopped
// early because of `stop_after`.
bool label_items_parallel(const std::vector<Architecture>& archs, const std::vector<Scenario>& scenarios,
                          const std::vector<LabelItem>& items, const PlantParams& params, const OlocConfig& cfg,
                          const LabelRunOptions& options, const ItemDone& done);

// Cross product of architectures and scenarios with matching CPHX count,
// architecture-major. `workers` threads share the items; output order does
// not depend on completion order.
LabelRun label_population(const std::vector<Architecture>& archs, const std::vector<Scenario>& scenarios,
                          const PlantParams& params, const OlocConfig& cfg, int workers = 1,
                          const LabelProgress& progress = {});

// Generic minimizer used by optimize_endurance; exposed for testing.
struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int evals = 0;
};

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, double step, double ftol, int max_evals);

}  // namespace thermograph
