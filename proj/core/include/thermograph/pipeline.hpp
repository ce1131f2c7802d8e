#pragma once

// File formats and the enumerate -> label -> train -> eval -> reduce workflow.
//
//   architectures  one canonical record per line          S;3;{[0,1],[2]}
//   scenarios      id;load0,load1,...  (kW, 4 decimals)    7;12.5000,4.0312,9.1000
//   dataset        one JSON object per line (DatasetRecord)
//
// All writers go through write_file_atomic.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "thermograph/archgraph.hpp"
#include "thermograph/gnn.hpp"
#include "thermograph/metrics.hpp"
#include "thermograph/oloc.hpp"
#include "thermograph/thermalsim.hpp"

namespace thermograph {

inline constexpr const char* kPlantConfigEnv = "THERMOGRAPH_PLANT_CONFIG";

enum class SplitTag { kTrain, kTest, kHoldout };

std::string_view to_string(SplitTag tag);
SplitTag split_tag_from_string(std::string_view text);

// A (family, n) pair such as "S5"; matching records are never trained on.
struct HoldoutSpec {
  Family family = Family::kSingleSplit;
  int n_cphx = 0;

  bool matches(const Architecture& arch) const { return arch.family == family && arch.n_cphx == n_cphx; }
  std::string str() const;
};

std::optional<HoldoutSpec> parse_holdout(std::string_view text);  // empty text -> nullopt

struct DatasetRecord {
  std::string arch_key;
  Family family = Family::kSingleSplit;
  int n_cphx = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::string> node_kinds;  // "T", "J", or "C<load index>"
  std::vector<double> loads_kw;
  int scenario_id = 0;
  double J = 0.0;
  SplitTag split_tag = SplitTag::kTest;

  bool operator==(const DatasetRecord&) const = default;
};

DatasetRecord make_record(const LabeledInstance& inst, SplitTag tag);
std::string serialize_record(const DatasetRecord& rec);
// Throws ErrorKind::kParse on malformed lines, non-positive J, or edges that
// disagree with the architecture key.
DatasetRecord parse_record(std::string_view line);
LabeledInstance to_instance(const DatasetRecord& rec);

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

void write_architectures(const std::vector<Architecture>& archs, const std::filesystem::path& path);
std::vector<Architecture> read_architectures(const std::filesystem::path& path);

struct LoadRange {
  double lo = kMinLoadKw;
  double hi = kMaxLoadKw;
};

// mt19937_64 seeded with `seed`; each load is lo + (hi - lo) * u with
// u = (draw >> 11) * 2^-53, rounded to 1e-4 kW. Ids run from `first_id`.
std::vector<Scenario> generate_scenarios(int n_cphx, int count, std::uint64_t seed, LoadRange range = {},
                                         int first_id = 0);
// Throws ErrorKind::kConfig when a load is outside [4, 16] kW.
Scenario fixed_scenario(std::vector<double> loads_kw, int id = 0);

std::string serialize_scenario(const Scenario& s);
Scenario parse_scenario(std::string_view line);
void write_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path);
std::vector<Scenario> read_scenarios(const std::filesystem::path& path);

// PlantParams from `path`, else from $THERMOGRAPH_PLANT_CONFIG, else defaults.
PlantParams resolve_plant_params(const std::optional<std::filesystem::path>& path);

struct LabelJob {
  std::vector<Architecture> archs;
  std::vector<Scenario> scenarios;
  PlantParams params;
  OlocConfig oloc;
  int workers = 1;
  std::optional<HoldoutSpec> holdout;
  std::size_t stop_after = static_cast<std::size_t>(-1);  // simulated interruption for tests
};

struct LabelSummary {
  std::size_t rows = 0;
  std::size_t failures = 0;
  std::size_t resumed = 0;  // rows recovered from the completion log
  bool complete = false;
};

// Labels every matching (architecture, scenario) pair and writes the dataset.
// Completed rows are appended to "<out>.progress" as they finish so an
// interrupted run resumes where it stopped; the log is removed on success.
// Failed rows are skipped and reported on `log`.
LabelSummary run_label(const LabelJob& job, const std::filesystem::path& out, std::ostream& log);

struct PartitionSummary {
  std::string name;
  std::size_t instances = 0;
  double tau = 0.0;  // NaN when undefined
  std::optional<RegressionReport> regression;
  std::vector<ScenarioEval> scenarios;
  double mean_n_ol = 0.0;
  double mean_n_sub = 0.0;
  double mean_j_sub = 0.0;
  double mean_tau = 0.0;
  double mean_evaluated_fraction = 0.0;  // mean of (N_OL + 1) / n_graphs
};

struct EvalReport {
  std::vector<PartitionSummary> partitions;  // train, test, holdout (non-empty ones)
  std::vector<DatasetRecord> records;        // with split tags assigned
  std::vector<double> predictions;           // parallel to records

  const PartitionSummary* find(std::string_view name) const;
};

// Tags every record from the checkpoint's split (holdout > train > test).
void assign_split_tags(std::vector<DatasetRecord>& records, const Checkpoint& ckpt);

EvalReport evaluate(const Checkpoint& ckpt, std::vector<DatasetRecord> records);

// summary.csv, scenarios_<partition>.csv, scatter.csv into `dir`.
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir);

struct RankedCandidate {
  std::string arch_key;
  double J_hat = 0.0;
  std::optional<double> J_oracle;  // set for the evaluated top-k
};

struct ReductionReport {
  int scenario_id = 0;
  std::size_t n_graphs = 0;
  std::size_t budget = 0;
  bool budget_clamped = false;
  std::vector<RankedCandidate> ranked;  // descending J_hat
  double best_found_J = 0.0;
  std::string best_found_key;
  std::optional<int> evaluations_to_certify;  // N_OL + 1, needs full labels
  std::optional<double> reduction_fraction;   // 1 - (N_OL + 1) / n_graphs
};

// Ranks `archs` by predicted endurance and runs the optimal-control oracle on
// the top `budget`. When `labels` (arch_key -> J for this scenario) covers the
// population, also reports N_OL + 1 and the reduction fraction.
ReductionReport reduce(const GatModel& model, const std::vector<Architecture>& archs, const Scenario& scenario,
                       std::size_t budget, const PlantParams& params, const OlocConfig& cfg,
                       const std::vector<std::pair<std::string, double>>* labels = nullptr);
// Same, with predictions supplied by the caller (parallel to the
// architectures whose CPHX count matches the scenario).
ReductionReport reduce_with_predictions(const std::vector<Architecture>& archs, const std::vector<double>& J_hat,
                                        const Scenario& scenario, std::size_t budget, const PlantParams& params,
                                        const OlocConfig& cfg,
                                        const std::vector<std::pair<std::string, double>>* labels = nullptr);

void write_reduction_csv(const ReductionReport& report, const std::filesystem::path& path);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
void write_embeddings_csv(const std::vector<std::string>& row_labels, const std::vector<int>& scenario_ids,
                          const Eigen::MatrixXd& embeddings, const std::filesystem::path& path);

}  // namespace thermograph
