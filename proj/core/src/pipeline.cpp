#include "thermograph/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "thermograph/error.hpp"
#include "thermograph/io.hpp"

namespace thermograph {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string node_kind_label(const NodeKind& k) {
  switch (k.type) {
    case NodeType::kTank: return "T";
    case NodeType::kJunction: return "J";
    case NodeType::kCphx: return "C" + std::to_string(k.load_index);
  }
  return "?";
}

double round_load(double kw) { return std::round(kw * 1e4) / 1e4; }

std::string format_load(double kw) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", kw);
  return buf;
}

void check_load(double kw) {
  if (!(kw >= kMinLoadKw && kw <= kMaxLoadKw)) {
    fail(ErrorKind::kConfig, "heat load " + format_double(kw) + " kW outside [4, 16] kW");
  }
}

// FNV-1a, stable across platforms; identifies the job a progress log belongs to.
std::uint64_t fingerprint(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string job_fingerprint(const LabelJob& job) {
  std::string text;
  for (const auto& a : job.archs) text += canonical_key(a) + '\n';
  for (const auto& s : job.scenarios) text += serialize_scenario(s) + '\n';
  text += to_config_text(job.params);
  text += std::to_string(job.oloc.n_intervals) + ' ' + std::to_string(job.oloc.max_evals) + ' ' +
          std::to_string(job.oloc.restarts) + ' ' + std::to_string(job.oloc.seed) + ' ' +
          format_double(job.oloc.convergence_tol) + ' ' + (job.holdout ? job.holdout->str() : "-");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint(text)));
  return buf;
}

double mean_of(const std::vector<ScenarioEval>& evals, double (*get)(const ScenarioEval&)) {
  if (evals.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& e : evals) {
    const double v = get(e);
    if (std::isnan(v)) continue;
    acc += v;
    ++n;
  }
  return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<std::size_t> ranks_ascending(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::size_t> rank(v.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = r;
  return rank;
}

}  // namespace

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kTest: return "test";
    case SplitTag::kHoldout: return "holdout";
  }
  return "test";
}

SplitTag split_tag_from_string(std::string_view text) {
  if (text == "train") return SplitTag::kTrain;
  if (text == "test") return SplitTag::kTest;
  if (text == "holdout") return SplitTag::kHoldout;
  fail(ErrorKind::kParse, "unknown split tag '" + std::string(text) + "'");
}

std::string HoldoutSpec::str() const { return family_code(family) + std::to_string(n_cphx); }

std::optional<HoldoutSpec> parse_holdout(std::string_view text) {
  if (text.empty()) return std::nullopt;
  HoldoutSpec h;
  try {
    h.family = family_from_code(text.front());
    h.n_cphx = std::stoi(std::string(text.substr(1)));
  } catch (const std::exception&) {
    fail(ErrorKind::kConfig, "holdout must look like S5 or M3, got '" + std::string(text) + "'");
  }
  if (h.n_cphx < 1) fail(ErrorKind::kConfig, "holdout node count must be positive");
  return h;
}

DatasetRecord make_record(const LabeledInstance& inst, SplitTag tag) {
  DatasetRecord r;
  r.arch_key = canonical_key(inst.arch);
  r.family = inst.arch.family;
  r.n_cphx = inst.arch.n_cphx;
  const FlatGraph g = to_flat_graph(inst.arch);
  r.edges = g.edges();
  for (const auto& v : g.vertices()) r.node_kinds.push_back(node_kind_label(v));
  r.loads_kw = inst.scenario.loads_kw;
  r.scenario_id = inst.scenario.id;
  r.J = inst.J;
  r.split_tag = tag;
  return r;
}

std::string serialize_record(const DatasetRecord& rec) {
  ordered_json j;
  j["arch_key"] = rec.arch_key;
  j["family"] = std::string(1, family_code(rec.family));
  j["n_cphx"] = rec.n_cphx;
  ordered_json edges = ordered_json::array();
  for (auto [a, b] : rec.edges) edges.push_back({a, b});
  j["edges"] = edges;
  j["node_kinds"] = rec.node_kinds;
  j["loads_kw"] = rec.loads_kw;
  j["scenario_id"] = rec.scenario_id;
  j["J"] = rec.J;
  j["split_tag"] = std::string(to_string(rec.split_tag));
  return j.dump();
}

DatasetRecord parse_record(std::string_view line) {
  DatasetRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.arch_key = j.at("arch_key").get<std::string>();
    const auto fam = j.at("family").get<std::string>();
    if (fam.size() != 1) fail(ErrorKind::kParse, "bad family '" + fam + "'");
    r.family = family_from_code(fam.front());
    r.n_cphx = j.at("n_cphx").get<int>();
    for (const auto& e : j.at("edges")) r.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    r.node_kinds = j.at("node_kinds").get<std::vector<std::string>>();
    r.loads_kw = j.at("loads_kw").get<std::vector<double>>();
    r.scenario_id = j.at("scenario_id").get<int>();
    r.J = j.at("J").get<double>();
    r.split_tag = split_tag_from_string(j.at("split_tag").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("dataset record: ") + e.what());
  }
  const Architecture arch = parse_architecture(r.arch_key);
  if (arch.family != r.family || arch.n_cphx != r.n_cphx) {
    fail(ErrorKind::kParse, "dataset record family/n disagree with " + r.arch_key);
  }
  const FlatGraph g = to_flat_graph(arch);
  std::vector<std::string> kinds;
  for (const auto& v : g.vertices()) kinds.push_back(node_kind_label(v));
  if (g.edges() != r.edges || kinds != r.node_kinds) {
    fail(ErrorKind::kParse, "dataset record edges disagree with " + r.arch_key);
  }
  if (r.loads_kw.size() != static_cast<std::size_t>(r.n_cphx)) {
    fail(ErrorKind::kParse, "dataset record load count disagrees with " + r.arch_key);
  }
  if (!(r.J > 0.0) || !std::isfinite(r.J)) fail(ErrorKind::kParse, "dataset record J must be positive");
  return r;
}

LabeledInstance to_instance(const DatasetRecord& rec) {
  LabeledInstance inst;
  inst.arch = parse_architecture(rec.arch_key);
  inst.scenario = Scenario{rec.scenario_id, rec.loads_kw};
  inst.J = rec.J;
  return inst;
}

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) out += serialize_record(r) + '\n';
  write_file_atomic(path, out);
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::vector<DatasetRecord> out;
  for (const auto& line : read_records(path)) out.push_back(parse_record(line));
  return out;
}

void write_architectures(const std::vector<Architecture>& archs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& a : archs) out += canonical_key(a) + '\n';
  write_file_atomic(path, out);
}

std::vector<Architecture> read_architectures(const std::filesystem::path& path) {
  std::vector<Architecture> out;
  for (const auto& line : read_records(path)) out.push_back(parse_architecture(line));
  return out;
}

std::vector<Scenario> generate_scenarios(int n_cphx, int count, std::uint64_t seed, LoadRange range, int first_id) {
  if (n_cphx < 1) fail(ErrorKind::kConfig, "scenario node count must be positive");
  if (count < 1) fail(ErrorKind::kConfig, "scenario count must be >= 1");
  if (!(range.lo < range.hi) || range.lo < kMinLoadKw || range.hi > kMaxLoadKw) {
    fail(ErrorKind::kConfig, "load range must satisfy 4 <= lo < hi <= 16 kW");
  }
  std::mt19937_64 rng(seed);
  std::vector<Scenario> out;
  for (int s = 0; s < count; ++s) {
    Scenario sc{first_id + s, {}};
    for (int i = 0; i < n_cphx; ++i) {
      const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
      sc.loads_kw.push_back(std::clamp(round_load(range.lo + (range.hi - range.lo) * u), range.lo, range.hi));
    }
    out.push_back(std::move(sc));
  }
  return out;
}

Scenario fixed_scenario(std::vector<double> loads_kw, int id) {
  if (loads_kw.empty()) fail(ErrorKind::kConfig, "fixed scenario needs at least one load");
  for (double d : loads_kw) check_load(d);
  return Scenario{id, std::move(loads_kw)};
}

std::string serialize_scenario(const Scenario& s) {
  std::string out = std::to_string(s.id) + ';';
  for (std::size_t i = 0; i < s.loads_kw.size(); ++i) {
    if (i) out += ',';
    out += format_load(s.loads_kw[i]);
  }
  return out;
}

Scenario parse_scenario(std::string_view line) {
  const auto semi = line.find(';');
  if (semi == std::string_view::npos) fail(ErrorKind::kParse, "scenario line '" + std::string(line) + "' lacks ';'");
  Scenario s;
  try {
    std::size_t used = 0;
    const std::string id(line.substr(0, semi));
    s.id = std::stoi(id, &used);
    if (used != id.size()) throw std::invalid_argument("id");
    std::stringstream loads{std::string(line.substr(semi + 1))};
    std::string item;
    while (std::getline(loads, item, ',')) {
      s.loads_kw.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("load");
    }
  } catch (const std::exception&) {
    fail(ErrorKind::kParse, "malformed scenario line '" + std::string(line) + "'");
  }
  if (s.loads_kw.empty()) fail(ErrorKind::kParse, "scenario line '" + std::string(line) + "' has no loads");
  for (double d : s.loads_kw) {
    if (!(d >= kMinLoadKw && d <= kMaxLoadKw)) {
      fail(ErrorKind::kParse, "scenario " + std::to_string(s.id) + " has a load outside [4, 16] kW");
    }
  }
  return s;
}

void write_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path) {
  std::string out;
  for (const auto& s : scenarios) out += serialize_scenario(s) + '\n';
  write_file_atomic(path, out);
}

std::vector<Scenario> read_scenarios(const std::filesystem::path& path) {
  std::vector<Scenario> out;
  for (const auto& line : read_records(path)) out.push_back(parse_scenario(line));
  return out;
}

PlantParams resolve_plant_params(const std::optional<std::filesystem::path>& path) {
  if (path) return load_plant_params(*path);
  if (const char* env = std::getenv(kPlantConfigEnv); env && *env) return load_plant_params(env);
  return PlantParams{};
}

LabelSummary run_label(const LabelJob& job, const std::filesystem::path& out, std::ostream& log) {
  if (job.archs.empty() || job.scenarios.empty()) fail(ErrorKind::kConfig, "labeling needs architectures and scenarios");
  const auto items = label_items(job.archs, job.scenarios);
  if (items.empty()) fail(ErrorKind::kConfig, "no scenario matches the CPHX count of any architecture");

  const std::string fp = job_fingerprint(job);
  auto progress_path = out;
  progress_path += ".progress";

  std::vector<std::optional<std::string>> rows(items.size());
  std::vector<bool> done(items.size(), false);
  LabelSummary summary;
  if (std::filesystem::exists(progress_path)) {
    const std::string text = read_file(progress_path);
    std::istringstream in(text);
    std::string line;
    bool header_ok = false;
    std::size_t consumed = 0;
    while (std::getline(in, line)) {
      consumed += line.size() + 1;
      if (consumed > text.size()) break;  // torn last line from an interrupted write
      if (!header_ok) {
        if (line != "job " + fp) {
          fail(ErrorKind::kConfig, "progress log '" + progress_path.string() +
                                       "' belongs to a different labeling job; remove it to start over");
        }
        header_ok = true;
        continue;
      }
      const auto sp = line.find(' ');
      const std::size_t idx = std::stoul(line.substr(0, sp));
      if (idx >= items.size()) fail(ErrorKind::kParse, "progress log row index out of range");
      const std::string body = line.substr(sp + 1);
      if (body.rfind("FAIL", 0) != 0) rows[idx] = body;
      done[idx] = true;
      ++summary.resumed;
    }
    if (!header_ok) std::filesystem::remove(progress_path);
  }

  std::ofstream progress(progress_path, std::ios::app | std::ios::binary);
  if (!progress) fail(ErrorKind::kIo, "cannot open '" + progress_path.string() + "'");
  if (summary.resumed == 0 && std::filesystem::file_size(progress_path) == 0) {
    progress << "job " << fp << '\n' << std::flush;
  }

  LabelRunOptions options;
  options.workers = job.workers;
  options.skip = done;
  options.stop_after = job.stop_after;
  const bool finished = label_items_parallel(
      job.archs, job.scenarios, items, job.params, job.oloc, options,
      [&](std::size_t i, const LabeledInstance* inst, const LabelFailure* failure) {
        if (inst) {
          const SplitTag tag = job.holdout && job.holdout->matches(inst->arch) ? SplitTag::kHoldout : SplitTag::kTest;
          rows[i] = serialize_record(make_record(*inst, tag));
          progress << i << ' ' << *rows[i] << '\n' << std::flush;
          log << "labeled " << canonical_key(inst->arch) << ' ' << inst->scenario.id << " J=" << format_double(inst->J)
              << " evals=" << inst->evals_used << '\n';
        } else {
          progress << i << " FAIL " << failure->reason << '\n' << std::flush;
          log << "skipped " << failure->arch_key << ' ' << failure->scenario_id << " reason=" << failure->reason
              << '\n';
        }
        done[i] = true;
      });
  progress.close();

  for (std::size_t i = 0; i < items.size(); ++i) {
    if (rows[i]) ++summary.rows;
    else if (done[i]) ++summary.failures;
  }
  if (!finished) return summary;

  std::string text;
  for (const auto& r : rows) {
    if (r) text += *r + '\n';
  }
  write_file_atomic(out, text);
  std::filesystem::remove(progress_path);
  summary.complete = true;
  return summary;
}

const PartitionSummary* EvalReport::find(std::string_view name) const {
  for (const auto& p : partitions) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void assign_split_tags(std::vector<DatasetRecord>& records, const Checkpoint& ckpt) {
  const auto holdout = parse_holdout(ckpt.holdout);
  for (auto& r : records) {
    if (holdout && holdout->family == r.family && holdout->n_cphx == r.n_cphx) {
      r.split_tag = SplitTag::kHoldout;
    } else if (std::binary_search(ckpt.train_scenarios.begin(), ckpt.train_scenarios.end(), r.scenario_id)) {
      r.split_tag = SplitTag::kTrain;
    } else {
      r.split_tag = SplitTag::kTest;
    }
  }
}

EvalReport evaluate(const Checkpoint& ckpt, std::vector<DatasetRecord> records) {
  assign_split_tags(records, ckpt);
  EvalReport report;
  report.predictions.reserve(records.size());
  for (const auto& r : records) {
    const auto inst = to_instance(r);
    report.predictions.push_back(predict(ckpt.model, node_features(inst.arch, inst.scenario)));
  }

  for (SplitTag tag : {SplitTag::kTrain, SplitTag::kTest, SplitTag::kHoldout}) {
    std::vector<double> J, J_hat;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_scenario;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].split_tag != tag) continue;
      J.push_back(records[i].J);
      J_hat.push_back(report.predictions[i]);
      auto& [sj, sh] = by_scenario[records[i].scenario_id];
      sj.push_back(records[i].J);
      sh.push_back(report.predictions[i]);
    }
    if (J.empty()) continue;
    PartitionSummary p;
    p.name = std::string(to_string(tag));
    p.instances = J.size();
    try {
      p.tau = kendall_tau(J, J_hat);
    } catch (const Error&) {
      p.tau = std::numeric_limits<double>::quiet_NaN();
    }
    try {
      p.regression = regression_report(J, J_hat);
    } catch (const Error&) {
      p.regression.reset();
    }
    for (auto& [id, pair] : by_scenario) p.scenarios.push_back(evaluate_scenario(id, pair.first, pair.second));
    p.mean_tau = mean_of(p.scenarios, [](const ScenarioEval& e) { return e.tau; });
    p.mean_n_ol = mean_of(p.scenarios, [](const ScenarioEval& e) { return static_cast<double>(e.N_OL); });
    p.mean_n_sub = mean_of(p.scenarios, [](const ScenarioEval& e) { return static_cast<double>(e.N_sub); });
    p.mean_j_sub = mean_of(p.scenarios, [](const ScenarioEval& e) { return e.J_sub; });
    p.mean_evaluated_fraction = mean_of(p.scenarios, [](const ScenarioEval& e) {
      return static_cast<double>(e.N_OL + 1) / static_cast<double>(e.J.size());
    });
    report.partitions.push_back(std::move(p));
  }
  report.records = std::move(records);
  return report;
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string summary =
      "partition,instances,tau,mse,mae,rmse,r2,mean_tau,mean_N_OL,mean_N_sub,mean_J_sub,mean_evaluated_fraction\n";
  const std::string nan = format_double(std::numeric_limits<double>::quiet_NaN());
  for (const auto& p : report.partitions) {
    summary += p.name + ',' + std::to_string(p.instances) + ',' + format_double(p.tau) + ',';
    if (p.regression) {
      summary += format_double(p.regression->mse) + ',' + format_double(p.regression->mae) + ',' +
                 format_double(p.regression->rmse) + ',' + format_double(p.regression->r2) + ',';
    } else {
      summary += nan + ',' + nan + ',' + nan + ',' + nan + ',';
    }
    summary += format_double(p.mean_tau) + ',' + format_double(p.mean_n_ol) + ',' + format_double(p.mean_n_sub) +
               ',' + format_double(p.mean_j_sub) + ',' + format_double(p.mean_evaluated_fraction) + '\n';
    write_scenario_evals_csv(p.scenarios, dir / ("scenarios_" + p.name + ".csv"));
  }
  write_file_atomic(dir / "summary.csv", summary);

  std::string scatter = "partition,true_rank,predicted_rank,J,J_hat\n";
  for (const auto& p : report.partitions) {
    std::vector<double> J, J_hat;
    for (std::size_t i = 0; i < report.records.size(); ++i) {
      if (to_string(report.records[i].split_tag) != p.name) continue;
      J.push_back(report.records[i].J);
      J_hat.push_back(report.predictions[i]);
    }
    const auto true_rank = ranks_ascending(J);
    const auto pred_rank = ranks_ascending(J_hat);
    std::vector<std::size_t> order(J.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return true_rank[a] < true_rank[b]; });
    for (std::size_t i : order) {
      scatter += p.name + ',' + std::to_string(true_rank[i]) + ',' + std::to_string(pred_rank[i]) + ',' +
                 format_double(J[i]) + ',' + format_double(J_hat[i]) + '\n';
    }
  }
  write_file_atomic(dir / "scatter.csv", scatter);
}

namespace {

std::vector<const Architecture*> matching(const std::vector<Architecture>& archs, const Scenario& scenario) {
  std::vector<const Architecture*> population;
  for (const auto& a : archs) {
    if (a.n_cphx == static_cast<int>(scenario.loads_kw.size())) population.push_back(&a);
  }
  if (population.empty()) fail(ErrorKind::kConfig, "no architecture matches the scenario's CPHX count");
  return population;
}

}  // namespace

ReductionReport reduce(const GatModel& model, const std::vector<Architecture>& archs, const Scenario& scenario,
                       std::size_t budget, const PlantParams& params, const OlocConfig& cfg,
                       const std::vector<std::pair<std::string, double>>* labels) {
  std::vector<double> J_hat;
  for (const auto* a : matching(archs, scenario)) J_hat.push_back(predict(model, node_features(*a, scenario)));
  return reduce_with_predictions(archs, J_hat, scenario, budget, params, cfg, labels);
}

ReductionReport reduce_with_predictions(const std::vector<Architecture>& archs, const std::vector<double>& J_hat,
                                        const Scenario& scenario, std::size_t budget, const PlantParams& params,
                                        const OlocConfig& cfg,
                                        const std::vector<std::pair<std::string, double>>* labels) {
  if (budget < 1) fail(ErrorKind::kConfig, "reduction budget must be >= 1");
  const auto population = matching(archs, scenario);
  if (J_hat.size() != population.size()) fail(ErrorKind::kShape, "one prediction per matching architecture expected");
  ReductionReport rep;
  rep.scenario_id = scenario.id;
  rep.n_graphs = population.size();

  std::vector<std::size_t> order(population.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return J_hat[a] > J_hat[b]; });

  rep.budget = std::min(budget, population.size());
  rep.budget_clamped = budget > population.size();
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto* a = population[order[r]];
    RankedCandidate c{canonical_key(*a), J_hat[order[r]], std::nullopt};
    if (r < rep.budget) {
      c.J_oracle = optimize_endurance(*a, scenario, params, cfg).J;
      if (r == 0 || *c.J_oracle > rep.best_found_J) {
        rep.best_found_J = *c.J_oracle;
        rep.best_found_key = c.arch_key;
      }
    }
    rep.ranked.push_back(std::move(c));
  }

  if (labels) {
    std::map<std::string, double> by_key(labels->begin(), labels->end());
    std::vector<double> J;
    for (const auto* a : population) {
      const auto it = by_key.find(canonical_key(*a));
      if (it == by_key.end()) break;
      J.push_back(it->second);
    }
    if (J.size() == population.size()) {
      const int nol = n_ol(J, J_hat);
      rep.evaluations_to_certify = nol + 1;
      rep.reduction_fraction = 1.0 - static_cast<double>(nol + 1) / static_cast<double>(population.size());
    }
  }
  return rep;
}

void write_reduction_csv(const ReductionReport& report, const std::filesystem::path& path) {
  std::string out = "rank,arch_key,J_hat,J_oracle\n";
  for (std::size_t r = 0; r < report.ranked.size(); ++r) {
    const auto& c = report.ranked[r];
    out += std::to_string(r) + ',' + c.arch_key + ',' + format_double(c.J_hat) + ',' +
           (c.J_oracle ? format_double(*c.J_oracle) : std::string()) + '\n';
  }
  write_file_atomic(path, out);
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::string out = "bucket,first_epoch,epochs,train_mse,test_mse\n";
  for (std::size_t b = 0; b < history.buckets.size(); ++b) {
    const auto& h = history.buckets[b];
    out += std::to_string(b) + ',' + std::to_string(h.first_epoch) + ',' + std::to_string(h.epochs) + ',' +
           format_double(h.train_mse) + ',' + format_double(h.test_mse) + '\n';
  }
  write_file_atomic(path, out);
}

void write_embeddings_csv(const std::vector<std::string>& row_labels, const std::vector<int>& scenario_ids,
                          const Eigen::MatrixXd& embeddings, const std::filesystem::path& path) {
  std::string out = "arch_key,scenario_id";
  for (Eigen::Index c = 0; c < embeddings.cols(); ++c) out += ",e" + std::to_string(c);
  out += '\n';
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    // Keys contain commas, so they are quoted.
    out += '"' + row_labels[static_cast<std::size_t>(r)] + "\"," + std::to_string(scenario_ids[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < embeddings.cols(); ++c) out += ',' + format_double(embeddings(r, c));
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace thermograph
