// thermograph: enumerate, label, train, and rank thermal management architectures.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "thermograph/archgraph.hpp"
#include "thermograph/error.hpp"
#include "thermograph/gnn.hpp"
#include "thermograph/io.hpp"
#include "thermograph/metrics.hpp"
#include "thermograph/oloc.hpp"
#include "thermograph/pipeline.hpp"

namespace tg = thermograph;

namespace {

struct OlocFlags {
  int intervals = tg::OlocConfig{}.n_intervals;
  int max_evals = tg::OlocConfig{}.max_evals;
  int restarts = tg::OlocConfig{}.restarts;
  std::uint64_t seed = 0;
  double tol = tg::OlocConfig{}.convergence_tol;

  void add(CLI::App* cmd) {
    cmd->add_option("--intervals", intervals, "Piecewise-constant control intervals")->capture_default_str();
    cmd->add_option("--max-evals", max_evals, "Simulation budget per label")->capture_default_str();
    cmd->add_option("--restarts", restarts, "Multi-start restarts")->capture_default_str();
    cmd->add_option("--oloc-seed", seed, "Restart perturbation seed")->capture_default_str();
    cmd->add_option("--convergence-tol", tol, "Simplex spread stopping tolerance [s]")->capture_default_str();
  }
  tg::OlocConfig config() const {
    tg::OlocConfig c{intervals, max_evals, restarts, seed, tol};
    c.validate();
    return c;
  }
};

std::vector<double> parse_load_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      tg::fail(tg::ErrorKind::kConfig, "cannot parse load '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

tg::Family parse_family(const std::string& name) {
  if (name == "single" || name == "S") return tg::Family::kSingleSplit;
  if (name == "multi" || name == "M") return tg::Family::kMultiSplit;
  tg::fail(tg::ErrorKind::kConfig, "family must be 'single' or 'multi', got '" + name + "'");
}

template <typename T>
std::vector<T> concat_files(const std::vector<std::string>& paths, std::vector<T> (*reader)(const std::filesystem::path&)) {
  std::vector<T> out;
  for (const auto& p : paths) {
    auto part = reader(p);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::optional<std::filesystem::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

void print_error(std::string_view kind, std::string_view message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal management architecture enumeration, labeling, and GNN ranking"};
  app.require_subcommand(1);

  // enumerate
  std::string family_name;
  int nodes = 0;
  std::string out_path;
  auto* enumerate = app.add_subcommand("enumerate", "Write every architecture of a family and node count");
  enumerate->add_option("--family", family_name, "single or multi")->required();
  enumerate->add_option("--nodes", nodes, "Number of CPHXs")->required();
  enumerate->add_option("--out", out_path, "Output file (one canonical key per line)")->required();

  // gen-scenarios
  int count = 1;
  std::uint64_t seed = 0;
  double lo = tg::kMinLoadKw, hi = tg::kMaxLoadKw;
  int id_offset = 0;
  std::string fixed;
  auto* gen = app.add_subcommand("gen-scenarios", "Write seeded heat-load scenarios");
  gen->add_option("--nodes", nodes, "Loads per scenario");
  gen->add_option("--count", count, "Number of scenarios")->capture_default_str();
  gen->add_option("--seed", seed, "mt19937_64 seed")->capture_default_str();
  gen->add_option("--lo", lo, "Lower load bound [kW]")->capture_default_str();
  gen->add_option("--hi", hi, "Upper load bound [kW]")->capture_default_str();
  gen->add_option("--id-offset", id_offset, "First scenario id")->capture_default_str();
  gen->add_option("--fixed", fixed, "Single scenario with these comma-separated loads [kW]");
  gen->add_option("--out", out_path, "Output file")->required();

  // label
  std::vector<std::string> graph_files, scenario_files;
  std::string plant_config, holdout;
  int workers = 1;
  bool quiet = false;
  OlocFlags oloc;
  auto* label = app.add_subcommand("label", "Label architectures x scenarios with the optimal-control oracle");
  label->add_option("--graphs", graph_files, "Architecture files")->required();
  label->add_option("--scenarios", scenario_files, "Scenario files")->required();
  label->add_option("--plant-config", plant_config, "Plant parameter file");
  label->add_option("--workers", workers, "Worker threads")->capture_default_str();
  label->add_option("--holdout", holdout, "Tag rows of this family/size (e.g. S5) as holdout");
  label->add_option("--out", out_path, "Dataset file (JSON lines)")->required();
  label->add_flag("--quiet", quiet, "No per-row progress lines");
  oloc.add(label);

  // train
  std::string dataset_path, history_path;
  tg::TrainConfig tcfg;
  auto* train = app.add_subcommand("train", "Train the GAT surrogate on a labeled dataset");
  train->add_option("--dataset", dataset_path, "Dataset file")->required();
  train->add_option("--out", out_path, "Checkpoint file")->required();
  train->add_option("--history", history_path, "Bucketed loss history CSV");
  train->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  train->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  train->add_option("--seed", tcfg.seed)->capture_default_str();
  train->add_option("--train-fraction", tcfg.train_fraction, "Fraction of scenarios used for training")
      ->capture_default_str();
  train->add_option("--holdout", holdout, "Family/size never trained on (e.g. S5)");

  // eval
  std::string checkpoint_path;
  auto* eval = app.add_subcommand("eval", "Rank metrics of a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--dataset", dataset_path)->required();
  eval->add_option("--out-dir", out_path, "Directory for summary, per-scenario and scatter CSVs")->required();

  // reduce
  std::size_t budget = 1;
  int scenario_id = -1;
  std::string labels_path;
  auto* reduce = app.add_subcommand("reduce", "Rank by predicted endurance and verify the top k with the oracle");
  reduce->add_option("--checkpoint", checkpoint_path)->required();
  reduce->add_option("--graphs", graph_files)->required();
  reduce->add_option("--scenarios", scenario_files, "Scenario file");
  reduce->add_option("--scenario-id", scenario_id, "Scenario to use (default: first in file)");
  reduce->add_option("--fixed", fixed, "Comma-separated loads instead of a scenario file");
  reduce->add_option("--budget", budget, "Number of candidates verified")->capture_default_str();
  reduce->add_option("--plant-config", plant_config);
  reduce->add_option("--labels", labels_path, "Labeled dataset for N_OL + 1 and reduction fraction");
  reduce->add_option("--out", out_path, "Ranked candidate CSV")->required();
  oloc.add(reduce);

  // embed
  auto* embed = app.add_subcommand("embed", "Export 48-dimensional graph embeddings");
  embed->add_option("--checkpoint", checkpoint_path)->required();
  embed->add_option("--dataset", dataset_path)->required();
  embed->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*enumerate) {
      const auto family = parse_family(family_name);
      const auto archs = family == tg::Family::kSingleSplit ? tg::enumerate_single_split(nodes)
                                                             : tg::enumerate_multi_split(nodes);
      tg::write_architectures(archs, out_path);
      std::cout << archs.size() << '\n';
    } else if (*gen) {
      std::vector<tg::Scenario> scenarios;
      if (!fixed.empty()) {
        scenarios.push_back(tg::fixed_scenario(parse_load_list(fixed), id_offset));
      } else {
        if (nodes < 1) tg::fail(tg::ErrorKind::kConfig, "--nodes is required without --fixed");
        scenarios = tg::generate_scenarios(nodes, count, seed, {lo, hi}, id_offset);
      }
      tg::write_scenarios(scenarios, out_path);
      std::cout << scenarios.size() << '\n';
    } else if (*label) {
      tg::LabelJob job;
      job.archs = concat_files(graph_files, &tg::read_architectures);
      job.scenarios = concat_files(scenario_files, &tg::read_scenarios);
      job.params = tg::resolve_plant_params(optional_path(plant_config));
      job.oloc = oloc.config();
      if (workers < 1) tg::fail(tg::ErrorKind::kConfig, "--workers must be >= 1");
      job.workers = workers;
      job.holdout = tg::parse_holdout(holdout);
      std::ostringstream sink;
      const auto summary = tg::run_label(job, out_path, quiet ? static_cast<std::ostream&>(sink) : std::cerr);
      std::cout << summary.rows << " rows, " << summary.failures << " skipped";
      if (summary.resumed) std::cout << ", " << summary.resumed << " resumed";
      std::cout << '\n';
    } else if (*train) {
      auto records = tg::read_dataset(dataset_path);
      auto spec = tg::parse_holdout(holdout);
      std::vector<tg::LabeledInstance> data;
      std::optional<tg::HoldoutSpec> tagged;
      for (const auto& r : records) {
        if (r.split_tag == tg::SplitTag::kHoldout) {
          tagged = tg::HoldoutSpec{r.family, r.n_cphx};
          continue;
        }
        if (spec && spec->family == r.family && spec->n_cphx == r.n_cphx) continue;
        data.push_back(tg::to_instance(r));
      }
      if (!spec) spec = tagged;
      const auto outcome = tg::train(data, tcfg);
      tg::Checkpoint ckpt{outcome.result.model, tcfg, outcome.train_scenarios, spec ? spec->str() : ""};
      tg::save_checkpoint(ckpt, out_path);
      if (!history_path.empty()) tg::write_history_csv(outcome.result.history, history_path);
      const auto& last = outcome.result.history.buckets.back();
      std::cout << "train_mse=" << tg::format_double(last.train_mse) << " test_mse=" << tg::format_double(last.test_mse)
                << '\n';
    } else if (*eval) {
      const auto ckpt = tg::load_checkpoint(checkpoint_path);
      const auto report = tg::evaluate(ckpt, tg::read_dataset(dataset_path));
      tg::write_eval_report(report, out_path);
      for (const auto& p : report.partitions) {
        std::cout << p.name << " tau=" << tg::format_double(p.tau) << " mean_N_OL=" << tg::format_double(p.mean_n_ol)
                  << " mean_J_sub=" << tg::format_double(p.mean_j_sub) << '\n';
      }
    } else if (*reduce) {
      const auto ckpt = tg::load_checkpoint(checkpoint_path);
      const auto archs = concat_files(graph_files, &tg::read_architectures);
      tg::Scenario scenario;
      if (!fixed.empty()) {
        scenario = tg::fixed_scenario(parse_load_list(fixed), scenario_id < 0 ? 0 : scenario_id);
      } else {
        const auto scenarios = concat_files(scenario_files, &tg::read_scenarios);
        if (scenarios.empty()) tg::fail(tg::ErrorKind::kConfig, "reduce needs --scenarios or --fixed");
        auto it = scenarios.begin();
        if (scenario_id >= 0) {
          it = std::find_if(scenarios.begin(), scenarios.end(), [&](const tg::Scenario& s) { return s.id == scenario_id; });
          if (it == scenarios.end()) tg::fail(tg::ErrorKind::kConfig, "scenario " + std::to_string(scenario_id) + " not found");
        }
        scenario = *it;
      }
      std::vector<std::pair<std::string, double>> labels;
      if (!labels_path.empty()) {
        for (const auto& r : tg::read_dataset(labels_path)) {
          if (r.scenario_id == scenario.id) labels.emplace_back(r.arch_key, r.J);
        }
      }
      const auto params = tg::resolve_plant_params(optional_path(plant_config));
      const auto rep = tg::reduce(ckpt.model, archs, scenario, budget, params, oloc.config(),
                                  labels_path.empty() ? nullptr : &labels);
      if (rep.budget_clamped) {
        std::cerr << "warning: budget " << budget << " exceeds population " << rep.n_graphs << ", clamped\n";
      }
      tg::write_reduction_csv(rep, out_path);
      std::cout << "best " << rep.best_found_key << " J=" << tg::format_double(rep.best_found_J);
      if (rep.evaluations_to_certify) {
        std::cout << " N_OL+1=" << *rep.evaluations_to_certify
                  << " reduction=" << tg::format_double(*rep.reduction_fraction);
      }
      std::cout << '\n';
    } else if (*embed) {
      const auto ckpt = tg::load_checkpoint(checkpoint_path);
      const auto records = tg::read_dataset(dataset_path);
      std::vector<tg::FeatureGraph> graphs;
      std::vector<std::string> keys;
      std::vector<int> ids;
      for (const auto& r : records) {
        const auto inst = tg::to_instance(r);
        graphs.push_back(tg::node_features(inst.arch, inst.scenario));
        keys.push_back(r.arch_key);
        ids.push_back(r.scenario_id);
      }
      tg::write_embeddings_csv(keys, ids, tg::export_embeddings(ckpt.model, graphs), out_path);
      std::cout << records.size() << '\n';
    }
  } catch (const tg::Error& e) {
    print_error(tg::to_string(e.kind()), e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    print_error("io", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
