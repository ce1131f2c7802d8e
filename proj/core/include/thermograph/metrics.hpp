#pragma once

// Rank-quality and regression metrics. Argmax ties resolve to the lowest
// index; N_OL and N_sub count strictly greater values.

#include <filesystem>
#include <span>
#include <vector>

namespace thermograph {

// Tie-adjusted Kendall tau (tau-b), O(n log n). Throws ErrorKind::kShape on
// length mismatch or n < 2, ErrorKind::kUndefinedTau when either input is
// constant.
double kendall_tau(std::span<const double> x, std::span<const double> y);

std::size_t argmax(std::span<const double> v);

// Graphs predicted strictly above the prediction of the true optimum.
int n_ol(std::span<const double> J, std::span<const double> J_hat);
// Graphs whose true value strictly exceeds that of the predicted optimum.
int n_sub(std::span<const double> J, std::span<const double> J_hat);
// J(predicted optimum) / max J; throws ErrorKind::kDomain when max J <= 0.
double j_sub(std::span<const double> J, std::span<const double> J_hat);

struct RegressionReport {
  double mse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
};

// Throws ErrorKind::kDomain when J has zero variance.
RegressionReport regression_report(std::span<const double> J, std::span<const double> J_hat);

struct ScenarioEval {
  int scenario_id = 0;
  std::vector<double> J;
  std::vector<double> J_hat;
  std::size_t i_star = 0;
  std::size_t i_hat_star = 0;
  int N_OL = 0;
  int N_sub = 0;
  double J_sub = 0.0;
  double tau = 0.0;  // NaN when undefined (all-tied population)
};

ScenarioEval evaluate_scenario(int scenario_id, std::vector<double> J, std::vector<double> J_hat);

// Header: scenario_id,n_graphs,tau,N_OL,N_sub,J_sub
void write_scenario_evals_csv(const std::vector<ScenarioEval>& evals, const std::filesystem::path& path);

}  // namespace thermograph
