#include "thermograph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "thermograph/error.hpp"
#include "thermograph/io.hpp"

namespace thermograph {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) fail(ErrorKind::kShape, "metric inputs differ in length");
  if (a.size() < min_len) fail(ErrorKind::kShape, "metric inputs need at least " + std::to_string(min_len) + " entries");
}

// Sum of t(t-1)/2 over runs of equal values in an already sorted sequence.
template <typename Eq>
long long tied_pairs(std::size_t n, Eq eq) {
  long long total = 0, run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (eq(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Stable merge sort of v that returns the number of strict inversions.
long long sort_counting_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long swaps = sort_counting_swaps(v, buf, lo, mid) + sort_counting_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<long long>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const long long x_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) { return x[idx[a]] == x[idx[b]]; });
  const long long joint_ties = tied_pairs(
      n, [&](std::size_t a, std::size_t b) { return x[idx[a]] == x[idx[b]] && y[idx[a]] == y[idx[b]]; });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  const long long swaps = sort_counting_swaps(ys, buf, 0, n);
  const long long y_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });

  const long long total = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const double denom = std::sqrt(static_cast<double>(total - x_ties)) * std::sqrt(static_cast<double>(total - y_ties));
  if (denom == 0.0) fail(ErrorKind::kUndefinedTau, "Kendall tau is undefined for a constant input");
  const long long numer = total - x_ties - y_ties + joint_ties - 2 * swaps;
  return std::clamp(static_cast<double>(numer) / denom, -1.0, 1.0);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) fail(ErrorKind::kShape, "argmax of an empty list");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

int n_ol(std::span<const double> J, std::span<const double> J_hat) {
  check_pair(J, J_hat, 1);
  const double ref = J_hat[argmax(J)];
  return static_cast<int>(std::count_if(J_hat.begin(), J_hat.end(), [&](double v) { return v > ref; }));
}

int n_sub(std::span<const double> J, std::span<const double> J_hat) {
  check_pair(J, J_hat, 1);
  const double ref = J[argmax(J_hat)];
  return static_cast<int>(std::count_if(J.begin(), J.end(), [&](double v) { return v > ref; }));
}

double j_sub(std::span<const double> J, std::span<const double> J_hat) {
  check_pair(J, J_hat, 1);
  const double best = J[argmax(J)];
  if (!(best > 0.0)) fail(ErrorKind::kDomain, "J_sub needs a positive optimum");
  return J[argmax(J_hat)] / best;
}

RegressionReport regression_report(std::span<const double> J, std::span<const double> J_hat) {
  check_pair(J, J_hat, 2);
  const double n = static_cast<double>(J.size());
  const double mean = std::accumulate(J.begin(), J.end(), 0.0) / n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < J.size(); ++i) {
    const double r = J[i] - J_hat[i];
    ss_res += r * r;
    abs_sum += std::abs(r);
    ss_tot += (J[i] - mean) * (J[i] - mean);
  }
  if (ss_tot == 0.0) fail(ErrorKind::kDomain, "R^2 is undefined when the labels have zero variance");
  RegressionReport rep;
  rep.mse = ss_res / n;
  rep.mae = abs_sum / n;
  rep.rmse = std::sqrt(rep.mse);
  rep.r2 = 1.0 - ss_res / ss_tot;
  return rep;
}

ScenarioEval evaluate_scenario(int scenario_id, std::vector<double> J, std::vector<double> J_hat) {
  ScenarioEval e;
  e.scenario_id = scenario_id;
  e.i_star = argmax(J);
  e.i_hat_star = argmax(J_hat);
  e.N_OL = n_ol(J, J_hat);
  e.N_sub = n_sub(J, J_hat);
  e.J_sub = j_sub(J, J_hat);
  try {
    e.tau = kendall_tau(J, J_hat);
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::kUndefinedTau && err.kind() != ErrorKind::kShape) throw;
    e.tau = std::numeric_limits<double>::quiet_NaN();
  }
  e.J = std::move(J);
  e.J_hat = std::move(J_hat);
  return e;
}

void write_scenario_evals_csv(const std::vector<ScenarioEval>& evals, const std::filesystem::path& path) {
  std::string out = "scenario_id,n_graphs,tau,N_OL,N_sub,J_sub\n";
  for (const auto& e : evals) {
    out += std::to_string(e.scenario_id) + ',' + std::to_string(e.J.size()) + ',' + format_double(e.tau) + ',' +
           std::to_string(e.N_OL) + ',' + std::to_string(e.N_sub) + ',' + format_double(e.J_sub) + '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace thermograph
