#pragma once

// Cooling-architecture enumeration and the graph encodings fed to the GNN.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace thermograph {

inline constexpr int kMaxSingleSplitNodes = 8;
inline constexpr int kMaxMultiSplitNodes = 7;

enum class Family { kSingleSplit, kMultiSplit };

char family_code(Family family);
Family family_from_code(char code);

// A run of CPHXs in series. When `children` is non-empty (always >= 2
// entries) the flow leaving the last CPHX splits into those sub-branches.
struct Branch {
  std::vector<int> cphx;
  std::vector<Branch> children;

  bool operator==(const Branch&) const = default;
};

// Branches hanging off the tank. Single-split: any number of chains.
// Multi-split: exactly one root branch, recursive splits allowed.
struct Architecture {
  Family family = Family::kSingleSplit;
  int n_cphx = 0;
  std::vector<Branch> branches;

  bool operator==(const Architecture&) const = default;
};

enum class NodeType : std::uint8_t { kTank, kJunction, kCphx };

struct NodeKind {
  NodeType type = NodeType::kTank;
  int load_index = -1;  // only meaningful for kCphx

  bool operator==(const NodeKind&) const = default;
};

class FlatGraph {
 public:
  FlatGraph() = default;
  explicit FlatGraph(std::vector<NodeKind> vertices);

  std::size_t size() const { return vertices_.size(); }
  const std::vector<NodeKind>& vertices() const { return vertices_; }
  bool adjacent(std::size_t i, std::size_t j) const {
    return adjacency_[i * vertices_.size() + j] != 0;
  }
  void connect(std::size_t i, std::size_t j);
  int degree(std::size_t i) const;
  // Upper-triangle edge list (i < j), row-major order.
  std::vector<std::pair<int, int>> edges() const;
  std::vector<std::vector<int>> neighbor_lists() const;

  bool operator==(const FlatGraph&) const = default;

 private:
  std::vector<NodeKind> vertices_;
  std::vector<std::uint8_t> adjacency_;
};

struct Scenario {
  int id = 0;
  std::vector<double> loads_kw;

  bool operator==(const Scenario&) const = default;
};

inline constexpr double kMinLoadKw = 4.0;
inline constexpr double kMaxLoadKw = 16.0;
inline constexpr int kNodeFeatureDim = 4;

// Feature columns: has_junction, relative_load, absolute_load (kW), is_tank.
struct FeatureGraph {
  FlatGraph flat;
  std::vector<std::array<double, kNodeFeatureDim>> features;
};

// Throws ErrorKind::kBounds when n is outside [1, 8].
std::vector<Architecture> enumerate_single_split(int n);
// Throws ErrorKind::kBounds when n is outside [2, 7].
std::vector<Architecture> enumerate_multi_split(int n);

// Throws ErrorKind::kParse describing the first violated invariant.
void validate(const Architecture& arch);

// Sorts every unordered branch collection so that equal architectures compare
// equal with operator==.
Architecture canonicalize(Architecture arch);

// One-line record, e.g. "S;3;{[0,1],[2]}" or "M;3;{[0{[1],[2]}]}".
std::string canonical_key(const Architecture& arch);
Architecture parse_architecture(std::string_view record);

FlatGraph to_flat_graph(const Architecture& arch);
FeatureGraph node_features(const Architecture& arch, const Scenario& scenario);

}  // namespace thermograph
