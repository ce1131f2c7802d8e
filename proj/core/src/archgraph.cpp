#include "thermograph/archgraph.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <numeric>

#include "thermograph/error.hpp"

namespace thermograph {

namespace {

using Mask = std::uint32_t;

std::string branch_key(const Branch& b) {
  std::string out = "[";
  for (std::size_t i = 0; i < b.cphx.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(b.cphx[i]);
  }
  if (!b.children.empty()) {
    std::vector<std::string> keys;
    keys.reserve(b.children.size());
    for (const auto& c : b.children) keys.push_back(branch_key(c));
    std::sort(keys.begin(), keys.end());
    out += '{';
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (i) out += ',';
      out += keys[i];
    }
    out += '}';
  }
  out += ']';
  return out;
}

void canonicalize_branches(std::vector<Branch>& branches) {
  for (auto& b : branches) canonicalize_branches(b.children);
  std::vector<std::pair<std::string, Branch>> keyed;
  keyed.reserve(branches.size());
  for (auto& b : branches) keyed.emplace_back(branch_key(b), std::move(b));
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < keyed.size(); ++i) branches[i] = std::move(keyed[i].second);
}

// Set partitions of `mask` into blocks; the block holding the lowest set bit
// is chosen first so each partition is produced once.
void for_each_partition(Mask mask, std::vector<Mask>& blocks,
                        const std::function<void(const std::vector<Mask>&)>& emit) {
  if (mask == 0) {
    emit(blocks);
    return;
  }
  const Mask low = mask & (~mask + 1);
  const Mask rest = mask ^ low;
  // Enumerate all subsets of `rest` to join `low`.
  for (Mask sub = rest;; sub = (sub - 1) & rest) {
    blocks.push_back(low | sub);
    for_each_partition(rest ^ sub, blocks, emit);
    blocks.pop_back();
    if (sub == 0) break;
  }
}

std::vector<int> members(Mask mask) {
  std::vector<int> out;
  for (int i = 0; mask; ++i, mask >>= 1) {
    if (mask & 1u) out.push_back(i);
  }
  return out;
}

// Every series ordering of the labels in `mask`.
std::vector<std::vector<int>> orderings(Mask mask) {
  std::vector<int> seq = members(mask);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(seq);
  } while (std::next_permutation(seq.begin(), seq.end()));
  return out;
}

// Recursively structured branches over the labels in `mask`: a series prefix
// followed, when labels remain, by a split into >= 2 sub-branches.
class BranchEnumerator {
 public:
  const std::vector<Branch>& branches(Mask mask) {
    if (auto it = memo_.find(mask); it != memo_.end()) return it->second;
    std::vector<Branch> out;
    for (Mask head = mask; head != 0; head = (head - 1) & mask) {
      const Mask rest = mask ^ head;
      for (auto& chain : orderings(head)) {
        if (rest == 0) {
          out.push_back(Branch{chain, {}});
          continue;
        }
        std::vector<Mask> blocks;
        for_each_partition(rest, blocks, [&](const std::vector<Mask>& part) {
          if (part.size() < 2) return;
          std::vector<std::vector<Branch>> options;
          for (Mask block : part) options.push_back(branches(block));
          std::vector<Branch> children(part.size());
          product(options, 0, children, chain, out);
        });
      }
    }
    return memo_.emplace(mask, std::move(out)).first->second;
  }

 private:
  static void product(const std::vector<std::vector<Branch>>& options, std::size_t k,
                      std::vector<Branch>& pick, const std::vector<int>& chain,
                      std::vector<Branch>& out) {
    if (k == options.size()) {
      out.push_back(Branch{chain, pick});
      return;
    }
    for (const auto& b : options[k]) {
      pick[k] = b;
      product(options, k + 1, pick, chain, out);
    }
  }

  std::map<Mask, std::vector<Branch>> memo_;
};

std::vector<Architecture> sorted_unique(std::vector<Architecture> archs) {
  std::vector<std::pair<std::string, Architecture>> keyed;
  keyed.reserve(archs.size());
  for (auto& a : archs) {
    a = canonicalize(std::move(a));
    keyed.emplace_back(canonical_key(a), std::move(a));
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  keyed.erase(std::unique(keyed.begin(), keyed.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; }),
              keyed.end());
  std::vector<Architecture> out;
  out.reserve(keyed.size());
  for (auto& [k, a] : keyed) out.push_back(std::move(a));
  return out;
}

void collect_labels(const Branch& b, std::vector<int>& seen, bool& has_split,
                    bool multi) {
  if (b.cphx.empty()) fail(ErrorKind::kParse, "branch with no CPHX");
  for (int c : b.cphx) seen.push_back(c);
  if (b.children.size() == 1) fail(ErrorKind::kParse, "split with a single sub-branch");
  if (!b.children.empty()) {
    if (!multi) fail(ErrorKind::kParse, "single-split architecture contains a split");
    has_split = true;
  }
  for (const auto& c : b.children) collect_labels(c, seen, has_split, multi);
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<Branch> branch_set() {
    expect('{');
    std::vector<Branch> out;
    out.push_back(branch());
    while (peek() == ',') {
      ++pos_;
      out.push_back(branch());
    }
    expect('}');
    return out;
  }

  bool done() const { return pos_ == text_.size(); }

 private:
  Branch branch() {
    expect('[');
    Branch b;
    b.cphx.push_back(integer());
    while (peek() == ',') {
      ++pos_;
      b.cphx.push_back(integer());
    }
    if (peek() == '{') b.children = branch_set();
    expect(']');
    return b;
  }

  int integer() {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc()) error("expected integer");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::kParse, "architecture record '" + std::string(text_) + "': " + what +
                                " at offset " + std::to_string(pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

char family_code(Family family) { return family == Family::kSingleSplit ? 'S' : 'M'; }

Family family_from_code(char code) {
  if (code == 'S') return Family::kSingleSplit;
  if (code == 'M') return Family::kMultiSplit;
  fail(ErrorKind::kParse, std::string("unknown family code '") + code + "'");
}

FlatGraph::FlatGraph(std::vector<NodeKind> vertices)
    : vertices_(std::move(vertices)), adjacency_(vertices_.size() * vertices_.size(), 0) {}

void FlatGraph::connect(std::size_t i, std::size_t j) {
  const std::size_t n = vertices_.size();
  adjacency_[i * n + j] = 1;
  adjacency_[j * n + i] = 1;
}

int FlatGraph::degree(std::size_t i) const {
  const std::size_t n = vertices_.size();
  return std::accumulate(adjacency_.begin() + static_cast<std::ptrdiff_t>(i * n),
                         adjacency_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n), 0);
}

std::vector<std::pair<int, int>> FlatGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = i + 1; j < size(); ++j) {
      if (adjacent(i, j)) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return out;
}

std::vector<std::vector<int>> FlatGraph::neighbor_lists() const {
  std::vector<std::vector<int>> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < size(); ++j) {
      if (adjacent(i, j)) out[i].push_back(static_cast<int>(j));
    }
  }
  return out;
}

std::vector<Architecture> enumerate_single_split(int n) {
  if (n < 1 || n > kMaxSingleSplitNodes) {
    fail(ErrorKind::kBounds, "single-split node count " + std::to_string(n) +
                                 " outside [1, " + std::to_string(kMaxSingleSplitNodes) + "]");
  }
  std::vector<Architecture> out;
  std::vector<Mask> blocks;
  for_each_partition((Mask{1} << n) - 1, blocks, [&](const std::vector<Mask>& part) {
    std::vector<std::vector<std::vector<int>>> options;
    for (Mask block : part) options.push_back(orderings(block));
    std::vector<std::size_t> idx(part.size(), 0);
    while (true) {
      Architecture a{Family::kSingleSplit, n, {}};
      for (std::size_t k = 0; k < part.size(); ++k) a.branches.push_back(Branch{options[k][idx[k]], {}});
      out.push_back(std::move(a));
      std::size_t k = 0;
      while (k < idx.size() && ++idx[k] == options[k].size()) idx[k++] = 0;
      if (k == idx.size()) break;
    }
  });
  return sorted_unique(std::move(out));
}

std::vector<Architecture> enumerate_multi_split(int n) {
  if (n < 2 || n > kMaxMultiSplitNodes) {
    fail(ErrorKind::kBounds, "multi-split node count " + std::to_string(n) +
                                 " outside [2, " + std::to_string(kMaxMultiSplitNodes) + "]");
  }
  BranchEnumerator gen;
  std::vector<Architecture> out;
  for (const auto& root : gen.branches((Mask{1} << n) - 1)) {
    out.push_back(Architecture{Family::kMultiSplit, n, {root}});
  }
  return sorted_unique(std::move(out));
}

void validate(const Architecture& arch) {
  if (arch.n_cphx < 1) fail(ErrorKind::kParse, "architecture needs at least one CPHX");
  if (arch.branches.empty()) fail(ErrorKind::kParse, "architecture has no branches");
  const bool multi = arch.family == Family::kMultiSplit;
  if (multi && arch.branches.size() != 1) {
    fail(ErrorKind::kParse, "multi-split architecture must have a single root branch");
  }
  std::vector<int> seen;
  bool has_split = false;
  for (const auto& b : arch.branches) collect_labels(b, seen, has_split, multi);
  std::sort(seen.begin(), seen.end());
  std::vector<int> expected(static_cast<std::size_t>(arch.n_cphx));
  std::iota(expected.begin(), expected.end(), 0);
  if (seen != expected) {
    fail(ErrorKind::kParse, "CPHX load indices are not a permutation of 0.." +
                                std::to_string(arch.n_cphx - 1));
  }
}

Architecture canonicalize(Architecture arch) {
  canonicalize_branches(arch.branches);
  return arch;
}

std::string canonical_key(const Architecture& arch) {
  std::string out;
  out += family_code(arch.family);
  out += ';';
  out += std::to_string(arch.n_cphx);
  out += ";{";
  std::vector<std::string> keys;
  for (const auto& b : arch.branches) keys.push_back(branch_key(b));
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i) out += ',';
    out += keys[i];
  }
  out += '}';
  return out;
}

Architecture parse_architecture(std::string_view record) {
  const auto first = record.find(';');
  const auto second = first == std::string_view::npos ? first : record.find(';', first + 1);
  if (second == std::string_view::npos || first != 1) {
    fail(ErrorKind::kParse, "architecture record '" + std::string(record) +
                                "' is not of the form F;n;{...}");
  }
  Architecture arch;
  arch.family = family_from_code(record[0]);
  const auto count = record.substr(first + 1, second - first - 1);
  auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), arch.n_cphx);
  if (ec != std::errc() || ptr != count.data() + count.size()) {
    fail(ErrorKind::kParse, "bad node count in '" + std::string(record) + "'");
  }
  Parser parser(record.substr(second + 1));
  arch.branches = parser.branch_set();
  if (!parser.done()) fail(ErrorKind::kParse, "trailing text in '" + std::string(record) + "'");
  validate(arch);
  return canonicalize(std::move(arch));
}

FlatGraph to_flat_graph(const Architecture& arch) {
  int n_junctions = arch.branches.size() >= 2 ? 1 : 0;
  std::function<void(const Branch&)> count = [&](const Branch& b) {
    if (!b.children.empty()) ++n_junctions;
    for (const auto& c : b.children) count(c);
  };
  for (const auto& b : arch.branches) count(b);

  std::vector<NodeKind> vertices;
  vertices.push_back({NodeType::kTank, -1});
  for (int j = 0; j < n_junctions; ++j) vertices.push_back({NodeType::kJunction, -1});
  for (int i = 0; i < arch.n_cphx; ++i) vertices.push_back({NodeType::kCphx, i});
  FlatGraph g(std::move(vertices));

  const auto cphx_vertex = [&](int load) { return static_cast<std::size_t>(1 + n_junctions + load); };
  std::size_t next_junction = 1;
  std::function<void(std::size_t, const Branch&)> attach = [&](std::size_t from, const Branch& b) {
    std::size_t prev = from;
    for (int c : b.cphx) {
      g.connect(prev, cphx_vertex(c));
      prev = cphx_vertex(c);
    }
    if (b.children.empty()) return;
    const std::size_t j = next_junction++;
    g.connect(prev, j);
    for (const auto& child : b.children) attach(j, child);
  };

  if (arch.branches.size() == 1) {
    attach(0, arch.branches.front());
  } else {
    const std::size_t j = next_junction++;
    g.connect(0, j);
    for (const auto& b : arch.branches) attach(j, b);
  }
  return g;
}

FeatureGraph node_features(const Architecture& arch, const Scenario& scenario) {
  if (scenario.loads_kw.size() != static_cast<std::size_t>(arch.n_cphx)) {
    fail(ErrorKind::kShape, "scenario " + std::to_string(scenario.id) + " has " +
                                std::to_string(scenario.loads_kw.size()) +
                                " loads for an architecture with " + std::to_string(arch.n_cphx) +
                                " CPHXs");
  }
  FeatureGraph fg{to_flat_graph(arch), {}};
  const double peak = *std::max_element(scenario.loads_kw.begin(), scenario.loads_kw.end());

  std::vector<bool> feeds_split(static_cast<std::size_t>(arch.n_cphx), false);
  std::function<void(const Branch&)> mark = [&](const Branch& b) {
    if (!b.children.empty()) feeds_split[static_cast<std::size_t>(b.cphx.back())] = true;
    for (const auto& c : b.children) mark(c);
  };
  for (const auto& b : arch.branches) mark(b);

  fg.features.reserve(fg.flat.size());
  for (const auto& v : fg.flat.vertices()) {
    switch (v.type) {
      case NodeType::kTank:
        fg.features.push_back({0.0, 0.0, 0.0, 1.0});
        break;
      case NodeType::kJunction:
        fg.features.push_back({1.0, 0.0, 0.0, 0.0});
        break;
      case NodeType::kCphx: {
        const auto i = static_cast<std::size_t>(v.load_index);
        const double d = scenario.loads_kw[i];
        fg.features.push_back({feeds_split[i] ? 1.0 : 0.0, peak > 0.0 ? d / peak : 0.0, d, 0.0});
        break;
      }
    }
  }
  return fg;
}

}  // namespace thermograph
