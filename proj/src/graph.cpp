#include "gatpos/graph.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gatpos/errors.hpp"
#include "json.hpp"

namespace gatpos {

bool Graph::has_edge(int u, int v) const {
  auto seg = neighbors(u);
  return std::binary_search(seg.begin(), seg.end(), v);
}

void Graph::check_invariants() const {
  if (static_cast<int>(neighbor_offsets.size()) != num_nodes + 1)
    throw ContractError("graph: offsets length mismatch");
  for (int v = 0; v < num_nodes; ++v) {
    auto seg = neighbors(v);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      if (seg[i] == v) throw ContractError("graph: self-loop stored");
      if (i > 0 && seg[i] <= seg[i - 1])
        throw ContractError("graph: segment not strictly increasing");
      if (!has_edge(seg[i], v)) throw ContractError("graph: asymmetric arc");
    }
  }
}

Graph symmetrize(int num_nodes,
                 std::span<const std::pair<int, int>> edge_pairs) {
  std::vector<std::set<int>> adj(num_nodes);
  for (auto [u, v] : edge_pairs) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
      throw RangeError("symmetrize: endpoint out of range: (" +
                       std::to_string(u) + "," + std::to_string(v) + ")");
    if (u == v) continue;
    adj[u].insert(v);
    adj[v].insert(u);
  }
  Graph g;
  g.num_nodes = num_nodes;
  g.neighbor_offsets.resize(num_nodes + 1, 0);
  for (int v = 0; v < num_nodes; ++v)
    g.neighbor_offsets[v + 1] =
        g.neighbor_offsets[v] + static_cast<int>(adj[v].size());
  g.neighbor_targets.reserve(g.neighbor_offsets.back());
  for (int v = 0; v < num_nodes; ++v)
    g.neighbor_targets.insert(g.neighbor_targets.end(), adj[v].begin(),
                              adj[v].end());
  return g;
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  return in;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir,
                     const std::string& name) {
  Dataset ds;
  ds.name = name;

  // labels first: they fix N
  {
    auto in = open_or_throw(dir / "labels.tsv");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        ds.labels.push_back(std::stoi(line));
      } catch (const std::exception&) {
        throw FormatError("labels.tsv:" + std::to_string(lineno) +
                          ": not an integer");
      }
    }
  }
  const int n = static_cast<int>(ds.labels.size());
  if (n == 0) throw FormatError("labels.tsv: empty");
  int max_label = 0;
  for (int y : ds.labels) {
    if (y < 0) throw FormatError("labels.tsv: negative class id");
    max_label = std::max(max_label, y);
  }
  ds.num_classes = max_label + 1;

  {
    auto in = open_or_throw(dir / "features.tsv");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ss(line);
      int count = 0;
      double x;
      while (ss >> x) {
        ds.features.push_back(x);
        ++count;
      }
      if (!ss.eof())
        throw FormatError("features.tsv:" + std::to_string(lineno) +
                          ": bad value");
      if (lineno == 1) {
        ds.num_features = count;
      } else if (count != ds.num_features) {
        throw FormatError("features.tsv:" + std::to_string(lineno) +
                          ": ragged row (" + std::to_string(count) + " vs " +
                          std::to_string(ds.num_features) + ")");
      }
    }
    if (static_cast<int>(ds.features.size()) != n * ds.num_features)
      throw FormatError("features.tsv: row count " +
                        std::to_string(ds.features.size() /
                                       std::max(ds.num_features, 1)) +
                        " does not match " + std::to_string(n) + " labels");
  }

  {
    auto in = open_or_throw(dir / "edges.tsv");
    std::vector<std::pair<int, int>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ss(line);
      int u, v;
      if (!(ss >> u >> v))
        throw FormatError("edges.tsv:" + std::to_string(lineno) +
                          ": expected two node ids");
      if (u < 0 || u >= n || v < 0 || v >= n)
        throw FormatError("edges.tsv:" + std::to_string(lineno) +
                          ": node id out of range");
      pairs.emplace_back(u, v);
    }
    ds.graph = symmetrize(n, pairs);
  }

  const auto meta_path = dir / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    auto in = open_or_throw(meta_path);
    nlohmann::json meta;
    try {
      in >> meta;
    } catch (const std::exception& e) {
      throw FormatError("meta.json: " + std::string(e.what()));
    }
    auto check = [&](const char* key, int actual) {
      if (meta.contains(key) && meta[key].get<int>() != actual)
        throw FormatError(std::string("meta.json: ") + key + "=" +
                          meta[key].dump() + " but package has " +
                          std::to_string(actual));
    };
    check("num_nodes", n);
    check("num_features", ds.num_features);
    check("num_classes", ds.num_classes);
  }
  return ds;
}

HomophilyResult homophily_beta(const Dataset& dataset) {
  const Graph& g = dataset.graph;
  double sum = 0.0;
  int counted = 0;
  for (int v = 0; v < g.num_nodes; ++v) {
    auto seg = g.neighbors(v);
    if (seg.empty()) continue;
    int same = 0;
    for (int u : seg)
      if (dataset.labels[u] == dataset.labels[v]) ++same;
    sum += double(same) / double(seg.size());
    ++counted;
  }
  if (counted == 0) return {0.0, true};
  return {sum / counted, false};
}

SplitAssignment generate_splits(const Dataset& dataset, std::uint64_t seed) {
  std::vector<std::vector<int>> by_class(dataset.num_classes);
  for (int v = 0; v < dataset.num_nodes(); ++v)
    by_class[dataset.labels[v]].push_back(v);
  for (int c = 0; c < dataset.num_classes; ++c)
    if (by_class[c].size() < 5)
      throw SplitError("class " + std::to_string(c) + " has only " +
                       std::to_string(by_class[c].size()) + " members");

  Rng rng(seed);
  SplitAssignment out;
  for (auto& members : by_class) {
    rng.shuffle(std::span<int>(members));
    const int m = static_cast<int>(members.size());
    int n_train = static_cast<int>(std::lround(0.6 * m));
    int n_val = static_cast<int>(std::lround(0.2 * m));
    if (n_train + n_val > m) n_val = m - n_train;
    for (int i = 0; i < m; ++i) {
      if (i < n_train)
        out.train_idx.push_back(members[i]);
      else if (i < n_train + n_val)
        out.val_idx.push_back(members[i]);
      else
        out.test_idx.push_back(members[i]);
    }
  }
  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.val_idx.begin(), out.val_idx.end());
  std::sort(out.test_idx.begin(), out.test_idx.end());
  return out;
}

SplitAssignment load_splits(const std::filesystem::path& path, int num_nodes) {
  auto in = open_or_throw(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + std::string(e.what()));
  }
  SplitAssignment s;
  auto read_part = [&](const char* key, std::vector<int>& out) {
    if (!j.contains(key))
      throw FormatError(path.string() + ": missing \"" + key + "\"");
    for (const auto& x : j[key]) {
      int v = x.get<int>();
      if (v < 0 || v >= num_nodes)
        throw RangeError(path.string() + ": node " + std::to_string(v) +
                         " out of range");
      out.push_back(v);
    }
  };
  read_part("train", s.train_idx);
  read_part("val", s.val_idx);
  read_part("test", s.test_idx);

  std::vector<char> seen(num_nodes, 0);
  for (const auto* part : {&s.train_idx, &s.val_idx, &s.test_idx}) {
    for (int v : *part) {
      if (seen[v])
        throw ValidationError(path.string() + ": node " + std::to_string(v) +
                              " appears in more than one part");
      seen[v] = 1;
    }
  }
  return s;
}

NegativeDistribution::NegativeDistribution(const Graph& graph, double exponent)
    : exponent_(exponent) {
  if (exponent < 0) throw ContractError("negative distribution: exponent < 0");
  cumulative_.resize(graph.num_nodes);
  double total = 0.0;
  for (int v = 0; v < graph.num_nodes; ++v) {
    const int d = graph.degree(v);
    total += d > 0 ? std::pow(double(d), exponent) : 0.0;
    cumulative_[v] = total;
  }
  if (total <= 0.0)
    throw ContractError("negative distribution: all weights zero");
}

int NegativeDistribution::sample(Rng& rng) const {
  const double x = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
  if (it == cumulative_.end()) --it;
  return static_cast<int>(it - cumulative_.begin());
}

void NegativeDistribution::sample_many(Rng& rng, std::span<int> out) const {
  for (auto& v : out) v = sample(rng);
}

double NegativeDistribution::probability(int v) const {
  const double prev = v == 0 ? 0.0 : cumulative_[v - 1];
  return (cumulative_[v] - prev) / cumulative_.back();
}

}  // namespace gatpos
