#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gatpos/rng.hpp"

namespace gatpos {

// Undirected unweighted graph in compressed neighbor-list form.
// Stored arcs are directed (both directions present), deduplicated,
// self-loop free, and sorted within each node's segment.
struct Graph {
  int num_nodes = 0;
  std::vector<int> neighbor_offsets;  // length num_nodes + 1
  std::vector<int> neighbor_targets;

  std::span<const int> neighbors(int v) const {
    return {neighbor_targets.data() + neighbor_offsets[v],
            neighbor_targets.data() + neighbor_offsets[v + 1]};
  }
  int degree(int v) const {
    return neighbor_offsets[v + 1] - neighbor_offsets[v];
  }
  int num_arcs() const { return static_cast<int>(neighbor_targets.size()); }
  bool has_edge(int u, int v) const;

  // asserts symmetry, sortedness, no self-loops, no duplicates
  void check_invariants() const;
};

// Builds a Graph from raw edge pairs: symmetrizes, drops self-loops,
// deduplicates. Throws RangeError on endpoints >= num_nodes.
Graph symmetrize(int num_nodes,
                 std::span<const std::pair<int, int>> edge_pairs);

struct Dataset {
  Graph graph;
  std::vector<double> features;  // row-major N x num_features
  int num_features = 0;
  std::vector<int> labels;  // length N, each in [0, num_classes)
  int num_classes = 0;
  std::string name;

  int num_nodes() const { return graph.num_nodes; }
  std::span<const double> feature_row(int v) const {
    return {features.data() + std::size_t(v) * num_features,
            std::size_t(num_features)};
  }
};

// Reads a dataset package directory: edges.tsv, features.tsv, labels.tsv,
// optional meta.json (cross-checked when present).
Dataset load_dataset(const std::filesystem::path& dir, const std::string& name);

struct HomophilyResult {
  double beta = 0.0;
  bool all_isolated = false;
};

// Mean over non-isolated nodes of the fraction of same-label neighbors.
HomophilyResult homophily_beta(const Dataset& dataset);

struct SplitAssignment {
  std::vector<int> train_idx, val_idx, test_idx;
};

// Per-class 60/20/20 random partition, deterministic for a fixed seed.
// Throws SplitError when any class has fewer than 5 members.
SplitAssignment generate_splits(const Dataset& dataset, std::uint64_t seed);

// Reads {"train": [...], "val": [...], "test": [...]}; enforces range and
// disjointness.
SplitAssignment load_splits(const std::filesystem::path& path, int num_nodes);

// Global unigram distribution over nodes with weight degree^exponent,
// sampled by inverse CDF over a cumulative table.
class NegativeDistribution {
 public:
  NegativeDistribution(const Graph& graph, double exponent);

  int sample(Rng& rng) const;
  void sample_many(Rng& rng, std::span<int> out) const;
  double probability(int v) const;
  int num_nodes() const { return static_cast<int>(cumulative_.size()); }
  double exponent() const { return exponent_; }

 private:
  std::vector<double> cumulative_;
  double exponent_;
};

}  // namespace gatpos
