#pragma once

#include <string>
#include <vector>

#include "gatpos/graph.hpp"
#include "gatpos/layers.hpp"

namespace gatpos::verify {

// Small dense matrix for loop-based oracles, independent of the tape.
struct DenseMat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  DenseMat() = default;
  DenseMat(int r, int c) : rows(r), cols(c), v(std::size_t(r) * c, 0.0) {}
  double& at(int r, int c) { return v[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return v[std::size_t(r) * cols + c]; }
};

// Attention coefficients computed with explicit loops over N(v) ∪ {v};
// returns a dense N x N matrix, zero for non-arcs. p == nullptr drops the
// positional term.
DenseMat dense_attention(const Graph& g, const DenseMat& h, const DenseMat* p,
                         const nn::AttentionHeadParams& head,
                         double leaky_slope);

// Loop-based multi-head layer: hidden mode concatenates + ELU + residual,
// output mode averages heads (logits).
DenseMat dense_gat_layer(const Graph& g, const DenseMat& h, const DenseMat* p,
                         nn::GatLayer& layer);

// Loop-based symmetric-normalized propagation with self-loops.
DenseMat dense_gcn_layer(const Graph& g, const DenseMat& h,
                         const nn::GcnLayer& layer);

// Exact expectation of the negative-sampling loss (full enumeration over
// the negative distribution).
double exact_unsupervised_loss(const DenseMat& p, const Graph& g,
                               const NegativeDistribution& dist, int q);

// Erdos-Renyi style random graph; every node is given at least one edge.
Graph random_graph(int n, double edge_prob, Rng& rng);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Gradient checks, softmax/masking invariants, and oracle-equivalence
// tests, at the given finite-difference tolerance.
std::vector<CheckResult> run_verify_suite(double tol, std::uint64_t seed = 7);

}  // namespace gatpos::verify
