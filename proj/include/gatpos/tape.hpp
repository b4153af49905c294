#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gatpos/rng.hpp"

namespace gatpos::ad {

// Named trainable buffer. Gradients accumulate here after backward.
struct Param {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, int r, int c)
      : name(std::move(n)),
        rows(r),
        cols(c),
        value(std::size_t(r) * c, 0.0),
        grad(std::size_t(r) * c, 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  void glorot_init(Rng& rng);
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Contiguous grouping of an edge-indexed vector, one segment per node's
// neighborhood (softmax domain of the attention coefficients).
struct SegmentIndex {
  std::vector<int> offsets;          // S+1, nondecreasing
  std::vector<int> element_segment;  // length = offsets.back()

  static SegmentIndex from_offsets(std::vector<int> offsets);
  int num_segments() const { return static_cast<int>(offsets.size()) - 1; }
  int num_elements() const { return offsets.back(); }
};

// Recorded forward pass in topological order; reverse-mode gradients via
// per-op vector-Jacobian closures.
class Tape {
 public:
  // Leaves
  Var leaf(Param& p, bool requires_grad = true);
  Var constant(std::vector<double> data, int rows, int cols);
  Var constant(std::span<const double> data, int rows, int cols);

  // Ops
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);             // same shape
  Var scale(Var a, double c);
  Var leaky_relu(Var a, double slope);
  Var relu(Var a);
  Var elu(Var a);  // alpha = 1
  Var sigmoid(Var a);
  Var log(Var a);  // strictly positive inputs
  Var softplus(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var gather_rows(Var a, std::vector<int> idx);
  Var rowwise_dot(Var a, Var b);  // [m x f],[m x f] -> [m x 1]
  Var segment_softmax(Var scores, const SegmentIndex& seg);
  Var segment_weighted_sum(Var values, Var weights, const SegmentIndex& seg);
  // out[s] = sum_{i in seg s} weights[i] * values[dst[i]]; fused form of
  // gather_rows + segment_weighted_sum that never materializes the E x F
  // gathered matrix
  Var segment_weighted_gather_sum(Var values, Var weights,
                                  std::vector<int> dst,
                                  const SegmentIndex& seg);
  // Skip-gram style pairwise logistic loss on rows of p:
  //   sum softplus(-<p_s, p_d>) over positive pairs
  // + sum softplus(+<p_s, p_d>) over negative pairs
  Var logistic_dot_loss(Var p, std::vector<int> pos_src,
                        std::vector<int> pos_dst, std::vector<int> neg_src,
                        std::vector<int> neg_dst);
  Var dropout(Var a, double p, Rng& rng, bool training);
  Var sum_all(Var a);      // -> [1 x 1]
  Var half_sum_sq(Var a);  // 0.5 * sum(x^2) -> [1 x 1]
  // sum over idx of -log softmax(logits_row)[label], log-sum-exp stable
  Var cross_entropy_sum(Var logits, std::span<const int> labels,
                        std::span<const int> idx);

  // Accessors
  int rows(Var v) const { return nodes_[v.id].rows; }
  int cols(Var v) const { return nodes_[v.id].cols; }
  std::span<const double> value(Var v) const { return nodes_[v.id].data; }
  std::span<double> mutable_value(Var v) { return nodes_[v.id].data; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Reverse pass from a scalar loss; then adds leaf gradients into their
  // tracked Params.
  void backward(Var loss);
  std::span<const double> grad(Var v) const { return nodes_[v.id].grad; }

  // Test hook: flips the sign of leaky_relu's backward (mutation check).
  static bool& leaky_relu_fault_hook();

 private:
  struct Node {
    int rows = 0, cols = 0;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    Param* param = nullptr;  // leaves only
    std::function<void(Tape&, int self)> backward;
  };

  Var push(int rows, int cols, bool requires_grad);
  Node& node(Var v) { return nodes_[v.id]; }
  const Node& node(Var v) const { return nodes_[v.id]; }
  void check_same_shape(Var a, Var b, const char* op) const;

  std::deque<Node> nodes_;
};

}  // namespace gatpos::ad
