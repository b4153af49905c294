#pragma once

#include <span>
#include <vector>

#include "gatpos/graph.hpp"
#include "gatpos/tape.hpp"

namespace gatpos::obj {

using ad::Param;
using ad::Tape;
using ad::Var;

// Sum (not mean) of cross-entropy over the labeled set.
Var supervised_loss(Tape& t, Var logits, std::span<const int> labels,
                    std::span<const int> train_idx);

// Skip-gram negative-sampling loss over all ordered arcs of the graph.
// Negatives: per arc, `num_negatives` fresh draws from dist. Positions of
// the draws are returned through *drawn when non-null (for fixed-sample
// re-evaluation in gradient checks).
Var unsupervised_loss(Tape& t, Var p, const Graph& graph,
                      const NegativeDistribution& dist, int num_negatives,
                      Rng& rng, std::vector<int>* drawn = nullptr);

// Same loss with pre-drawn negatives (length = num_arcs * num_negatives).
Var unsupervised_loss_fixed(Tape& t, Var p, const Graph& graph,
                            std::span<const int> negatives, int num_negatives);

// 0.5 * sum of squared Frobenius norms. Creates fresh leaves on the tape
// so gradients accumulate into the Params alongside the model's own use.
Var l2_penalty(Tape& t, std::span<Param* const> weights);

struct LossReport {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double l2_penalty = 0.0;
  double total = 0.0;
};

struct AdamConfig {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);

  // Bias-corrected update from the Params' accumulated gradients.
  void step();
  int step_count() const { return step_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int step_ = 0;
};

}  // namespace gatpos::obj
