#include "gatpos/objectives.hpp"

#include <cmath>

#include "gatpos/errors.hpp"

namespace gatpos::obj {

Var supervised_loss(Tape& t, Var logits, std::span<const int> labels,
                    std::span<const int> train_idx) {
  if (train_idx.empty()) throw ContractError("supervised_loss: empty train set");
  return t.cross_entropy_sum(logits, labels, train_idx);
}

namespace {

void arc_lists(const Graph& g, std::vector<int>& src, std::vector<int>& dst) {
  src.reserve(g.num_arcs());
  dst.reserve(g.num_arcs());
  for (int v = 0; v < g.num_nodes; ++v)
    for (int u : g.neighbors(v)) {
      src.push_back(v);
      dst.push_back(u);
    }
}

Var loss_with_negatives(Tape& t, Var p, const Graph& graph,
                        std::span<const int> negatives, int num_negatives) {
  if (graph.num_arcs() == 0)
    throw ContractError("unsupervised_loss: graph has no edges");
  if (num_negatives < 1)
    throw ContractError("unsupervised_loss: Q must be >= 1");
  std::vector<int> src, dst;
  arc_lists(graph, src, dst);
  if (static_cast<int>(negatives.size()) !=
      graph.num_arcs() * num_negatives)
    throw ContractError("unsupervised_loss: negative draw count mismatch");
  std::vector<int> neg_src;
  neg_src.reserve(negatives.size());
  for (int i = 0; i < graph.num_arcs(); ++i)
    for (int q = 0; q < num_negatives; ++q) neg_src.push_back(src[i]);
  return t.logistic_dot_loss(
      p, std::move(src), std::move(dst), std::move(neg_src),
      std::vector<int>(negatives.begin(), negatives.end()));
}

}  // namespace

Var unsupervised_loss(Tape& t, Var p, const Graph& graph,
                      const NegativeDistribution& dist, int num_negatives,
                      Rng& rng, std::vector<int>* drawn) {
  if (graph.num_arcs() == 0)
    throw ContractError("unsupervised_loss: graph has no edges");
  std::vector<int> negatives(std::size_t(graph.num_arcs()) * num_negatives);
  dist.sample_many(rng, negatives);
  if (drawn) *drawn = negatives;
  return loss_with_negatives(t, p, graph, negatives, num_negatives);
}

Var unsupervised_loss_fixed(Tape& t, Var p, const Graph& graph,
                            std::span<const int> negatives,
                            int num_negatives) {
  return loss_with_negatives(t, p, graph, negatives, num_negatives);
}

Var l2_penalty(Tape& t, std::span<Param* const> weights) {
  Var total;
  for (Param* w : weights) {
    Var term = t.half_sum_sq(t.leaf(*w));
    total = total.valid() ? t.add(total, term) : term;
  }
  if (!total.valid()) return t.constant({0.0}, 1, 1);
  return total;
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (p.grad.size() != p.value.size())
      throw ContractError("adam: gradient shape mismatch for " + p.name);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace gatpos::obj
