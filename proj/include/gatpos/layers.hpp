#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gatpos/graph.hpp"
#include "gatpos/tape.hpp"

namespace gatpos::nn {

using ad::Param;
using ad::SegmentIndex;
using ad::Tape;
using ad::Var;

// Arc enumeration (v,u) with u in N(v) ∪ {v}, grouped per center node v.
// Attention coefficients for non-arcs are never computed.
struct ArcIndex {
  std::vector<int> src, dst;
  SegmentIndex seg;  // one segment per node

  static ArcIndex build(const Graph& g);
};

// Per-head weights of the positional-enhanced attention score. The 2F'
// attention vector is stored as its two halves (center / neighbor).
struct AttentionHeadParams {
  Param W;      // in_features x out_features
  Param U;      // positional_width x out_features; empty for plain GAT
  Param a_src;  // out_features x 1
  Param a_dst;  // out_features x 1

  bool positional() const { return U.rows > 0; }
};

enum class LayerMode { hidden, output };

struct GatLayerConfig {
  int in_features = 0;
  int out_features_per_head = 0;
  int num_heads = 1;
  LayerMode mode = LayerMode::hidden;
  bool positional = false;
  bool residual = false;
  double dropout_p = 0.5;
  double leaky_slope = 0.2;

  int out_width() const {
    return mode == LayerMode::hidden ? num_heads * out_features_per_head
                                     : out_features_per_head;
  }
};

// Softmax-normalized attention coefficients for one head over all arcs.
// p may be invalid (plain GAT): the positional term is omitted.
Var attention_scores(Tape& t, Var h, Var p, AttentionHeadParams& params,
                     const ArcIndex& arcs, double leaky_slope);

struct GatLayer {
  GatLayerConfig cfg;
  std::vector<AttentionHeadParams> heads;
  Param residual_proj;  // in_features x out_width, only when widths differ

  // Hidden mode: ELU(concat of head aggregations) + residual.
  // Output mode: head average, identity activation (logits), no residual.
  Var forward(Tape& t, Var h, Var p, const ArcIndex& arcs, Rng& rng,
              bool training);
  std::vector<Param*> params();
};

// Transductive positional embedding model: learned table p0 chained
// through ReLU fully-connected layers.
struct PositionalModel {
  Param p0;                          // num_nodes x width
  std::vector<Param> layer_weights;  // width x width each

  void init(Rng& rng);
  Var forward(Tape& t, bool requires_grad = true);
  std::vector<Param*> params();
};

struct GcnLayer {
  Param W;  // in_features x out_features
  bool output_layer = false;
  double dropout_p = 0.5;
  // symmetric normalization 1/sqrt((d_v+1)(d_u+1)) per arc, self-loops
  // included
  std::vector<double> arc_norm;

  void init(const Graph& g, const ArcIndex& arcs, Rng& rng);
  Var forward(Tape& t, Var h, const ArcIndex& arcs, Rng& rng, bool training);
};

// h + p * proj; downstream layers are plain GAT.
Var transformer_inject(Tape& t, Var h, Var p, Param& proj);

enum class ModelKind { gcn, gat, gat_pos, gat_pos_transformer };

ModelKind parse_model_kind(const std::string& s);
std::string model_kind_name(ModelKind k);
bool is_positional_kind(ModelKind k);

struct Hyperparams {
  double learning_rate = 5e-3;
  double weight_decay = 5e-4;
  double dropout_p = 0.5;
  double leaky_slope = 0.2;
  int positional_width = 64;
  int positional_depth = 2;
  double lambda_unsup = 1.0;
  int negative_samples = 1;  // Q
  double negative_exponent = 0.75;
  int max_epochs = 1000;
  int patience = 100;
  int hidden_units_per_head = 0;  // 0 = per-dataset default
  int num_heads = 0;              // 0 = per-dataset default
  int gcn_hidden = 64;
  bool normalize_losses = false;
};

// Fills the 0-valued attention width/head fields with the per-dataset
// defaults (8 or 32 units, 8 or 16 heads depending on the dataset).
void resolve_dataset_defaults(Hyperparams& hp, const std::string& dataset_name);

struct ForwardResult {
  Var logits;
  Var positional;  // invalid when the model has no positional component
};

struct Model {
  ModelKind kind = ModelKind::gat;
  ArcIndex arcs;
  std::vector<GatLayer> gat_layers;
  std::vector<GcnLayer> gcn_layers;
  std::optional<PositionalModel> positional;
  Param transformer_proj;  // positional_width x num_features

  ForwardResult forward(Tape& t, const Dataset& ds, Rng& rng, bool training,
                        bool positional_requires_grad = true);

  std::vector<Param*> all_params();
  std::vector<Param*> weight_params();      // L2 set: everything except p0
  std::vector<Param*> positional_params();  // p0 + embedding layer weights
  std::vector<Param*> main_params();        // all minus positional
};

Model build_model(ModelKind kind, const Dataset& ds, const Hyperparams& hp,
                  Rng& rng);

}  // namespace gatpos::nn
