#include "gatpos/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gatpos/errors.hpp"

namespace gatpos::nn {

ArcIndex ArcIndex::build(const Graph& g) {
  ArcIndex arcs;
  std::vector<int> offsets(g.num_nodes + 1, 0);
  for (int v = 0; v < g.num_nodes; ++v)
    offsets[v + 1] = offsets[v] + g.degree(v) + 1;  // +1 for the self-arc
  arcs.src.reserve(offsets.back());
  arcs.dst.reserve(offsets.back());
  for (int v = 0; v < g.num_nodes; ++v) {
    bool self_emitted = false;
    for (int u : g.neighbors(v)) {
      if (!self_emitted && u > v) {
        arcs.src.push_back(v);
        arcs.dst.push_back(v);
        self_emitted = true;
      }
      arcs.src.push_back(v);
      arcs.dst.push_back(u);
    }
    if (!self_emitted) {
      arcs.src.push_back(v);
      arcs.dst.push_back(v);
    }
  }
  arcs.seg = SegmentIndex::from_offsets(std::move(offsets));
  return arcs;
}

Var attention_scores(Tape& t, Var h, Var p, AttentionHeadParams& params,
                     const ArcIndex& arcs, double leaky_slope) {
  Var w_leaf = t.leaf(params.W);
  Var s = t.matmul(h, w_leaf);
  if (params.positional()) {
    if (!p.valid())
      throw ShapeError("attention_scores: positional head without embeddings");
    s = t.add(s, t.matmul(p, t.leaf(params.U)));
  }
  Var s_src = t.matmul(s, t.leaf(params.a_src));  // N x 1
  Var s_dst = t.matmul(s, t.leaf(params.a_dst));  // N x 1
  Var e = t.add(t.gather_rows(s_src, arcs.src), t.gather_rows(s_dst, arcs.dst));
  return t.segment_softmax(t.leaky_relu(e, leaky_slope), arcs.seg);
}

Var GatLayer::forward(Tape& t, Var h, Var p, const ArcIndex& arcs, Rng& rng,
                      bool training) {
  if (t.cols(h) != cfg.in_features)
    throw ShapeError("gat layer: expected " + std::to_string(cfg.in_features) +
                     " input features, got " + std::to_string(t.cols(h)));
  Var h_in = t.dropout(h, cfg.dropout_p, rng, training);
  std::vector<Var> head_outs;
  head_outs.reserve(heads.size());
  for (auto& head : heads) {
    Var g = t.matmul(h_in, t.leaf(head.W));
    Var s = g;
    if (head.positional()) s = t.add(g, t.matmul(p, t.leaf(head.U)));
    Var e_src = t.gather_rows(t.matmul(s, t.leaf(head.a_src)), arcs.src);
    Var e_dst = t.gather_rows(t.matmul(s, t.leaf(head.a_dst)), arcs.dst);
    Var alpha = t.segment_softmax(
        t.leaky_relu(t.add(e_src, e_dst), cfg.leaky_slope), arcs.seg);
    alpha = t.dropout(alpha, cfg.dropout_p, rng, training);
    // aggregation mixes the transformed node features only; the positional
    // term feeds the scores, never the values
    head_outs.push_back(
        t.segment_weighted_gather_sum(g, alpha, arcs.dst, arcs.seg));
  }

  if (cfg.mode == LayerMode::hidden) {
    Var out = t.elu(t.concat_cols(head_outs));
    if (cfg.residual) {
      Var res = residual_proj.rows > 0
                    ? t.matmul(h, t.leaf(residual_proj))
                    : h;
      out = t.add(out, res);
    }
    return out;
  }
  Var sum = head_outs[0];
  for (std::size_t k = 1; k < head_outs.size(); ++k)
    sum = t.add(sum, head_outs[k]);
  return t.scale(sum, 1.0 / double(head_outs.size()));  // logits
}

std::vector<Param*> GatLayer::params() {
  std::vector<Param*> out;
  for (auto& h : heads) {
    out.push_back(&h.W);
    if (h.positional()) out.push_back(&h.U);
    out.push_back(&h.a_src);
    out.push_back(&h.a_dst);
  }
  if (residual_proj.rows > 0) out.push_back(&residual_proj);
  return out;
}

void PositionalModel::init(Rng& rng) {
  p0.glorot_init(rng);
  for (auto& w : layer_weights) w.glorot_init(rng);
}

Var PositionalModel::forward(Tape& t, bool requires_grad) {
  Var p = t.leaf(p0, requires_grad);
  for (auto& w : layer_weights)
    p = t.relu(t.matmul(p, t.leaf(w, requires_grad)));
  return p;
}

std::vector<Param*> PositionalModel::params() {
  std::vector<Param*> out{&p0};
  for (auto& w : layer_weights) out.push_back(&w);
  return out;
}

void GcnLayer::init(const Graph& g, const ArcIndex& arcs, Rng& rng) {
  W.glorot_init(rng);
  arc_norm.resize(arcs.src.size());
  for (std::size_t i = 0; i < arcs.src.size(); ++i) {
    const double dv = g.degree(arcs.src[i]) + 1;
    const double du = g.degree(arcs.dst[i]) + 1;
    arc_norm[i] = 1.0 / std::sqrt(dv * du);
  }
}

Var GcnLayer::forward(Tape& t, Var h, const ArcIndex& arcs, Rng& rng,
                      bool training) {
  Var h_in = t.dropout(h, dropout_p, rng, training);
  Var z = t.matmul(h_in, t.leaf(W));
  Var norm = t.constant(arc_norm, static_cast<int>(arc_norm.size()), 1);
  Var agg = t.segment_weighted_gather_sum(z, norm, arcs.dst, arcs.seg);
  return output_layer ? agg : t.relu(agg);
}

Var transformer_inject(Tape& t, Var h, Var p, Param& proj) {
  if (proj.rows != t.cols(p) || proj.cols != t.cols(h))
    throw ShapeError("transformer_inject: projection shape mismatch");
  return t.add(h, t.matmul(p, t.leaf(proj)));
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "gcn") return ModelKind::gcn;
  if (s == "gat") return ModelKind::gat;
  if (s == "gat-pos") return ModelKind::gat_pos;
  if (s == "gat-pos-transformer") return ModelKind::gat_pos_transformer;
  throw ConfigError("unknown model kind: " + s);
}

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
    case ModelKind::gat_pos: return "gat-pos";
    case ModelKind::gat_pos_transformer: return "gat-pos-transformer";
  }
  return "?";
}

bool is_positional_kind(ModelKind k) {
  return k == ModelKind::gat_pos || k == ModelKind::gat_pos_transformer;
}

void resolve_dataset_defaults(Hyperparams& hp,
                              const std::string& dataset_name) {
  std::string n = dataset_name;
  std::transform(n.begin(), n.end(), n.begin(), ::tolower);
  if (hp.hidden_units_per_head == 0)
    hp.hidden_units_per_head =
        (n == "chameleon" || n == "actor" || n == "film") ? 32 : 8;
  if (hp.num_heads == 0)
    hp.num_heads = (n == "cora" || n == "citeseer" || n == "pubmed") ? 8 : 16;
}

ForwardResult Model::forward(Tape& t, const Dataset& ds, Rng& rng,
                             bool training, bool positional_requires_grad) {
  ForwardResult out;
  Var h = t.constant(std::span<const double>(ds.features), ds.num_nodes(),
                     ds.num_features);
  if (positional)
    out.positional = positional->forward(t, positional_requires_grad);

  if (kind == ModelKind::gcn) {
    for (auto& layer : gcn_layers) h = layer.forward(t, h, arcs, rng, training);
    out.logits = h;
    return out;
  }

  Var p_for_attention;  // stays invalid for gat / transformer kinds
  if (kind == ModelKind::gat_pos) p_for_attention = out.positional;
  if (kind == ModelKind::gat_pos_transformer)
    h = transformer_inject(t, h, out.positional, transformer_proj);

  for (auto& layer : gat_layers)
    h = layer.forward(t, h, p_for_attention, arcs, rng, training);
  out.logits = h;
  return out;
}

std::vector<Param*> Model::all_params() {
  std::vector<Param*> out = main_params();
  if (positional)
    for (auto* p : positional->params()) out.push_back(p);
  return out;
}

std::vector<Param*> Model::main_params() {
  std::vector<Param*> out;
  for (auto& l : gat_layers)
    for (auto* p : l.params()) out.push_back(p);
  for (auto& l : gcn_layers) out.push_back(&l.W);
  if (transformer_proj.rows > 0) out.push_back(&transformer_proj);
  return out;
}

std::vector<Param*> Model::positional_params() {
  return positional ? positional->params() : std::vector<Param*>{};
}

std::vector<Param*> Model::weight_params() {
  // everything except the embedding table p0
  std::vector<Param*> out = main_params();
  if (positional)
    for (auto& w : positional->layer_weights) out.push_back(&w);
  return out;
}

Model build_model(ModelKind kind, const Dataset& ds, const Hyperparams& hp_in,
                  Rng& rng) {
  Hyperparams hp = hp_in;
  resolve_dataset_defaults(hp, ds.name);

  Model m;
  m.kind = kind;
  m.arcs = ArcIndex::build(ds.graph);

  if (is_positional_kind(kind)) {
    PositionalModel pos;
    pos.p0 = Param("pos.p0", ds.num_nodes(), hp.positional_width);
    for (int t = 0; t < hp.positional_depth; ++t)
      pos.layer_weights.emplace_back("pos.W" + std::to_string(t + 1),
                                     hp.positional_width, hp.positional_width);
    pos.init(rng);
    m.positional = std::move(pos);
  }

  if (kind == ModelKind::gcn) {
    GcnLayer l1, l2;
    l1.W = Param("gcn.1.W", ds.num_features, hp.gcn_hidden);
    l1.dropout_p = hp.dropout_p;
    l1.init(ds.graph, m.arcs, rng);
    l2.W = Param("gcn.2.W", hp.gcn_hidden, ds.num_classes);
    l2.dropout_p = hp.dropout_p;
    l2.output_layer = true;
    l2.init(ds.graph, m.arcs, rng);
    m.gcn_layers = {std::move(l1), std::move(l2)};
    return m;
  }

  if (kind == ModelKind::gat_pos_transformer) {
    m.transformer_proj =
        Param("inject.proj", hp.positional_width, ds.num_features);
    m.transformer_proj.glorot_init(rng);
  }
  const bool enhanced = kind == ModelKind::gat_pos;

  GatLayer hidden;
  hidden.cfg = {ds.num_features, hp.hidden_units_per_head, hp.num_heads,
                LayerMode::hidden, enhanced, /*residual=*/true, hp.dropout_p,
                hp.leaky_slope};
  hidden.heads.resize(hp.num_heads);
  for (int k = 0; k < hp.num_heads; ++k) {
    const std::string tag = "gat.1." + std::to_string(k) + ".";
    auto& head = hidden.heads[k];
    head.W = Param(tag + "W", ds.num_features, hp.hidden_units_per_head);
    if (enhanced)
      head.U = Param(tag + "U", hp.positional_width, hp.hidden_units_per_head);
    head.a_src = Param(tag + "a_src", hp.hidden_units_per_head, 1);
    head.a_dst = Param(tag + "a_dst", hp.hidden_units_per_head, 1);
    head.W.glorot_init(rng);
    if (enhanced) head.U.glorot_init(rng);
    head.a_src.glorot_init(rng);
    head.a_dst.glorot_init(rng);
  }
  if (hidden.cfg.in_features != hidden.cfg.out_width()) {
    hidden.residual_proj = Param("gat.1.res_proj", hidden.cfg.in_features,
                                 hidden.cfg.out_width());
    hidden.residual_proj.glorot_init(rng);
  }

  GatLayer output;
  output.cfg = {hidden.cfg.out_width(), ds.num_classes, 1, LayerMode::output,
                enhanced, /*residual=*/false, hp.dropout_p, hp.leaky_slope};
  {
    auto& head = output.heads.emplace_back();
    head.W = Param("gat.2.0.W", output.cfg.in_features, ds.num_classes);
    if (enhanced)
      head.U = Param("gat.2.0.U", hp.positional_width, ds.num_classes);
    head.a_src = Param("gat.2.0.a_src", ds.num_classes, 1);
    head.a_dst = Param("gat.2.0.a_dst", ds.num_classes, 1);
    head.W.glorot_init(rng);
    if (enhanced) head.U.glorot_init(rng);
    head.a_src.glorot_init(rng);
    head.a_dst.glorot_init(rng);
  }

  m.gat_layers = {std::move(hidden), std::move(output)};
  return m;
}

}  // namespace gatpos::nn
