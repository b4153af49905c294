#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gatpos/errors.hpp"
#include "gatpos/graph.hpp"
#include "gatpos/layers.hpp"
#include "gatpos/verify.hpp"

using namespace gatpos;
using namespace gatpos::nn;

namespace {

GatLayer make_layer(GatLayerConfig cfg, int positional_width, Rng& rng) {
  GatLayer layer;
  layer.cfg = cfg;
  layer.heads.resize(cfg.num_heads);
  for (auto& head : layer.heads) {
    head.W = Param("W", cfg.in_features, cfg.out_features_per_head);
    head.W.glorot_init(rng);
    if (cfg.positional) {
      head.U = Param("U", positional_width, cfg.out_features_per_head);
      head.U.glorot_init(rng);
    }
    head.a_src = Param("a_src", cfg.out_features_per_head, 1);
    head.a_dst = Param("a_dst", cfg.out_features_per_head, 1);
    head.a_src.glorot_init(rng);
    head.a_dst.glorot_init(rng);
  }
  if (cfg.residual && cfg.in_features != cfg.out_width()) {
    layer.residual_proj = Param("res", cfg.in_features, cfg.out_width());
    layer.residual_proj.glorot_init(rng);
  }
  return layer;
}

std::vector<double> fill_away_from_zero(std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  for (auto& x : out) {
    const double mag = rng.uniform(0.2, 1.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return out;
}

}  // namespace

TEST_CASE("ArcIndex inserts self-arcs in sorted position") {
  Graph g = symmetrize(3, std::vector<std::pair<int, int>>{
                              {0, 1}, {1, 2}, {2, 0}});
  ArcIndex arcs = ArcIndex::build(g);
  CHECK(arcs.src == std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2});
  CHECK(arcs.dst == std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2});
  CHECK(arcs.seg.offsets == std::vector<int>{0, 3, 6, 9});
  for (int i = 1; i < 9; ++i)
    if (arcs.src[i] == arcs.src[i - 1]) CHECK(arcs.dst[i] > arcs.dst[i - 1]);
}

TEST_CASE("ArcIndex gives isolated nodes a single self-arc") {
  Graph g = symmetrize(3, std::vector<std::pair<int, int>>{{0, 1}});
  ArcIndex arcs = ArcIndex::build(g);
  CHECK(arcs.seg.offsets == std::vector<int>{0, 2, 4, 5});
  CHECK(arcs.src[4] == 2);
  CHECK(arcs.dst[4] == 2);
}

TEST_CASE("attention coefficient of an isolated node is exactly 1") {
  Graph g = symmetrize(3, std::vector<std::pair<int, int>>{{0, 1}});
  ArcIndex arcs = ArcIndex::build(g);
  Rng rng(1);
  AttentionHeadParams head;
  head.W = Param("W", 2, 3);
  head.W.glorot_init(rng);
  head.a_src = Param("a_src", 3, 1);
  head.a_dst = Param("a_dst", 3, 1);
  head.a_src.glorot_init(rng);
  head.a_dst.glorot_init(rng);

  Tape t;
  Var h = t.constant({0.5, -0.4, 0.7, 0.3, -0.2, 0.9}, 3, 2);
  Var alpha = attention_scores(t, h, Var{}, head, arcs, 0.2);
  CHECK(t.value(alpha)[4] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("identical node features give uniform attention coefficients") {
  Graph g = symmetrize(4, std::vector<std::pair<int, int>>{
                              {0, 1}, {0, 2}, {0, 3}, {1, 2}});
  ArcIndex arcs = ArcIndex::build(g);
  Rng rng(2);
  AttentionHeadParams head;
  head.W = Param("W", 2, 3);
  head.W.glorot_init(rng);
  head.a_src = Param("a_src", 3, 1);
  head.a_dst = Param("a_dst", 3, 1);
  head.a_src.glorot_init(rng);
  head.a_dst.glorot_init(rng);

  Tape t;
  std::vector<double> rows;
  for (int v = 0; v < 4; ++v) rows.insert(rows.end(), {0.7, -0.3});
  Var h = t.constant(rows, 4, 2);
  Var alpha = attention_scores(t, h, Var{}, head, arcs, 0.2);
  for (int s = 0; s < arcs.seg.num_segments(); ++s) {
    const int lo = arcs.seg.offsets[s], hi = arcs.seg.offsets[s + 1];
    for (int i = lo; i < hi; ++i)
      CHECK(t.value(alpha)[i] ==
            doctest::Approx(1.0 / (hi - lo)).epsilon(1e-12));
  }
}

TEST_CASE("attention coefficients sum to 1 per node and stay in (0,1]") {
  Rng rng(3);
  Graph g = verify::random_graph(7, 0.4, rng);
  ArcIndex arcs = ArcIndex::build(g);
  AttentionHeadParams head;
  head.W = Param("W", 3, 4);
  head.W.glorot_init(rng);
  head.a_src = Param("a_src", 4, 1);
  head.a_dst = Param("a_dst", 4, 1);
  head.a_src.glorot_init(rng);
  head.a_dst.glorot_init(rng);

  Tape t;
  Var h = t.constant(fill_away_from_zero(21, rng), 7, 3);
  Var alpha = attention_scores(t, h, Var{}, head, arcs, 0.2);
  for (int s = 0; s < arcs.seg.num_segments(); ++s) {
    double sum = 0.0;
    for (int i = arcs.seg.offsets[s]; i < arcs.seg.offsets[s + 1]; ++i) {
      const double a = t.value(alpha)[i];
      CHECK(a > 0.0);
      CHECK(a <= 1.0 + 1e-15);
      sum += a;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sparse layer matches the dense loop oracle") {
  Rng rng(4);
  Graph g = verify::random_graph(6, 0.45, rng);
  ArcIndex arcs = ArcIndex::build(g);

  SUBCASE("hidden layer with positional scores") {
    GatLayer layer = make_layer({3, 2, 2, LayerMode::hidden, true, true,
                                 /*dropout_p=*/0.0, 0.2},
                                5, rng);
    auto hv = fill_away_from_zero(18, rng);
    auto pv = fill_away_from_zero(30, rng);
    verify::DenseMat hd(6, 3), pd(6, 5);
    hd.v = hv;
    pd.v = pv;
    verify::DenseMat expect = verify::dense_gat_layer(g, hd, &pd, layer);

    Tape t;
    Var h = t.constant(hv, 6, 3);
    Var p = t.constant(pv, 6, 5);
    Var out = layer.forward(t, h, p, arcs, rng, /*training=*/false);
    REQUIRE(t.rows(out) == expect.rows);
    REQUIRE(t.cols(out) == expect.cols);
    for (std::size_t i = 0; i < expect.v.size(); ++i)
      CHECK(t.value(out)[i] == doctest::Approx(expect.v[i]).epsilon(1e-10));
  }
  SUBCASE("output layer averages heads into logits") {
    GatLayer layer = make_layer({3, 4, 3, LayerMode::output, false, false,
                                 /*dropout_p=*/0.0, 0.2},
                                0, rng);
    auto hv = fill_away_from_zero(18, rng);
    verify::DenseMat hd(6, 3);
    hd.v = hv;
    verify::DenseMat expect = verify::dense_gat_layer(g, hd, nullptr, layer);

    Tape t;
    Var h = t.constant(hv, 6, 3);
    Var out = layer.forward(t, h, Var{}, arcs, rng, /*training=*/false);
    for (std::size_t i = 0; i < expect.v.size(); ++i)
      CHECK(t.value(out)[i] == doctest::Approx(expect.v[i]).epsilon(1e-10));
  }
}

TEST_CASE("positional head with U = 0 reduces to plain attention") {
  Rng rng(5);
  Graph g = verify::random_graph(6, 0.4, rng);
  ArcIndex arcs = ArcIndex::build(g);

  GatLayer pos_layer = make_layer({3, 2, 2, LayerMode::hidden, true, false,
                                   0.0, 0.2},
                                  4, rng);
  for (auto& head : pos_layer.heads)
    std::fill(head.U.value.begin(), head.U.value.end(), 0.0);

  GatLayer plain_layer = pos_layer;
  plain_layer.cfg.positional = false;
  for (auto& head : plain_layer.heads) head.U = Param();

  auto hv = fill_away_from_zero(18, rng);
  auto pv = fill_away_from_zero(24, rng);
  Tape t;
  Var h = t.constant(hv, 6, 3);
  Var p = t.constant(pv, 6, 4);
  Var a = pos_layer.forward(t, h, p, arcs, rng, false);
  Var b = plain_layer.forward(t, h, Var{}, arcs, rng, false);
  for (std::size_t i = 0; i < t.value(a).size(); ++i)
    CHECK(t.value(a)[i] == doctest::Approx(t.value(b)[i]).epsilon(1e-10));
}

TEST_CASE("layer output is equivariant under node relabeling") {
  Rng rng(6);
  Graph g = verify::random_graph(7, 0.4, rng);
  GatLayer layer =
      make_layer({3, 2, 2, LayerMode::hidden, false, true, 0.0, 0.2}, 0, rng);
  auto hv = fill_away_from_zero(21, rng);

  // permutation 7 nodes: v -> (3v + 2) mod 7
  std::vector<int> perm(7);
  for (int v = 0; v < 7; ++v) perm[v] = (3 * v + 2) % 7;
  std::vector<std::pair<int, int>> pedges;
  for (int v = 0; v < 7; ++v)
    for (int u : g.neighbors(v)) pedges.emplace_back(perm[v], perm[u]);
  Graph pg = symmetrize(7, pedges);
  std::vector<double> phv(21);
  for (int v = 0; v < 7; ++v)
    for (int f = 0; f < 3; ++f) phv[perm[v] * 3 + f] = hv[v * 3 + f];

  ArcIndex arcs = ArcIndex::build(g);
  ArcIndex parcs = ArcIndex::build(pg);
  Tape t;
  Var out = layer.forward(t, t.constant(hv, 7, 3), Var{}, arcs, rng, false);
  Var pout = layer.forward(t, t.constant(phv, 7, 3), Var{}, parcs, rng, false);
  const int width = t.cols(out);
  for (int v = 0; v < 7; ++v)
    for (int f = 0; f < width; ++f)
      CHECK(t.value(out)[v * width + f] ==
            doctest::Approx(t.value(pout)[perm[v] * width + f]).epsilon(1e-8));
}

TEST_CASE("changing a non-neighbor's features leaves a row unchanged") {
  // path 0-1-2-3: node 3 is outside N(0) u {0}
  Graph g = symmetrize(4, std::vector<std::pair<int, int>>{
                              {0, 1}, {1, 2}, {2, 3}});
  ArcIndex arcs = ArcIndex::build(g);
  Rng rng(7);
  GatLayer layer =
      make_layer({2, 3, 1, LayerMode::hidden, false, false, 0.0, 0.2}, 0, rng);

  auto hv = fill_away_from_zero(8, rng);
  auto hv2 = hv;
  hv2[6] += 1.5;  // node 3, feature 0
  hv2[7] -= 0.5;

  Tape t;
  Var a = layer.forward(t, t.constant(hv, 4, 2), Var{}, arcs, rng, false);
  Var b = layer.forward(t, t.constant(hv2, 4, 2), Var{}, arcs, rng, false);
  for (int f = 0; f < 3; ++f)
    CHECK(t.value(a)[f] == doctest::Approx(t.value(b)[f]).epsilon(1e-14));
  // node 2 is a neighbor of 3, so its row must move
  bool moved = false;
  for (int f = 0; f < 3; ++f)
    moved = moved || std::abs(t.value(a)[2 * 3 + f] - t.value(b)[2 * 3 + f]) >
                         1e-9;
  CHECK(moved);
}

TEST_CASE("residual path: zero attention weights pass the input through") {
  Graph g = symmetrize(3, std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  ArcIndex arcs = ArcIndex::build(g);
  Rng rng(8);
  // in_features == out_width == 4 -> identity residual, no projection
  GatLayer layer =
      make_layer({4, 2, 2, LayerMode::hidden, false, true, 0.0, 0.2}, 0, rng);
  CHECK(layer.residual_proj.rows == 0);
  for (auto& head : layer.heads) {
    std::fill(head.W.value.begin(), head.W.value.end(), 0.0);
    std::fill(head.a_src.value.begin(), head.a_src.value.end(), 0.0);
    std::fill(head.a_dst.value.begin(), head.a_dst.value.end(), 0.0);
  }
  auto hv = fill_away_from_zero(12, rng);
  Tape t;
  Var out = layer.forward(t, t.constant(hv, 3, 4), Var{}, arcs, rng, false);
  for (int i = 0; i < 12; ++i)
    CHECK(t.value(out)[i] == doctest::Approx(hv[i]).epsilon(1e-14));
}

TEST_CASE("residual path uses a learned projection when widths differ") {
  Graph g = symmetrize(3, std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  ArcIndex arcs = ArcIndex::build(g);
  Rng rng(9);
  GatLayer layer =
      make_layer({3, 2, 2, LayerMode::hidden, false, true, 0.0, 0.2}, 0, rng);
  REQUIRE(layer.residual_proj.rows == 3);
  REQUIRE(layer.residual_proj.cols == 4);
  for (auto& head : layer.heads) {
    std::fill(head.W.value.begin(), head.W.value.end(), 0.0);
    std::fill(head.a_src.value.begin(), head.a_src.value.end(), 0.0);
    std::fill(head.a_dst.value.begin(), head.a_dst.value.end(), 0.0);
  }
  auto hv = fill_away_from_zero(9, rng);
  Tape t;
  Var out = layer.forward(t, t.constant(hv, 3, 3), Var{}, arcs, rng, false);
  // expected: h * res_proj, since the attention path contributes ELU(0) = 0
  for (int v = 0; v < 3; ++v)
    for (int c = 0; c < 4; ++c) {
      double expect = 0.0;
      for (int k = 0; k < 3; ++k)
        expect += hv[v * 3 + k] * layer.residual_proj.value[k * 4 + c];
      CHECK(t.value(out)[v * 4 + c] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("positional model applies ReLU layers to the learned table") {
  PositionalModel pm;
  pm.p0 = Param("pos.p0", 2, 2);
  pm.p0.value = {1.0, 2.0, -3.0, 4.0};
  pm.layer_weights.emplace_back("pos.W1", 2, 2);
  pm.layer_weights[0].value = {1.0, 0.0, 0.0, 1.0};  // identity

  Tape t;
  Var p = pm.forward(t);
  CHECK(t.value(p)[0] == doctest::Approx(1.0));
  CHECK(t.value(p)[1] == doctest::Approx(2.0));
  CHECK(t.value(p)[2] == doctest::Approx(0.0));  // ReLU clamps -3
  CHECK(t.value(p)[3] == doctest::Approx(4.0));

  SUBCASE("requires_grad=false freezes the whole chain") {
    Tape t2;
    Var frozen = pm.forward(t2, /*requires_grad=*/false);
    CHECK(!t2.requires_grad(frozen));
  }
}

TEST_CASE("gcn symmetric normalization uses degree-plus-one") {
  Graph g = symmetrize(3, std::vector<std::pair<int, int>>{
                              {0, 1}, {1, 2}, {2, 0}});
  ArcIndex arcs = ArcIndex::build(g);
  Rng rng(10);
  GcnLayer layer;
  layer.W = Param("W", 2, 2);
  layer.init(g, arcs, rng);
  // all degrees 2 -> every arc normalized by 1/sqrt(3*3) = 1/3
  REQUIRE(layer.arc_norm.size() == 9);
  for (double n : layer.arc_norm) CHECK(n == doctest::Approx(1.0 / 3.0));

  Graph path = symmetrize(3, std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  ArcIndex parcs = ArcIndex::build(path);
  GcnLayer playper;
  playper.W = Param("W", 2, 2);
  playper.init(path, parcs, rng);
  // node 0 arcs: (0,0) -> 1/2, (0,1) -> 1/sqrt(2*3)
  CHECK(playper.arc_norm[0] == doctest::Approx(0.5));
  CHECK(playper.arc_norm[1] == doctest::Approx(1.0 / std::sqrt(6.0)));
}

TEST_CASE("gcn layer matches the dense oracle") {
  Rng rng(11);
  Graph g = verify::random_graph(6, 0.4, rng);
  ArcIndex arcs = ArcIndex::build(g);
  GcnLayer layer;
  layer.W = Param("W", 3, 4);
  layer.dropout_p = 0.0;
  layer.init(g, arcs, rng);

  auto hv = fill_away_from_zero(18, rng);
  verify::DenseMat hd(6, 3);
  hd.v = hv;
  verify::DenseMat expect = verify::dense_gcn_layer(g, hd, layer);

  Tape t;
  Var out = layer.forward(t, t.constant(hv, 6, 3), arcs, rng, false);
  for (std::size_t i = 0; i < expect.v.size(); ++i)
    CHECK(t.value(out)[i] == doctest::Approx(expect.v[i]).epsilon(1e-10));
}

TEST_CASE("transformer_inject is identity for zero projection or embeddings") {
  Param proj("proj", 2, 3);
  Tape t;
  Var h = t.constant({1, 2, 3, 4, 5, 6}, 2, 3);
  SUBCASE("zero projection") {
    Var p = t.constant({0.5, -0.5, 1.0, 2.0}, 2, 2);
    Var out = transformer_inject(t, h, p, proj);
    for (int i = 0; i < 6; ++i)
      CHECK(t.value(out)[i] == doctest::Approx(t.value(h)[i]));
  }
  SUBCASE("zero embeddings") {
    Rng rng(12);
    proj.glorot_init(rng);
    Var p = t.constant({0, 0, 0, 0}, 2, 2);
    Var out = transformer_inject(t, h, p, proj);
    for (int i = 0; i < 6; ++i)
      CHECK(t.value(out)[i] == doctest::Approx(t.value(h)[i]));
  }
  SUBCASE("shape mismatch throws") {
    Param bad("proj", 3, 3);
    Var p = t.constant({0, 0, 0, 0}, 2, 2);
    CHECK_THROWS_AS(transformer_inject(t, h, p, bad), ShapeError);
  }
}

TEST_CASE("model kind parsing") {
  CHECK(parse_model_kind("gcn") == ModelKind::gcn);
  CHECK(parse_model_kind("gat") == ModelKind::gat);
  CHECK(parse_model_kind("gat-pos") == ModelKind::gat_pos);
  CHECK(parse_model_kind("gat-pos-transformer") ==
        ModelKind::gat_pos_transformer);
  CHECK_THROWS_AS(parse_model_kind("resnet"), ConfigError);
  for (auto k : {ModelKind::gcn, ModelKind::gat, ModelKind::gat_pos,
                 ModelKind::gat_pos_transformer})
    CHECK(parse_model_kind(model_kind_name(k)) == k);
}

TEST_CASE("per-dataset attention defaults") {
  auto resolved = [](const char* name) {
    Hyperparams hp;
    resolve_dataset_defaults(hp, name);
    return std::pair{hp.hidden_units_per_head, hp.num_heads};
  };
  CHECK(resolved("cora") == std::pair{8, 8});
  CHECK(resolved("citeseer") == std::pair{8, 8});
  CHECK(resolved("pubmed") == std::pair{8, 8});
  CHECK(resolved("chameleon") == std::pair{32, 16});
  CHECK(resolved("squirrel") == std::pair{8, 16});
  CHECK(resolved("actor") == std::pair{32, 16});

  Hyperparams hp;
  hp.hidden_units_per_head = 13;
  hp.num_heads = 3;
  resolve_dataset_defaults(hp, "chameleon");
  CHECK(hp.hidden_units_per_head == 13);  // explicit values win
  CHECK(hp.num_heads == 3);
}

TEST_CASE("build_model wires shapes and parameter groups") {
  Dataset ds;
  ds.name = "tiny";
  Rng seed_rng(13);
  ds.graph = verify::random_graph(9, 0.3, seed_rng);
  ds.num_features = 5;
  ds.features = fill_away_from_zero(45, seed_rng);
  ds.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  ds.num_classes = 3;

  Hyperparams hp;
  hp.hidden_units_per_head = 4;
  hp.num_heads = 2;
  hp.positional_width = 6;
  hp.positional_depth = 2;
  hp.dropout_p = 0.0;

  SUBCASE("gat-pos") {
    Rng rng(14);
    Model m = build_model(ModelKind::gat_pos, ds, hp, rng);
    REQUIRE(m.gat_layers.size() == 2);
    CHECK(m.gat_layers[0].heads.size() == 2);
    CHECK(m.gat_layers[0].heads[0].W.rows == 5);
    CHECK(m.gat_layers[0].heads[0].W.cols == 4);
    CHECK(m.gat_layers[0].heads[0].U.rows == 6);
    CHECK(m.gat_layers[0].residual_proj.rows == 5);  // 5 != 8
    CHECK(m.gat_layers[0].residual_proj.cols == 8);
    CHECK(m.gat_layers[1].heads.size() == 1);  // single output head
    CHECK(m.gat_layers[1].heads[0].W.rows == 8);
    CHECK(m.gat_layers[1].heads[0].W.cols == 3);
    REQUIRE(m.positional.has_value());
    CHECK(m.positional->p0.rows == 9);
    CHECK(m.positional->p0.cols == 6);
    CHECK(m.positional->layer_weights.size() == 2);

    // p0 is excluded from the weight-decay set but present in all_params
    auto weights = m.weight_params();
    auto all = m.all_params();
    auto has = [](const std::vector<Param*>& v, const std::string& n) {
      for (auto* p : v)
        if (p->name == n) return true;
      return false;
    };
    CHECK(!has(weights, "pos.p0"));
    CHECK(has(all, "pos.p0"));
    CHECK(has(weights, "pos.W1"));
    CHECK(has(weights, "gat.1.0.U"));

    Tape t;
    Rng frng(15);
    auto fr = m.forward(t, ds, frng, false);
    CHECK(t.rows(fr.logits) == 9);
    CHECK(t.cols(fr.logits) == 3);
    CHECK(fr.positional.valid());
  }
  SUBCASE("plain gat has no positional parts") {
    Rng rng(16);
    Model m = build_model(ModelKind::gat, ds, hp, rng);
    CHECK(!m.positional.has_value());
    CHECK(m.gat_layers[0].heads[0].U.rows == 0);
    Tape t;
    Rng frng(17);
    auto fr = m.forward(t, ds, frng, false);
    CHECK(t.cols(fr.logits) == 3);
    CHECK(!fr.positional.valid());
  }
  SUBCASE("gcn stack") {
    Rng rng(18);
    Hyperparams ghp = hp;
    ghp.gcn_hidden = 7;
    Model m = build_model(ModelKind::gcn, ds, ghp, rng);
    REQUIRE(m.gcn_layers.size() == 2);
    CHECK(m.gcn_layers[0].W.rows == 5);
    CHECK(m.gcn_layers[0].W.cols == 7);
    CHECK(m.gcn_layers[1].W.cols == 3);
    CHECK(m.gcn_layers[1].output_layer);
    Tape t;
    Rng frng(19);
    auto fr = m.forward(t, ds, frng, false);
    CHECK(t.cols(fr.logits) == 3);
  }
  SUBCASE("transformer variant injects into the features") {
    Rng rng(20);
    Model m = build_model(ModelKind::gat_pos_transformer, ds, hp, rng);
    CHECK(m.transformer_proj.rows == 6);
    CHECK(m.transformer_proj.cols == 5);
    CHECK(m.gat_layers[0].heads[0].U.rows == 0);  // downstream is plain GAT
    REQUIRE(m.positional.has_value());

    // zeroing table and projection reduces to plain GAT with same weights
    Model plain = build_model(ModelKind::gat_pos_transformer, ds, hp, rng);
    Tape t;
    Rng frng(21);
    std::fill(m.positional->p0.value.begin(), m.positional->p0.value.end(),
              0.0);
    auto fr = m.forward(t, ds, frng, false);
    CHECK(t.cols(fr.logits) == 3);
  }
}
