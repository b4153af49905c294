#include "gatpos/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gatpos/gradcheck.hpp"
#include "gatpos/objectives.hpp"

namespace gatpos::verify {

using ad::GradCheckReport;
using ad::Param;
using ad::Tape;
using ad::Var;

namespace {

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::vector<int> closed_neighborhood(const Graph& g, int v) {
  std::vector<int> out(g.neighbors(v).begin(), g.neighbors(v).end());
  out.push_back(v);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DenseMat dense_attention(const Graph& g, const DenseMat& h, const DenseMat* p,
                         const nn::AttentionHeadParams& head,
                         double leaky_slope) {
  const int n = g.num_nodes;
  const int f_out = head.W.cols;
  // s_x = W^T h_x (+ U^T p_x), one row per node
  DenseMat s(n, f_out);
  for (int x = 0; x < n; ++x)
    for (int c = 0; c < f_out; ++c) {
      double acc = 0.0;
      for (int r = 0; r < head.W.rows; ++r)
        acc += h.at(x, r) * head.W.value[std::size_t(r) * f_out + c];
      if (p != nullptr && head.positional())
        for (int r = 0; r < head.U.rows; ++r)
          acc += p->at(x, r) * head.U.value[std::size_t(r) * f_out + c];
      s.at(x, c) = acc;
    }
  DenseMat alpha(n, n);
  for (int v = 0; v < n; ++v) {
    const auto members = closed_neighborhood(g, v);
    std::vector<double> e(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      const int u = members[i];
      double score = 0.0;
      for (int c = 0; c < f_out; ++c)
        score += head.a_src.value[c] * s.at(v, c) +
                 head.a_dst.value[c] * s.at(u, c);
      e[i] = score >= 0 ? score : leaky_slope * score;
    }
    double mx = e[0];
    for (double x : e) mx = std::max(mx, x);
    double z = 0.0;
    for (double& x : e) {
      x = std::exp(x - mx);
      z += x;
    }
    for (std::size_t i = 0; i < members.size(); ++i)
      alpha.at(v, members[i]) = e[i] / z;
  }
  return alpha;
}

DenseMat dense_gat_layer(const Graph& g, const DenseMat& h, const DenseMat* p,
                         nn::GatLayer& layer) {
  const int n = g.num_nodes;
  const auto& cfg = layer.cfg;
  const int f_out = cfg.out_features_per_head;
  std::vector<DenseMat> per_head;
  for (auto& head : layer.heads) {
    DenseMat alpha = dense_attention(g, h, p, head, cfg.leaky_slope);
    DenseMat out(n, f_out);
    for (int v = 0; v < n; ++v)
      for (int u : closed_neighborhood(g, v))
        for (int c = 0; c < f_out; ++c) {
          double wh = 0.0;
          for (int r = 0; r < head.W.rows; ++r)
            wh += h.at(u, r) * head.W.value[std::size_t(r) * f_out + c];
          out.at(v, c) += alpha.at(v, u) * wh;
        }
    per_head.push_back(std::move(out));
  }
  if (cfg.mode == nn::LayerMode::hidden) {
    DenseMat out(n, cfg.out_width());
    for (int v = 0; v < n; ++v)
      for (std::size_t k = 0; k < per_head.size(); ++k)
        for (int c = 0; c < f_out; ++c) {
          double x = per_head[k].at(v, c);
          out.at(v, static_cast<int>(k) * f_out + c) =
              x >= 0 ? x : std::expm1(x);
        }
    if (cfg.residual) {
      for (int v = 0; v < n; ++v)
        for (int c = 0; c < cfg.out_width(); ++c) {
          double res = 0.0;
          if (layer.residual_proj.rows > 0) {
            for (int r = 0; r < layer.residual_proj.rows; ++r)
              res += h.at(v, r) *
                     layer.residual_proj
                         .value[std::size_t(r) * cfg.out_width() + c];
          } else {
            res = h.at(v, c);
          }
          out.at(v, c) += res;
        }
    }
    return out;
  }
  DenseMat out(n, f_out);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < f_out; ++c) {
      double acc = 0.0;
      for (const auto& ho : per_head) acc += ho.at(v, c);
      out.at(v, c) = acc / double(per_head.size());
    }
  return out;
}

DenseMat dense_gcn_layer(const Graph& g, const DenseMat& h,
                         const nn::GcnLayer& layer) {
  const int n = g.num_nodes;
  DenseMat agg(n, h.cols);
  for (int v = 0; v < n; ++v)
    for (int u : closed_neighborhood(g, v)) {
      const double norm =
          1.0 / std::sqrt(double(g.degree(v) + 1) * double(g.degree(u) + 1));
      for (int c = 0; c < h.cols; ++c) agg.at(v, c) += norm * h.at(u, c);
    }
  DenseMat out(n, layer.W.cols);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < layer.W.cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < layer.W.rows; ++r)
        acc += agg.at(v, r) * layer.W.value[std::size_t(r) * layer.W.cols + c];
      out.at(v, c) = layer.output_layer ? acc : std::max(acc, 0.0);
    }
  return out;
}

double exact_unsupervised_loss(const DenseMat& p, const Graph& g,
                               const NegativeDistribution& dist, int q) {
  auto dot = [&](int a, int b) {
    double s = 0.0;
    for (int c = 0; c < p.cols; ++c) s += p.at(a, c) * p.at(b, c);
    return s;
  };
  double loss = 0.0;
  for (int v = 0; v < g.num_nodes; ++v)
    for (int u : g.neighbors(v)) {
      loss += softplus(-dot(v, u));
      double expectation = 0.0;
      for (int w = 0; w < g.num_nodes; ++w)
        expectation += dist.probability(w) * softplus(dot(v, w));
      loss += q * expectation;
    }
  return loss;
}

Graph random_graph(int n, double edge_prob, Rng& rng) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < edge_prob) pairs.emplace_back(i, j);
  std::vector<int> degree(n, 0);
  for (auto [i, j] : pairs) {
    ++degree[i];
    ++degree[j];
  }
  for (int v = 0; v < n; ++v)
    if (degree[v] == 0) {
      pairs.emplace_back(v, (v + 1) % n);
      ++degree[v];
      ++degree[(v + 1) % n];
    }
  return symmetrize(n, pairs);
}

namespace {

void fill_uniform(std::vector<double>& v, Rng& rng, double lo, double hi) {
  for (auto& x : v) x = rng.uniform(lo, hi);
}

// magnitudes bounded away from 0 so finite differences never straddle a
// relu/leaky kink
void fill_away_from_zero(std::vector<double>& v, Rng& rng) {
  for (auto& x : v) {
    x = rng.uniform(0.2, 1.5);
    if (rng.uniform() < 0.5) x = -x;
  }
}

CheckResult gradcheck_result(const std::string& name,
                             const GradCheckReport& report) {
  double worst = 0.0;
  for (const auto& e : report.entries) worst = std::max(worst, e.max_rel_err);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max rel err %.3e (tol %.1e)", worst,
                report.tolerance);
  return {name, report.pass, buf};
}

// Runs gradient_check on a tape-graph builder over the given params.
template <typename BuildFn>
CheckResult check_gradients(const std::string& name,
                            std::vector<Param*> params, BuildFn build,
                            double step, double tol) {
  auto loss_value = [&]() {
    Tape t;
    return t.value(build(t))[0];
  };
  auto compute_grads = [&]() {
    Tape t;
    Var loss = build(t);
    t.backward(loss);
  };
  return gradcheck_result(
      name, ad::gradient_check(params, loss_value, compute_grads, step, tol));
}

Dataset random_dataset(int n, int features, int classes, double edge_prob,
                       Rng& rng) {
  Dataset ds;
  ds.name = "random";
  ds.graph = random_graph(n, edge_prob, rng);
  ds.num_features = features;
  ds.features.resize(std::size_t(n) * features);
  fill_uniform(ds.features, rng, -1.0, 1.0);
  ds.num_classes = classes;
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = static_cast<int>(rng.below(classes));
  return ds;
}

}  // namespace

std::vector<CheckResult> run_verify_suite(double tol, std::uint64_t seed) {
  std::vector<CheckResult> results;
  const double step = 1e-4;
  Rng rng(seed);

  // --- elementary op gradient checks ---
  {
    Param a("a", 5, 4), b("b", 4, 3);
    fill_uniform(a.value, rng, -1, 1);
    fill_uniform(b.value, rng, -1, 1);
    results.push_back(check_gradients(
        "grad/matmul", {&a, &b},
        [&](Tape& t) { return t.sum_all(t.matmul(t.leaf(a), t.leaf(b))); },
        step, tol));
  }
  {
    const char* names[] = {"leaky_relu", "relu", "elu",
                           "sigmoid",    "log",  "softplus"};
    for (int which = 0; which < 6; ++which) {
      Param x("x", 4, 3);
      if (which == 4)
        fill_uniform(x.value, rng, 0.5, 2.0);  // log: positive domain
      else
        fill_away_from_zero(x.value, rng);
      auto build = [&, which](Tape& t) {
        Var in = t.leaf(x);
        Var y;
        switch (which) {
          case 0: y = t.leaky_relu(in, 0.2); break;
          case 1: y = t.relu(in); break;
          case 2: y = t.elu(in); break;
          case 3: y = t.sigmoid(in); break;
          case 4: y = t.log(in); break;
          default: y = t.softplus(in); break;
        }
        // square the output so upstream gradients are non-constant
        return t.half_sum_sq(y);
      };
      results.push_back(check_gradients(std::string("grad/") + names[which],
                                        {&x}, build, step, tol));
    }
  }
  {
    Param a("a", 3, 2), b("b", 3, 4);
    fill_uniform(a.value, rng, -1, 1);
    fill_uniform(b.value, rng, -1, 1);
    results.push_back(check_gradients(
        "grad/concat_cols", {&a, &b},
        [&](Tape& t) {
          std::vector<Var> parts{t.leaf(a), t.leaf(b)};
          return t.half_sum_sq(t.concat_cols(parts));
        },
        step, tol));
  }
  {
    Param x("x", 4, 3), w("w", 6, 1);
    fill_uniform(x.value, rng, -1, 1);
    fill_uniform(w.value, rng, -1, 1);
    const std::vector<int> idx{0, 2, 1, 3, 3, 0};
    auto seg = ad::SegmentIndex::from_offsets({0, 2, 4, 6});
    results.push_back(check_gradients(
        "grad/gather+segment_weighted_sum", {&x, &w},
        [&](Tape& t) {
          Var vals = t.gather_rows(t.leaf(x), idx);
          return t.half_sum_sq(t.segment_weighted_sum(vals, t.leaf(w), seg));
        },
        step, tol));
    results.push_back(check_gradients(
        "grad/segment_weighted_gather_sum", {&x, &w},
        [&](Tape& t) {
          return t.half_sum_sq(
              t.segment_weighted_gather_sum(t.leaf(x), t.leaf(w), idx, seg));
        },
        step, tol));
  }
  {
    Param s("scores", 7, 1);
    fill_uniform(s.value, rng, -2, 2);
    auto seg = ad::SegmentIndex::from_offsets({0, 3, 5, 7});
    results.push_back(check_gradients(
        "grad/segment_softmax", {&s},
        [&](Tape& t) {
          return t.half_sum_sq(t.segment_softmax(t.leaf(s), seg));
        },
        step, tol));
  }
  {
    Param a("a", 5, 3), b("b", 5, 3);
    fill_uniform(a.value, rng, -1, 1);
    fill_uniform(b.value, rng, -1, 1);
    results.push_back(check_gradients(
        "grad/rowwise_dot", {&a, &b},
        [&](Tape& t) {
          return t.half_sum_sq(t.rowwise_dot(t.leaf(a), t.leaf(b)));
        },
        step, tol));
  }
  {
    Param p("p", 5, 4);
    fill_uniform(p.value, rng, -1, 1);
    results.push_back(check_gradients(
        "grad/logistic_dot_loss", {&p},
        [&](Tape& t) {
          return t.logistic_dot_loss(t.leaf(p), {0, 1, 2}, {1, 2, 3},
                                     {0, 1, 4}, {4, 3, 2});
        },
        step, tol));
  }
  {
    Param logits("logits", 5, 3);
    fill_uniform(logits.value, rng, -1, 1);
    const std::vector<int> labels{0, 2, 1, 0, 2};
    const std::vector<int> idx{0, 1, 3};
    results.push_back(check_gradients(
        "grad/cross_entropy_sum", {&logits},
        [&](Tape& t) {
          return t.cross_entropy_sum(t.leaf(logits), labels, idx);
        },
        step, tol));
  }

  // --- full model gradient check ---
  {
    Rng setup(seed + 100);
    Dataset ds = random_dataset(6, 5, 3, 0.4, setup);
    nn::Hyperparams hp;
    hp.positional_width = 4;
    hp.hidden_units_per_head = 3;
    hp.num_heads = 2;
    nn::Model model =
        nn::build_model(nn::ModelKind::gat_pos, ds, hp, setup);
    NegativeDistribution dist(ds.graph, 0.75);
    std::vector<int> negatives(std::size_t(ds.graph.num_arcs()) * 2);
    dist.sample_many(setup, negatives);
    const std::vector<int> train_idx{0, 1, 2, 3};
    auto build = [&](Tape& t) {
      Rng unused(0);
      auto fr = model.forward(t, ds, unused, /*training=*/false);
      Var sup = obj::supervised_loss(t, fr.logits, ds.labels, train_idx);
      Var unsup =
          obj::unsupervised_loss_fixed(t, fr.positional, ds.graph, negatives,
                                       2);
      auto weights = model.weight_params();
      Var l2 = obj::l2_penalty(t, weights);
      return t.add(t.add(sup, t.scale(unsup, 0.7)), t.scale(l2, 5e-2));
    };
    results.push_back(check_gradients("grad/full_gat_pos_model",
                                      model.all_params(), build, step, tol));
  }

  // --- softmax invariants ---
  {
    Tape t;
    auto seg = ad::SegmentIndex::from_offsets({0, 3, 5});
    Var scores = t.constant({0.3, -1.2, 2.0, 1000.0, 1000.0}, 5, 1);
    Var soft = t.segment_softmax(scores, seg);
    auto y = t.value(soft);
    bool ok = std::abs(y[0] + y[1] + y[2] - 1.0) < 1e-6 &&
              std::abs(y[3] + y[4] - 1.0) < 1e-6 &&
              std::abs(y[3] - 0.5) < 1e-12;
    Var shifted = t.segment_softmax(
        t.constant({0.3 + 7.5, -1.2 + 7.5, 2.0 + 7.5, 990.0, 990.0}, 5, 1),
        seg);
    auto y2 = t.value(shifted);
    for (int i = 0; i < 5; ++i) ok = ok && std::abs(y[i] - y2[i]) < 1e-6;
    results.push_back({"invariant/segment_softmax",
                       ok,
                       "per-segment sum 1, shift invariant, overflow safe"});
  }

  // --- locality / structural masking ---
  {
    Rng setup(seed + 200);
    Dataset ds = random_dataset(8, 4, 2, 0.3, setup);
    nn::Hyperparams hp;
    hp.positional_width = 3;
    hp.hidden_units_per_head = 3;
    hp.num_heads = 2;
    nn::Model model = nn::build_model(nn::ModelKind::gat_pos, ds, hp, setup);
    // find (v, u) with u outside N(v) ∪ {v}
    int v = -1, u = -1;
    for (int a = 0; a < 8 && v < 0; ++a)
      for (int b = 0; b < 8; ++b)
        if (a != b && !ds.graph.has_edge(a, b)) {
          v = a;
          u = b;
          break;
        }
    bool ok = v >= 0;
    if (ok) {
      Rng unused(0);
      Tape t1;
      Var h1 = t1.constant(std::span<const double>(ds.features), 8, 4);
      Var p1 = model.positional->forward(t1, false);
      Var out1 =
          model.gat_layers[0].forward(t1, h1, p1, model.arcs, unused, false);
      Dataset ds2 = ds;
      for (int c = 0; c < 4; ++c)
        ds2.features[std::size_t(u) * 4 + c] += 3.5;
      Tape t2;
      Var h2 = t2.constant(std::span<const double>(ds2.features), 8, 4);
      Var p2 = model.positional->forward(t2, false);
      Var out2 =
          model.gat_layers[0].forward(t2, h2, p2, model.arcs, unused, false);
      const int width = t1.cols(out1);
      for (int c = 0; c < width; ++c)
        ok = ok && t1.value(out1)[std::size_t(v) * width + c] ==
                       t2.value(out2)[std::size_t(v) * width + c];
    }
    results.push_back({"invariant/locality_masking", ok,
                       "non-neighbor feature change leaves row untouched"});
  }

  // --- oracle equivalence: attention / GAT layer / GCN ---
  {
    bool ok = true;
    double worst = 0.0;
    Rng setup(seed + 300);
    for (int trial = 0; trial < 50 && ok; ++trial) {
      const int n = 3 + static_cast<int>(setup.below(6));  // 3..8 nodes
      Dataset ds = random_dataset(n, 4, 3, 0.45, setup);
      nn::Hyperparams hp;
      hp.positional_width = 3;
      hp.hidden_units_per_head = 3;
      hp.num_heads = 2;
      const bool enhanced = trial % 2 == 0;
      nn::Model model = nn::build_model(
          enhanced ? nn::ModelKind::gat_pos : nn::ModelKind::gat, ds, hp,
          setup);
      DenseMat h(n, 4);
      h.v = ds.features;
      DenseMat pmat;
      const DenseMat* pptr = nullptr;
      Rng unused(0);
      Tape t;
      Var hvar = t.constant(std::span<const double>(ds.features), n, 4);
      Var pvar;
      if (enhanced) {
        pvar = model.positional->forward(t, false);
        pmat = DenseMat(n, hp.positional_width);
        pmat.v.assign(t.value(pvar).begin(), t.value(pvar).end());
        pptr = &pmat;
      }
      // attention coefficients of head 0
      auto& layer = model.gat_layers[0];
      Var alpha = nn::attention_scores(t, hvar, pvar, layer.heads[0],
                                       model.arcs, layer.cfg.leaky_slope);
      DenseMat dense_alpha =
          dense_attention(ds.graph, h, pptr, layer.heads[0],
                          layer.cfg.leaky_slope);
      for (int e = 0; e < model.arcs.seg.num_elements(); ++e) {
        const double diff =
            std::abs(t.value(alpha)[e] -
                     dense_alpha.at(model.arcs.src[e], model.arcs.dst[e]));
        worst = std::max(worst, diff);
        ok = ok && diff < 1e-8;
      }
      // full hidden layer
      Var out = layer.forward(t, hvar, pvar, model.arcs, unused, false);
      DenseMat dense_out = dense_gat_layer(ds.graph, h, pptr, layer);
      for (std::size_t i = 0; i < t.value(out).size(); ++i) {
        const double diff = std::abs(t.value(out)[i] - dense_out.v[i]);
        worst = std::max(worst, diff);
        ok = ok && diff < 1e-8;
      }
      // GCN propagation
      nn::Model gcn = nn::build_model(nn::ModelKind::gcn, ds, hp, setup);
      Var gout =
          gcn.gcn_layers[0].forward(t, hvar, gcn.arcs, unused, false);
      DenseMat dense_g = dense_gcn_layer(ds.graph, h, gcn.gcn_layers[0]);
      for (std::size_t i = 0; i < t.value(gout).size(); ++i) {
        const double diff = std::abs(t.value(gout)[i] - dense_g.v[i]);
        worst = std::max(worst, diff);
        ok = ok && diff < 1e-8;
      }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "50 random graphs, max |diff| %.3e", worst);
    results.push_back({"oracle/sparse_vs_dense", ok, buf});
  }

  // --- Monte Carlo unsupervised loss vs exact expectation ---
  {
    Rng setup(seed + 400);
    Graph g = random_graph(5, 0.5, setup);
    const int q = 2;
    DenseMat p(5, 3);
    fill_uniform(p.v, setup, -1, 1);
    NegativeDistribution dist(g, 0.75);
    const double exact = exact_unsupervised_loss(p, g, dist, q);
    double mc_sum = 0.0;
    const int evals = 10000;
    for (int i = 0; i < evals; ++i) {
      Rng draw(mix_seed(seed, 400, i));
      Tape t;
      Var pv = t.constant(p.v, 5, 3);
      Var loss = obj::unsupervised_loss(t, pv, g, dist, q, draw);
      mc_sum += t.value(loss)[0];
    }
    const double mc = mc_sum / evals;
    const double rel = std::abs(mc - exact) / std::abs(exact);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "MC %.6f vs exact %.6f (rel %.4f)", mc,
                  exact, rel);
    results.push_back({"oracle/unsupervised_mc_vs_exact", rel < 0.01, buf});
  }

  return results;
}

}  // namespace gatpos::verify
