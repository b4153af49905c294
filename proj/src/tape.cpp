#include "gatpos/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gatpos/errors.hpp"

namespace gatpos::ad {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                   Eigen::Dynamic,
                                                   Eigen::RowMajor>>;

void Param::glorot_init(Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (auto& x : value) x = rng.uniform(-limit, limit);
}

SegmentIndex SegmentIndex::from_offsets(std::vector<int> offsets) {
  if (offsets.empty() || offsets.front() != 0)
    throw ContractError("segment index: offsets must start at 0");
  SegmentIndex seg;
  seg.element_segment.resize(offsets.back());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] < offsets[s])
      throw ContractError("segment index: offsets not nondecreasing");
    for (int e = offsets[s]; e < offsets[s + 1]; ++e)
      seg.element_segment[e] = static_cast<int>(s);
  }
  seg.offsets = std::move(offsets);
  return seg;
}

bool& Tape::leaky_relu_fault_hook() {
  static bool flag = false;
  return flag;
}

Var Tape::push(int rows, int cols, bool requires_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.data.resize(std::size_t(rows) * cols);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  if (rows(a) != rows(b) || cols(a) != cols(b))
    throw ShapeError(std::string(op) + ": shape mismatch (" +
                     std::to_string(rows(a)) + "x" + std::to_string(cols(a)) +
                     " vs " + std::to_string(rows(b)) + "x" +
                     std::to_string(cols(b)) + ")");
}

Var Tape::leaf(Param& p, bool requires_grad) {
  Var v = push(p.rows, p.cols, requires_grad);
  node(v).data = p.value;
  node(v).param = requires_grad ? &p : nullptr;
  return v;
}

Var Tape::constant(std::vector<double> data, int rows, int cols) {
  if (static_cast<int>(data.size()) != rows * cols)
    throw ShapeError("constant: data length mismatch");
  Var v = push(rows, cols, false);
  node(v).data = std::move(data);
  return v;
}

Var Tape::constant(std::span<const double> data, int rows, int cols) {
  return constant(std::vector<double>(data.begin(), data.end()), rows, cols);
}

Var Tape::matmul(Var a, Var b) {
  if (cols(a) != rows(b))
    throw ShapeError("matmul: inner dimensions " + std::to_string(cols(a)) +
                     " vs " + std::to_string(rows(b)));
  const int m = rows(a), k = cols(a), n = cols(b);
  Var out = push(m, n, requires_grad(a) || requires_grad(b));
  {
    ConstMatMap A(node(a).data.data(), m, k);
    ConstMatMap B(node(b).data.data(), k, n);
    MatMap C(node(out).data.data(), m, n);
    C.noalias() = A * B;
  }
  if (node(out).requires_grad) {
    node(out).backward = [a, b, m, k, n](Tape& t, int self) {
      ConstMatMap G(t.nodes_[self].grad.data(), m, n);
      if (t.requires_grad(a)) {
        ConstMatMap B(t.node(b).data.data(), k, n);
        MatMap dA(t.node(a).grad.data(), m, k);
        dA.noalias() += G * B.transpose();
      }
      if (t.requires_grad(b)) {
        ConstMatMap A(t.node(a).data.data(), m, k);
        MatMap dB(t.node(b).grad.data(), k, n);
        dB.noalias() += A.transpose() * G;
      }
    };
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Var out = push(rows(a), cols(a), requires_grad(a) || requires_grad(b));
  const auto& da = node(a).data;
  const auto& db = node(b).data;
  auto& do_ = node(out).data;
  for (std::size_t i = 0; i < do_.size(); ++i) do_[i] = da[i] + db[i];
  if (node(out).requires_grad) {
    node(out).backward = [a, b](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      if (t.requires_grad(a)) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.requires_grad(b)) {
        auto& gb = t.node(b).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  }
  return out;
}

Var Tape::scale(Var a, double c) {
  Var out = push(rows(a), cols(a), requires_grad(a));
  const auto& da = node(a).data;
  auto& do_ = node(out).data;
  for (std::size_t i = 0; i < do_.size(); ++i) do_[i] = c * da[i];
  if (node(out).requires_grad) {
    node(out).backward = [a, c](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    };
  }
  return out;
}

Var Tape::leaky_relu(Var a, double slope) {
  Var out = push(rows(a), cols(a), requires_grad(a));
  const auto& x = node(a).data;
  auto& y = node(out).data;
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = x[i] >= 0 ? x[i] : slope * x[i];
  if (node(out).requires_grad) {
    node(out).backward = [a, slope](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& x = t.node(a).data;
      auto& ga = t.node(a).grad;
      const double sgn = leaky_relu_fault_hook() ? -1.0 : 1.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += sgn * g[i] * (x[i] >= 0 ? 1.0 : slope);
    };
  }
  return out;
}

Var Tape::relu(Var a) { return leaky_relu(a, 0.0); }

Var Tape::elu(Var a) {
  Var out = push(rows(a), cols(a), requires_grad(a));
  const auto& x = node(a).data;
  auto& y = node(out).data;
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = x[i] >= 0 ? x[i] : std::expm1(x[i]);
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& x = t.node(a).data;
      const auto& y = t.node(out).data;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * (x[i] >= 0 ? 1.0 : y[i] + 1.0);
    };
  }
  return out;
}

Var Tape::sigmoid(Var a) {
  Var out = push(rows(a), cols(a), requires_grad(a));
  const auto& x = node(a).data;
  auto& y = node(out).data;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                     : std::exp(x[i]) / (1.0 + std::exp(x[i]));
  }
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.node(out).data;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return out;
}

Var Tape::log(Var a) {
  const auto& x = node(a).data;
  for (double v : x)
    if (v <= 0.0) throw ContractError("log: nonpositive input");
  Var out = push(rows(a), cols(a), requires_grad(a));
  auto& y = node(out).data;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(x[i]);
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& x = t.node(a).data;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    };
  }
  return out;
}

Var Tape::softplus(Var a) {
  Var out = push(rows(a), cols(a), requires_grad(a));
  const auto& x = node(a).data;
  auto& y = node(out).data;
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = x[i] > 0 ? x[i] + std::log1p(std::exp(-x[i]))
                    : std::log1p(std::exp(x[i]));
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& x = t.node(a).data;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                   : std::exp(x[i]) / (1.0 + std::exp(x[i]));
        ga[i] += g[i] * s;
      }
    };
  }
  return out;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const int m = rows(parts[0]);
  int total = 0;
  bool rg = false;
  for (Var p : parts) {
    if (rows(p) != m) throw ShapeError("concat_cols: row count mismatch");
    total += cols(p);
    rg = rg || requires_grad(p);
  }
  Var out = push(m, total, rg);
  auto& y = node(out).data;
  int off = 0;
  for (Var p : parts) {
    const int f = cols(p);
    const auto& x = node(p).data;
    for (int r = 0; r < m; ++r)
      std::copy_n(x.data() + std::size_t(r) * f, f,
                  y.data() + std::size_t(r) * total + off);
    off += f;
  }
  if (rg) {
    std::vector<Var> ps(parts.begin(), parts.end());
    node(out).backward = [ps, m, total](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      int off = 0;
      for (Var p : ps) {
        const int f = t.cols(p);
        if (t.requires_grad(p)) {
          auto& gp = t.node(p).grad;
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < f; ++c)
              gp[std::size_t(r) * f + c] +=
                  g[std::size_t(r) * total + off + c];
        }
        off += f;
      }
    };
  }
  return out;
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const int n = rows(a), f = cols(a);
  for (int i : idx)
    if (i < 0 || i >= n) throw RangeError("gather_rows: index out of range");
  const int e = static_cast<int>(idx.size());
  Var out = push(e, f, requires_grad(a));
  const auto& x = node(a).data;
  auto& y = node(out).data;
  for (int r = 0; r < e; ++r)
    std::copy_n(x.data() + std::size_t(idx[r]) * f, f,
                y.data() + std::size_t(r) * f);
  if (node(out).requires_grad) {
    node(out).backward = [a, idx = std::move(idx), f](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.node(a).grad;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < f; ++c)
          ga[std::size_t(idx[r]) * f + c] += g[r * f + c];
    };
  }
  return out;
}

Var Tape::rowwise_dot(Var a, Var b) {
  check_same_shape(a, b, "rowwise_dot");
  const int m = rows(a), f = cols(a);
  Var out = push(m, 1, requires_grad(a) || requires_grad(b));
  const auto& xa = node(a).data;
  const auto& xb = node(b).data;
  auto& y = node(out).data;
  for (int r = 0; r < m; ++r) {
    double s = 0.0;
    for (int c = 0; c < f; ++c)
      s += xa[std::size_t(r) * f + c] * xb[std::size_t(r) * f + c];
    y[r] = s;
  }
  if (node(out).requires_grad) {
    node(out).backward = [a, b, m, f](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& xa = t.node(a).data;
      const auto& xb = t.node(b).data;
      if (t.requires_grad(a)) {
        auto& ga = t.node(a).grad;
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < f; ++c)
            ga[std::size_t(r) * f + c] += g[r] * xb[std::size_t(r) * f + c];
      }
      if (t.requires_grad(b)) {
        auto& gb = t.node(b).grad;
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < f; ++c)
            gb[std::size_t(r) * f + c] += g[r] * xa[std::size_t(r) * f + c];
      }
    };
  }
  return out;
}

Var Tape::segment_softmax(Var scores, const SegmentIndex& seg) {
  if (cols(scores) != 1 || rows(scores) != seg.num_elements())
    throw ShapeError("segment_softmax: scores must be [E x 1] matching seg");
  for (int s = 0; s < seg.num_segments(); ++s)
    if (seg.offsets[s + 1] == seg.offsets[s])
      throw ContractError("segment_softmax: empty segment " +
                          std::to_string(s));
  Var out = push(rows(scores), 1, requires_grad(scores));
  const auto& x = node(scores).data;
  auto& y = node(out).data;
  for (int s = 0; s < seg.num_segments(); ++s) {
    const int lo = seg.offsets[s], hi = seg.offsets[s + 1];
    double mx = x[lo];
    for (int e = lo + 1; e < hi; ++e) mx = std::max(mx, x[e]);
    double z = 0.0;
    for (int e = lo; e < hi; ++e) {
      y[e] = std::exp(x[e] - mx);
      z += y[e];
    }
    for (int e = lo; e < hi; ++e) y[e] /= z;
  }
  if (node(out).requires_grad) {
    node(out).backward = [scores, out, offsets = seg.offsets](Tape& t,
                                                              int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.node(out).data;
      auto& gs = t.node(scores).grad;
      for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        double dot = 0.0;
        for (int e = lo; e < hi; ++e) dot += g[e] * y[e];
        for (int e = lo; e < hi; ++e) gs[e] += y[e] * (g[e] - dot);
      }
    };
  }
  return out;
}

Var Tape::segment_weighted_sum(Var values, Var weights,
                               const SegmentIndex& seg) {
  const int e = rows(values), f = cols(values);
  if (rows(weights) != e || cols(weights) != 1)
    throw ShapeError("segment_weighted_sum: weights must be [E x 1]");
  if (e != seg.num_elements())
    throw ShapeError("segment_weighted_sum: seg/value length mismatch");
  const int s_count = seg.num_segments();
  Var out = push(s_count, f, requires_grad(values) || requires_grad(weights));
  const auto& v = node(values).data;
  const auto& w = node(weights).data;
  auto& y = node(out).data;
  std::fill(y.begin(), y.end(), 0.0);
  for (int i = 0; i < e; ++i) {
    const int s = seg.element_segment[i];
    for (int c = 0; c < f; ++c)
      y[std::size_t(s) * f + c] += w[i] * v[std::size_t(i) * f + c];
  }
  if (node(out).requires_grad) {
    node(out).backward = [values, weights, elem_seg = seg.element_segment, e,
                          f](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& v = t.node(values).data;
      const auto& w = t.node(weights).data;
      if (t.requires_grad(values)) {
        auto& gv = t.node(values).grad;
        for (int i = 0; i < e; ++i) {
          const int s = elem_seg[i];
          for (int c = 0; c < f; ++c)
            gv[std::size_t(i) * f + c] += w[i] * g[std::size_t(s) * f + c];
        }
      }
      if (t.requires_grad(weights)) {
        auto& gw = t.node(weights).grad;
        for (int i = 0; i < e; ++i) {
          const int s = elem_seg[i];
          double dot = 0.0;
          for (int c = 0; c < f; ++c)
            dot += v[std::size_t(i) * f + c] * g[std::size_t(s) * f + c];
          gw[i] += dot;
        }
      }
    };
  }
  return out;
}

Var Tape::segment_weighted_gather_sum(Var values, Var weights,
                                      std::vector<int> dst,
                                      const SegmentIndex& seg) {
  const int n = rows(values), f = cols(values);
  const int e = static_cast<int>(dst.size());
  if (rows(weights) != e || cols(weights) != 1)
    throw ShapeError("segment_weighted_gather_sum: weights must be [E x 1]");
  if (e != seg.num_elements())
    throw ShapeError("segment_weighted_gather_sum: seg length mismatch");
  for (int i : dst)
    if (i < 0 || i >= n)
      throw RangeError("segment_weighted_gather_sum: index out of range");
  const int s_count = seg.num_segments();
  Var out = push(s_count, f, requires_grad(values) || requires_grad(weights));
  const auto& v = node(values).data;
  const auto& w = node(weights).data;
  auto& y = node(out).data;
  std::fill(y.begin(), y.end(), 0.0);
  for (int i = 0; i < e; ++i) {
    const int s = seg.element_segment[i];
    const double* vr = v.data() + std::size_t(dst[i]) * f;
    double* yr = y.data() + std::size_t(s) * f;
    for (int c = 0; c < f; ++c) yr[c] += w[i] * vr[c];
  }
  if (node(out).requires_grad) {
    node(out).backward = [values, weights, dst = std::move(dst),
                          elem_seg = seg.element_segment, e,
                          f](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const auto& v = t.node(values).data;
      const auto& w = t.node(weights).data;
      if (t.requires_grad(values)) {
        auto& gv = t.node(values).grad;
        for (int i = 0; i < e; ++i) {
          const double* gr = g.data() + std::size_t(elem_seg[i]) * f;
          double* gvr = gv.data() + std::size_t(dst[i]) * f;
          for (int c = 0; c < f; ++c) gvr[c] += w[i] * gr[c];
        }
      }
      if (t.requires_grad(weights)) {
        auto& gw = t.node(weights).grad;
        for (int i = 0; i < e; ++i) {
          const double* gr = g.data() + std::size_t(elem_seg[i]) * f;
          const double* vr = v.data() + std::size_t(dst[i]) * f;
          double dot = 0.0;
          for (int c = 0; c < f; ++c) dot += vr[c] * gr[c];
          gw[i] += dot;
        }
      }
    };
  }
  return out;
}

Var Tape::logistic_dot_loss(Var p, std::vector<int> pos_src,
                            std::vector<int> pos_dst,
                            std::vector<int> neg_src,
                            std::vector<int> neg_dst) {
  const int n = rows(p), f = cols(p);
  if (pos_src.size() != pos_dst.size() || neg_src.size() != neg_dst.size())
    throw ShapeError("logistic_dot_loss: pair list length mismatch");
  auto check = [n](const std::vector<int>& idx) {
    for (int i : idx)
      if (i < 0 || i >= n)
        throw RangeError("logistic_dot_loss: index out of range");
  };
  check(pos_src);
  check(pos_dst);
  check(neg_src);
  check(neg_dst);

  const auto& x = node(p).data;
  auto dot = [&](int a, int b) {
    const double* ra = x.data() + std::size_t(a) * f;
    const double* rb = x.data() + std::size_t(b) * f;
    double s = 0.0;
    for (int c = 0; c < f; ++c) s += ra[c] * rb[c];
    return s;
  };
  auto softplus = [](double v) {
    return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < pos_src.size(); ++i)
    loss += softplus(-dot(pos_src[i], pos_dst[i]));
  for (std::size_t i = 0; i < neg_src.size(); ++i)
    loss += softplus(dot(neg_src[i], neg_dst[i]));

  Var out = push(1, 1, requires_grad(p));
  node(out).data[0] = loss;
  if (node(out).requires_grad) {
    node(out).backward = [p, pos_src = std::move(pos_src),
                          pos_dst = std::move(pos_dst),
                          neg_src = std::move(neg_src),
                          neg_dst = std::move(neg_dst), f](Tape& t, int self) {
      const double g = t.nodes_[self].grad[0];
      const auto& x = t.node(p).data;
      auto& gp = t.node(p).grad;
      auto sigmoid = [](double v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
      };
      auto accumulate = [&](const std::vector<int>& src,
                            const std::vector<int>& dst, double sign) {
        for (std::size_t i = 0; i < src.size(); ++i) {
          const double* ra = x.data() + std::size_t(src[i]) * f;
          const double* rb = x.data() + std::size_t(dst[i]) * f;
          double d = 0.0;
          for (int c = 0; c < f; ++c) d += ra[c] * rb[c];
          // d/d(dot) softplus(sign * dot) = sign * sigmoid(sign * dot)
          const double coef = g * sign * sigmoid(sign * d);
          double* ga = gp.data() + std::size_t(src[i]) * f;
          double* gb = gp.data() + std::size_t(dst[i]) * f;
          for (int c = 0; c < f; ++c) {
            ga[c] += coef * rb[c];
            gb[c] += coef * ra[c];
          }
        }
      };
      accumulate(pos_src, pos_dst, -1.0);
      accumulate(neg_src, neg_dst, 1.0);
    };
  }
  return out;
}

Var Tape::dropout(Var a, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) {
    // identity pass-through, still recorded so gradients flow
    return scale(a, 1.0);
  }
  const double keep = 1.0 - p;
  std::vector<double> mask(node(a).data.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : 1.0 / keep;
  Var out = push(rows(a), cols(a), requires_grad(a));
  const auto& x = node(a).data;
  auto& y = node(out).data;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * mask[i];
  if (node(out).requires_grad) {
    node(out).backward = [a, mask = std::move(mask)](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    };
  }
  return out;
}

Var Tape::sum_all(Var a) {
  Var out = push(1, 1, requires_grad(a));
  double s = 0.0;
  for (double v : node(a).data) s += v;
  node(out).data[0] = s;
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, int self) {
      const double g = t.nodes_[self].grad[0];
      auto& ga = t.node(a).grad;
      for (auto& v : ga) v += g;
    };
  }
  return out;
}

Var Tape::half_sum_sq(Var a) {
  Var out = push(1, 1, requires_grad(a));
  double s = 0.0;
  for (double v : node(a).data) s += v * v;
  node(out).data[0] = 0.5 * s;
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, int self) {
      const double g = t.nodes_[self].grad[0];
      const auto& x = t.node(a).data;
      auto& ga = t.node(a).grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * x[i];
    };
  }
  return out;
}

Var Tape::cross_entropy_sum(Var logits, std::span<const int> labels,
                            std::span<const int> idx) {
  if (idx.empty()) throw ContractError("cross_entropy_sum: empty index set");
  const int n = rows(logits), c = cols(logits);
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("cross_entropy_sum: labels length mismatch");
  for (int v : idx)
    if (v < 0 || v >= n)
      throw RangeError("cross_entropy_sum: index out of range");

  Var out = push(1, 1, requires_grad(logits));
  const auto& x = node(logits).data;
  double loss = 0.0;
  for (int v : idx) {
    const double* row = x.data() + std::size_t(v) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    loss += mx + std::log(z) - row[labels[v]];
  }
  node(out).data[0] = loss;
  if (node(out).requires_grad) {
    std::vector<int> idx_v(idx.begin(), idx.end());
    std::vector<int> lab_v(labels.begin(), labels.end());
    node(out).backward = [logits, idx_v = std::move(idx_v),
                          lab_v = std::move(lab_v), c](Tape& t, int self) {
      const double g = t.nodes_[self].grad[0];
      const auto& x = t.node(logits).data;
      auto& gl = t.node(logits).grad;
      for (int v : idx_v) {
        const double* row = x.data() + std::size_t(v) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (int j = 0; j < c; ++j) {
          double p = std::exp(row[j] - mx) / z;
          gl[std::size_t(v) * c + j] +=
              g * (p - (j == lab_v[v] ? 1.0 : 0.0));
        }
      }
    };
  }
  return out;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || rows(loss) != 1 || cols(loss) != 1)
    throw ContractError("backward: loss must be a scalar node");
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad.assign(n.data.size(), 0.0);
  nodes_[loss.id].grad[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.param != nullptr) {
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        n.param->grad[i] += n.grad[i];
    }
  }
}

}  // namespace gatpos::ad
