#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqtag/tensor.hpp"

namespace seqtag {

// ---------------------------------------------------------------------------
// Position-aware attention parameters for one layer of width d. The window
// size k fixes both the Gaussian spread (epsilon = k/2) and the relative-
// position clip radius (r = k, so the table has 2k+1 rows).
// ---------------------------------------------------------------------------
struct PsaParams {
  Tensor w1, w2;         // d x d
  Tensor w;              // d, attention vector
  Tensor b;              // d, additive bias inside the tanh
  Tensor w3;             // (2r+1) x d relative-position table
  Tensor alpha;          // 3 fixed trade-off weights (sum 1), or logits when learned
  bool learned_alphas = false;
  std::size_t d = 0;
  std::size_t k = 0;

  double epsilon() const { return static_cast<double>(k) / 2.0; }
  std::size_t radius() const { return k; }

  static PsaParams init(std::size_t d, std::size_t k, Rng& rng,
                        bool learned_alphas = false) {
    contract(d >= 1 && k >= 1, "psa: width and window must be positive");
    PsaParams p;
    p.d = d;
    p.k = k;
    p.learned_alphas = learned_alphas;
    p.w1 = glorot_init(d, d, rng);
    p.w2 = glorot_init(d, d, rng);
    p.w = glorot_init(1, d, rng);
    p.w.shape = {d};
    p.b = Tensor::zeros({d});
    p.w3 = glorot_init(2 * k + 1, d, rng);
    p.alpha = learned_alphas ? Tensor::zeros({3})
                             : Tensor::from({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    return p;
  }

  void validate() const {
    contract(w3.rows() == 2 * radius() + 1, "psa: position table must have 2r+1 rows");
    if (!learned_alphas) {
      double s = 0.0;
      for (double a : alpha.data) {
        contract(a >= 0.0, "psa: trade-off weights must be nonnegative");
        s += a;
      }
      contract(std::abs(s - 1.0) <= 1e-9, "psa: trade-off weights must sum to 1");
    }
  }
};

// Two fully connected layers over the attended context plus the fusion gate.
// The outer transform bias starts at zero to stay close to the single-bias
// printed form; the gate has no biases.
struct FusionParams {
  Tensor wz1, wz2;  // d x d
  Tensor bz1, bz2;  // d
  Tensor wf1, wf2, wf3;  // d x d

  static FusionParams init(std::size_t d, Rng& rng) {
    FusionParams p;
    p.wz1 = glorot_init(d, d, rng);
    p.wz2 = glorot_init(d, d, rng);
    p.bz1 = Tensor::zeros({d});
    p.bz2 = Tensor::zeros({d});
    p.wf1 = glorot_init(d, d, rng);
    p.wf2 = glorot_init(d, d, rng);
    p.wf3 = glorot_init(d, d, rng);
    return p;
  }
};

// ---------------------------------------------------------------------------
// Scalar positional primitives (also used directly by tests as references).
// ---------------------------------------------------------------------------
inline double gaussian_bias(std::ptrdiff_t i, std::ptrdiff_t j, double epsilon) {
  contract(epsilon > 0.0, "gaussian_bias: epsilon must be positive");
  const double diff = static_cast<double>(i - j);
  return -(diff * diff) / (2.0 * epsilon * epsilon);
}

inline std::size_t rel_index(std::ptrdiff_t i, std::ptrdiff_t j, std::size_t r) {
  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(r);
  std::ptrdiff_t q = i - j;
  if (q < -radius) q = -radius;
  if (q > radius) q = radius;
  return static_cast<std::size_t>(q + radius);
}

inline double token_position_bias(const double* x_i, std::size_t i, std::size_t j,
                                  const PsaParams& p) {
  const std::size_t rowidx =
      rel_index(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j), p.radius());
  double s = 0.0;
  for (std::size_t c = 0; c < p.d; ++c) s += x_i[c] * p.w3.at(rowidx, c);
  return s;
}

// Effective trade-off weights: stored values in fixed mode, softmax of the
// stored logits in learned mode.
inline std::array<double, 3> effective_alphas(const PsaParams& p) {
  if (!p.learned_alphas) return {p.alpha.data[0], p.alpha.data[1], p.alpha.data[2]};
  const double m = std::max({p.alpha.data[0], p.alpha.data[1], p.alpha.data[2]});
  double e0 = std::exp(p.alpha.data[0] - m), e1 = std::exp(p.alpha.data[1] - m),
         e2 = std::exp(p.alpha.data[2] - m);
  const double z = e0 + e1 + e2;
  return {e0 / z, e1 / z, e2 / z};
}

// Reference scalar form of the full compatibility score: additive attention
// term plus the two weighted positional terms. The self-mask is not part of
// the score; it is applied as hard exclusion in the softmax.
inline double compatibility(const double* x_i, const double* x_j, std::size_t i,
                            std::size_t j, const PsaParams& p, bool use_gauss = true,
                            bool use_tokenpos = true) {
  const auto alphas = effective_alphas(p);
  double score = 0.0;
  for (std::size_t c = 0; c < p.d; ++c) {
    double pre = p.b.data[c];
    for (std::size_t e = 0; e < p.d; ++e) {
      pre += p.w1.at(c, e) * x_i[e] + p.w2.at(c, e) * x_j[e];
    }
    score += p.w.data[c] * std::tanh(pre);
  }
  if (use_tokenpos) score += alphas[1] * token_position_bias(x_i, i, j, p);
  if (use_gauss) {
    score += alphas[2] * gaussian_bias(static_cast<std::ptrdiff_t>(i),
                                       static_cast<std::ptrdiff_t>(j), p.epsilon());
  }
  return score;
}

// ---------------------------------------------------------------------------
// Graph-side handles and ops
// ---------------------------------------------------------------------------
struct PsaVars {
  Var w1 = nullptr, w2 = nullptr, w = nullptr, b = nullptr, w3 = nullptr;
  Var alphas = nullptr;  // 3-vector, already normalized
  std::size_t d = 0, k = 0;
  double epsilon() const { return static_cast<double>(k) / 2.0; }
  std::size_t radius() const { return k; }
};

inline PsaVars mount(Graph& g, const PsaParams& p, const std::string& prefix,
                     bool trainable = true) {
  PsaVars v;
  v.w1 = g.leaf(p.w1, trainable, prefix + ".w1");
  v.w2 = g.leaf(p.w2, trainable, prefix + ".w2");
  v.w = g.leaf(p.w, trainable, prefix + ".w");
  v.b = g.leaf(p.b, trainable, prefix + ".b");
  v.w3 = g.leaf(p.w3, trainable, prefix + ".w3");
  if (p.learned_alphas) {
    Var logits = g.leaf(p.alpha, trainable, prefix + ".alpha");
    v.alphas = softmax(g, logits);
  } else {
    v.alphas = g.constant(p.alpha);
  }
  v.d = p.d;
  v.k = p.k;
  return v;
}

struct FusionVars {
  Var wz1 = nullptr, wz2 = nullptr, bz1 = nullptr, bz2 = nullptr;
  Var wf1 = nullptr, wf2 = nullptr, wf3 = nullptr;
};

inline FusionVars mount(Graph& g, const FusionParams& p, const std::string& prefix,
                        bool trainable = true) {
  FusionVars v;
  v.wz1 = g.leaf(p.wz1, trainable, prefix + ".wz1");
  v.wz2 = g.leaf(p.wz2, trainable, prefix + ".wz2");
  v.bz1 = g.leaf(p.bz1, trainable, prefix + ".bz1");
  v.bz2 = g.leaf(p.bz2, trainable, prefix + ".bz2");
  v.wf1 = g.leaf(p.wf1, trainable, prefix + ".wf1");
  v.wf2 = g.leaf(p.wf2, trainable, prefix + ".wf2");
  v.wf3 = g.leaf(p.wf3, trainable, prefix + ".wf3");
  return v;
}

// Relative-position score matrix: R[i][j] = x_i . w3[rel_index(i, j, r)].
// Backward touches only the gathered rows of w3.
inline Var relpos_scores(Graph& g, Var x, Var w3, std::size_t r) {
  contract(x->value.rank() == 2 && w3->value.rank() == 2 &&
               x->value.cols() == w3->value.cols(),
           "relpos_scores: shape mismatch");
  contract(w3->value.rows() == 2 * r + 1, "relpos_scores: table must have 2r+1 rows");
  const std::size_t n = x->value.rows(), d = x->value.cols();
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = &x->value.data[i * d];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t rowidx = rel_index(static_cast<std::ptrdiff_t>(i),
                                           static_cast<std::ptrdiff_t>(j), r);
      const double* wr = &w3->value.data[rowidx * d];
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += xr[c] * wr[c];
      out.at(i, j) = s;
    }
  }
  Var y = g.make(std::move(out), x->requires_grad || w3->requires_grad);
  y->backprop = [x, w3, y, n, d, r] {
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = &x->value.data[i * d];
      double* xg = &x->grad.data[i * d];
      for (std::size_t j = 0; j < n; ++j) {
        const double dy = y->grad.at(i, j);
        if (dy == 0.0) continue;
        const std::size_t rowidx = rel_index(static_cast<std::ptrdiff_t>(i),
                                             static_cast<std::ptrdiff_t>(j), r);
        const double* wr = &w3->value.data[rowidx * d];
        double* wg = &w3->grad.data[rowidx * d];
        for (std::size_t c = 0; c < d; ++c) {
          xg[c] += dy * wr[c];
          wg[c] += dy * xr[c];
        }
      }
    }
  };
  return y;
}

inline Tensor gaussian_matrix(std::size_t n, double epsilon) {
  Tensor gmat = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      gmat.at(i, j) = gaussian_bias(static_cast<std::ptrdiff_t>(i),
                                    static_cast<std::ptrdiff_t>(j), epsilon);
    }
  }
  return gmat;
}

// Full pre-softmax score matrix. Ablation flags drop whole additive terms.
inline Var attention_scores(Graph& g, const PsaVars& p, Var x, bool use_gauss = true,
                            bool use_tokenpos = true) {
  Var u = linear_rows(g, x, p.w1);
  Var v = linear_rows(g, x, p.w2);
  Var scores = additive_scores(g, u, v, p.b, p.w);
  if (use_tokenpos) {
    Var pos = relpos_scores(g, x, p.w3, p.radius());
    scores = add(g, scores, scale_by(g, pos, slice(g, p.alphas, 1, 1)));
  }
  if (use_gauss) {
    Var gauss = g.constant(gaussian_matrix(x->value.rows(), p.epsilon()));
    scores = add(g, scores, scale_by(g, gauss, slice(g, p.alphas, 2, 1)));
  }
  return scores;
}

// Alignment matrix: row-wise softmax of the scores with the token's own
// position excluded from the support. Length-1 sequences bypass the softmax
// entirely and yield the zero matrix.
inline Var attention_weights(Graph& g, const PsaVars& p, Var x, bool self_masked = true,
                             bool use_gauss = true, bool use_tokenpos = true) {
  const std::size_t n = x->value.rows();
  if (n == 1 && self_masked) return g.constant(Tensor::zeros({1, 1}));
  Var scores = attention_scores(g, p, x, use_gauss, use_tokenpos);
  return masked_softmax_rows(g, scores, self_masked);
}

// Context vectors: S[i] = sum_j A[i][j] x_j.
inline Var attend(Graph& g, Var a, Var x) { return matmul(g, a, x); }

// Two fully connected layers: tanh(wz2 . tanh(wz1 . s + bz1) + bz2), row-wise.
inline Var transform(Graph& g, const FusionVars& f, Var s) {
  Var inner = vtanh(g, add_rowvec(g, linear_rows(g, s, f.wz1), f.bz1));
  return vtanh(g, add_rowvec(g, linear_rows(g, inner, f.wz2), f.bz2));
}

// Gate lambda = sigmoid(wf3 . tanh(wf1 . x + wf2 . s)), then the convex
// combination lambda*x + (1-lambda)*s, row-wise.
inline Var fuse(Graph& g, const FusionVars& f, Var x, Var s) {
  contract(x->value.same_shape(s->value), "fuse: shape mismatch");
  Var pre = vtanh(g, add(g, linear_rows(g, x, f.wf1), linear_rows(g, s, f.wf2)));
  Var lambda = vsigmoid(g, linear_rows(g, pre, f.wf3));
  Var ones = g.constant([&] {
    Tensor t = Tensor::zeros(x->value.shape);
    for (double& v : t.data) v = 1.0;
    return t;
  }());
  return add(g, mul(g, lambda, x), mul(g, sub(g, ones, lambda), s));
}

// Snapshot of one layer's alignment for export and inspection.
struct AttentionTrace {
  Tensor matrix;  // n x n
  std::vector<std::string> tokens;
  int layer = 0;
  bool bypass = false;  // length-1 sentence, matrix forced to [[0]]
};

inline nlohmann::json trace_json(const AttentionTrace& t) {
  const std::size_t n = t.matrix.rows();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (std::size_t j = 0; j < n; ++j) r.push_back(t.matrix.at(i, j));
    rows.push_back(r);
  }
  return nlohmann::json{{"layer", t.layer},
                        {"tokens", t.tokens},
                        {"bypass", t.bypass},
                        {"matrix", rows}};
}

// One self-attentional context fusion layer:
// attention -> weighted sum -> dropout -> two-layer transform -> gate fusion.
inline Var psa_layer(Graph& g, const PsaVars& p, const FusionVars& f, Var x,
                     double dropout_p, bool training, Rng& rng,
                     AttentionTrace* trace = nullptr, bool self_masked = true,
                     bool use_gauss = true, bool use_tokenpos = true) {
  Var a = attention_weights(g, p, x, self_masked, use_gauss, use_tokenpos);
  if (trace) {
    trace->matrix = a->value;
    trace->bypass = x->value.rows() == 1 && self_masked;
  }
  Var s = attend(g, a, x);
  s = dropout(g, s, dropout_p, rng, training);
  Var st = transform(g, f, s);
  return fuse(g, f, x, st);
}

}  // namespace seqtag
