#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqtag/rng.hpp"

namespace seqtag {

// Thrown by masked_softmax when every index is disabled. Callers that can
// legitimately reach this state (length-1 sequences under a diagonal mask)
// must bypass the softmax instead of catching this.
struct DegenerateMask : std::runtime_error {
  DegenerateMask() : std::runtime_error("masked_softmax: all indices disabled") {}
};

inline void contract(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// Dense row-major double tensor. 1-D and 2-D are the shapes in actual use.
// ---------------------------------------------------------------------------
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> s) {
    Tensor t;
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    t.shape = std::move(s);
    t.data.assign(n, 0.0);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
  }
  static Tensor from(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool all_finite(const Tensor& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline double logsumexp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}
inline double logsumexp(const std::vector<double>& v) { return logsumexp(v.data(), v.size()); }

// ---------------------------------------------------------------------------
// masked_softmax: probability vector over the non-disabled indices.
// Disabled entries are excluded from the max and the sum, never touched
// with -inf arithmetic; their outputs are exactly zero.
// ---------------------------------------------------------------------------
inline std::vector<double> masked_softmax(const std::vector<double>& scores,
                                          const std::set<std::size_t>& disabled) {
  const std::size_t n = scores.size();
  double m = -std::numeric_limits<double>::infinity();
  std::size_t support = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (disabled.count(i)) continue;
    ++support;
    m = std::max(m, scores[i]);
  }
  if (support == 0) throw DegenerateMask();
  std::vector<double> out(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (disabled.count(i)) continue;
    out[i] = std::exp(scores[i] - m);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  for (std::size_t i : disabled) {
    if (i < n) out[i] = 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Glorot-uniform initialization: U(-b, b) with b = sqrt(6 / (rows + cols)).
// ---------------------------------------------------------------------------
inline Tensor glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  contract(rows >= 1 && cols >= 1, "glorot_init: zero dimension");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

using GradMap = std::map<std::string, Tensor>;

// Global-norm gradient clipping. Identity when the norm is within the
// threshold (with a 1e-12 relative slack so that re-clipping an already
// clipped map is bitwise identity), otherwise every entry scales by
// threshold / norm.
inline GradMap clip_gradients(GradMap grads, double threshold) {
  contract(threshold > 0.0, "clip_gradients: threshold must be positive");
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    (void)name;
    for (double v : g.data) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= threshold * (1.0 + 1e-12)) return grads;
  const double s = threshold / norm;
  for (auto& [name, g] : grads) {
    (void)name;
    for (double& v : g.data) v *= s;
  }
  return grads;
}

inline double global_norm(const GradMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    (void)name;
    for (double v : g.data) sq += v * v;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Reverse-mode tape. Built define-by-run: nodes are appended in execution
// order, which is a topological order by construction, and backward() walks
// it once in reverse. One Graph per forward pass; no reuse across batches.
// ---------------------------------------------------------------------------
class Graph {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // same shape, zero until backward
    bool requires_grad = false;
    std::string param_name;  // non-empty only for registered parameter leaves
    std::function<void()> backprop;  // accumulates into input grads
  };

  using Var = Node*;

  Var leaf(Tensor value, bool requires_grad = false, std::string name = {}) {
    Var v = push(std::move(value), requires_grad);
    v->param_name = std::move(name);
    if (!v->param_name.empty()) named_leaves_.push_back(v);
    return v;
  }

  Var constant(Tensor value) { return push(std::move(value), false); }

  // op builder: value + requires_grad now, backprop attached by the caller
  Var make(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad); }

  void backward(Var loss) {
    contract(loss != nullptr && loss->value.size() == 1,
             "backward: loss must be a scalar tensor");
    for (auto& n : nodes_) {
      std::fill(n->grad.data.begin(), n->grad.data.end(), 0.0);
    }
    loss->grad.data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node* n = it->get();
      if (n->requires_grad && n->backprop) n->backprop();
    }
  }

  // gradients of the registered parameter leaves, keyed by name
  GradMap gradients() const {
    GradMap out;
    for (Var v : named_leaves_) {
      if (v->requires_grad) out[v->param_name] = v->grad;
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Var push(Tensor value, bool requires_grad) {
    auto n = std::make_unique<Node>();
    n->grad = Tensor::zeros(value.shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return nodes_.back().get();
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<Var> named_leaves_;
};

using Var = Graph::Var;

// backward + gradient collection in one call, per the module contract
inline GradMap backward(Graph& g, Var loss) {
  g.backward(loss);
  return g.gradients();
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops. All return fresh nodes; requires_grad is the OR
// of the inputs'.
// ---------------------------------------------------------------------------

inline Var add(Graph& g, Var a, Var b) {
  contract(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  Var y = g.make(std::move(out), a->requires_grad || b->requires_grad);
  y->backprop = [a, b, y] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      a->grad.data[i] += y->grad.data[i];
      b->grad.data[i] += y->grad.data[i];
    }
  };
  return y;
}

inline Var sub(Graph& g, Var a, Var b) {
  contract(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  Var y = g.make(std::move(out), a->requires_grad || b->requires_grad);
  y->backprop = [a, b, y] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      a->grad.data[i] += y->grad.data[i];
      b->grad.data[i] -= y->grad.data[i];
    }
  };
  return y;
}

inline Var mul(Graph& g, Var a, Var b) {
  contract(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  Var y = g.make(std::move(out), a->requires_grad || b->requires_grad);
  y->backprop = [a, b, y] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      a->grad.data[i] += y->grad.data[i] * b->value.data[i];
      b->grad.data[i] += y->grad.data[i] * a->value.data[i];
    }
  };
  return y;
}

inline Var scale(Graph& g, Var a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  Var y = g.make(std::move(out), a->requires_grad);
  y->backprop = [a, y, c] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) a->grad.data[i] += c * y->grad.data[i];
  };
  return y;
}

// multiply a tensor by a scalar node (learned trade-off weights)
inline Var scale_by(Graph& g, Var a, Var s) {
  contract(s->value.size() == 1, "scale_by: scalar node expected");
  const double c = s->value.data[0];
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  Var y = g.make(std::move(out), a->requires_grad || s->requires_grad);
  y->backprop = [a, s, y, c] {
    double ds = 0.0;
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      a->grad.data[i] += c * y->grad.data[i];
      ds += y->grad.data[i] * a->value.data[i];
    }
    s->grad.data[0] += ds;
  };
  return y;
}

inline Var vtanh(Graph& g, Var a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::tanh(v);
  Var y = g.make(std::move(out), a->requires_grad);
  y->backprop = [a, y] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      const double t = y->value.data[i];
      a->grad.data[i] += y->grad.data[i] * (1.0 - t * t);
    }
  };
  return y;
}

inline Var vsigmoid(Graph& g, Var a) {
  Tensor out = a->value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Var y = g.make(std::move(out), a->requires_grad);
  y->backprop = [a, y] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      const double s = y->value.data[i];
      a->grad.data[i] += y->grad.data[i] * s * (1.0 - s);
    }
  };
  return y;
}

inline Var sum(Graph& g, Var a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  Var y = g.make(Tensor::scalar(s), a->requires_grad);
  y->backprop = [a, y] {
    const double d = y->grad.data[0];
    for (double& v : a->grad.data) v += d;
  };
  return y;
}

inline Var dot(Graph& g, Var a, Var b) {
  contract(a->value.same_shape(b->value), "dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value.data[i] * b->value.data[i];
  Var y = g.make(Tensor::scalar(s), a->requires_grad || b->requires_grad);
  y->backprop = [a, b, y] {
    const double d = y->grad.data[0];
    for (std::size_t i = 0; i < a->value.size(); ++i) {
      a->grad.data[i] += d * b->value.data[i];
      b->grad.data[i] += d * a->value.data[i];
    }
  };
  return y;
}

inline Var concat(Graph& g, const std::vector<Var>& parts) {
  contract(!parts.empty(), "concat: no inputs");
  std::size_t total = 0;
  bool req = false;
  for (Var p : parts) {
    total += p->value.size();
    req = req || p->requires_grad;
  }
  Tensor out = Tensor::zeros({total});
  std::size_t off = 0;
  for (Var p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
    off += p->value.size();
  }
  Var y = g.make(std::move(out), req);
  y->backprop = [parts, y] {
    std::size_t o = 0;
    for (Var p : parts) {
      for (std::size_t i = 0; i < p->value.size(); ++i) p->grad.data[i] += y->grad.data[o + i];
      o += p->value.size();
    }
  };
  return y;
}

inline Var slice(Graph& g, Var a, std::size_t start, std::size_t len) {
  contract(start + len <= a->value.size(), "slice: out of range");
  Tensor out = Tensor::zeros({len});
  std::copy(a->value.data.begin() + start, a->value.data.begin() + start + len,
            out.data.begin());
  Var y = g.make(std::move(out), a->requires_grad);
  y->backprop = [a, y, start, len] {
    for (std::size_t i = 0; i < len; ++i) a->grad.data[start + i] += y->grad.data[i];
  };
  return y;
}

// row of a 2-D node as a 1-D node
inline Var row(Graph& g, Var m, std::size_t r) {
  contract(m->value.rank() == 2 && r < m->value.rows(), "row: out of range");
  const std::size_t c = m->value.cols();
  Tensor out = Tensor::zeros({c});
  std::copy(m->value.data.begin() + r * c, m->value.data.begin() + (r + 1) * c,
            out.data.begin());
  Var y = g.make(std::move(out), m->requires_grad);
  y->backprop = [m, y, r, c] {
    for (std::size_t i = 0; i < c; ++i) m->grad.data[r * c + i] += y->grad.data[i];
  };
  return y;
}

// gather rows of a 2-D node (embedding lookup); backward scatter-adds
inline Var rows(Graph& g, Var m, const std::vector<std::size_t>& ids) {
  contract(m->value.rank() == 2, "rows: 2-D node expected");
  const std::size_t c = m->value.cols();
  for (std::size_t id : ids) contract(id < m->value.rows(), "rows: id out of range");
  Tensor out = Tensor::zeros({ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy(m->value.data.begin() + ids[i] * c, m->value.data.begin() + (ids[i] + 1) * c,
              out.data.begin() + i * c);
  }
  Var y = g.make(std::move(out), m->requires_grad);
  y->backprop = [m, y, ids, c] {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        m->grad.data[ids[i] * c + j] += y->grad.data[i * c + j];
      }
    }
  };
  return y;
}

inline Var stack_rows(Graph& g, const std::vector<Var>& rows_in) {
  contract(!rows_in.empty(), "stack_rows: no inputs");
  const std::size_t c = rows_in.front()->value.size();
  bool req = false;
  for (Var r : rows_in) {
    contract(r->value.size() == c, "stack_rows: ragged rows");
    req = req || r->requires_grad;
  }
  Tensor out = Tensor::zeros({rows_in.size(), c});
  for (std::size_t i = 0; i < rows_in.size(); ++i) {
    std::copy(rows_in[i]->value.data.begin(), rows_in[i]->value.data.end(),
              out.data.begin() + i * c);
  }
  Var y = g.make(std::move(out), req);
  y->backprop = [rows_in, y, c] {
    for (std::size_t i = 0; i < rows_in.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        rows_in[i]->grad.data[j] += y->grad.data[i * c + j];
      }
    }
  };
  return y;
}

// ---------------------------------------------------------------------------
// Linear algebra ops
// ---------------------------------------------------------------------------

// W (m x n) * x (n) -> (m)
inline Var matvec(Graph& g, Var w, Var x) {
  contract(w->value.rank() == 2 && x->value.rank() == 1 && w->value.cols() == x->value.size(),
           "matvec: shape mismatch");
  const std::size_t m = w->value.rows(), n = w->value.cols();
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    const double* wr = &w->value.data[i * n];
    for (std::size_t j = 0; j < n; ++j) s += wr[j] * x->value.data[j];
    out.data[i] = s;
  }
  Var y = g.make(std::move(out), w->requires_grad || x->requires_grad);
  y->backprop = [w, x, y, m, n] {
    for (std::size_t i = 0; i < m; ++i) {
      const double d = y->grad.data[i];
      if (d == 0.0) continue;
      double* wg = &w->grad.data[i * n];
      const double* wr = &w->value.data[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        wg[j] += d * x->value.data[j];
        x->grad.data[j] += d * wr[j];
      }
    }
  };
  return y;
}

// W (m x n) * x (n) + b (m) -> (m)
inline Var affine(Graph& g, Var w, Var x, Var b) {
  contract(b->value.rank() == 1 && b->value.size() == w->value.rows(),
           "affine: bias shape mismatch");
  Var y = matvec(g, w, x);
  return add(g, y, b);
}

// A (n x m) * B (m x k) -> (n x k)
inline Var matmul(Graph& g, Var a, Var b) {
  contract(a->value.rank() == 2 && b->value.rank() == 2 && a->value.cols() == b->value.rows(),
           "matmul: shape mismatch");
  const std::size_t n = a->value.rows(), m = a->value.cols(), k = b->value.cols();
  Tensor out = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < m; ++l) {
      const double av = a->value.data[i * m + l];
      if (av == 0.0) continue;
      const double* br = &b->value.data[l * k];
      double* orow = &out.data[i * k];
      for (std::size_t j = 0; j < k; ++j) orow[j] += av * br[j];
    }
  }
  Var y = g.make(std::move(out), a->requires_grad || b->requires_grad);
  y->backprop = [a, b, y, n, m, k] {
    // dA = dY * B^T ; dB = A^T * dY
    for (std::size_t i = 0; i < n; ++i) {
      const double* dyr = &y->grad.data[i * k];
      for (std::size_t l = 0; l < m; ++l) {
        const double* br = &b->value.data[l * k];
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += dyr[j] * br[j];
        a->grad.data[i * m + l] += s;
      }
      for (std::size_t l = 0; l < m; ++l) {
        const double av = a->value.data[i * m + l];
        if (av == 0.0) continue;
        double* bg = &b->grad.data[l * k];
        for (std::size_t j = 0; j < k; ++j) bg[j] += av * dyr[j];
      }
    }
  };
  return y;
}

// X (n x d) * W^T (m x d) -> (n x m): row i is W * x_i
inline Var linear_rows(Graph& g, Var x, Var w) {
  contract(x->value.rank() == 2 && w->value.rank() == 2 && x->value.cols() == w->value.cols(),
           "linear_rows: shape mismatch");
  const std::size_t n = x->value.rows(), d = x->value.cols(), m = w->value.rows();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = &x->value.data[i * d];
    for (std::size_t j = 0; j < m; ++j) {
      const double* wr = &w->value.data[j * d];
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += wr[c] * xr[c];
      out.data[i * m + j] = s;
    }
  }
  Var y = g.make(std::move(out), x->requires_grad || w->requires_grad);
  y->backprop = [x, w, y, n, d, m] {
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = &x->value.data[i * d];
      double* xg = &x->grad.data[i * d];
      const double* dyr = &y->grad.data[i * m];
      for (std::size_t j = 0; j < m; ++j) {
        const double dy = dyr[j];
        if (dy == 0.0) continue;
        const double* wr = &w->value.data[j * d];
        double* wg = &w->grad.data[j * d];
        for (std::size_t c = 0; c < d; ++c) {
          xg[c] += dy * wr[c];
          wg[c] += dy * xr[c];
        }
      }
    }
  };
  return y;
}

// M (n x d) + broadcast v (d) over rows
inline Var add_rowvec(Graph& g, Var m, Var v) {
  contract(m->value.rank() == 2 && v->value.rank() == 1 && m->value.cols() == v->value.size(),
           "add_rowvec: shape mismatch");
  const std::size_t n = m->value.rows(), d = m->value.cols();
  Tensor out = m->value;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) out.data[i * d + c] += v->value.data[c];
  }
  Var y = g.make(std::move(out), m->requires_grad || v->requires_grad);
  y->backprop = [m, v, y, n, d] {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        m->grad.data[i * d + c] += y->grad.data[i * d + c];
        v->grad.data[c] += y->grad.data[i * d + c];
      }
    }
  };
  return y;
}

// ---------------------------------------------------------------------------
// Inverted dropout: kept entries scale by 1/(1-p) at train time, identity at
// inference. Masks are drawn from the caller's stream, one per call.
// ---------------------------------------------------------------------------
inline Var dropout(Graph& g, Var a, double p, Rng& rng, bool training) {
  contract(p >= 0.0 && p < 1.0, "dropout: rate must be in [0, 1)");
  if (!training || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(a->value.size());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform() >= p ? keep_scale : 0.0;
    (*mask)[i] = m;
    out.data[i] *= m;
  }
  Var y = g.make(std::move(out), a->requires_grad);
  y->backprop = [a, y, mask] {
    for (std::size_t i = 0; i < y->grad.size(); ++i) {
      a->grad.data[i] += y->grad.data[i] * (*mask)[i];
    }
  };
  return y;
}

// softmax over a full 1-D vector (no masking); used for learned trade-off
// weights, not for attention rows
inline Var softmax(Graph& g, Var a) {
  contract(a->value.rank() == 1 && a->value.size() >= 1, "softmax: 1-D input expected");
  const std::size_t n = a->value.size();
  double m = a->value.data[0];
  for (double v : a->value.data) m = std::max(m, v);
  Tensor out = Tensor::zeros({n});
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = std::exp(a->value.data[i] - m);
    z += out.data[i];
  }
  for (double& v : out.data) v /= z;
  Var y = g.make(std::move(out), a->requires_grad);
  y->backprop = [a, y, n] {
    double dotv = 0.0;
    for (std::size_t i = 0; i < n; ++i) dotv += y->grad.data[i] * y->value.data[i];
    for (std::size_t i = 0; i < n; ++i) {
      a->grad.data[i] += y->value.data[i] * (y->grad.data[i] - dotv);
    }
  };
  return y;
}

// ---------------------------------------------------------------------------
// Row-wise masked softmax over a score matrix. Row i is normalized over the
// support {j : j != i when diag_masked} minus `disabled` columns shared by
// all rows; excluded entries are exactly zero. Throws DegenerateMask when a
// row has empty support.
// ---------------------------------------------------------------------------
inline Var masked_softmax_rows(Graph& g, Var s, bool diag_masked,
                               const std::set<std::size_t>& disabled_cols = {}) {
  contract(s->value.rank() == 2 && s->value.rows() == s->value.cols(),
           "masked_softmax_rows: square matrix expected");
  const std::size_t n = s->value.rows();
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t support = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if ((diag_masked && j == i) || disabled_cols.count(j)) continue;
      ++support;
      m = std::max(m, s->value.at(i, j));
    }
    if (support == 0) throw DegenerateMask();
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if ((diag_masked && j == i) || disabled_cols.count(j)) continue;
      const double e = std::exp(s->value.at(i, j) - m);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
    for (std::size_t j = 0; j < n; ++j) {
      if ((diag_masked && j == i) || disabled_cols.count(j)) out.at(i, j) = 0.0;
    }
  }
  Var y = g.make(std::move(out), s->requires_grad);
  y->backprop = [s, y, n, diag_masked, disabled_cols] {
    for (std::size_t i = 0; i < n; ++i) {
      double dotv = 0.0;
      for (std::size_t j = 0; j < n; ++j) dotv += y->grad.at(i, j) * y->value.at(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        if ((diag_masked && j == i) || disabled_cols.count(j)) continue;
        s->grad.at(i, j) += y->value.at(i, j) * (y->grad.at(i, j) - dotv);
      }
    }
  };
  return y;
}

// ---------------------------------------------------------------------------
// Fused additive-attention scores:
//   S[i][j] = sum_c w[c] * tanh(U[i][c] + V[j][c] + b[c])
// The tanh activations are kept for backward.
// ---------------------------------------------------------------------------
inline Var additive_scores(Graph& g, Var u, Var v, Var b, Var w) {
  contract(u->value.rank() == 2 && v->value.rank() == 2 && u->value.same_shape(v->value),
           "additive_scores: U/V shape mismatch");
  const std::size_t n = u->value.rows(), d = u->value.cols();
  contract(b->value.size() == d && w->value.size() == d,
           "additive_scores: bias/weight width mismatch");
  auto acts = std::make_shared<std::vector<double>>(n * n * d);
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const double* ur = &u->value.data[i * d];
    for (std::size_t j = 0; j < n; ++j) {
      const double* vr = &v->value.data[j * d];
      double* tr = &(*acts)[(i * n + j) * d];
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double t = std::tanh(ur[c] + vr[c] + b->value.data[c]);
        tr[c] = t;
        s += w->value.data[c] * t;
      }
      out.at(i, j) = s;
    }
  }
  const bool req = u->requires_grad || v->requires_grad || b->requires_grad || w->requires_grad;
  Var y = g.make(std::move(out), req);
  y->backprop = [u, v, b, w, y, acts, n, d] {
    for (std::size_t i = 0; i < n; ++i) {
      double* ug = &u->grad.data[i * d];
      for (std::size_t j = 0; j < n; ++j) {
        const double dy = y->grad.at(i, j);
        if (dy == 0.0) continue;
        const double* tr = &(*acts)[(i * n + j) * d];
        double* vg = &v->grad.data[j * d];
        for (std::size_t c = 0; c < d; ++c) {
          const double t = tr[c];
          const double dpre = dy * w->value.data[c] * (1.0 - t * t);
          ug[c] += dpre;
          vg[c] += dpre;
          b->grad.data[c] += dpre;
          w->grad.data[c] += dy * t;
        }
      }
    }
  };
  return y;
}

}  // namespace seqtag
