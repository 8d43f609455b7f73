#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqtag/tensor.hpp"

namespace seqtag {

// Four-gate LSTM parameters. Gate blocks are stacked in the fixed order
// input, forget, cell-candidate, output; the forget block of the bias starts
// at 1.0 so early training does not wash out the cell state.
struct LstmParams {
  Tensor wx;  // 4h x in
  Tensor wh;  // 4h x h
  Tensor b;   // 4h
  std::size_t in = 0;
  std::size_t hidden = 0;

  static LstmParams init(std::size_t in, std::size_t hidden, Rng& rng) {
    LstmParams p;
    p.in = in;
    p.hidden = hidden;
    p.wx = glorot_init(4 * hidden, in, rng);
    p.wh = glorot_init(4 * hidden, hidden, rng);
    p.b = Tensor::zeros({4 * hidden});
    for (std::size_t i = hidden; i < 2 * hidden; ++i) p.b.data[i] = 1.0;
    return p;
  }
};

// Graph-mounted handles for one forward pass.
struct LstmVars {
  Var wx = nullptr;
  Var wh = nullptr;
  Var b = nullptr;
  std::size_t hidden = 0;
};

inline LstmVars mount(Graph& g, const LstmParams& p, const std::string& prefix,
                      bool trainable = true) {
  LstmVars v;
  v.wx = g.leaf(p.wx, trainable, prefix + ".wx");
  v.wh = g.leaf(p.wh, trainable, prefix + ".wh");
  v.b = g.leaf(p.b, trainable, prefix + ".b");
  v.hidden = p.hidden;
  return v;
}

// One recurrence step: gates from the stacked affine map, then
// c' = f*c + i*g and h' = o*tanh(c').
inline std::pair<Var, Var> lstm_step(Graph& g, const LstmVars& p, Var x, Var h, Var c) {
  contract(x->value.size() == p.wx->value.cols(), "lstm_step: input width mismatch");
  contract(h->value.size() == p.hidden && c->value.size() == p.hidden,
           "lstm_step: state width mismatch");
  Var gates = add(g, add(g, matvec(g, p.wx, x), matvec(g, p.wh, h)), p.b);
  const std::size_t hs = p.hidden;
  Var gi = vsigmoid(g, slice(g, gates, 0, hs));
  Var gf = vsigmoid(g, slice(g, gates, hs, hs));
  Var gg = vtanh(g, slice(g, gates, 2 * hs, hs));
  Var go = vsigmoid(g, slice(g, gates, 3 * hs, hs));
  Var c2 = add(g, mul(g, gf, c), mul(g, gi, gg));
  Var h2 = mul(g, go, vtanh(g, c2));
  return {h2, c2};
}

// Runs the recurrence over a list of input vectors, optionally right to
// left, returning the hidden state at every position (in input order).
inline std::vector<Var> lstm_run(Graph& g, const LstmVars& p, const std::vector<Var>& xs,
                                 bool reverse) {
  const std::size_t n = xs.size();
  std::vector<Var> hs(n);
  Var h = g.constant(Tensor::zeros({p.hidden}));
  Var c = g.constant(Tensor::zeros({p.hidden}));
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    std::tie(h, c) = lstm_step(g, p, xs[t], h, c);
    hs[t] = h;
  }
  return hs;
}

// Character-level word representation: final forward state concatenated with
// final backward state over the character embedding rows.
inline Var char_encode(Graph& g, const LstmVars& fwd, const LstmVars& bwd, Var char_rows) {
  contract(char_rows->value.rank() == 2 && char_rows->value.rows() >= 1,
           "char_encode: nonempty char matrix expected");
  const std::size_t len = char_rows->value.rows();
  std::vector<Var> xs(len);
  for (std::size_t i = 0; i < len; ++i) xs[i] = row(g, char_rows, i);
  std::vector<Var> hf = lstm_run(g, fwd, xs, false);
  std::vector<Var> hb = lstm_run(g, bwd, xs, true);
  return concat(g, {hf.back(), hb.front()});
}

// Bidirectional encoding of a sequence matrix: row t of the result is
// [forward hidden at t ; backward hidden at t].
inline Var bilstm(Graph& g, const LstmVars& fwd, const LstmVars& bwd, Var seq) {
  contract(seq->value.rank() == 2 && seq->value.rows() >= 1,
           "bilstm: nonempty sequence expected");
  const std::size_t n = seq->value.rows();
  std::vector<Var> xs(n);
  for (std::size_t t = 0; t < n; ++t) xs[t] = row(g, seq, t);
  std::vector<Var> hf = lstm_run(g, fwd, xs, false);
  std::vector<Var> hb = lstm_run(g, bwd, xs, true);
  std::vector<Var> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = concat(g, {hf[t], hb[t]});
  return stack_rows(g, out);
}

}  // namespace seqtag
