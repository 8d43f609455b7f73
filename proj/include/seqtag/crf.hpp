#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "seqtag/tensor.hpp"

namespace seqtag {

// ---------------------------------------------------------------------------
// Linear-chain CRF over L real labels plus virtual start/stop states. The
// default (literal) form gives every ordered label pair its own weight
// vector over z_j and scalar bias; the factorized option reduces to the
// familiar emission + transition split.
//
// Boundary convention: position 1 is scored through the (start, y_1) pair on
// z_1, and a final (y_n, stop) pair on z_n closes the chain. In factorized
// mode virtual states carry no emission, so the stop factor is the
// transition score alone.
// ---------------------------------------------------------------------------
struct CrfParams {
  std::size_t labels = 0;  // L, real labels only
  std::size_t dim = 0;     // width of z_j
  bool factorized = false;

  Tensor w;  // literal: (S*S) x dim, row y_prev*S + y
  Tensor b;  // literal: S*S

  Tensor ew;  // factorized: L x dim
  Tensor eb;  // factorized: L
  Tensor tr;  // factorized: S*S

  std::size_t states() const { return labels + 2; }
  std::size_t start() const { return labels; }
  std::size_t stop() const { return labels + 1; }

  static CrfParams init(std::size_t labels, std::size_t dim, bool factorized, Rng& rng) {
    contract(labels >= 1, "crf: need at least one label");
    CrfParams p;
    p.labels = labels;
    p.dim = dim;
    p.factorized = factorized;
    const std::size_t s = p.states();
    if (factorized) {
      p.ew = glorot_init(labels, dim, rng);
      p.eb = Tensor::zeros({labels});
      p.tr = glorot_init(s, s, rng);
      p.tr.shape = {s * s};
    } else {
      p.w = glorot_init(s * s, dim, rng);
      p.b = Tensor::zeros({s * s});
    }
    return p;
  }
};

// Scalar log-potential of one (y_prev, y) factor at a position with input z.
inline double pair_potential(const double* z, std::size_t y_prev, std::size_t y,
                             const CrfParams& p) {
  const std::size_t s = p.states();
  contract(y_prev < s && y < s, "pair_potential: label out of range");
  if (p.factorized) {
    double emission = 0.0;
    if (y < p.labels) {
      for (std::size_t c = 0; c < p.dim; ++c) emission += p.ew.at(y, c) * z[c];
      emission += p.eb.data[y];
    }
    return p.tr.data[y_prev * s + y] + emission;
  }
  double score = 0.0;
  const double* wr = &p.w.data[(y_prev * s + y) * p.dim];
  for (std::size_t c = 0; c < p.dim; ++c) score += wr[c] * z[c];
  return score + p.b.data[y_prev * s + y];
}

// All S*S factor scores per position, laid out as rows of y_prev*S + y.
// This is the value-level twin of build_pair_scores below; both accumulate
// in the same order so scores agree bitwise.
inline Tensor pair_score_table(const Tensor& z, const CrfParams& p) {
  contract(z.rank() == 2 && z.cols() == p.dim, "pair_score_table: input width mismatch");
  const std::size_t n = z.rows(), s = p.states();
  Tensor out = Tensor::zeros({n, s * s});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t yp = 0; yp < s; ++yp) {
      for (std::size_t y = 0; y < s; ++y) {
        out.at(j, yp * s + y) = pair_potential(&z.data[j * p.dim], yp, y, p);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference over a precomputed score table (n x S*S). Only real labels are
// enumerated in the dynamic programs; invalid transitions never enter a sum.
// ---------------------------------------------------------------------------
inline double sequence_score(const Tensor& pairs, const std::vector<std::size_t>& y,
                             std::size_t labels) {
  const std::size_t s = labels + 2, start = labels, stop = labels + 1;
  const std::size_t n = pairs.rows();
  contract(y.size() == n, "sequence_score: length mismatch");
  for (std::size_t id : y) contract(id < labels, "sequence_score: label out of range");
  double score = pairs.at(0, start * s + y[0]);
  for (std::size_t j = 1; j < n; ++j) score += pairs.at(j, y[j - 1] * s + y[j]);
  score += pairs.at(n - 1, y[n - 1] * s + stop);
  return score;
}

inline double log_partition(const Tensor& pairs, std::size_t labels) {
  const std::size_t s = labels + 2, start = labels, stop = labels + 1;
  const std::size_t n = pairs.rows();
  contract(n >= 1, "log_partition: empty sequence");
  std::vector<double> alpha(labels), next(labels), scratch(labels);
  for (std::size_t y = 0; y < labels; ++y) alpha[y] = pairs.at(0, start * s + y);
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t y = 0; y < labels; ++y) {
      for (std::size_t yp = 0; yp < labels; ++yp) {
        scratch[yp] = alpha[yp] + pairs.at(j, yp * s + y);
      }
      next[y] = logsumexp(scratch);
    }
    alpha.swap(next);
  }
  for (std::size_t y = 0; y < labels; ++y) scratch[y] = alpha[y] + pairs.at(n - 1, y * s + stop);
  return logsumexp(scratch);
}

struct DecodeResult {
  std::vector<std::size_t> labels;
  double score = 0.0;
};

// Max-product counterpart of log_partition. Ties take the lowest label id:
// candidates are scanned in ascending id order and only a strictly better
// score displaces the incumbent.
inline DecodeResult viterbi_decode(const Tensor& pairs, std::size_t labels) {
  const std::size_t s = labels + 2, start = labels, stop = labels + 1;
  const std::size_t n = pairs.rows();
  contract(n >= 1, "viterbi_decode: empty sequence");
  std::vector<std::vector<double>> best(n, std::vector<double>(labels));
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(labels, 0));
  for (std::size_t y = 0; y < labels; ++y) best[0][y] = pairs.at(0, start * s + y);
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t y = 0; y < labels; ++y) {
      double b = best[j - 1][0] + pairs.at(j, 0 * s + y);
      std::size_t arg = 0;
      for (std::size_t yp = 1; yp < labels; ++yp) {
        const double cand = best[j - 1][yp] + pairs.at(j, yp * s + y);
        if (cand > b) {
          b = cand;
          arg = yp;
        }
      }
      best[j][y] = b;
      back[j][y] = arg;
    }
  }
  double final_best = best[n - 1][0] + pairs.at(n - 1, 0 * s + stop);
  std::size_t final_arg = 0;
  for (std::size_t y = 1; y < labels; ++y) {
    const double cand = best[n - 1][y] + pairs.at(n - 1, y * s + stop);
    if (cand > final_best) {
      final_best = cand;
      final_arg = y;
    }
  }
  DecodeResult res;
  res.labels.assign(n, 0);
  res.labels[n - 1] = final_arg;
  for (std::size_t j = n - 1; j > 0; --j) res.labels[j - 1] = back[j][res.labels[j]];
  // report the score exactly as sequence_score computes it
  res.score = sequence_score(pairs, res.labels, labels);
  return res;
}

// Convenience forms over (Z, params).
inline double sequence_score(const Tensor& z, const std::vector<std::size_t>& y,
                             const CrfParams& p) {
  return sequence_score(pair_score_table(z, p), y, p.labels);
}
inline double log_partition(const Tensor& z, const CrfParams& p) {
  return log_partition(pair_score_table(z, p), p.labels);
}
inline DecodeResult viterbi_decode(const Tensor& z, const CrfParams& p) {
  return viterbi_decode(pair_score_table(z, p), p.labels);
}

// ---------------------------------------------------------------------------
// Graph-side construction
// ---------------------------------------------------------------------------
struct CrfVars {
  Var w = nullptr, b = nullptr;
  Var ew = nullptr, eb = nullptr, tr = nullptr;
  bool factorized = false;
  std::size_t labels = 0;
};

inline CrfVars mount(Graph& g, const CrfParams& p, const std::string& prefix,
                     bool trainable = true) {
  CrfVars v;
  v.factorized = p.factorized;
  v.labels = p.labels;
  if (p.factorized) {
    v.ew = g.leaf(p.ew, trainable, prefix + ".ew");
    v.eb = g.leaf(p.eb, trainable, prefix + ".eb");
    v.tr = g.leaf(p.tr, trainable, prefix + ".tr");
  } else {
    v.w = g.leaf(p.w, trainable, prefix + ".w");
    v.b = g.leaf(p.b, trainable, prefix + ".b");
  }
  return v;
}

// Factorized expansion: P[j][yp*S+y] = tr[yp*S+y] + em[j][y] for real y.
inline Var factorized_pairs(Graph& g, Var em, Var tr, std::size_t labels) {
  const std::size_t s = labels + 2;
  contract(em->value.rank() == 2 && em->value.cols() == labels,
           "factorized_pairs: emission width mismatch");
  contract(tr->value.size() == s * s, "factorized_pairs: transition size mismatch");
  const std::size_t n = em->value.rows();
  Tensor out = Tensor::zeros({n, s * s});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t yp = 0; yp < s; ++yp) {
      for (std::size_t y = 0; y < s; ++y) {
        double v = tr->value.data[yp * s + y];
        if (y < labels) v += em->value.at(j, y);
        out.at(j, yp * s + y) = v;
      }
    }
  }
  Var y = g.make(std::move(out), em->requires_grad || tr->requires_grad);
  y->backprop = [em, tr, y, n, s, labels] {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t yp = 0; yp < s; ++yp) {
        for (std::size_t lab = 0; lab < s; ++lab) {
          const double d = y->grad.at(j, yp * s + lab);
          if (d == 0.0) continue;
          tr->grad.data[yp * s + lab] += d;
          if (lab < labels) em->grad.at(j, lab) += d;
        }
      }
    }
  };
  return y;
}

// n x S*S score node from the encoder output, matching pair_score_table
// value-for-value.
inline Var build_pair_scores(Graph& g, const CrfVars& v, Var z) {
  if (v.factorized) {
    Var em = add_rowvec(g, linear_rows(g, z, v.ew), v.eb);
    return factorized_pairs(g, em, v.tr, v.labels);
  }
  return add_rowvec(g, linear_rows(g, z, v.w), v.b);
}

// ---------------------------------------------------------------------------
// Negative log-likelihood node with the exact forward-backward gradient:
// d loss / d P_j(y', y) = pair marginal - gold indicator.
// ---------------------------------------------------------------------------
inline Var crf_nll(Graph& g, Var pairs, const std::vector<std::size_t>& gold,
                   std::size_t labels) {
  const std::size_t s = labels + 2, start = labels, stop = labels + 1;
  const std::size_t n = pairs->value.rows();
  contract(gold.size() == n, "crf_nll: gold length mismatch");
  for (std::size_t id : gold) contract(id < labels, "crf_nll: gold label out of range");

  const double logz = log_partition(pairs->value, labels);
  const double gold_score = sequence_score(pairs->value, gold, labels);
  Var loss = g.make(Tensor::scalar(logz - gold_score), pairs->requires_grad);
  loss->backprop = [pairs, loss, gold, n, s, labels, start, stop, logz] {
    const double upstream = loss->grad.data[0];
    if (upstream == 0.0) return;
    const Tensor& p = pairs->value;
    // forward scores over real labels
    std::vector<std::vector<double>> alpha(n, std::vector<double>(labels));
    for (std::size_t y = 0; y < labels; ++y) alpha[0][y] = p.at(0, start * s + y);
    std::vector<double> scratch(labels);
    for (std::size_t j = 1; j < n; ++j) {
      for (std::size_t y = 0; y < labels; ++y) {
        for (std::size_t yp = 0; yp < labels; ++yp) {
          scratch[yp] = alpha[j - 1][yp] + p.at(j, yp * s + y);
        }
        alpha[j][y] = logsumexp(scratch);
      }
    }
    // backward scores, stop factor folded into beta at position n-1
    std::vector<std::vector<double>> beta(n, std::vector<double>(labels));
    for (std::size_t y = 0; y < labels; ++y) beta[n - 1][y] = p.at(n - 1, y * s + stop);
    for (std::size_t j = n - 1; j > 0; --j) {
      for (std::size_t yp = 0; yp < labels; ++yp) {
        for (std::size_t y = 0; y < labels; ++y) {
          scratch[y] = p.at(j, yp * s + y) + beta[j][y];
        }
        beta[j - 1][yp] = logsumexp(scratch);
      }
    }
    // marginal contributions
    for (std::size_t y = 0; y < labels; ++y) {
      pairs->grad.at(0, start * s + y) +=
          upstream * std::exp(p.at(0, start * s + y) + beta[0][y] - logz);
    }
    for (std::size_t j = 1; j < n; ++j) {
      for (std::size_t yp = 0; yp < labels; ++yp) {
        for (std::size_t y = 0; y < labels; ++y) {
          pairs->grad.at(j, yp * s + y) +=
              upstream *
              std::exp(alpha[j - 1][yp] + p.at(j, yp * s + y) + beta[j][y] - logz);
        }
      }
    }
    for (std::size_t y = 0; y < labels; ++y) {
      pairs->grad.at(n - 1, y * s + stop) +=
          upstream * std::exp(alpha[n - 1][y] + p.at(n - 1, y * s + stop) - logz);
    }
    // gold indicators
    pairs->grad.at(0, start * s + gold[0]) -= upstream;
    for (std::size_t j = 1; j < n; ++j) {
      pairs->grad.at(j, gold[j - 1] * s + gold[j]) -= upstream;
    }
    pairs->grad.at(n - 1, gold[n - 1] * s + stop) -= upstream;
  };
  return loss;
}

// Batch loss: summed per-sentence losses on one tape.
inline Var nll_loss(Graph& g, const CrfVars& v, const std::vector<Var>& z_batch,
                    const std::vector<std::vector<std::size_t>>& gold_batch) {
  contract(!z_batch.empty() && z_batch.size() == gold_batch.size(),
           "nll_loss: batch shape mismatch");
  Var total = nullptr;
  for (std::size_t i = 0; i < z_batch.size(); ++i) {
    Var pairs = build_pair_scores(g, v, z_batch[i]);
    Var loss = crf_nll(g, pairs, gold_batch[i], v.labels);
    total = total ? add(g, total, loss) : loss;
  }
  return total;
}

}  // namespace seqtag
