#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqtag/config.hpp"
#include "seqtag/crf.hpp"
#include "seqtag/data.hpp"
#include "seqtag/encoder.hpp"
#include "seqtag/psa.hpp"
#include "seqtag/tensor.hpp"

namespace seqtag {

// A sentence resolved against the vocabularies. tag_ids stays empty for
// unlabeled input.
struct EncodedSentence {
  std::vector<std::size_t> word_ids;
  std::vector<std::vector<std::size_t>> char_ids;
  std::vector<std::size_t> tag_ids;
  std::vector<std::string> surfaces;
};

inline EncodedSentence encode_sentence(const Sentence& s, const Vocab& vocab,
                                       bool with_tags) {
  EncodedSentence enc;
  for (const Token& t : s.tokens) {
    enc.surfaces.push_back(t.surface);
    enc.word_ids.push_back(vocab.word_id(t.surface));
    std::vector<std::size_t> chars;
    for (char c : t.surface) chars.push_back(vocab.char_id(c));
    enc.char_ids.push_back(std::move(chars));
    if (with_tags) enc.tag_ids.push_back(vocab.tag_id(t.tag));
  }
  return enc;
}

// ---------------------------------------------------------------------------
// All trainable state of the pipeline, in one place, with a stable named
// registry shared by the optimizer, the checkpoint format, and gradient
// checking.
// ---------------------------------------------------------------------------
struct ModelParams {
  TrainConfig config;
  Vocab vocab;

  Tensor word_emb;  // word_count x word_emb dim
  Tensor char_emb;  // char_count x char_emb dim
  LstmParams char_fwd, char_bwd;
  LstmParams word_fwd, word_bwd;
  PsaParams psa1;
  FusionParams fus1;
  PsaParams psa2;
  FusionParams fus2;
  CrfParams crf;

  static ModelParams init(const TrainConfig& config, Vocab vocab,
                          const std::optional<EmbeddingTable>& pretrained, Rng& rng) {
    config.validate();
    contract(vocab.tag_count() >= 1, "model: empty tag vocabulary");
    ModelParams m;
    m.config = config;
    m.vocab = std::move(vocab);
    if (pretrained) {
      contract(pretrained->dim == config.word_emb, "model: embedding width mismatch");
      contract(pretrained->matrix.rows() == m.vocab.word_count(),
               "model: embedding row count mismatch");
      m.word_emb = pretrained->matrix;
    } else {
      m.word_emb = Tensor::zeros({m.vocab.word_count(), config.word_emb});
      const double bound = std::sqrt(3.0 / static_cast<double>(config.word_emb));
      for (double& v : m.word_emb.data) v = rng.uniform(-bound, bound);
    }
    m.char_emb = Tensor::zeros({m.vocab.char_count(), config.char_emb});
    {
      const double bound = std::sqrt(3.0 / static_cast<double>(config.char_emb));
      for (double& v : m.char_emb.data) v = rng.uniform(-bound, bound);
    }
    m.char_fwd = LstmParams::init(config.char_emb, config.char_hidden, rng);
    m.char_bwd = LstmParams::init(config.char_emb, config.char_hidden, rng);
    const std::size_t d1 = config.repr_dim();
    m.word_fwd = LstmParams::init(d1, config.word_hidden, rng);
    m.word_bwd = LstmParams::init(d1, config.word_hidden, rng);
    m.psa1 = PsaParams::init(d1, config.k, rng, config.learned_alphas);
    m.fus1 = FusionParams::init(d1, rng);
    const std::size_t d2 = config.context_dim();
    m.psa2 = PsaParams::init(d2, config.k, rng, config.learned_alphas);
    m.fus2 = FusionParams::init(d2, rng);
    m.crf = CrfParams::init(m.vocab.tag_count(), d2, config.crf_factorized, rng);
    return m;
  }

  // Stable name -> tensor map; mount() must mirror these names exactly.
  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("word_emb", &word_emb);
    out.emplace_back("char_emb", &char_emb);
    auto lstm = [&out](const std::string& prefix, LstmParams& p) {
      out.emplace_back(prefix + ".wx", &p.wx);
      out.emplace_back(prefix + ".wh", &p.wh);
      out.emplace_back(prefix + ".b", &p.b);
    };
    lstm("char_fwd", char_fwd);
    lstm("char_bwd", char_bwd);
    lstm("word_fwd", word_fwd);
    lstm("word_bwd", word_bwd);
    auto psa = [&out, this](const std::string& prefix, PsaParams& p) {
      out.emplace_back(prefix + ".w1", &p.w1);
      out.emplace_back(prefix + ".w2", &p.w2);
      out.emplace_back(prefix + ".w", &p.w);
      out.emplace_back(prefix + ".b", &p.b);
      out.emplace_back(prefix + ".w3", &p.w3);
      if (config.learned_alphas) out.emplace_back(prefix + ".alpha", &p.alpha);
    };
    auto fusion = [&out](const std::string& prefix, FusionParams& f) {
      out.emplace_back(prefix + ".wz1", &f.wz1);
      out.emplace_back(prefix + ".wz2", &f.wz2);
      out.emplace_back(prefix + ".bz1", &f.bz1);
      out.emplace_back(prefix + ".bz2", &f.bz2);
      out.emplace_back(prefix + ".wf1", &f.wf1);
      out.emplace_back(prefix + ".wf2", &f.wf2);
      out.emplace_back(prefix + ".wf3", &f.wf3);
    };
    if (!config.disable_fusion1) {
      psa("psa1", psa1);
      fusion("fus1", fus1);
    }
    if (!config.disable_fusion2) {
      psa("psa2", psa2);
      fusion("fus2", fus2);
    }
    if (config.crf_factorized) {
      out.emplace_back("crf.ew", &crf.ew);
      out.emplace_back("crf.eb", &crf.eb);
      out.emplace_back("crf.tr", &crf.tr);
    } else {
      out.emplace_back("crf.w", &crf.w);
      out.emplace_back("crf.b", &crf.b);
    }
    return out;
  }
};

struct ModelVars {
  Var word_emb = nullptr;
  Var char_emb = nullptr;
  LstmVars char_fwd, char_bwd, word_fwd, word_bwd;
  PsaVars psa1, psa2;
  FusionVars fus1, fus2;
  CrfVars crf;
};

inline ModelVars mount(Graph& g, const ModelParams& m, bool trainable = true) {
  ModelVars v;
  v.word_emb = g.leaf(m.word_emb, trainable, "word_emb");
  v.char_emb = g.leaf(m.char_emb, trainable, "char_emb");
  v.char_fwd = mount(g, m.char_fwd, "char_fwd", trainable);
  v.char_bwd = mount(g, m.char_bwd, "char_bwd", trainable);
  v.word_fwd = mount(g, m.word_fwd, "word_fwd", trainable);
  v.word_bwd = mount(g, m.word_bwd, "word_bwd", trainable);
  if (!m.config.disable_fusion1) {
    v.psa1 = mount(g, m.psa1, "psa1", trainable);
    v.fus1 = mount(g, m.fus1, "fus1", trainable);
  }
  if (!m.config.disable_fusion2) {
    v.psa2 = mount(g, m.psa2, "psa2", trainable);
    v.fus2 = mount(g, m.fus2, "fus2", trainable);
  }
  v.crf = mount(g, m.crf, "crf", trainable);
  return v;
}

struct ForwardTraces {
  AttentionTrace layer1, layer2;
};

// Full pipeline for one sentence, following the architecture order:
// [char Bi-LSTM ; word embedding] -> dropout -> fusion layer 1 ->
// word Bi-LSTM -> dropout -> fusion layer 2. Returns the CRF input matrix.
inline Var model_forward(Graph& g, const ModelVars& v, const ModelParams& m,
                         const EncodedSentence& sent, bool training, Rng& rng,
                         ForwardTraces* traces = nullptr) {
  const TrainConfig& cfg = m.config;
  const std::size_t n = sent.word_ids.size();
  contract(n >= 1, "model_forward: empty sentence");

  std::vector<Var> tokens(n);
  for (std::size_t t = 0; t < n; ++t) {
    Var chars = rows(g, v.char_emb, sent.char_ids[t]);
    Var char_rep = char_encode(g, v.char_fwd, v.char_bwd, chars);
    Var word_vec = row(g, v.word_emb, sent.word_ids[t]);
    tokens[t] = concat(g, {char_rep, word_vec});
  }
  Var x = stack_rows(g, tokens);
  x = dropout(g, x, cfg.dropout_lstm, rng, training);

  if (!cfg.disable_fusion1) {
    x = psa_layer(g, v.psa1, v.fus1, x, cfg.dropout_attn, training, rng,
                  traces ? &traces->layer1 : nullptr, !cfg.disable_mask,
                  !cfg.disable_gauss, !cfg.disable_tokenpos);
    if (traces) traces->layer1.layer = 1;
  }

  Var h = bilstm(g, v.word_fwd, v.word_bwd, x);
  h = dropout(g, h, cfg.dropout_lstm, rng, training);

  if (!cfg.disable_fusion2) {
    h = psa_layer(g, v.psa2, v.fus2, h, cfg.dropout_attn, training, rng,
                  traces ? &traces->layer2 : nullptr, !cfg.disable_mask,
                  !cfg.disable_gauss, !cfg.disable_tokenpos);
    if (traces) traces->layer2.layer = 2;
  }
  if (traces) {
    for (AttentionTrace* t : {&traces->layer1, &traces->layer2}) {
      t->tokens = sent.surfaces;
    }
  }
  return h;
}

// Summed CRF negative log-likelihood of a batch on one tape.
inline Var model_loss(Graph& g, const ModelVars& v, const ModelParams& m,
                      const std::vector<const EncodedSentence*>& batch, bool training,
                      Rng& rng) {
  contract(!batch.empty(), "model_loss: empty batch");
  Var total = nullptr;
  for (const EncodedSentence* sent : batch) {
    contract(!sent->tag_ids.empty(), "model_loss: unlabeled sentence");
    Var z = model_forward(g, v, m, *sent, training, rng);
    Var pairs = build_pair_scores(g, v.crf, z);
    Var loss = crf_nll(g, pairs, sent->tag_ids, v.crf.labels);
    total = total ? add(g, total, loss) : loss;
  }
  return total;
}

// Inference: Viterbi labels for one sentence, dropout off.
inline std::vector<std::size_t> predict(const ModelParams& m, const EncodedSentence& sent,
                                        ForwardTraces* traces = nullptr) {
  Graph g;
  ModelVars v = mount(g, m, false);
  Rng rng(0);  // never consulted: training=false skips every dropout draw
  Var z = model_forward(g, v, m, sent, false, rng, traces);
  Var pairs = build_pair_scores(g, v.crf, z);
  return viterbi_decode(pairs->value, m.crf.labels).labels;
}

inline std::vector<std::string> predict_tags(const ModelParams& m,
                                             const EncodedSentence& sent,
                                             ForwardTraces* traces = nullptr) {
  std::vector<std::string> out;
  for (std::size_t id : predict(m, sent, traces)) out.push_back(m.vocab.tag_name(id));
  return out;
}

}  // namespace seqtag
