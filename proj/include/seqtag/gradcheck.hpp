#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "seqtag/model.hpp"

namespace seqtag {

// Reduced-width configuration for gradient verification. Learned alphas are
// switched on so the trade-off logits are covered as a parameter group.
inline TrainConfig gradcheck_config(double width_scale = 1.0) {
  contract(width_scale > 0.0, "gradcheck: width scale must be positive");
  auto scaled = [width_scale](std::size_t base) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                        static_cast<double>(base) * width_scale)));
  };
  TrainConfig cfg = TrainConfig::defaults(Task::ner);
  cfg.word_emb = scaled(8);
  cfg.char_emb = scaled(4);
  cfg.char_hidden = scaled(6);
  cfg.word_hidden = scaled(10);
  cfg.k = 3;
  cfg.learned_alphas = true;
  return cfg;
}

// Two short sentences over a 4-label set; every architectural path (char
// encoder, both fusion layers, word Bi-LSTM, CRF) sees nonzero gradient.
inline Corpus gradcheck_corpus() {
  Corpus c;
  auto sentence = [](std::initializer_list<std::pair<const char*, const char*>> toks) {
    Sentence s;
    for (const auto& [w, t] : toks) s.tokens.push_back({w, t});
    return s;
  };
  c.sentences.push_back(sentence({{"rivers", "B-X"},
                                  {"bend", "I-X"},
                                  {"north", "O"},
                                  {"of", "O"},
                                  {"quiet", "B-Y"},
                                  {"towns", "O"}}));
  c.sentences.push_back(sentence({{"storms", "B-Y"}, {"pass", "O"}}));
  return c;
}

struct GroupReport {
  std::string name;
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_rel = 0.0;
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GroupReport> groups;
  bool pass = true;
  double seconds = 0.0;
};

namespace detail {

inline double gc_rel_err(double a, double b, double atol = 1e-8) {
  const double diff = std::fabs(a - b);
  const double scale = std::max(std::fabs(a), std::fabs(b));
  if (scale < atol) return 0.0;
  return diff / scale;
}

}  // namespace detail

// Full-pipeline check: analytic gradients of the summed CRF loss against
// central finite differences, sampled per parameter group. A group passes
// when at least 99% of its sampled coordinates agree within `tol`.
// `corrupt_group` flips the sign of matching analytic gradients — a seeded
// bug the checker must catch and name.
inline GradcheckReport gradcheck_pipeline(const TrainConfig& cfg, std::uint64_t seed,
                                          const std::string& corrupt_group = "",
                                          double tol = 1e-4, double h = 1e-3,
                                          std::size_t coords_per_group = 24) {
  const auto t_start = std::chrono::steady_clock::now();
  Corpus corpus = gradcheck_corpus();
  Vocab vocab = Vocab::build({&corpus}, corpus);
  Rng rng(seed);
  ModelParams model = ModelParams::init(cfg, vocab, std::nullopt, rng);

  std::vector<EncodedSentence> enc;
  for (const auto& s : corpus.sentences) enc.push_back(encode_sentence(s, vocab, true));
  std::vector<const EncodedSentence*> batch;
  for (const auto& e : enc) batch.push_back(&e);

  auto loss_value = [&]() {
    Graph g;
    ModelVars vars = mount(g, model, false);
    Rng unused(0);
    return model_loss(g, vars, model, batch, false, unused)->value.at(0);
  };

  GradMap analytic;
  {
    Graph g;
    ModelVars vars = mount(g, model, true);
    Rng unused(0);
    Var loss = model_loss(g, vars, model, batch, false, unused);
    g.backward(loss);
    analytic = g.gradients();
  }

  auto matches_corrupt = [&corrupt_group](const std::string& name) {
    if (corrupt_group.empty()) return false;
    auto lower = [](std::string s) {
      std::transform(s.begin(), s.end(), s.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      return s;
    };
    return lower(name).find(lower(corrupt_group)) != std::string::npos;
  };

  GradcheckReport report;
  for (auto& [name, tensor] : model.named_tensors()) {
    auto it = analytic.find(name);
    contract(it != analytic.end(), ("gradcheck: no analytic gradient for " + name).c_str());
    Tensor grad = it->second;
    if (matches_corrupt(name))
      for (double& v : grad.data) v = -v;

    GroupReport gr;
    gr.name = name;
    const std::size_t size = tensor->size();
    const std::size_t stride = std::max<std::size_t>(1, size / coords_per_group);
    for (std::size_t i = 0; i < size; i += stride) {
      const double saved = tensor->data[i];
      tensor->data[i] = saved + h;
      const double up = loss_value();
      tensor->data[i] = saved - h;
      const double down = loss_value();
      tensor->data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double rel = detail::gc_rel_err(grad.data[i], fd);
      ++gr.checked;
      if (rel > tol) ++gr.failed;
      if (rel > gr.worst_rel) {
        gr.worst_rel = rel;
        gr.worst_index = i;
      }
    }
    gr.pass = static_cast<double>(gr.checked - gr.failed) >=
              0.99 * static_cast<double>(gr.checked);
    report.pass = report.pass && gr.pass;
    report.groups.push_back(std::move(gr));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

inline std::string gradcheck_text(const GradcheckReport& r) {
  std::ostringstream out;
  out.setf(std::ios::scientific);
  out.precision(3);
  for (const auto& g : r.groups) {
    out << (g.pass ? "ok  " : "FAIL") << "  " << g.name << "  worst_rel=" << g.worst_rel
        << "  coords=" << g.checked;
    if (g.failed) out << "  over_tol=" << g.failed;
    out << '\n';
  }
  out << (r.pass ? "gradcheck passed" : "gradcheck FAILED:");
  if (!r.pass) {
    for (const auto& g : r.groups)
      if (!g.pass) out << ' ' << g.name;
  }
  char secs[32];
  std::snprintf(secs, sizeof(secs), "%.2f", r.seconds);
  out << "  (" << secs << " s)\n";
  return out.str();
}

}  // namespace seqtag
