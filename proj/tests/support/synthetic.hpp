#pragma once

#include <string>
#include <vector>

#include "seqtag/model.hpp"

// Discrete long-range dependency corpus: each sentence carries exactly one
// marker token whose label is decided by the trigger token sitting exactly
// `kBackDistance` positions earlier. Decoy triggers elsewhere make "spot any
// trigger" insufficient; the only winning strategy is to look back 8.
namespace synthetic {

constexpr std::size_t kBackDistance = 8;
constexpr std::size_t kTriggerKinds = 4;

inline std::string filler_word(std::size_t i) { return "f" + std::to_string(i); }
inline std::string trigger_word(std::size_t i) { return "trig" + std::to_string(i); }
inline const char* marker_word() { return "mk"; }
inline std::string marker_label(std::size_t i) { return "T" + std::to_string(i); }

struct Example {
  seqtag::Sentence sentence;
  std::size_t marker_pos = 0;
  std::size_t trigger = 0;
};

inline Example make_example(seqtag::Rng& rng) {
  const std::size_t len = 9 + rng.below(6);  // 9..14
  const std::size_t marker = kBackDistance + rng.below(len - kBackDistance);
  const std::size_t trigger = rng.below(kTriggerKinds);

  Example ex;
  ex.marker_pos = marker;
  ex.trigger = trigger;
  for (std::size_t i = 0; i < len; ++i) {
    seqtag::Token t;
    if (i == marker) {
      t.surface = marker_word();
      t.tag = marker_label(trigger);
    } else if (i == marker - kBackDistance) {
      t.surface = trigger_word(trigger);
      t.tag = "O";
    } else {
      if (rng.uniform() < 0.25)
        t.surface = trigger_word(rng.below(kTriggerKinds));
      else
        t.surface = filler_word(rng.below(20));
      t.tag = "O";
    }
    ex.sentence.tokens.push_back(std::move(t));
  }
  return ex;
}

struct Dataset {
  seqtag::Corpus corpus;
  std::vector<std::size_t> marker_pos;
  std::vector<std::size_t> trigger;
};

inline Dataset make_dataset(std::size_t n, std::uint64_t seed) {
  seqtag::Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex = make_example(rng);
    d.corpus.sentences.push_back(std::move(ex.sentence));
    d.marker_pos.push_back(ex.marker_pos);
    d.trigger.push_back(ex.trigger);
  }
  return d;
}

// Fraction of sentences whose marker token got exactly its gold label.
inline double marker_accuracy(const seqtag::ModelParams& model, const Dataset& data) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.corpus.sentences.size(); ++i) {
    const seqtag::Sentence& s = data.corpus.sentences[i];
    seqtag::EncodedSentence enc = seqtag::encode_sentence(s, model.vocab, false);
    const std::vector<std::string> pred = seqtag::predict_tags(model, enc);
    if (pred[data.marker_pos[i]] == s.tokens[data.marker_pos[i]].tag) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(data.corpus.sentences.size());
}

}  // namespace synthetic
