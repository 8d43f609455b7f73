#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "seqtag/rng.hpp"
#include "seqtag/tensor.hpp"

namespace seqtag {

enum class Task { ner, chunk, pos };

inline Task task_from_string(const std::string& s) {
  if (s == "ner") return Task::ner;
  if (s == "chunk") return Task::chunk;
  if (s == "pos") return Task::pos;
  throw std::invalid_argument("unknown task: " + s);
}
inline const char* task_name(Task t) {
  switch (t) {
    case Task::ner: return "ner";
    case Task::chunk: return "chunk";
    default: return "pos";
  }
}

struct EmptyCorpus : std::runtime_error {
  EmptyCorpus() : std::runtime_error("corpus contains no sentences") {}
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Token {
  std::string surface;
  std::string tag;
};

struct Sentence {
  std::vector<Token> tokens;
  std::size_t size() const { return tokens.size(); }
};

struct Corpus {
  std::vector<Sentence> sentences;
  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }
};

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// ---------------------------------------------------------------------------
// CoNLL column reader. Blank lines separate sentences; lines whose first
// field is -DOCSTART- are document markers and dropped. tag_col -1 selects
// the last column of each line.
// ---------------------------------------------------------------------------
inline Corpus read_conll_stream(std::istream& in, int token_col = 0, int tag_col = -1) {
  Corpus corpus;
  Sentence cur;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      corpus.sentences.push_back(std::move(cur));
      cur = Sentence{};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields_in(line);
    std::vector<std::string> fields;
    std::string f;
    while (fields_in >> f) fields.push_back(f);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields[0] == "-DOCSTART-") continue;
    const int need = tag_col < 0 ? std::max(token_col, 1) : std::max(token_col, tag_col);
    if (static_cast<int>(fields.size()) <= need) {
      throw ParseError("line " + std::to_string(lineno) + ": expected at least " +
                       std::to_string(need + 1) + " fields, got " +
                       std::to_string(fields.size()));
    }
    const std::string& surface = fields[static_cast<std::size_t>(token_col)];
    const std::string& tag =
        tag_col < 0 ? fields.back() : fields[static_cast<std::size_t>(tag_col)];
    cur.tokens.push_back({surface, tag});
  }
  flush();
  if (corpus.sentences.empty()) throw EmptyCorpus();
  return corpus;
}

inline Corpus read_conll(const std::string& path, int token_col = 0, int tag_col = -1) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return read_conll_stream(in, token_col, tag_col);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_conll(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) out << t.surface << ' ' << t.tag << '\n';
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tag-scheme handling. Tags are "O" or PREFIX-TYPE with prefix in
// {B, I, E, S}. CoNLL03 ships IOB1, which is normalized to BIO before the
// BIOES conversion.
// ---------------------------------------------------------------------------
inline std::pair<char, std::string> split_tag(const std::string& tag) {
  if (tag == "O") return {'O', ""};
  if (tag.size() >= 3 && tag[1] == '-' &&
      (tag[0] == 'B' || tag[0] == 'I' || tag[0] == 'E' || tag[0] == 'S')) {
    return {tag[0], tag.substr(2)};
  }
  throw std::invalid_argument("malformed tag: " + tag);
}

// IOB1 marks a span start with I- unless it abuts a previous same-type span;
// BIO marks every span start with B-.
inline std::vector<std::string> iob1_to_bio(const std::vector<std::string>& tags) {
  std::vector<std::string> out = tags;
  std::string prev_type;
  char prev_prefix = 'O';
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto [p, type] = split_tag(out[i]);
    if (p == 'I' && (prev_prefix == 'O' || prev_type != type)) {
      out[i] = "B-" + type;
      p = 'B';
    }
    prev_prefix = p;
    prev_type = type;
  }
  return out;
}

// BIO -> BIOES. An I- that does not legally continue the open span is
// repaired to B- (counted via `repairs`).
inline std::vector<std::string> to_bioes(const std::vector<std::string>& tags,
                                         std::size_t* repairs = nullptr) {
  std::vector<std::string> bio = tags;
  std::string prev_type;
  char prev_prefix = 'O';
  for (auto& t : bio) {
    auto [p, type] = split_tag(t);
    if (p == 'E' || p == 'S') throw std::invalid_argument("to_bioes: input not BIO: " + t);
    if (p == 'I' && (prev_prefix == 'O' || prev_type != type)) {
      t = "B-" + type;
      p = 'B';
      if (repairs) ++*repairs;
    }
    prev_prefix = p;
    prev_type = type;
  }
  std::vector<std::string> out(bio.size());
  const std::size_t n = bio.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto [p, type] = split_tag(bio[i]);
    if (p == 'O') {
      out[i] = "O";
      continue;
    }
    const bool next_continues = i + 1 < n && [&] {
      auto [np, ntype] = split_tag(bio[i + 1]);
      return np == 'I' && ntype == type;
    }();
    if (p == 'B') {
      out[i] = (next_continues ? "B-" : "S-") + type;
    } else {  // I
      out[i] = (next_continues ? "I-" : "E-") + type;
    }
  }
  return out;
}

struct Span {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::string type;
  auto operator<=>(const Span&) const = default;
};

// Tolerant span decoder handling BIO and BIOES alike: B/S open, I/E extend a
// same-type open span (or open a new one), E/S close, O and type changes
// close whatever is open.
inline std::set<Span> spans(const std::vector<std::string>& tags) {
  std::set<Span> out;
  std::optional<Span> open;
  auto close = [&] {
    if (open) {
      out.insert(*open);
      open.reset();
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto [p, type] = split_tag(tags[i]);
    switch (p) {
      case 'O':
        close();
        break;
      case 'B':
        close();
        open = Span{i, i + 1, type};
        break;
      case 'S':
        close();
        out.insert(Span{i, i + 1, type});
        break;
      case 'I':
        if (open && open->type == type) {
          open->end = i + 1;
        } else {
          close();
          open = Span{i, i + 1, type};
        }
        break;
      case 'E':
        if (open && open->type == type) {
          open->end = i + 1;
          close();
        } else {
          close();
          out.insert(Span{i, i + 1, type});
        }
        break;
    }
  }
  close();
  return out;
}

// ---------------------------------------------------------------------------
// Vocabularies. Word ids are over lowercased surfaces (the embedding path);
// char ids keep original case so the character encoder sees capitalization.
// The tag vocabulary is closed over every split handed to the builder.
// ---------------------------------------------------------------------------
struct Vocab {
  static constexpr std::size_t word_pad = 0;
  static constexpr std::size_t word_unk = 1;
  static constexpr std::size_t char_unk = 0;

  std::unordered_map<std::string, std::size_t> word_ids;
  std::unordered_map<char, std::size_t> char_ids;
  std::unordered_map<std::string, std::size_t> tag_ids;
  std::vector<std::string> words;  // id -> word, including reserved
  std::vector<std::string> tags;   // id -> tag

  static Vocab build(const std::vector<const Corpus*>& tag_splits, const Corpus& train) {
    Vocab v;
    v.words = {"<pad>", "<unk>"};
    v.word_ids = {{"<pad>", word_pad}, {"<unk>", word_unk}};
    v.char_ids = {};
    v.char_ids[static_cast<char>(0)] = char_unk;  // placeholder slot for unknown
    for (const auto& s : train.sentences) {
      for (const auto& t : s.tokens) {
        const std::string w = lower(t.surface);
        if (!v.word_ids.count(w)) {
          v.word_ids[w] = v.words.size();
          v.words.push_back(w);
        }
        for (char c : t.surface) {
          if (!v.char_ids.count(c)) v.char_ids[c] = v.char_ids.size();
        }
      }
    }
    for (const Corpus* c : tag_splits) {
      for (const auto& s : c->sentences) {
        for (const auto& t : s.tokens) {
          if (!v.tag_ids.count(t.tag)) {
            v.tag_ids[t.tag] = v.tags.size();
            v.tags.push_back(t.tag);
          }
        }
      }
    }
    return v;
  }

  // test-friendly construction from explicit lists
  static Vocab from_lists(const std::vector<std::string>& word_list,
                          const std::vector<std::string>& tag_list) {
    Vocab v;
    v.words = {"<pad>", "<unk>"};
    v.word_ids = {{"<pad>", word_pad}, {"<unk>", word_unk}};
    v.char_ids[static_cast<char>(0)] = char_unk;
    for (const auto& w : word_list) {
      const std::string lw = lower(w);
      if (!v.word_ids.count(lw)) {
        v.word_ids[lw] = v.words.size();
        v.words.push_back(lw);
      }
      for (char c : w) {
        if (!v.char_ids.count(c)) v.char_ids[c] = v.char_ids.size();
      }
    }
    for (const auto& t : tag_list) {
      if (!v.tag_ids.count(t)) {
        v.tag_ids[t] = v.tags.size();
        v.tags.push_back(t);
      }
    }
    return v;
  }

  std::size_t word_id(const std::string& surface) const {
    auto it = word_ids.find(lower(surface));
    return it == word_ids.end() ? word_unk : it->second;
  }
  std::size_t char_id(char c) const {
    auto it = char_ids.find(c);
    return it == char_ids.end() ? char_unk : it->second;
  }
  std::size_t tag_id(const std::string& tag) const {
    auto it = tag_ids.find(tag);
    if (it == tag_ids.end()) throw std::invalid_argument("tag outside vocabulary: " + tag);
    return it->second;
  }
  const std::string& tag_name(std::size_t id) const { return tags.at(id); }
  std::size_t word_count() const { return words.size(); }
  std::size_t char_count() const { return char_ids.size(); }
  std::size_t tag_count() const { return tags.size(); }
};

// ---------------------------------------------------------------------------
// Pretrained embedding loading. Every row starts uniform in ±sqrt(3/dim);
// rows whose vocab word appears in the file (exact match first, lowercase
// second) are overwritten with the file values.
// ---------------------------------------------------------------------------
struct EmbeddingTable {
  Tensor matrix;  // word_count x dim
  std::size_t dim = 0;
  std::size_t pretrained_hits = 0;
};

inline EmbeddingTable load_embeddings_stream(std::istream& in, std::size_t dim,
                                             const Vocab& vocab, Rng& rng) {
  std::unordered_map<std::string, std::vector<double>> file_rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.size() != dim) {
      throw ParseError("embeddings line " + std::to_string(lineno) + ": expected " +
                       std::to_string(dim) + " values, got " + std::to_string(vals.size()));
    }
    file_rows[tok] = std::move(vals);
  }
  EmbeddingTable table;
  table.dim = dim;
  table.matrix = Tensor::zeros({vocab.word_count(), dim});
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  for (double& x : table.matrix.data) x = rng.uniform(-bound, bound);
  for (std::size_t id = 0; id < vocab.word_count(); ++id) {
    const std::string& w = vocab.words[id];
    auto it = file_rows.find(w);
    if (it == file_rows.end()) it = file_rows.find(lower(w));
    if (it == file_rows.end()) continue;
    ++table.pretrained_hits;
    std::copy(it->second.begin(), it->second.end(), table.matrix.data.begin() + id * dim);
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path, std::size_t dim,
                                      const Vocab& vocab, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_embeddings_stream(in, dim, vocab, rng);
}

// ---------------------------------------------------------------------------
// Metrics: span precision/recall/F1 for ner/chunk, token accuracy always.
// Sentence-length buckets mirror the breakdown used for reporting.
// ---------------------------------------------------------------------------
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double token_accuracy = 0.0;
  std::map<std::string, Metrics> by_length;  // empty inside bucket entries
};

inline const char* length_bucket(std::size_t n) {
  if (n < 5) return "1-4";
  if (n < 10) return "5-9";
  if (n < 20) return "10-19";
  if (n < 40) return "20-39";
  return "40+";
}

namespace detail {

struct Tally {
  std::size_t gold = 0, predicted = 0, correct = 0;
  std::size_t tokens = 0, token_hits = 0;

  void add(const std::vector<std::string>& g, const std::vector<std::string>& p, Task task) {
    tokens += g.size();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == p[i]) ++token_hits;
    }
    if (task == Task::pos) return;
    const std::set<Span> gs = spans(g), ps = spans(p);
    gold += gs.size();
    predicted += ps.size();
    for (const Span& s : ps) {
      if (gs.count(s)) ++correct;
    }
  }

  Metrics finish(Task task) const {
    Metrics m;
    m.token_accuracy =
        tokens == 0 ? 0.0 : static_cast<double>(token_hits) / static_cast<double>(tokens);
    if (task == Task::pos) {
      m.precision = m.recall = m.f1 = m.token_accuracy;
      return m;
    }
    m.precision =
        predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
    m.recall = gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
  }
};

}  // namespace detail

inline Metrics evaluate(const std::vector<std::vector<std::string>>& gold,
                        const std::vector<std::vector<std::string>>& pred, Task task) {
  contract(gold.size() == pred.size(), "evaluate: sentence count mismatch");
  detail::Tally total;
  std::map<std::string, detail::Tally> buckets;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    contract(gold[i].size() == pred[i].size(), "evaluate: sentence length mismatch");
    total.add(gold[i], pred[i], task);
    buckets[length_bucket(gold[i].size())].add(gold[i], pred[i], task);
  }
  Metrics m = total.finish(task);
  for (const auto& [name, tally] : buckets) m.by_length[name] = tally.finish(task);
  return m;
}

inline std::string metrics_text(const Metrics& m) {
  std::ostringstream out;
  out.precision(6);
  out << "precision=" << m.precision << "\nrecall=" << m.recall << "\nf1=" << m.f1
      << "\ntoken_accuracy=" << m.token_accuracy << "\n";
  for (const auto& [bucket, bm] : m.by_length) {
    out << "length[" << bucket << "].f1=" << bm.f1 << "\nlength[" << bucket
        << "].token_accuracy=" << bm.token_accuracy << "\n";
  }
  return out.str();
}

inline nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j{{"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"token_accuracy", m.token_accuracy}};
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [bucket, bm] : m.by_length) {
    buckets[bucket] = {{"precision", bm.precision},
                       {"recall", bm.recall},
                       {"f1", bm.f1},
                       {"token_accuracy", bm.token_accuracy}};
  }
  j["by_length"] = buckets;
  return j;
}

}  // namespace seqtag
