#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "seqtag/data.hpp"

namespace seqtag {

// All knobs of the training pipeline. defaults(task) carries the published
// experimental setting; everything is overridable from file or flags.
struct TrainConfig {
  Task task = Task::ner;

  // optimization
  double eta0 = 0.015;   // 0.01 for pos, 0.015 for ner/chunk
  double rho = 0.05;     // lr decay: eta0 / (1 + rho * epoch)
  double momentum = 0.9;
  std::size_t batch_size = 10;
  double clip = 5.0;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 1;

  // regularization
  double dropout_lstm = 0.55;  // word Bi-LSTM input and output
  double dropout_attn = 0.2;   // attended context inside each psa layer

  // architecture
  std::size_t word_emb = 100;
  std::size_t char_emb = 30;
  std::size_t char_hidden = 100;
  std::size_t word_hidden = 300;
  std::size_t k = 10;  // attention window; epsilon and clip radius derive from it

  // positional-attention variants
  bool learned_alphas = false;  // three logits, softmax-normalized, instead of fixed 1/3
  bool crf_factorized = false;  // emission + transition split instead of pair-indexed weights

  // ablation switches
  bool disable_mask = false;      // keep the diagonal in attention support
  bool disable_gauss = false;     // drop the distance penalty term
  bool disable_tokenpos = false;  // drop the learned relative-position term
  bool disable_fusion1 = false;   // bypass the first self-attention fusion layer
  bool disable_fusion2 = false;   // bypass the second

  std::size_t length_cap = 200;  // warn (never truncate) beyond this

  double epsilon() const { return static_cast<double>(k) / 2.0; }
  std::size_t radius() const { return k; }
  std::size_t repr_dim() const { return word_emb + 2 * char_hidden; }
  std::size_t context_dim() const { return 2 * word_hidden; }

  static TrainConfig defaults(Task task) {
    TrainConfig c;
    c.task = task;
    c.eta0 = task == Task::pos ? 0.01 : 0.015;
    return c;
  }

  void validate() const {
    contract(eta0 > 0.0, "config: eta0 must be positive");
    contract(rho >= 0.0, "config: rho must be nonnegative");
    contract(momentum >= 0.0 && momentum < 1.0, "config: momentum must be in [0,1)");
    contract(batch_size >= 1, "config: batch_size must be at least 1");
    contract(clip > 0.0, "config: clip must be positive");
    contract(dropout_lstm >= 0.0 && dropout_lstm < 1.0, "config: dropout_lstm in [0,1)");
    contract(dropout_attn >= 0.0 && dropout_attn < 1.0, "config: dropout_attn in [0,1)");
    contract(patience >= 1, "config: patience must be at least 1");
    contract(max_epochs >= 1, "config: max_epochs must be at least 1");
    contract(word_emb >= 1 && char_emb >= 1 && char_hidden >= 1 && word_hidden >= 1,
             "config: dims must be positive");
    contract(k >= 1, "config: window size must be at least 1");
  }
};

inline nlohmann::json config_json(const TrainConfig& c) {
  return nlohmann::json{{"task", task_name(c.task)},
                        {"eta0", c.eta0},
                        {"rho", c.rho},
                        {"momentum", c.momentum},
                        {"batch_size", c.batch_size},
                        {"clip", c.clip},
                        {"patience", c.patience},
                        {"max_epochs", c.max_epochs},
                        {"seed", c.seed},
                        {"dropout_lstm", c.dropout_lstm},
                        {"dropout_attn", c.dropout_attn},
                        {"word_emb", c.word_emb},
                        {"char_emb", c.char_emb},
                        {"char_hidden", c.char_hidden},
                        {"word_hidden", c.word_hidden},
                        {"k", c.k},
                        {"learned_alphas", c.learned_alphas},
                        {"crf_factorized", c.crf_factorized},
                        {"disable_mask", c.disable_mask},
                        {"disable_gauss", c.disable_gauss},
                        {"disable_tokenpos", c.disable_tokenpos},
                        {"disable_fusion1", c.disable_fusion1},
                        {"disable_fusion2", c.disable_fusion2},
                        {"length_cap", c.length_cap}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.task = task_from_string(j.at("task").get<std::string>());
  c.eta0 = j.at("eta0").get<double>();
  c.rho = j.at("rho").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.clip = j.at("clip").get<double>();
  c.patience = j.at("patience").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dropout_lstm = j.at("dropout_lstm").get<double>();
  c.dropout_attn = j.at("dropout_attn").get<double>();
  c.word_emb = j.at("word_emb").get<std::size_t>();
  c.char_emb = j.at("char_emb").get<std::size_t>();
  c.char_hidden = j.at("char_hidden").get<std::size_t>();
  c.word_hidden = j.at("word_hidden").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.learned_alphas = j.value("learned_alphas", false);
  c.crf_factorized = j.value("crf_factorized", false);
  c.disable_mask = j.value("disable_mask", false);
  c.disable_gauss = j.value("disable_gauss", false);
  c.disable_tokenpos = j.value("disable_tokenpos", false);
  c.disable_fusion1 = j.value("disable_fusion1", false);
  c.disable_fusion2 = j.value("disable_fusion2", false);
  c.length_cap = j.value("length_cap", std::size_t{200});
  return c;
}

// Config files come as JSON (first non-space char '{') or key=value lines.
inline TrainConfig load_config(const std::string& path, Task fallback_task) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j = nlohmann::json::parse(text);
    nlohmann::json base = config_json(TrainConfig::defaults(
        j.contains("task") ? task_from_string(j["task"].get<std::string>())
                           : fallback_task));
    base.update(j);
    return config_from_json(base);
  }
  TrainConfig c = TrainConfig::defaults(fallback_task);
  nlohmann::json base = config_json(c);
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
      }
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!base.contains(key)) {
      throw ParseError("config line " + std::to_string(lineno) + ": unknown key " + key);
    }
    if (base[key].is_string()) {
      base[key] = val;
    } else if (base[key].is_boolean()) {
      base[key] = (val == "true" || val == "1");
    } else if (base[key].is_number_unsigned()) {
      base[key] = std::stoull(val);
    } else {
      base[key] = std::stod(val);
    }
  }
  return config_from_json(base);
}

}  // namespace seqtag
