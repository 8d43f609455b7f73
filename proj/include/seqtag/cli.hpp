#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqtag/checkpoint.hpp"
#include "seqtag/gradcheck.hpp"
#include "seqtag/trainer.hpp"

namespace seqtag {
namespace cli {

// Exit codes: 0 success, 1 check/metric failure, 2 usage or bad input.

// ---------------------------------------------------------------------------
// Lenient CoNLL reader for tagging: keeps the original line text so the
// predicted tag can be appended as a new last column. Input may be unlabeled.
// ---------------------------------------------------------------------------
struct RawSentence {
  std::vector<std::string> lines;   // original text, CR stripped
  std::vector<std::string> tokens;  // first whitespace field of each line
};

inline std::vector<RawSentence> read_raw_sentences(std::istream& in) {
  std::vector<RawSentence> out;
  RawSentence cur;
  std::string line;
  auto flush = [&] {
    if (!cur.tokens.empty()) out.push_back(std::move(cur));
    cur = RawSentence{};
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) {
      flush();
      continue;
    }
    if (first == "-DOCSTART-") continue;
    cur.lines.push_back(line);
    cur.tokens.push_back(first);
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Flag plumbing shared by train and sweep: every hyperparameter flag, applied
// over defaults(task) and an optional config file, explicit flags winning.
// ---------------------------------------------------------------------------
struct TrainFlags {
  std::string train_path, dev_path, task = "ner";
  std::string config_path, embeddings_path;
  double eta0 = 0, rho = 0, momentum = 0, clip = 0, dropout_lstm = 0, dropout_attn = 0;
  std::uint64_t seed = 0;
  std::size_t batch = 0, patience = 0, epochs = 0, k = 0, length_cap = 0;
  std::size_t word_emb = 0, char_emb = 0, char_hidden = 0, word_hidden = 0;
  bool learned_alphas = false, crf_factorized = false;
  bool disable_mask = false, disable_gauss = false, disable_tokenpos = false;
  bool disable_fusion1 = false, disable_fusion2 = false;
};

inline void add_train_flags(CLI::App* cmd, TrainFlags& f, bool require_corpora) {
  auto* train_opt = cmd->add_option("--train", f.train_path, "training corpus (CoNLL)");
  auto* dev_opt = cmd->add_option("--dev", f.dev_path, "development corpus (CoNLL)");
  auto* task_opt = cmd->add_option("--task", f.task, "task: ner|chunk|pos")
                       ->check(CLI::IsMember({"ner", "chunk", "pos"}));
  if (require_corpora) {
    train_opt->required();
    dev_opt->required();
    task_opt->required();
  }
  cmd->add_option("--config", f.config_path, "config file (JSON or key=value)");
  cmd->add_option("--embeddings", f.embeddings_path, "pretrained word embeddings (text)");
  cmd->add_option("--lr", f.eta0, "initial learning rate");
  cmd->add_option("--rho", f.rho, "learning-rate decay");
  cmd->add_option("--momentum", f.momentum, "momentum");
  cmd->add_option("--clip", f.clip, "gradient clipping threshold");
  cmd->add_option("--dropout", f.dropout_lstm, "dropout at the Bi-LSTM boundaries");
  cmd->add_option("--dropout-attn", f.dropout_attn, "dropout inside fusion layers");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--batch", f.batch, "batch size");
  cmd->add_option("--patience", f.patience, "early-stopping patience");
  cmd->add_option("--epochs", f.epochs, "maximum epochs");
  cmd->add_option("--k", f.k, "attention window size (epsilon=k/2, radius=k)");
  cmd->add_option("--length-cap", f.length_cap, "drop training sentences longer than this");
  cmd->add_option("--word-emb", f.word_emb, "word embedding width");
  cmd->add_option("--char-emb", f.char_emb, "char embedding width");
  cmd->add_option("--char-hidden", f.char_hidden, "char LSTM hidden width");
  cmd->add_option("--word-hidden", f.word_hidden, "word LSTM hidden width");
  cmd->add_flag("--learned-alphas", f.learned_alphas, "learn attention trade-off weights");
  cmd->add_flag("--crf-factorized", f.crf_factorized,
                "use emission+transition CRF parameterization");
  cmd->add_flag("--disable-mask", f.disable_mask, "ablation: no self-masking");
  cmd->add_flag("--disable-gauss", f.disable_gauss, "ablation: no Gaussian bias");
  cmd->add_flag("--disable-tokenpos", f.disable_tokenpos,
                "ablation: no token-position bias");
  cmd->add_flag("--disable-fusion1", f.disable_fusion1, "ablation: no fusion layer 1");
  cmd->add_flag("--disable-fusion2", f.disable_fusion2, "ablation: no fusion layer 2");
}

inline TrainConfig resolve_config(const CLI::App* cmd, const TrainFlags& f) {
  const Task task = task_from_string(f.task);
  TrainConfig cfg = TrainConfig::defaults(task);
  if (cmd->count("--config")) {
    if (!std::ifstream(f.config_path))
      throw ParseError("cannot open config " + f.config_path);
    cfg = load_config(f.config_path, task);
  }
  if (cmd->count("--task")) cfg.task = task;
  if (cmd->count("--lr")) cfg.eta0 = f.eta0;
  if (cmd->count("--rho")) cfg.rho = f.rho;
  if (cmd->count("--momentum")) cfg.momentum = f.momentum;
  if (cmd->count("--clip")) cfg.clip = f.clip;
  if (cmd->count("--dropout")) cfg.dropout_lstm = f.dropout_lstm;
  if (cmd->count("--dropout-attn")) cfg.dropout_attn = f.dropout_attn;
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (cmd->count("--batch")) cfg.batch_size = f.batch;
  if (cmd->count("--patience")) cfg.patience = f.patience;
  if (cmd->count("--epochs")) cfg.max_epochs = f.epochs;
  if (cmd->count("--k")) cfg.k = f.k;
  if (cmd->count("--length-cap")) cfg.length_cap = f.length_cap;
  if (cmd->count("--word-emb")) cfg.word_emb = f.word_emb;
  if (cmd->count("--char-emb")) cfg.char_emb = f.char_emb;
  if (cmd->count("--char-hidden")) cfg.char_hidden = f.char_hidden;
  if (cmd->count("--word-hidden")) cfg.word_hidden = f.word_hidden;
  if (cmd->count("--learned-alphas")) cfg.learned_alphas = f.learned_alphas;
  if (cmd->count("--crf-factorized")) cfg.crf_factorized = f.crf_factorized;
  if (cmd->count("--disable-mask")) cfg.disable_mask = f.disable_mask;
  if (cmd->count("--disable-gauss")) cfg.disable_gauss = f.disable_gauss;
  if (cmd->count("--disable-tokenpos")) cfg.disable_tokenpos = f.disable_tokenpos;
  if (cmd->count("--disable-fusion1")) cfg.disable_fusion1 = f.disable_fusion1;
  if (cmd->count("--disable-fusion2")) cfg.disable_fusion2 = f.disable_fusion2;
  cfg.validate();
  return cfg;
}

inline Corpus read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_conll_stream(in);
}

inline std::optional<EmbeddingTable> maybe_load_embeddings(const std::string& path,
                                                           const TrainConfig& cfg,
                                                           const Corpus& train_corpus,
                                                           const Corpus& dev_corpus) {
  if (path.empty()) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  Vocab vocab = Vocab::build({&train_corpus, &dev_corpus}, train_corpus);
  Rng rng(cfg.seed);
  return load_embeddings_stream(in, cfg.word_emb, vocab, rng);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
struct TrainCmd {
  TrainFlags flags;
  std::string out_path, log_path;
  bool quiet = false;
};

inline int run_train(const CLI::App* cmd, const TrainCmd& t) {
  const Corpus train_corpus = read_corpus_file(t.flags.train_path);
  const Corpus dev_corpus = read_corpus_file(t.flags.dev_path);
  const TrainConfig cfg = resolve_config(cmd, t.flags);
  const std::optional<EmbeddingTable> pretrained =
      maybe_load_embeddings(t.flags.embeddings_path, cfg, train_corpus, dev_corpus);

  const std::string log_path = t.log_path.empty() ? t.out_path + ".log.jsonl" : t.log_path;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw ParseError("cannot open epoch log for writing: " + log_path);

  auto on_epoch = [&t](const EpochLogEntry& e) {
    if (t.quiet) return;
    std::fprintf(stderr, "epoch %zu  loss %.4f  dev %.4f%s  (%.1fs)\n", e.epoch,
                 e.train_loss, e.dev_metric, e.improved ? " *" : "", e.seconds);
  };
  TrainResult r = train(cfg, train_corpus, dev_corpus, pretrained, &log, nullptr, 0.0,
                        on_epoch);
  CheckpointMeta meta{r.best_metric, r.best_epoch};
  save_checkpoint(t.out_path, r.best, meta);
  std::cout << "best_dev_metric=" << r.best_metric << " best_epoch=" << r.best_epoch
            << " epochs_run=" << r.epochs_run << " checkpoint=" << t.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// tag
// ---------------------------------------------------------------------------
struct TagCmd {
  std::string model_path, input_path, out_path = "-";
};

inline int run_tag(const TagCmd& t) {
  LoadedCheckpoint lc = load_checkpoint(t.model_path);
  std::ifstream in(t.input_path);
  if (!in) throw ParseError("cannot open " + t.input_path);
  const std::vector<RawSentence> sentences = read_raw_sentences(in);

  std::ostringstream body;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const RawSentence& s = sentences[i];
    Sentence plain;
    for (const std::string& tok : s.tokens) plain.tokens.push_back({tok, ""});
    EncodedSentence enc = encode_sentence(plain, lc.model.vocab, false);
    const std::vector<std::string> tags = predict_tags(lc.model, enc);
    for (std::size_t j = 0; j < s.lines.size(); ++j)
      body << s.lines[j] << ' ' << tags[j] << '\n';
    if (i + 1 < sentences.size()) body << '\n';
  }

  if (t.out_path == "-") {
    std::cout << body.str();
  } else {
    std::ofstream out(t.out_path, std::ios::trunc);
    if (!out) throw ParseError("cannot open " + t.out_path);
    out << body.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
struct EvalCmd {
  std::string model_path, input_path, gold_path, pred_path, json_path, task;
};

inline std::vector<std::vector<std::string>> tag_lists(const Corpus& c) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : c.sentences) {
    std::vector<std::string> tags;
    for (const auto& t : s.tokens) tags.push_back(t.tag);
    out.push_back(std::move(tags));
  }
  return out;
}

inline int run_eval(const EvalCmd& e) {
  Metrics m;
  Task task = e.task.empty() ? Task::ner : task_from_string(e.task);
  if (!e.model_path.empty()) {
    if (e.input_path.empty()) throw std::invalid_argument("eval --model needs --input");
    LoadedCheckpoint lc = load_checkpoint(e.model_path);
    if (e.task.empty()) task = lc.model.config.task;
    const Corpus gold = read_corpus_file(e.input_path);
    m = evaluate_model(lc.model, gold, task);
  } else {
    if (e.gold_path.empty() || e.pred_path.empty())
      throw std::invalid_argument("eval needs either --model + --input or --gold + --pred");
    const Corpus gold = read_corpus_file(e.gold_path);
    const Corpus pred = read_corpus_file(e.pred_path);
    m = evaluate(tag_lists(gold), tag_lists(pred), task);
  }
  std::cout << metrics_text(m);
  if (!e.json_path.empty()) {
    std::ofstream out(e.json_path, std::ios::trunc);
    if (!out) throw ParseError("cannot open " + e.json_path);
    out << metrics_json(m).dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------
struct GradcheckCmd {
  std::uint64_t seed = 7;
  double width_scale = 1.0;
  std::string corrupt;
  std::size_t coords = 24;
};

inline int run_gradcheck(const GradcheckCmd& g) {
  const GradcheckReport rep =
      gradcheck_pipeline(gradcheck_config(g.width_scale), g.seed, g.corrupt, 1e-4, 1e-3,
                         g.coords);
  std::cout << gradcheck_text(rep);
  return rep.pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// attn-dump
// ---------------------------------------------------------------------------
struct AttnDumpCmd {
  std::string model_path, input_path, out_dir;
  int layer = 1;
};

inline int run_attn_dump(const AttnDumpCmd& a) {
  LoadedCheckpoint lc = load_checkpoint(a.model_path);
  if ((a.layer == 1 && lc.model.config.disable_fusion1) ||
      (a.layer == 2 && lc.model.config.disable_fusion2))
    throw std::invalid_argument("fusion layer " + std::to_string(a.layer) +
                                " is disabled in this model");
  std::ifstream in(a.input_path);
  if (!in) throw ParseError("cannot open " + a.input_path);
  const std::vector<RawSentence> sentences = read_raw_sentences(in);
  std::filesystem::create_directories(a.out_dir);

  std::size_t written = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    Sentence plain;
    for (const std::string& tok : sentences[i].tokens) plain.tokens.push_back({tok, ""});
    EncodedSentence enc = encode_sentence(plain, lc.model.vocab, false);
    ForwardTraces traces;
    predict(lc.model, enc, &traces);
    const AttentionTrace& tr = a.layer == 1 ? traces.layer1 : traces.layer2;
    char name[32];
    std::snprintf(name, sizeof(name), "sent_%04zu.json", i);
    const std::filesystem::path path = std::filesystem::path(a.out_dir) / name;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot open " + path.string());
    out << trace_json(tr).dump(2) << "\n";
    ++written;
  }
  std::cout << "wrote " << written << " traces to " << a.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------
struct SweepCmd {
  TrainFlags flags;
  std::string mode;  // window | ablation | smoke
  std::vector<std::size_t> k_list = {2, 5, 8, 10, 12, 15};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string json_path;
  bool quiet = false;
};

inline int run_sweep(const CLI::App* cmd, const SweepCmd& s) {
  const Corpus train_corpus = read_corpus_file(s.flags.train_path);
  const Corpus dev_corpus = read_corpus_file(s.flags.dev_path);
  TrainConfig base = resolve_config(cmd, s.flags);
  if (!cmd->count("--epochs")) base.max_epochs = 10;
  const std::optional<EmbeddingTable> pretrained =
      maybe_load_embeddings(s.flags.embeddings_path, base, train_corpus, dev_corpus);

  auto run_one = [&](const TrainConfig& cfg, const std::string& label) {
    if (!s.quiet) std::fprintf(stderr, "sweep: running %s\n", label.c_str());
    return train(cfg, train_corpus, dev_corpus, pretrained);
  };

  nlohmann::json rows = nlohmann::json::array();
  int exit_code = 0;

  char row[160];
  if (s.mode == "window") {
    std::snprintf(row, sizeof(row), "%6s  %10s  %10s\n", "k", "dev_metric", "best_epoch");
    std::cout << row;
    for (std::size_t k : s.k_list) {
      TrainConfig cfg = base;
      cfg.k = k;
      TrainResult r = run_one(cfg, "k=" + std::to_string(k));
      std::snprintf(row, sizeof(row), "%6zu  %10.4f  %10zu\n", k, r.best_metric,
                    r.best_epoch);
      std::cout << row;
      rows.push_back({{"k", k}, {"dev_metric", r.best_metric}, {"best_epoch", r.best_epoch}});
    }
  } else if (s.mode == "ablation") {
    struct Variant {
      const char* name;
      void (*apply)(TrainConfig&);
    };
    const Variant variants[] = {
        {"full", [](TrainConfig&) {}},
        {"no-mask", [](TrainConfig& c) { c.disable_mask = true; }},
        {"no-gauss", [](TrainConfig& c) { c.disable_gauss = true; }},
        {"no-tokenpos", [](TrainConfig& c) { c.disable_tokenpos = true; }},
        {"no-fusion1", [](TrainConfig& c) { c.disable_fusion1 = true; }},
        {"no-fusion2", [](TrainConfig& c) { c.disable_fusion2 = true; }},
        {"bilstm-crf",
         [](TrainConfig& c) { c.disable_fusion1 = c.disable_fusion2 = true; }},
    };
    std::snprintf(row, sizeof(row), "%12s  %10s  %10s\n", "variant", "dev_metric",
                  "best_epoch");
    std::cout << row;
    for (const Variant& v : variants) {
      TrainConfig cfg = base;
      v.apply(cfg);
      TrainResult r = run_one(cfg, v.name);
      std::snprintf(row, sizeof(row), "%12s  %10.4f  %10zu\n", v.name, r.best_metric,
                    r.best_epoch);
      std::cout << row;
      rows.push_back(
          {{"variant", v.name}, {"dev_metric", r.best_metric}, {"best_epoch", r.best_epoch}});
    }
  } else {  // smoke
    if (train_corpus.sentences.size() < 1000)
      std::cerr << "sweep: warning: " << train_corpus.sentences.size()
                << " training sentences is below the documented smoke-protocol "
                   "minimum of 1000\n";
    std::vector<double> full_scores, base_scores;
    for (std::uint64_t seed : s.seeds) {
      TrainConfig full_cfg = base;
      full_cfg.seed = seed;
      TrainConfig base_cfg = full_cfg;
      base_cfg.disable_fusion1 = base_cfg.disable_fusion2 = true;
      TrainResult fr = run_one(full_cfg, "psa seed=" + std::to_string(seed));
      TrainResult br = run_one(base_cfg, "baseline seed=" + std::to_string(seed));
      full_scores.push_back(fr.best_metric);
      base_scores.push_back(br.best_metric);
      rows.push_back({{"seed", seed},
                      {"psa_dev_metric", fr.best_metric},
                      {"baseline_dev_metric", br.best_metric}});
    }
    const double fm = mean(full_scores), fs = sample_std(full_scores);
    const double bm = mean(base_scores), bs = sample_std(base_scores);
    const bool pass = fm > bm;
    std::snprintf(row, sizeof(row), "psa      %.4f +- %.4f over %zu seeds\n", fm, fs,
                  s.seeds.size());
    std::cout << row;
    std::snprintf(row, sizeof(row), "baseline %.4f +- %.4f over %zu seeds\n", bm, bs,
                  s.seeds.size());
    std::cout << row;
    std::snprintf(row, sizeof(row), "smoke: %s (psa mean %s baseline mean)\n",
                  pass ? "PASS" : "FAIL", pass ? ">" : "<=");
    std::cout << row;
    rows.push_back({{"psa_mean", fm},
                    {"psa_std", fs},
                    {"baseline_mean", bm},
                    {"baseline_std", bs},
                    {"pass", pass}});
    exit_code = pass ? 0 : 1;
  }

  if (!s.json_path.empty()) {
    std::ofstream out(s.json_path, std::ios::trunc);
    if (!out) throw ParseError("cannot open " + s.json_path);
    out << rows.dump(2) << "\n";
  }
  return exit_code;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"neural sequence tagger: Bi-LSTM encoders, self-attentional context "
               "fusion, CRF decoding"};
  app.require_subcommand(1);

  TrainCmd train_cmd;
  CLI::App* train_app = app.add_subcommand("train", "train a model");
  add_train_flags(train_app, train_cmd.flags, true);
  train_app->add_option("--out", train_cmd.out_path, "checkpoint output path")->required();
  train_app->add_option("--log", train_cmd.log_path,
                        "epoch log path (default: <out>.log.jsonl)");
  train_app->add_flag("--quiet", train_cmd.quiet, "no per-epoch progress on stderr");

  TagCmd tag_cmd;
  CLI::App* tag_app = app.add_subcommand("tag", "tag sentences with a trained model");
  tag_app->add_option("--model", tag_cmd.model_path, "checkpoint path")->required();
  tag_app->add_option("--input", tag_cmd.input_path, "CoNLL input (tags optional)")
      ->required();
  tag_app->add_option("--out", tag_cmd.out_path, "output path, - for stdout");

  EvalCmd eval_cmd;
  CLI::App* eval_app = app.add_subcommand("eval", "score predictions against gold");
  eval_app->add_option("--model", eval_cmd.model_path, "checkpoint path");
  eval_app->add_option("--input", eval_cmd.input_path, "gold CoNLL file to tag and score");
  eval_app->add_option("--gold", eval_cmd.gold_path, "gold CoNLL file");
  eval_app->add_option("--pred", eval_cmd.pred_path, "predicted CoNLL file (last column)");
  eval_app->add_option("--task", eval_cmd.task, "task: ner|chunk|pos")
      ->check(CLI::IsMember({"ner", "chunk", "pos"}));
  eval_app->add_option("--json", eval_cmd.json_path, "write metrics JSON here");

  GradcheckCmd gradcheck_cmd;
  CLI::App* gradcheck_app =
      app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck_app->add_option("--seed", gradcheck_cmd.seed, "random seed");
  gradcheck_app->add_option("--width-scale", gradcheck_cmd.width_scale,
                            "multiplier on the reduced check widths");
  gradcheck_app->add_option("--coords", gradcheck_cmd.coords,
                            "sampled coordinates per parameter group");
  gradcheck_app->add_option("--corrupt", gradcheck_cmd.corrupt,
                            "flip analytic gradient signs for matching groups (bug drill)");

  AttnDumpCmd attn_cmd;
  CLI::App* attn_app =
      app.add_subcommand("attn-dump", "export attention matrices as JSON files");
  attn_app->add_option("--model", attn_cmd.model_path, "checkpoint path")->required();
  attn_app->add_option("--input", attn_cmd.input_path, "CoNLL input")->required();
  attn_app->add_option("--layer", attn_cmd.layer, "fusion layer: 1 or 2")
      ->required()
      ->check(CLI::Range(1, 2));
  attn_app->add_option("--out-dir", attn_cmd.out_dir, "directory for trace files")
      ->required();

  SweepCmd sweep_cmd;
  CLI::App* sweep_app = app.add_subcommand("sweep", "window / ablation / smoke sweeps");
  add_train_flags(sweep_app, sweep_cmd.flags, true);
  sweep_app->add_option("--mode", sweep_cmd.mode, "window|ablation|smoke")
      ->required()
      ->check(CLI::IsMember({"window", "ablation", "smoke"}));
  sweep_app->add_option("--k-list", sweep_cmd.k_list, "window sizes for --mode window");
  sweep_app->add_option("--seeds", sweep_cmd.seeds, "seeds for --mode smoke");
  sweep_app->add_option("--json", sweep_cmd.json_path, "write summary rows as JSON");
  sweep_app->add_flag("--quiet", sweep_cmd.quiet, "no progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(train_app)) return run_train(train_app, train_cmd);
    if (app.got_subcommand(tag_app)) return run_tag(tag_cmd);
    if (app.got_subcommand(eval_app)) return run_eval(eval_cmd);
    if (app.got_subcommand(gradcheck_app)) return run_gradcheck(gradcheck_cmd);
    if (app.got_subcommand(attn_app)) return run_attn_dump(attn_cmd);
    if (app.got_subcommand(sweep_app)) return run_sweep(sweep_app, sweep_cmd);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyCorpus& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cli
}  // namespace seqtag
