#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqtag/checkpoint.hpp"
#include "seqtag/model.hpp"

namespace seqtag {

inline double lr_at_epoch(double eta0, double rho, std::size_t epoch) {
  return eta0 / (1.0 + rho * static_cast<double>(epoch));
}

// v <- momentum * v - lr * g;  p <- p + v
inline void sgd_momentum_step(std::vector<std::pair<std::string, Tensor*>>& params,
                              const GradMap& grads, std::map<std::string, Tensor>& velocity,
                              double lr, double momentum) {
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    contract(g.shape == p->shape, ("sgd step: gradient shape mismatch for " + name).c_str());
    Tensor& v = velocity.try_emplace(name, Tensor::zeros(p->shape)).first->second;
    contract(v.shape == p->shape, ("sgd step: velocity shape mismatch for " + name).c_str());
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      v.data[i] = momentum * v.data[i] - lr * g.data[i];
      p->data[i] += v.data[i];
    }
  }
}

struct EarlyStopper {
  std::size_t patience;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  explicit EarlyStopper(std::size_t patience) : patience(patience) {}

  // Returns true when `metric` sets a new best. Strictly-greater: a tie does
  // not reset the counter.
  bool observe(std::size_t epoch, double metric) {
    if (metric > best) {
      best = metric;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }
  bool should_stop() const { return since_best >= patience; }
};

struct EpochLogEntry {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_metric = 0.0;
  double token_accuracy = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  bool improved = false;
};

inline nlohmann::json epoch_log_json(const EpochLogEntry& e, const TrainConfig& cfg) {
  return nlohmann::json{{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"dev_metric", e.dev_metric},
                        {"token_accuracy", e.token_accuracy},
                        {"lr", e.lr},
                        {"seconds", e.seconds},
                        {"improved", e.improved},
                        {"config", config_json(cfg)}};
}

inline double headline_metric(const Metrics& m, Task task) {
  return task == Task::pos ? m.token_accuracy : m.f1;
}

inline Metrics evaluate_model(const ModelParams& m, const Corpus& gold, Task task) {
  std::vector<std::vector<std::string>> gold_tags, pred_tags;
  for (const auto& s : gold.sentences) {
    std::vector<std::string> g;
    for (const auto& t : s.tokens) g.push_back(t.tag);
    gold_tags.push_back(std::move(g));
    pred_tags.push_back(predict_tags(m, encode_sentence(s, m.vocab, false)));
  }
  return evaluate(gold_tags, pred_tags, task);
}

struct TrainResult {
  ModelParams best;
  double best_metric = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochLogEntry> log;
};

// One training run. Deterministic for a fixed config: a single RNG stream
// seeded from config.seed drives init, shuffling, and dropout in a fixed
// order. Dev sentences whose gold tag never occurs in the tag vocabulary are
// still scored (evaluation compares strings, not ids). A warm start skips
// initialization and continues from the given parameters.
inline TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus,
                         const Corpus& dev_corpus,
                         const std::optional<EmbeddingTable>& pretrained = std::nullopt,
                         std::ostream* epoch_log = nullptr,
                         const ModelParams* warm_start = nullptr,
                         double stop_token_accuracy = 0.0,
                         const std::function<void(const EpochLogEntry&)>& on_epoch = {}) {
  cfg.validate();
  contract(!train_corpus.sentences.empty(), "train: empty training corpus");
  contract(!dev_corpus.sentences.empty(), "train: empty dev corpus");

  Rng rng(cfg.seed);
  ModelParams model;
  if (warm_start) {
    model = *warm_start;
    model.config = cfg;
  } else {
    Vocab vocab = Vocab::build({&train_corpus, &dev_corpus}, train_corpus);
    model = ModelParams::init(cfg, vocab, pretrained, rng);
  }

  std::vector<EncodedSentence> train_enc;
  for (const auto& s : train_corpus.sentences) {
    if (s.tokens.size() > cfg.length_cap) continue;
    train_enc.push_back(encode_sentence(s, model.vocab, true));
  }
  contract(!train_enc.empty(), "train: every sentence exceeds the length cap");

  TrainResult result;
  EarlyStopper stopper(cfg.patience);
  std::map<std::string, Tensor> velocity;

  std::vector<std::size_t> order(train_enc.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(cfg.eta0, cfg.rho, epoch);
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t end = std::min(at + cfg.batch_size, order.size());
      Graph g;
      ModelVars vars = mount(g, model, true);
      std::vector<const EncodedSentence*> batch;
      for (std::size_t i = at; i < end; ++i) batch.push_back(&train_enc[order[i]]);
      // The optimized objective is the batch-mean sentence NLL; with the
      // summed loss, momentum 0.9 at the default learning rate overshoots.
      Var summed = model_loss(g, vars, model, batch, true, rng);
      Var loss = scale(g, summed, 1.0 / static_cast<double>(batch.size()));
      const double loss_val = loss->value.at(0);
      if (!std::isfinite(loss_val)) {
        std::ostringstream msg;
        msg << "non-finite loss " << loss_val << " at epoch " << epoch << ", batch offset "
            << at << " (sentences";
        for (std::size_t i = at; i < end; ++i) msg << ' ' << order[i];
        msg << "); parameter norm ";
        {
          GradMap snapshot;
          for (auto& [name, t] : model.named_tensors()) snapshot[name] = *t;
          msg << global_norm(snapshot);
        }
        throw std::runtime_error(msg.str());
      }
      epoch_loss += loss_val;
      g.backward(loss);
      GradMap grads = clip_gradients(g.gradients(), cfg.clip);
      auto params = model.named_tensors();
      sgd_momentum_step(params, grads, velocity, lr, cfg.momentum);
    }

    Metrics dev = evaluate_model(model, dev_corpus, cfg.task);
    const double metric = headline_metric(dev, cfg.task);
    const bool improved = stopper.observe(epoch, metric);
    if (improved || result.log.empty()) {
      result.best = model;
      result.best_metric = metric;
      result.best_epoch = epoch;
    }

    EpochLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss;
    entry.dev_metric = metric;
    entry.token_accuracy = dev.token_accuracy;
    entry.lr = lr;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    entry.improved = improved;
    result.log.push_back(entry);
    if (epoch_log) *epoch_log << epoch_log_json(entry, cfg).dump() << '\n' << std::flush;
    if (on_epoch) on_epoch(entry);

    result.epochs_run = epoch + 1;
    if (stop_token_accuracy > 0.0 && dev.token_accuracy >= stop_token_accuracy) {
      result.best = model;
      result.best_metric = metric;
      result.best_epoch = epoch;
      break;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

// Repeats a run over several seeds; everything else held fixed.
inline std::vector<TrainResult> train_multi_seed(TrainConfig cfg, const Corpus& train_corpus,
                                                 const Corpus& dev_corpus,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const std::optional<EmbeddingTable>& pre =
                                                     std::nullopt) {
  std::vector<TrainResult> out;
  for (std::uint64_t s : seeds) {
    cfg.seed = s;
    out.push_back(train(cfg, train_corpus, dev_corpus, pre));
  }
  return out;
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace seqtag
