#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqtag/gradcheck.hpp"
#include "seqtag/trainer.hpp"

using namespace seqtag;

namespace {

Corpus tiny_corpus() { return gradcheck_corpus(); }

TrainConfig tiny_config() {
  TrainConfig cfg = TrainConfig::defaults(Task::ner);
  cfg.word_emb = 8;
  cfg.char_emb = 4;
  cfg.char_hidden = 4;
  cfg.word_hidden = 6;
  cfg.k = 3;
  cfg.batch_size = 2;
  cfg.max_epochs = 4;
  cfg.patience = 100;
  return cfg;
}

Corpus load_fixture(const std::string& name) {
  std::ifstream in(std::string(FIXTURE_DIR) + "/" + name);
  REQUIRE(in.good());
  return read_conll_stream(in);
}

}  // namespace

TEST_CASE("learning rate schedule") {
  CHECK(lr_at_epoch(0.015, 0.05, 0) == 0.015);
  CHECK_THAT(lr_at_epoch(0.015, 0.05, 2), Catch::Matchers::WithinAbs(0.015 / 1.1, 1e-12));
  for (std::size_t t : {0, 3, 17, 400}) CHECK(lr_at_epoch(0.01, 0.0, t) == 0.01);
  double prev = lr_at_epoch(0.015, 0.05, 0);
  for (std::size_t t = 1; t < 50; ++t) {
    const double cur = lr_at_epoch(0.015, 0.05, t);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("momentum step hand recursions") {
  SECTION("plain sgd when momentum is zero") {
    Tensor p = Tensor::from({1.0});
    std::vector<std::pair<std::string, Tensor*>> params{{"p", &p}};
    GradMap grads;
    grads["p"] = Tensor::from({2.0});
    std::map<std::string, Tensor> vel;
    sgd_momentum_step(params, grads, vel, 0.1, 0.0);
    CHECK_THAT(p.at(0), Catch::Matchers::WithinAbs(0.8, 1e-15));
  }

  SECTION("two steps at momentum 0.9 reach v=-0.19, total drop 0.29") {
    Tensor p = Tensor::from({1.0});
    std::vector<std::pair<std::string, Tensor*>> params{{"p", &p}};
    GradMap grads;
    grads["p"] = Tensor::from({1.0});
    std::map<std::string, Tensor> vel;
    sgd_momentum_step(params, grads, vel, 0.1, 0.9);
    sgd_momentum_step(params, grads, vel, 0.1, 0.9);
    CHECK_THAT(vel.at("p").at(0), Catch::Matchers::WithinAbs(-0.19, 1e-15));
    CHECK_THAT(p.at(0), Catch::Matchers::WithinAbs(1.0 - 0.29, 1e-15));
  }

  SECTION("zero gradients decay the first step's velocity geometrically") {
    const double m = 0.9, lr = 0.1;
    Tensor p = Tensor::from({1.0});
    std::vector<std::pair<std::string, Tensor*>> params{{"p", &p}};
    GradMap one, zero;
    one["p"] = Tensor::from({1.0});
    zero["p"] = Tensor::from({0.0});
    std::map<std::string, Tensor> vel;
    const std::size_t steps = 10;
    sgd_momentum_step(params, one, vel, lr, m);
    const double v = vel.at("p").at(0);  // -lr after the first step
    for (std::size_t t = 1; t < steps; ++t) sgd_momentum_step(params, zero, vel, lr, m);
    const double expected_drift = v * (1.0 - std::pow(m, steps)) / (1.0 - m);
    CHECK_THAT(p.at(0) - 1.0, Catch::Matchers::WithinAbs(expected_drift, 1e-12));
  }

  SECTION("missing gradient leaves the parameter untouched") {
    Tensor p = Tensor::from({3.0, 4.0});
    std::vector<std::pair<std::string, Tensor*>> params{{"p", &p}};
    GradMap grads;
    std::map<std::string, Tensor> vel;
    sgd_momentum_step(params, grads, vel, 0.1, 0.9);
    CHECK(p.at(0) == 3.0);
    CHECK(p.at(1) == 4.0);
  }
}

TEST_CASE("early stopping halts three epochs past the last improvement") {
  EarlyStopper stopper(3);
  std::size_t halted_at = 0;
  for (std::size_t epoch = 0; epoch <= 100; ++epoch) {
    const double metric = epoch <= 5 ? 0.1 * static_cast<double>(epoch) : 0.2;
    stopper.observe(epoch, metric);
    if (stopper.should_stop()) {
      halted_at = epoch;
      break;
    }
  }
  CHECK(halted_at == 8);
  CHECK(stopper.best_epoch == 5);

  SECTION("a tie does not reset patience") {
    EarlyStopper s(2);
    CHECK(s.observe(0, 0.7));
    CHECK_FALSE(s.observe(1, 0.7));
    CHECK_FALSE(s.observe(2, 0.7));
    CHECK(s.should_stop());
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Corpus c = tiny_corpus();
  const TrainConfig cfg = tiny_config();
  std::ostringstream log_a, log_b;
  TrainResult a = train(cfg, c, c, std::nullopt, &log_a);
  TrainResult b = train(cfg, c, c, std::nullopt, &log_b);

  // Wall time is the one nondeterministic log field; everything else must
  // match line for line.
  auto strip_seconds = [](const std::string& text) {
    std::vector<nlohmann::json> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      nlohmann::json j = nlohmann::json::parse(line);
      j.erase("seconds");
      lines.push_back(std::move(j));
    }
    return lines;
  };
  CHECK(strip_seconds(log_a.str()) == strip_seconds(log_b.str()));
  CHECK_FALSE(log_a.str().empty());

  CheckpointMeta meta_a{a.best_metric, a.best_epoch};
  CheckpointMeta meta_b{b.best_metric, b.best_epoch};
  CHECK(serialize_checkpoint(a.best, meta_a) == serialize_checkpoint(b.best, meta_b));

  SECTION("a different seed moves the parameters") {
    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    TrainResult d = train(other, c, c);
    CheckpointMeta meta_d{d.best_metric, d.best_epoch};
    CHECK(serialize_checkpoint(a.best, meta_a) != serialize_checkpoint(d.best, meta_d));
  }
}

TEST_CASE("epoch log carries a strictly decreasing learning rate") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 5;
  TrainResult r = train(cfg, c, c);
  REQUIRE(r.log.size() == 5);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    CHECK(r.log[i].epoch == i);
    CHECK(r.log[i].lr == lr_at_epoch(cfg.eta0, cfg.rho, i));
    if (i) CHECK(r.log[i].lr < r.log[i - 1].lr);
    CHECK(std::isfinite(r.log[i].train_loss));
    CHECK(r.log[i].seconds >= 0.0);
  }
}

TEST_CASE("epoch log lines echo the effective config") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  std::ostringstream log;
  train(cfg, c, c, std::nullopt, &log);
  std::istringstream lines(log.str());
  std::string line;
  REQUIRE(std::getline(lines, line));
  const nlohmann::json j = nlohmann::json::parse(line);
  CHECK(j.at("epoch") == 0);
  CHECK(j.at("config").at("k") == cfg.k);
  CHECK(j.at("config").at("eta0") == cfg.eta0);
  CHECK(j.at("config").at("task") == "ner");
}

TEST_CASE("evaluation runs with dropout off and is repeatable") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 2;
  TrainResult r = train(cfg, c, c);
  const Metrics m1 = evaluate_model(r.best, c, cfg.task);
  const Metrics m2 = evaluate_model(r.best, c, cfg.task);
  CHECK(m1.token_accuracy == m2.token_accuracy);
  CHECK(m1.f1 == m2.f1);
}

TEST_CASE("non-finite loss aborts with batch ids and parameter norm") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  Rng rng(3);
  Vocab vocab = Vocab::build({&c}, c);
  ModelParams poisoned = ModelParams::init(cfg, vocab, std::nullopt, rng);
  poisoned.crf.b.data[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(cfg, c, c, std::nullopt, nullptr, &poisoned);
    FAIL("expected a non-finite loss abort");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("norm") != std::string::npos);
  }
}

TEST_CASE("warm start resumes from the given parameters") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  TrainResult first = train(cfg, c, c);
  TrainResult resumed = train(cfg, c, c, std::nullopt, nullptr, &first.best);
  CheckpointMeta ma{first.best_metric, 0}, mb{resumed.best_metric, 0};
  CHECK(serialize_checkpoint(first.best, ma) != serialize_checkpoint(resumed.best, mb));
}

TEST_CASE("checkpoint round trip is bitwise faithful") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  TrainResult r = train(cfg, c, c);
  CheckpointMeta meta{r.best_metric, r.best_epoch};

  const std::string path = "trainer_roundtrip.ckpt";
  save_checkpoint(path, r.best, meta);
  LoadedCheckpoint lc = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(lc.meta.best_metric == r.best_metric);
  CHECK(lc.meta.epoch == r.best_epoch);
  auto orig = r.best.named_tensors();
  auto back = lc.model.named_tensors();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == back[i].first);
    CHECK(orig[i].second->shape == back[i].second->shape);
    CHECK(orig[i].second->data == back[i].second->data);
  }
  CHECK(lc.model.vocab.words == r.best.vocab.words);
  CHECK(lc.model.vocab.tags == r.best.vocab.tags);
  CHECK(lc.model.vocab.char_ids == r.best.vocab.char_ids);

  SECTION("tagging through the reloaded model matches exactly") {
    for (const auto& s : c.sentences) {
      EncodedSentence enc = encode_sentence(s, r.best.vocab, false);
      CHECK(predict(r.best, enc) == predict(lc.model, enc));
    }
  }
}

TEST_CASE("checkpoint rejects damage without partial state") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  TrainResult r = train(cfg, c, c);
  CheckpointMeta meta{r.best_metric, r.best_epoch};
  const std::string bytes = serialize_checkpoint(r.best, meta);

  SECTION("truncation at many prefixes") {
    for (std::size_t cut : {0ul, 4ul, 11ul, 19ul, 40ul, bytes.size() / 2, bytes.size() - 1}) {
      CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, cut)), CheckpointError);
    }
  }
  SECTION("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH(deserialize_checkpoint(bad),
                      Catch::Matchers::ContainsSubstring("magic"));
  }
  SECTION("version bump is rejected by name") {
    std::string bad = bytes;
    bad[8] = static_cast<char>(99);
    CHECK_THROWS_WITH(deserialize_checkpoint(bad),
                      Catch::Matchers::ContainsSubstring("version 99"));
  }
  SECTION("trailing garbage is rejected") {
    CHECK_THROWS_WITH(deserialize_checkpoint(bytes + "zz"),
                      Catch::Matchers::ContainsSubstring("trailing"));
  }
}

TEST_CASE("frozen batch loss decreases over ten steps for nearly every seed") {
  Corpus fixture = load_fixture("overfit20.conll");
  TrainConfig cfg = TrainConfig::defaults(Task::ner);
  cfg.word_emb = 12;
  cfg.char_emb = 4;
  cfg.char_hidden = 4;
  cfg.word_hidden = 8;
  cfg.k = 3;
  // Dropout off: the check is about the optimizer descending on a fixed
  // objective, so the objective must be the same function at every step.
  cfg.dropout_lstm = 0.0;
  cfg.dropout_attn = 0.0;

  Corpus batch10;
  for (std::size_t i = 0; i < 10; ++i) batch10.sentences.push_back(fixture.sentences[i]);
  Vocab vocab = Vocab::build({&batch10}, batch10);
  std::vector<EncodedSentence> enc;
  for (const auto& s : batch10.sentences) enc.push_back(encode_sentence(s, vocab, true));
  std::vector<const EncodedSentence*> batch;
  for (const auto& e : enc) batch.push_back(&e);

  std::size_t monotone_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    ModelParams model = ModelParams::init(cfg, vocab, std::nullopt, rng);
    std::map<std::string, Tensor> vel;
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (std::size_t step = 0; step < 10; ++step) {
      Graph g;
      ModelVars vars = mount(g, model, true);
      Var summed = model_loss(g, vars, model, batch, true, rng);
      Var loss = scale(g, summed, 1.0 / static_cast<double>(batch.size()));
      const double val = loss->value.at(0);
      REQUIRE(std::isfinite(val));
      if (!(val < prev)) monotone = false;
      prev = val;
      g.backward(loss);
      GradMap grads = clip_gradients(g.gradients(), cfg.clip);
      CHECK(global_norm(grads) <= cfg.clip + 1e-9);
      auto params = model.named_tensors();
      sgd_momentum_step(params, grads, vel, cfg.eta0, cfg.momentum);
    }
    if (monotone) ++monotone_seeds;
  }
  CHECK(monotone_seeds >= 9);
}

TEST_CASE("default hyperparameters match the published recipe") {
  for (Task task : {Task::ner, Task::chunk}) {
    const TrainConfig c = TrainConfig::defaults(task);
    CHECK(c.eta0 == 0.015);
  }
  const TrainConfig pos = TrainConfig::defaults(Task::pos);
  CHECK(pos.eta0 == 0.01);

  const TrainConfig c = TrainConfig::defaults(Task::ner);
  CHECK(c.momentum == 0.9);
  CHECK(c.batch_size == 10);
  CHECK(c.rho == 0.05);
  CHECK(c.clip == 5.0);
  CHECK(c.dropout_lstm == 0.55);
  CHECK(c.dropout_attn == 0.2);
  CHECK(c.k == 10);
  CHECK(c.epsilon() == 5.0);
  CHECK(c.radius() == 10);
  CHECK(c.word_emb == 100);
  CHECK(c.char_emb == 30);
  CHECK(c.char_hidden == 100);
  CHECK(c.word_hidden == 300);
  CHECK(c.repr_dim() == 300);
  CHECK(c.context_dim() == 600);
}

TEST_CASE("full pipeline gradient check at reduced widths") {
  GradcheckReport rep = gradcheck_pipeline(gradcheck_config(), 7);
  CHECK(rep.pass);
  CHECK(rep.seconds < 60.0);
  for (const auto& g : rep.groups) {
    INFO(g.name);
    CHECK(g.pass);
    CHECK(g.checked >= 3);
  }
  const std::string text = gradcheck_text(rep);
  CHECK(text.find("gradcheck passed") != std::string::npos);
  CHECK(text.find("crf.w") != std::string::npos);

  SECTION("a sign bug in the fusion gate is caught and named") {
    GradcheckReport bad = gradcheck_pipeline(gradcheck_config(), 7, "wf3");
    CHECK_FALSE(bad.pass);
    bool named = false;
    for (const auto& g : bad.groups) {
      if (!g.pass) {
        CHECK(g.name.find("wf3") != std::string::npos);
        named = true;
      } else {
        CHECK(g.name.find("wf3") == std::string::npos);
      }
    }
    CHECK(named);
    CHECK(gradcheck_text(bad).find("FAILED") != std::string::npos);
  }
}

TEST_CASE("ablation flags change the parameter surface coherently") {
  TrainConfig cfg = tiny_config();
  cfg.disable_fusion1 = true;
  const Corpus c = tiny_corpus();
  Vocab vocab = Vocab::build({&c}, c);
  Rng rng(5);
  ModelParams m = ModelParams::init(cfg, vocab, std::nullopt, rng);
  for (const auto& [name, t] : m.named_tensors()) {
    CHECK(name.find("psa1") == std::string::npos);
    CHECK(name.find("fus1") == std::string::npos);
  }
  TrainResult r = train(cfg, c, c);
  CHECK(std::isfinite(r.log.back().train_loss));

  SECTION("both fusion layers off still trains and tags") {
    TrainConfig plain = tiny_config();
    plain.disable_fusion1 = plain.disable_fusion2 = true;
    plain.max_epochs = 2;
    TrainResult pr = train(plain, c, c);
    EncodedSentence enc = encode_sentence(c.sentences[0], pr.best.vocab, false);
    CHECK(predict_tags(pr.best, enc).size() == c.sentences[0].tokens.size());
  }
}

TEST_CASE("multi seed helper reports per seed results") {
  const Corpus c = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  auto results = train_multi_seed(cfg, c, c, {1, 2, 3});
  REQUIRE(results.size() == 3);
  std::vector<double> metrics;
  for (const auto& r : results) metrics.push_back(r.best_metric);
  CHECK(std::isfinite(mean(metrics)));
  CHECK(sample_std(metrics) >= 0.0);
  CHECK(mean({2.0, 4.0, 6.0}) == 4.0);
  CHECK_THAT(sample_std({2.0, 4.0, 6.0}), Catch::Matchers::WithinAbs(2.0, 1e-12));
}
