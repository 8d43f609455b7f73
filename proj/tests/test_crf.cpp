#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "seqtag/crf.hpp"
#include "support/crf_oracle.hpp"
#include "support/fd.hpp"

using namespace seqtag;

namespace {

CrfParams zero_crf(std::size_t labels, std::size_t dim, bool factorized = false) {
  CrfParams p;
  p.labels = labels;
  p.dim = dim;
  p.factorized = factorized;
  const std::size_t s = labels + 2;
  if (factorized) {
    p.ew = Tensor::zeros({labels, dim});
    p.eb = Tensor::zeros({labels});
    p.tr = Tensor::zeros({s * s});
  } else {
    p.w = Tensor::zeros({s * s, dim});
    p.b = Tensor::zeros({s * s});
  }
  return p;
}

Tensor gaussian_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

CrfParams random_crf(std::size_t labels, std::size_t dim, Rng& rng,
                     bool factorized = false) {
  CrfParams p = zero_crf(labels, dim, factorized);
  if (factorized) {
    p.ew = gaussian_tensor({labels, dim}, rng);
    p.eb = gaussian_tensor({labels}, rng);
    p.tr = gaussian_tensor({(labels + 2) * (labels + 2)}, rng);
  } else {
    p.w = gaussian_tensor({(labels + 2) * (labels + 2), dim}, rng);
    p.b = gaussian_tensor({(labels + 2) * (labels + 2)}, rng);
  }
  return p;
}

}  // namespace

TEST_CASE("pair_potential: zero params, bias-only, one-hot selector") {
  CrfParams p = zero_crf(3, 4);
  std::vector<double> z{0.5, -0.2, 0.8, 0.1};
  for (std::size_t yp = 0; yp < 5; ++yp) {
    for (std::size_t y = 0; y < 5; ++y) {
      REQUIRE(pair_potential(z.data(), yp, y, p) == 0.0);
    }
  }

  p.b.data[1 * 5 + 2] = 0.7;
  std::vector<double> zero(4, 0.0);
  REQUIRE(pair_potential(zero.data(), 1, 2, p) == 0.7);

  p.w.at((1 * 5 + 2), 3) = 1.0;  // one-hot at coordinate 3
  REQUIRE(pair_potential(z.data(), 1, 2, p) == Catch::Approx(0.1 + 0.7).margin(1e-15));
}

TEST_CASE("sequence_score: single position with zero params scores zero") {
  CrfParams p = zero_crf(2, 3);
  Tensor z = Tensor::zeros({1, 3});
  REQUIRE(sequence_score(z, {0}, p) == 0.0);
  REQUIRE(sequence_score(z, {1}, p) == 0.0);
}

TEST_CASE("sequence_score: splits into half sums plus the junction term") {
  Rng rng(42);
  const std::size_t labels = 3, dim = 4, n = 6;
  CrfParams p = random_crf(labels, dim, rng);
  Tensor z = gaussian_tensor({n, dim}, rng);
  Tensor pairs = pair_score_table(z, p);
  const std::size_t s = labels + 2;
  std::vector<std::size_t> y{2, 0, 1, 1, 2, 0};
  for (std::size_t split = 1; split < n; ++split) {
    // left part: start transition plus interior pairs up to the split
    double left = pairs.at(0, p.start() * s + y[0]);
    for (std::size_t j = 1; j < split; ++j) left += pairs.at(j, y[j - 1] * s + y[j]);
    // right part: interior pairs after the split plus the stop transition
    double right = 0.0;
    for (std::size_t j = split + 1; j < n; ++j) right += pairs.at(j, y[j - 1] * s + y[j]);
    right += pairs.at(n - 1, y[n - 1] * s + p.stop());
    const double junction = pairs.at(split, y[split - 1] * s + y[split]);
    REQUIRE(sequence_score(pairs, y, labels) ==
            Catch::Approx(left + junction + right).margin(1e-12));
  }
}

TEST_CASE("sequence_score: matches an independent direct summation") {
  Rng rng(7);
  const std::size_t labels = 3, dim = 5, n = 4;
  CrfParams p = random_crf(labels, dim, rng);
  Tensor z = gaussian_tensor({n, dim}, rng);
  std::vector<std::size_t> y{1, 0, 2, 1};
  double direct = pair_potential(&z.data[0], p.start(), y[0], p);
  for (std::size_t j = 1; j < n; ++j) {
    direct += pair_potential(&z.data[j * dim], y[j - 1], y[j], p);
  }
  direct += pair_potential(&z.data[(n - 1) * dim], y[n - 1], p.stop(), p);
  REQUIRE(sequence_score(z, y, p) == Catch::Approx(direct).margin(1e-12));
}

TEST_CASE("sequence_score: length mismatch and bad labels rejected") {
  CrfParams p = zero_crf(2, 3);
  Tensor z = Tensor::zeros({2, 3});
  REQUIRE_THROWS_AS(sequence_score(z, {0}, p), std::invalid_argument);
  REQUIRE_THROWS_AS(sequence_score(z, {0, 2}, p), std::invalid_argument);  // 2 == start
}

TEST_CASE("log_partition: uniform zero-parameter counts") {
  CrfParams p2 = zero_crf(2, 3);
  REQUIRE(log_partition(Tensor::zeros({1, 3}), p2) ==
          Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(log_partition(Tensor::zeros({3, 3}), p2) ==
          Catch::Approx(std::log(8.0)).margin(1e-12));
  CrfParams p3 = zero_crf(3, 2);
  REQUIRE(log_partition(Tensor::zeros({2, 2}), p3) ==
          Catch::Approx(std::log(9.0)).margin(1e-12));
}

TEST_CASE("log_partition: stable at large score magnitudes") {
  CrfParams p = zero_crf(2, 1);
  p.b.data[p.start() * 4 + 0] = 900.0;
  p.b.data[p.start() * 4 + 1] = 900.0;
  Tensor z = Tensor::zeros({3, 1});
  const double lz = log_partition(z, p);
  REQUIRE(std::isfinite(lz));
  REQUIRE(lz == Catch::Approx(900.0 + std::log(8.0)).margin(1e-9));
}

TEST_CASE("log_partition and viterbi vs brute force on random instances") {
  Rng rng(20260822);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t labels = 1 + rng.below(4);
    const std::size_t n = 1 + rng.below(5);
    const std::size_t dim = 2 + rng.below(3);
    const bool factorized = trial % 4 == 3;
    CrfParams p = random_crf(labels, dim, rng, factorized);
    Tensor z = gaussian_tensor({n, dim}, rng);
    Tensor pairs = pair_score_table(z, p);
    const auto oracle = crf_oracle::brute_force(pairs, labels);
    REQUIRE(std::abs(log_partition(pairs, labels) - oracle.log_partition) <= 1e-8);
    const DecodeResult dec = viterbi_decode(pairs, labels);
    REQUIRE(dec.score == oracle.best_score);
    REQUIRE(sequence_score(pairs, dec.labels, labels) == oracle.best_score);
  }
}

TEST_CASE("viterbi: single label, emission-dominated, and tie cases") {
  SECTION("one label has one sequence") {
    Rng rng(3);
    CrfParams p = random_crf(1, 2, rng);
    Tensor z = gaussian_tensor({4, 2}, rng);
    DecodeResult dec = viterbi_decode(z, p);
    REQUIRE(dec.labels == std::vector<std::size_t>{0, 0, 0, 0});
  }
  SECTION("zero transitions reduce to per-position argmax") {
    Rng rng(5);
    CrfParams p = zero_crf(3, 3, true);
    p.ew = gaussian_tensor({3, 3}, rng);
    Tensor z = gaussian_tensor({5, 3}, rng);
    DecodeResult dec = viterbi_decode(z, p);
    for (std::size_t j = 0; j < 5; ++j) {
      std::size_t arg = 0;
      double best = -1e300;
      for (std::size_t y = 0; y < 3; ++y) {
        double em = p.eb.data[y];
        for (std::size_t c = 0; c < 3; ++c) em += p.ew.at(y, c) * z.at(j, c);
        if (em > best) {
          best = em;
          arg = y;
        }
      }
      REQUIRE(dec.labels[j] == arg);
    }
  }
  SECTION("all-tied scores pick the lowest label everywhere") {
    CrfParams p = zero_crf(4, 2);
    Tensor z = Tensor::zeros({5, 2});
    DecodeResult dec = viterbi_decode(z, p);
    REQUIRE(dec.labels == std::vector<std::size_t>{0, 0, 0, 0, 0});
    REQUIRE(dec.score == 0.0);
  }
}

TEST_CASE("sequence probabilities normalize exhaustively") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t labels = 1 + rng.below(3);
    const std::size_t n = 1 + rng.below(4);
    CrfParams p = random_crf(labels, 2, rng);
    Tensor z = gaussian_tensor({n, 2}, rng);
    Tensor pairs = pair_score_table(z, p);
    const double lz = log_partition(pairs, labels);
    double total = 0.0;
    for (const auto& y : crf_oracle::all_sequences(n, labels)) {
      const double sc = sequence_score(pairs, y, labels);
      REQUIRE(lz >= sc);  // partition dominates every sequence
      const double prob = std::exp(sc - lz);
      REQUIRE(prob > 0.0);
      REQUIRE(prob <= 1.0 + 1e-12);
      total += prob;
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("per-position constant shift cancels in the likelihood") {
  Rng rng(13);
  const std::size_t labels = 3, n = 4;
  CrfParams p = random_crf(labels, 2, rng);
  Tensor z = gaussian_tensor({n, 2}, rng);
  Tensor pairs = pair_score_table(z, p);
  std::vector<std::size_t> y{0, 2, 1, 0};
  const double score0 = sequence_score(pairs, y, labels);
  const double lz0 = log_partition(pairs, labels);

  Tensor shifted = pairs;
  const double c = 2.515625;  // exactly representable
  for (std::size_t col = 0; col < shifted.cols(); ++col) shifted.at(2, col) += c;
  REQUIRE(sequence_score(shifted, y, labels) == Catch::Approx(score0 + c).margin(1e-10));
  REQUIRE(log_partition(shifted, labels) == Catch::Approx(lz0 + c).margin(1e-9));
  const double nll0 = lz0 - score0;
  const double nll1 = log_partition(shifted, labels) - sequence_score(shifted, y, labels);
  REQUIRE(nll1 == Catch::Approx(nll0).margin(1e-9));
}

TEST_CASE("crf_nll: uniform loss, near-zero loss, brute-force agreement") {
  SECTION("zero params give log of the sequence count") {
    CrfParams p = zero_crf(3, 2);
    Graph g;
    CrfVars v = mount(g, p, "crf");
    Var z = g.constant(Tensor::zeros({2, 2}));
    Var pairs = build_pair_scores(g, v, z);
    Var loss = crf_nll(g, pairs, {0, 1}, 3);
    REQUIRE(loss->value.data[0] == Catch::Approx(std::log(9.0)).margin(1e-12));
  }
  SECTION("dominant gold sequence drives the loss to zero") {
    CrfParams p = zero_crf(2, 2);
    const std::size_t s = 4;
    p.b.data[p.start() * s + 1] = 50.0;
    p.b.data[1 * s + 1] = 50.0;
    Graph g;
    CrfVars v = mount(g, p, "crf");
    Var z = g.constant(Tensor::zeros({3, 2}));
    Var pairs = build_pair_scores(g, v, z);
    Var loss = crf_nll(g, pairs, {1, 1, 1}, 2);
    REQUIRE(loss->value.data[0] >= 0.0);
    REQUIRE(loss->value.data[0] < 1e-9);
  }
  SECTION("loss equals minus log brute-force probability") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t labels = 1 + rng.below(3);
      const std::size_t n = 1 + rng.below(4);
      CrfParams p = random_crf(labels, 3, rng);
      Tensor zt = gaussian_tensor({n, 3}, rng);
      std::vector<std::size_t> gold(n);
      for (auto& y : gold) y = rng.below(labels);

      Graph g;
      CrfVars v = mount(g, p, "crf");
      Var pairs = build_pair_scores(g, v, g.constant(zt));
      Var loss = crf_nll(g, pairs, gold, labels);

      const auto oracle = crf_oracle::brute_force(pair_score_table(zt, p), labels);
      const double gold_score = sequence_score(zt, gold, p);
      const double expect = oracle.log_partition - gold_score;
      REQUIRE(loss->value.data[0] == Catch::Approx(expect).margin(1e-9));
      REQUIRE(loss->value.data[0] >= -1e-9);
    }
  }
}

TEST_CASE("crf_nll gradients match finite differences (literal form)") {
  Rng rng(23);
  const std::size_t labels = 3, dim = 3, n = 4;
  CrfParams p = random_crf(labels, dim, rng);
  std::vector<std::size_t> gold{1, 0, 2, 2};
  fd::Params params;
  params["crf.w"] = p.w;
  params["crf.b"] = p.b;
  params["Z"] = gaussian_tensor({n, dim}, rng);
  fd::Report rep = fd::compare(params, [&gold, labels](Graph& g, auto& L) {
    CrfVars v;
    v.w = L["crf.w"];
    v.b = L["crf.b"];
    v.factorized = false;
    v.labels = labels;
    Var pairs = build_pair_scores(g, v, L["Z"]);
    return crf_nll(g, pairs, gold, labels);
  });
  INFO("worst " << rep.worst << " rel " << rep.max_rel);
  REQUIRE(rep.failed == 0);
}

TEST_CASE("crf_nll gradients match finite differences (factorized form)") {
  Rng rng(29);
  const std::size_t labels = 3, dim = 3, n = 4;
  CrfParams p = random_crf(labels, dim, rng, true);
  std::vector<std::size_t> gold{0, 2, 1, 0};
  fd::Params params;
  params["crf.ew"] = p.ew;
  params["crf.eb"] = p.eb;
  params["crf.tr"] = p.tr;
  params["Z"] = gaussian_tensor({n, dim}, rng);
  fd::Report rep = fd::compare(params, [&gold, labels](Graph& g, auto& L) {
    CrfVars v;
    v.ew = L["crf.ew"];
    v.eb = L["crf.eb"];
    v.tr = L["crf.tr"];
    v.factorized = true;
    v.labels = labels;
    Var pairs = build_pair_scores(g, v, L["Z"]);
    return crf_nll(g, pairs, gold, labels);
  });
  INFO("worst " << rep.worst << " rel " << rep.max_rel);
  REQUIRE(rep.failed == 0);
}

TEST_CASE("build_pair_scores matches pair_score_table in both forms") {
  Rng rng(31);
  for (bool factorized : {false, true}) {
    CrfParams p = random_crf(3, 4, rng, factorized);
    Tensor z = gaussian_tensor({5, 4}, rng);
    Graph g;
    CrfVars v = mount(g, p, "crf");
    Var pairs = build_pair_scores(g, v, g.constant(z));
    Tensor table = pair_score_table(z, p);
    REQUIRE(pairs->value.shape == table.shape);
    for (std::size_t i = 0; i < table.size(); ++i) {
      REQUIRE(pairs->value.data[i] == table.data[i]);
    }
  }
}

TEST_CASE("nll_loss: batch equals the sum of per-sentence losses") {
  Rng rng(37);
  CrfParams p = random_crf(2, 3, rng);
  Tensor z1 = gaussian_tensor({3, 3}, rng);
  Tensor z2 = gaussian_tensor({2, 3}, rng);
  std::vector<std::size_t> g1{0, 1, 1}, g2{1, 0};

  Graph g;
  CrfVars v = mount(g, p, "crf");
  Var total = nll_loss(g, v, {g.constant(z1), g.constant(z2)}, {g1, g2});

  Graph ga;
  CrfVars va = mount(ga, p, "crf");
  Var la = crf_nll(ga, build_pair_scores(ga, va, ga.constant(z1)), g1, 2);
  Graph gb;
  CrfVars vb = mount(gb, p, "crf");
  Var lb = crf_nll(gb, build_pair_scores(gb, vb, gb.constant(z2)), g2, 2);
  REQUIRE(total->value.data[0] ==
          Catch::Approx(la->value.data[0] + lb->value.data[0]).margin(1e-12));
}

TEST_CASE("crf init: shapes and virtual label layout") {
  Rng rng(41);
  CrfParams p = CrfParams::init(4, 6, false, rng);
  REQUIRE(p.states() == 6);
  REQUIRE(p.start() == 4);
  REQUIRE(p.stop() == 5);
  REQUIRE(p.w.rows() == 36);
  REQUIRE(p.w.cols() == 6);
  REQUIRE(p.b.size() == 36);

  CrfParams f = CrfParams::init(4, 6, true, rng);
  REQUIRE(f.ew.rows() == 4);
  REQUIRE(f.tr.size() == 36);
  REQUIRE_THROWS_AS(CrfParams::init(0, 6, false, rng), std::invalid_argument);
}
