#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "syntempo/error.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/trainer.hpp"
#include "test_util.hpp"

using namespace syntempo;
using testutil::thrown_kind;

namespace {

TemplateLibrary grid_library(int n) {
  std::ostringstream corpus;
  for (int i = 0; i < n; ++i)
    corpus << "(ROOT (S (A" << i << " ) (B" << i % 3 << " )))\n";
  std::istringstream targets(corpus.str());
  return TemplateLibrary::build_from_corpus(targets, nullptr, 4);
}

std::string temp_path(const char* name) {
  return std::string("/tmp/syntempo_test_") + name;
}

std::vector<double> random_vec(Rng& rng, int n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_unit();
  return v;
}

Hyper tiny_hyper(const TemplateLibrary& lib,
                 const std::vector<TrainExample>& data) {
  Hyper h;
  h.d_model = 8;
  h.n_layers = 1;
  h.n_heads = 2;
  h.ffn_hidden = 16;
  h.max_sentence_len = 16;
  h.max_template_len = 48;
  fit_vocabs(h, data, lib);
  return h;
}

std::vector<TrainExample> tiny_examples(const TemplateLibrary& lib, int n) {
  std::vector<TrainExample> out;
  for (int i = 0; i < n; ++i) {
    TrainExample ex;
    for (int j = 0; j < 4 + i % 3; ++j)
      ex.source_tokens.push_back("tok" + std::to_string((i + j) % 9));
    ex.source_tree = lib.entry(i % static_cast<int>(lib.size())).tree;
    ex.reference_tree =
        lib.entry((i + 1) % static_cast<int>(lib.size())).tree;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("load_dataset accepts both token spellings") {
  std::string path = temp_path("data.jsonl");
  {
    std::ofstream out(path);
    out << R"x({"source_tokens": ["a", "b", "c"], "source_tree": "(S (NP ))", "reference_tree": "(S (VP ))"})x"
        << "\n";
    out << "\n";
    out << R"x({"source_tokens": "d e", "source_tree": "(S )", "reference_tree": "(S )"})x"
        << "\n";
  }
  auto data = load_dataset(path);
  REQUIRE(data.size() == 2);
  CHECK(data[0].source_tokens == std::vector<std::string>{"a", "b", "c"});
  CHECK(to_bracket(data[0].source_tree) == "(S (NP ))");
  CHECK(to_bracket(data[0].reference_tree) == "(S (VP ))");
  CHECK(data[1].source_tokens == std::vector<std::string>{"d", "e"});
  std::remove(path.c_str());
}

TEST_CASE("load_dataset reports the offending line") {
  std::string path = temp_path("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"x({"source_tokens": ["a"], "source_tree": "(S )", "reference_tree": "(S )"})x"
        << "\n";
    out << "{not json}\n";
  }
  try {
    load_dataset(path);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path.c_str());
  CHECK(thrown_kind([] { load_dataset("/tmp/syntempo_missing.jsonl"); }) ==
        ErrorKind::IoError);
}

TEST_CASE("fit_vocabs covers dataset tokens and library linearizations") {
  TemplateLibrary lib = grid_library(4);
  auto data = tiny_examples(lib, 3);
  Hyper h;
  fit_vocabs(h, data, lib);
  for (const auto& ex : data)
    for (const auto& tok : ex.source_tokens)
      CHECK(h.sentence_vocab.lookup(tok) > 0);
  for (const auto& entry : lib.entries())
    for (const auto& tok : entry.tokens)
      CHECK(h.template_vocab.lookup(tok) > 0);
}

TEST_CASE("sample_candidates pins the two gold slots") {
  TemplateLibrary lib = grid_library(12);
  SyntaxTree x = parse_bracket("(ROOT (Q1 (Z (W )) (Q2 )))");
  SyntaxTree y = parse_bracket("(ROOT (Q3 ))");
  auto cands = sample_candidates(x, y, lib, 6, 42);
  REQUIRE(cands.size() == 6);
  CHECK(cands[0].bracket == to_bracket(truncate(x, 4)));
  CHECK(cands[1].bracket == to_bracket(truncate(y, 4)));
  CHECK(cands[0].library_id == -1);
  CHECK(cands[1].library_id == -1);
  std::set<std::string> seen;
  for (const auto& c : cands) {
    CHECK(seen.insert(c.bracket).second);
    CHECK(c.tokens == linearize(c.tree));
    if (c.library_id >= 0)
      CHECK(lib.entry(c.library_id).bracket == c.bracket);
  }
  for (std::size_t i = 2; i < cands.size(); ++i)
    CHECK(cands[i].library_id >= 0);

  auto again = sample_candidates(x, y, lib, 6, 42);
  for (std::size_t i = 0; i < cands.size(); ++i)
    CHECK(cands[i].bracket == again[i].bracket);
}

TEST_CASE("sample_candidates merges identical gold templates") {
  TemplateLibrary lib = grid_library(12);
  // Same truncation for x and y: slot 1 falls back to a library draw.
  SyntaxTree x = parse_bracket("(ROOT (Q1 (Deep (Deeper (Deepest )))))");
  SyntaxTree y = parse_bracket("(ROOT (Q1 (Deep (Deeper (Other )))))");
  CHECK(to_bracket(truncate(x, 4)) == to_bracket(truncate(y, 4)));
  auto cands = sample_candidates(x, y, lib, 5, 7);
  REQUIRE(cands.size() == 5);
  CHECK(cands[0].bracket == to_bracket(truncate(x, 4)));
  CHECK(cands[1].library_id >= 0);
  std::set<std::string> seen;
  for (const auto& c : cands) CHECK(seen.insert(c.bracket).second);
}

TEST_CASE("sample_candidates marks gold slots found in the library") {
  TemplateLibrary lib = grid_library(12);
  SyntaxTree x = lib.entry(3).tree;
  SyntaxTree y = lib.entry(8).tree;
  auto cands = sample_candidates(x, y, lib, 4, 1);
  CHECK(cands[0].library_id == 3);
  CHECK(cands[1].library_id == 8);
}

TEST_CASE("sample_candidates validates sizes") {
  TemplateLibrary lib = grid_library(4);
  SyntaxTree x = parse_bracket("(A )");
  SyntaxTree y = parse_bracket("(B )");
  CHECK(thrown_kind([&] { sample_candidates(x, y, lib, 1, 0); }) ==
        ErrorKind::LibraryTooSmall);
  CHECK(thrown_kind([&] { sample_candidates(x, y, lib, 5, 0); }) ==
        ErrorKind::LibraryTooSmall);
  auto exact = sample_candidates(x, y, lib, 4, 0);  // 2 gold + 2 entries
  CHECK(exact.size() == 4);
}

TEST_CASE("library draws are uniform over eligible entries") {
  TemplateLibrary lib = grid_library(10);
  SyntaxTree x = parse_bracket("(ROOT (Q1 ))");
  SyntaxTree y = parse_bracket("(ROOT (Q2 ))");
  const int k = 5, trials = 4000;
  int hits = 0;
  for (int seed = 0; seed < trials; ++seed) {
    for (const auto& c : sample_candidates(x, y, lib, k, seed))
      if (c.library_id == 4) ++hits;
  }
  double p = (k - 2) / 10.0;
  double sigma = std::sqrt(trials * p * (1 - p));
  CHECK(std::abs(hits - trials * p) < 4 * sigma);
}

TEST_CASE("planted_quality is deterministic, bounded and spread out") {
  TemplateLibrary lib = grid_library(12);
  SyntaxTree x = parse_bracket("(ROOT (S (A1 ) (B1 )))");
  std::vector<double> qs;
  for (const auto& entry : lib.entries()) {
    double q = planted_quality(x, entry.tree, 99);
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
    CHECK(q == planted_quality(x, entry.tree, 99));
    qs.push_back(q);
  }
  CHECK(qs != std::vector<double>(qs.size(), qs[0]));
  double mean = 0.0;
  for (double q : qs) mean += q;
  mean /= qs.size();
  double var = 0.0;
  for (double q : qs) var += (q - mean) * (q - mean);
  CHECK(std::sqrt(var / qs.size()) > 0.05);
  // The sentence's own template dominates the closeness term.
  CHECK(planted_quality(x, truncate(x, 4), 99) >= 0.6);
  // A different seed relabels the hash feature.
  bool any_diff = false;
  for (const auto& entry : lib.entries())
    any_diff =
        any_diff || planted_quality(x, entry.tree, 99) !=
                        planted_quality(x, entry.tree, 100);
  CHECK(any_diff);
}

TEST_CASE("quality oracles: planted wrapper and precomputed table") {
  TemplateLibrary lib = grid_library(6);
  auto data = tiny_examples(lib, 2);
  QualityOracle planted = QualityOracle::planted(5, 4);
  Candidate cand;
  cand.tree = lib.entry(2).tree;
  cand.tokens = lib.entry(2).tokens;
  cand.bracket = lib.entry(2).bracket;
  CHECK(planted.quality(data[0], cand) ==
        planted_quality(data[0].source_tree, cand.tree, 5, 4));

  std::string path = temp_path("oracle.jsonl");
  {
    std::ofstream out(path);
    out << R"x({"source": "tok0 tok1 tok2 tok3", "template": ")x"
        << cand.bracket << R"x(", "quality": 0.37})x" << "\n";
    out << R"x({"source": "x", "template": "(A )", "quality": 1.7})x" << "\n";
  }
  QualityOracle table = QualityOracle::precomputed(path);
  TrainExample ex;
  ex.source_tokens = {"tok0", "tok1", "tok2", "tok3"};
  CHECK(table.quality(ex, cand) == 0.37);

  TrainExample clamped;
  clamped.source_tokens = {"x"};
  Candidate a;
  a.bracket = "(A )";
  CHECK(table.quality(clamped, a) == 1.0);  // clamped into [0,1]

  TrainExample missing;
  missing.source_tokens = {"unseen"};
  CHECK(thrown_kind([&] { table.quality(missing, cand); }) ==
        ErrorKind::OracleMiss);
  std::remove(path.c_str());
}

TEST_CASE("loss identities") {
  std::vector<double> s1 = {0.2, 0.8}, q1 = {0.4, 0.6};
  CHECK(mse_loss(s1, q1) == doctest::Approx(0.04).epsilon(1e-12));
  std::vector<double> s2 = {0.9, 0.1}, q2 = {0.2, 0.8};
  CHECK(rank_loss(s2, q2) == doctest::Approx(1.4).epsilon(1e-12));
  Rng rng(8);
  for (int it = 0; it < 100; ++it) {
    auto s = random_vec(rng, 6);
    CHECK(mse_loss(s, s) == 0.0);
    CHECK(rank_loss(s, s) == 0.0);
  }
}

TEST_CASE("losses match the loop oracles on random vectors") {
  Rng rng(4);
  for (int it = 0; it < 50; ++it) {
    auto s = random_vec(rng, 10);
    auto q = random_vec(rng, 10);
    CHECK(std::abs(mse_loss(s, q) - oracles::mse_reference(s, q)) <= 1e-15);
    CHECK(std::abs(rank_loss(s, q) - oracles::rank_reference(s, q)) <= 1e-15);
    double total = total_loss(s, q, 0.7, 1.3);
    CHECK(total == doctest::Approx(0.7 * mse_loss(s, q) +
                                   1.3 * rank_loss(s, q)));
  }
  CHECK(thrown_kind([] { mse_loss({0.1}, {0.1, 0.2}); }) ==
        ErrorKind::LengthMismatch);
  CHECK(thrown_kind([] { rank_loss({0.1}, {0.1, 0.2}); }) ==
        ErrorKind::LengthMismatch);
}

TEST_CASE("rank loss ignores a common shift, mse does not") {
  Rng rng(13);
  auto s = random_vec(rng, 8);
  auto q = random_vec(rng, 8);
  auto shifted = s;
  for (double& x : shifted) x += 0.17;
  CHECK(rank_loss(shifted, q) == doctest::Approx(rank_loss(s, q)));
  CHECK(mse_loss(shifted, q) != doctest::Approx(mse_loss(s, q)));
}

TEST_CASE("total_loss gradient matches central differences") {
  Rng rng(29);
  for (int it = 0; it < 20; ++it) {
    auto s = random_vec(rng, 7);
    auto q = random_vec(rng, 7);
    std::vector<double> ds;
    total_loss(s, q, 0.6, 1.1, &ds);
    REQUIRE(ds.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double eps = 1e-6;
      auto lo = s, hi = s;
      lo[i] -= eps;
      hi[i] += eps;
      double fd =
          (total_loss(hi, q, 0.6, 1.1) - total_loss(lo, q, 0.6, 1.1)) /
          (2 * eps);
      CHECK(ds[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("pcc endpoints and failure modes") {
  std::vector<double> a = {0.1, 0.5, 0.9, 0.3};
  std::vector<double> b;
  for (double x : a) b.push_back(3.0 * x + 1.0);
  CHECK(pcc(a, b) == doctest::Approx(1.0));
  for (double& x : b) x = -x;
  CHECK(pcc(a, b) == doctest::Approx(-1.0));
  Rng rng(3);
  auto u = random_vec(rng, 40);
  auto v = random_vec(rng, 40);
  CHECK(pcc(u, v) == doctest::Approx(oracles::pcc_reference(u, v)));
  CHECK(thrown_kind([&] { pcc(u, std::vector<double>(39, 0.5)); }) ==
        ErrorKind::LengthMismatch);
  CHECK(thrown_kind([] {
          pcc({0.5, 0.5, 0.5}, {0.1, 0.2, 0.3});
        }) == ErrorKind::ZeroVariance);
}

TEST_CASE("adamw single-step arithmetic") {
  AdamW opt(1, 0.0);
  std::vector<double> theta = {1.0};
  opt.step(theta, {1.0}, 0.1);
  // Bias-corrected first step moves by exactly lr against the sign.
  CHECK(theta[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(opt.steps_taken() == 1);

  // Zero gradient leaves only decoupled decay.
  AdamW decay(1, 0.5);
  std::vector<double> w = {2.0};
  decay.step(w, {0.0}, 0.1);
  CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("adamw with zero learning rate is the identity") {
  AdamW opt(4, 0.3);
  std::vector<double> theta = {0.5, -1.0, 2.0, 0.0};
  auto before = theta;
  for (int i = 0; i < 5; ++i) opt.step(theta, {1.0, -2.0, 0.5, 3.0}, 0.0);
  CHECK(theta == before);
}

TEST_CASE("set loss composes per-candidate scores and total_loss") {
  TemplateLibrary lib = grid_library(8);
  auto data = tiny_examples(lib, 2);
  Hyper h = tiny_hyper(lib, data);
  ModelParams params(h, 77);
  QualityOracle oracle = QualityOracle::planted(3);
  CandidateSet set = make_candidate_set(data[0], lib, oracle, 5, 11);
  REQUIRE(set.templates.size() == 5);
  REQUIRE(set.qualities.size() == 5);

  std::vector<double> scores;
  for (const auto& c : set.templates)
    scores.push_back(score(params, data[0].source_tokens, c.tokens));
  std::vector<double> ds;
  double want = total_loss(scores, set.qualities, 1.0, 1.0, &ds);
  double got = set_loss_and_grad(params, data[0].source_tokens, set, 1.0, 1.0,
                                 nullptr, 1);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // Gradient equals the serial composition of per-candidate backward calls.
  Gradients grads;
  set_loss_and_grad(params, data[0].source_tokens, set, 1.0, 1.0, &grads, 1);
  Gradients manual;
  for (std::size_t i = 0; i < set.templates.size(); ++i) {
    if (ds[i] == 0.0) continue;
    ScoreTrace trace;
    score(params, data[0].source_tokens, set.templates[i].tokens, &trace);
    backward_into(params, trace, ds[i], manual);
  }
  REQUIRE(grads.values.size() == manual.values.size());
  for (std::size_t i = 0; i < grads.values.size(); ++i)
    CHECK(grads.values[i] == doctest::Approx(manual.values[i]).epsilon(1e-12));
}

TEST_CASE("set loss and gradient are thread-count invariant") {
  TemplateLibrary lib = grid_library(10);
  auto data = tiny_examples(lib, 1);
  Hyper h = tiny_hyper(lib, data);
  ModelParams params(h, 5);
  QualityOracle oracle = QualityOracle::planted(9);
  CandidateSet set = make_candidate_set(data[0], lib, oracle, 6, 2);

  Gradients g1, g4;
  double l1 = set_loss_and_grad(params, data[0].source_tokens, set, 1.0, 1.0,
                                &g1, 1);
  double l4 = set_loss_and_grad(params, data[0].source_tokens, set, 1.0, 1.0,
                                &g4, 4);
  CHECK(l1 == l4);
  CHECK(g1.values == g4.values);
}

TEST_CASE("repeated steps on one batch strictly reduce its loss") {
  TemplateLibrary lib = grid_library(9);
  auto data = tiny_examples(lib, 1);
  Hyper h = tiny_hyper(lib, data);
  ModelParams params(h, 21);
  QualityOracle oracle = QualityOracle::planted(4);
  CandidateSet set = make_candidate_set(data[0], lib, oracle, 5, 3);

  AdamW opt(params.values().size(), 0.0);
  double first = set_loss_and_grad(params, data[0].source_tokens, set, 1.0,
                                   1.0, nullptr, 1);
  double last = first;
  for (int step = 0; step < 50; ++step) {
    Gradients g;
    last = set_loss_and_grad(params, data[0].source_tokens, set, 1.0, 1.0, &g,
                             1);
    opt.step(params.mutable_values(), g.values, 3e-3);
  }
  double final_loss = set_loss_and_grad(params, data[0].source_tokens, set,
                                        1.0, 1.0, nullptr, 1);
  CHECK(final_loss < first);
  CHECK(final_loss < 0.9 * first);
}

TEST_CASE("evaluate_pcc is deterministic and thread invariant") {
  TemplateLibrary lib = grid_library(10);
  auto data = tiny_examples(lib, 6);
  Hyper h = tiny_hyper(lib, data);
  ModelParams params(h, 31);
  QualityOracle oracle = QualityOracle::planted(12);
  double a = evaluate_pcc(params, lib, data, oracle, 5, 19, 1);
  double b = evaluate_pcc(params, lib, data, oracle, 5, 19, 4);
  CHECK(a == b);
  CHECK(a >= -1.0);
  CHECK(a <= 1.0);
  CHECK(a != evaluate_pcc(params, lib, data, oracle, 5, 20, 1));
}

TEST_CASE("train with zero epochs returns the initial parameters") {
  TemplateLibrary lib = grid_library(8);
  auto data = tiny_examples(lib, 3);
  Hyper h = tiny_hyper(lib, data);
  ModelParams params(h, 1);
  auto initial = params.values();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.k = 4;
  TrainResult res = train(std::move(params), lib, data, data,
                          QualityOracle::planted(2), cfg);
  CHECK(res.params.values() == initial);
  CHECK(res.log.empty());
}

TEST_CASE("training runs are reproducible and thread invariant") {
  TemplateLibrary lib = grid_library(8);
  auto data = tiny_examples(lib, 4);
  auto dev = tiny_examples(lib, 3);
  Hyper h = tiny_hyper(lib, data);
  QualityOracle oracle = QualityOracle::planted(6);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.k = 4;
  cfg.lr = 1e-3;
  cfg.seed = 14;

  TrainConfig cfg4 = cfg;
  cfg4.threads = 4;
  TrainResult r1 = train(ModelParams(h, 3), lib, data, dev, oracle, cfg);
  TrainResult r2 = train(ModelParams(h, 3), lib, data, dev, oracle, cfg);
  TrainResult r4 = train(ModelParams(h, 3), lib, data, dev, oracle, cfg4);

  CHECK(r1.params.values() == r2.params.values());
  CHECK(r1.params.values() == r4.params.values());
  REQUIRE(r1.log.size() == 2);
  REQUIRE(r4.log.size() == 2);
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].mean_loss == r4.log[i].mean_loss);
    CHECK(r1.log[i].dev_pcc == r4.log[i].dev_pcc);
  }
  CHECK(r1.best_epoch >= 0);
  CHECK(r1.best_epoch < 2);
}
