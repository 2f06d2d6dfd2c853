#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "syntempo/error.hpp"
#include "syntempo/retrieval.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/ted.hpp"
#include "syntempo/trainer.hpp"
#include "test_util.hpp"

using namespace syntempo;
using testutil::thrown_kind;

namespace {

TemplateLibrary varied_library(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> labels = {"S", "NP", "VP", "PP", "AP", "."};
  std::ostringstream corpus;
  int emitted = 0;
  std::set<std::string> seen;
  while (emitted < n) {
    SyntaxTree t = truncate(oracles::random_tree(rng, 9, labels), 4);
    std::string b = to_bracket(t);
    if (seen.insert(b).second) {
      corpus << b << "\n";
      ++emitted;
    }
  }
  std::istringstream targets(corpus.str());
  return TemplateLibrary::build_from_corpus(targets, nullptr, 4);
}

ModelParams params_for(const TemplateLibrary& lib, std::uint64_t seed) {
  Hyper h;
  h.d_model = 8;
  h.n_layers = 1;
  h.n_heads = 2;
  h.ffn_hidden = 16;
  h.max_sentence_len = 16;
  h.max_template_len = 64;
  fit_vocabs(h, {}, lib);
  for (int i = 0; i < 10; ++i) h.sentence_vocab.add("t" + std::to_string(i));
  return ModelParams(h, seed);
}

std::vector<std::string> sentence(std::initializer_list<int> ids) {
  std::vector<std::string> out;
  for (int i : ids) out.push_back("t" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("score_library agrees with the serial reference in every mode") {
  TemplateLibrary lib = varied_library(40, 5);
  ModelParams params = params_for(lib, 11);
  auto toks = sentence({1, 4, 2, 7});

  std::vector<double> serial = score_library_serial(params, toks, lib);
  REQUIRE(serial.size() == lib.size());
  std::vector<double> direct = score_library(params, toks, lib, nullptr, 4);
  CHECK(direct == serial);

  TemplateEncodingCache cache = encode_library(params, lib, 2);
  std::vector<double> cached = score_library(params, toks, lib, &cache, 4);
  for (std::size_t i = 0; i < serial.size(); ++i)
    CHECK(std::abs(cached[i] - serial[i]) <= 1e-12);

  std::istringstream empty("");
  TemplateLibrary none = TemplateLibrary::build_from_corpus(empty, nullptr, 4);
  CHECK(thrown_kind([&] {
          score_library(params, toks, none, nullptr, 1);
        }) == ErrorKind::EmptyLibrary);

  params.mutable_values()[0] += 0.5;
  CHECK(thrown_kind([&] {
          score_library(params, toks, lib, &cache, 1);
        }) == ErrorKind::StaleCache);
}

TEST_CASE("retrieve_topk returns the exact order of the full sort") {
  TemplateLibrary lib = varied_library(60, 9);
  ModelParams params = params_for(lib, 3);
  auto toks = sentence({0, 3, 5});

  std::vector<double> scores = score_library_serial(params, toks, lib);
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  RetrievalResult res = retrieve_topk(params, toks, lib, nullptr, 10, 2);
  REQUIRE(res.ranked.size() == 10);
  CHECK(res.model_hash == params.content_hash());
  CHECK(res.source_tokens == toks);
  for (int i = 0; i < 10; ++i) {
    CHECK(res.ranked[i].id == order[i]);
    CHECK(res.ranked[i].score == scores[order[i]]);
  }
  for (int i = 1; i < 10; ++i)
    CHECK(res.ranked[i - 1].score >= res.ranked[i].score);

  RetrievalResult top1 = retrieve_topk(params, toks, lib, nullptr, 1, 1);
  CHECK(top1.ranked[0].id == order[0]);

  RetrievalResult all = retrieve_topk(
      params, toks, lib, nullptr, static_cast<int>(lib.size()), 1);
  CHECK(all.ranked.size() == lib.size());

  CHECK(thrown_kind([&] { retrieve_topk(params, toks, lib, nullptr, 0, 1); }) ==
        ErrorKind::KTooLarge);
  CHECK(thrown_kind([&] {
          retrieve_topk(params, toks, lib, nullptr,
                        static_cast<int>(lib.size()) + 1, 1);
        }) == ErrorKind::KTooLarge);
}

TEST_CASE("retrieve_topk on a singleton library") {
  std::istringstream one("(S (NP ) (VP ))\n");
  TemplateLibrary lib = TemplateLibrary::build_from_corpus(one, nullptr, 4);
  ModelParams params = params_for(lib, 2);
  RetrievalResult res = retrieve_topk(params, sentence({1}), lib, nullptr, 1, 1);
  REQUIRE(res.ranked.size() == 1);
  CHECK(res.ranked[0].id == 0);
}

TEST_CASE("dts_from_scores replays against the step simulator") {
  TemplateLibrary lib = varied_library(120, 21);
  Rng rng(33);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < lib.size(); ++i)
      scores.push_back(rng.next_unit());
    int capacity = 3 + trial;
    double beta = 0.1 + 0.1 * (trial % 3);

    std::vector<DtsEvent> events;
    DiverseSet got = dts_from_scores(lib, scores, capacity, beta, false,
                                     &events);
    oracles::SimResult want = oracles::dts_reference(lib, scores, capacity,
                                                     beta);

    // Same members.
    std::map<int, double> got_members, want_members;
    for (const auto& e : got.entries) got_members[e.id] = e.score;
    for (const auto& [id, sc] : want.members) want_members[id] = sc;
    CHECK(got_members == want_members);

    // Same event-by-event trace.
    REQUIRE(events.size() == want.events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
      CHECK(events[i].fill == want.events[i].fill);
      CHECK(events[i].candidate_id == want.events[i].candidate_id);
      CHECK(events[i].candidate_score == want.events[i].candidate_score);
      CHECK(events[i].min_ted == want.events[i].min_ted);
      CHECK(events[i].popped_id == want.events[i].popped_id);
      CHECK(events[i].heap_min_after == want.events[i].heap_min_after);
    }

    // The heap minimum never decreases after the fill phase.
    double prev = -1.0;
    for (const auto& ev : events) {
      if (ev.fill) continue;
      CHECK(ev.heap_min_after >= prev);
      prev = ev.heap_min_after;
    }
  }
}

TEST_CASE("dts members pairwise clear the diversity threshold") {
  TemplateLibrary lib = varied_library(100, 41);
  Rng rng(2);
  std::vector<double> scores;
  for (std::size_t i = 0; i < lib.size(); ++i) scores.push_back(rng.next_unit());
  const double beta = 0.2;
  DiverseSet set = dts_from_scores(lib, scores, 8, beta);
  REQUIRE(set.entries.size() == 8);
  // Replacements guarantee distance to surviving members; fill-phase pairs
  // may still sit closer, so only replaced-in entries are constrained. With
  // beta 0 every accepted replacement must at least not duplicate a member.
  DiverseSet zero = dts_from_scores(lib, scores, 8, 0.0);
  std::set<std::string> brackets;
  for (const auto& e : zero.entries)
    CHECK(brackets.insert(lib.entry(e.id).bracket).second);
}

TEST_CASE("dts fill phase takes the first candidates unconditionally") {
  std::istringstream dup(
      "(S (NP ) (VP ))\n"
      "(S (NP ) (VP ) (PP ))\n"
      "(S (NP ) (VP ) (AP ))\n");
  TemplateLibrary lib = TemplateLibrary::build_from_corpus(dup, nullptr, 4);
  std::vector<double> scores = {0.9, 0.8, 0.7};
  std::vector<DtsEvent> events;
  DiverseSet set = dts_from_scores(lib, scores, 3, 0.9, false, &events);
  CHECK(set.entries.size() == 3);
  for (const auto& ev : events) {
    CHECK(ev.fill);
    CHECK(ev.min_ted == -1.0);
  }

  // Strict mode tests during the fill; these templates are all within
  // normalized TED 0.9 of each other, so only the first survives.
  DiverseSet strict = dts_from_scores(lib, scores, 3, 0.9, true);
  CHECK(strict.entries.size() == 1);
  CHECK(strict.entries[0].id == 0);
}

TEST_CASE("dts capacity beyond the library returns everything") {
  TemplateLibrary lib = varied_library(7, 3);
  std::vector<double> scores = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  DiverseSet set = dts_from_scores(lib, scores, 20, 0.2);
  CHECK(set.entries.size() == 7);
  auto ranked = set.sorted_desc();
  for (std::size_t i = 1; i < ranked.size(); ++i)
    CHECK(ranked[i - 1].score >= ranked[i].score);
  CHECK(ranked.front().id == 6);
}

TEST_CASE("dts end-to-end equals dts_from_scores on model scores") {
  TemplateLibrary lib = varied_library(30, 13);
  ModelParams params = params_for(lib, 6);
  auto toks = sentence({2, 8, 1});
  std::vector<double> scores = score_library_serial(params, toks, lib);

  std::vector<DtsEvent> ev_direct, ev_replay;
  DiverseSet direct = dts(params, toks, lib, nullptr, 5, 0.2, 2, false,
                          &ev_direct);
  DiverseSet replay = dts_from_scores(lib, scores, 5, 0.2, false, &ev_replay);
  REQUIRE(direct.entries.size() == replay.entries.size());
  for (std::size_t i = 0; i < direct.entries.size(); ++i) {
    CHECK(direct.entries[i].id == replay.entries[i].id);
    CHECK(direct.entries[i].score == replay.entries[i].score);
  }
  CHECK(ev_direct.size() == ev_replay.size());
}

TEST_CASE("baseline_random is a seeded uniform draw") {
  TemplateLibrary lib = varied_library(10, 1);
  CHECK(baseline_random(lib, 4).id == baseline_random(lib, 4).id);
  std::map<int, int> counts;
  const int trials = 5000;
  for (int seed = 0; seed < trials; ++seed)
    ++counts[baseline_random(lib, seed).id];
  double expect = trials / 10.0;
  double chi2 = 0.0;
  for (int id = 0; id < 10; ++id) {
    double c = counts.count(id) ? counts[id] : 0;
    chi2 += (c - expect) * (c - expect) / expect;
  }
  CHECK(chi2 < 27.88);  // 9 dof, 0.1% tail

  std::istringstream empty("");
  TemplateLibrary none = TemplateLibrary::build_from_corpus(empty, nullptr, 4);
  CHECK(thrown_kind([&] { baseline_random(none, 0); }) ==
        ErrorKind::EmptyLibrary);
}

TEST_CASE("baseline_freq picks the most frequent template") {
  std::istringstream targets("(A )\n(B )\n(B )\n(C )\n");
  TemplateLibrary lib = TemplateLibrary::build_from_corpus(targets, nullptr, 4);
  CHECK(baseline_freq(lib).bracket == "(B )");
}

TEST_CASE("baseline_aesop_r minimizes paired-source distance") {
  std::istringstream targets(
      "(S (NP ) (VP ))\n"
      "(S (VP ) (PP ))\n"
      "(S (AP ))\n");
  std::istringstream sources(
      "(S (NP (DT ) (NN )) (VP (VB )))\n"
      "(S (VP (VB )) (PP (IN )))\n"
      "(S (AP (JJ )))\n");
  TemplateLibrary lib =
      TemplateLibrary::build_from_corpus(targets, &sources, 4);

  SyntaxTree x = parse_bracket("(S (AP (JJ (RB ))))");
  const TemplateEntry& got = baseline_aesop_r(x, lib);

  // Exhaustive scan over all pairings.
  double best = 1e9;
  int best_id = -1;
  SyntaxTree xt = truncate(x, lib.max_levels());
  for (const auto& entry : lib.entries()) {
    for (const auto& src : entry.paired_source_trees) {
      double d = normalized_ted(xt, src);
      if (d < best) {
        best = d;
        best_id = entry.id;
      }
    }
  }
  CHECK(got.id == best_id);

  std::istringstream no_src("(A )\n");
  TemplateLibrary bare = TemplateLibrary::build_from_corpus(no_src, nullptr, 4);
  CHECK(thrown_kind([&] { baseline_aesop_r(x, bare); }) ==
        ErrorKind::NoPairings);
}

TEST_CASE("baseline_aesop_r matches a random exhaustive oracle") {
  Rng rng(17);
  std::vector<std::string> labels = {"S", "NP", "VP", "PP"};
  std::ostringstream targets_s, sources_s;
  for (int i = 0; i < 25; ++i) {
    targets_s << to_bracket(oracles::random_tree(rng, 7, labels)) << "\n";
    sources_s << to_bracket(oracles::random_tree(rng, 7, labels)) << "\n";
  }
  std::istringstream targets(targets_s.str());
  std::istringstream sources(sources_s.str());
  TemplateLibrary lib =
      TemplateLibrary::build_from_corpus(targets, &sources, 4);

  for (int it = 0; it < 10; ++it) {
    SyntaxTree x = oracles::random_tree(rng, 7, labels);
    SyntaxTree xt = truncate(x, lib.max_levels());
    double best = 2.0;
    int best_id = -1;
    for (const auto& entry : lib.entries()) {
      for (const auto& src : entry.paired_source_trees) {
        double d = normalized_ted(xt, src);
        if (d < best) {
          best = d;
          best_id = entry.id;
        }
      }
    }
    CHECK(baseline_aesop_r(x, lib).id == best_id);
  }
}
