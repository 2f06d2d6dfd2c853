#include <algorithm>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/syntree.hpp"
#include "syntempo/ted.hpp"

using namespace syntempo;

TEST_CASE("ted is zero on identical trees") {
  for (const char* s :
       {"(A )", "(A (B ))", "(ROOT (S (VP (LS ) (S (VP ))) (. )))"}) {
    SyntaxTree t = parse_bracket(s);
    CHECK(ted(t, t) == 0.0);
    CHECK(normalized_ted(t, t) == 0.0);
  }
}

TEST_CASE("ted counts single edits") {
  SyntaxTree a = parse_bracket("(A )");
  SyntaxTree ab = parse_bracket("(A (B ))");
  SyntaxTree b = parse_bracket("(B )");
  CHECK(ted(a, ab) == 1.0);   // one insert
  CHECK(ted(ab, a) == 1.0);   // one delete
  CHECK(ted(a, b) == 1.0);    // one relabel
  CHECK(normalized_ted(a, b) == 1.0);

  SyntaxTree np = parse_bracket("(S (NP ) (VP ))");
  SyntaxTree pp = parse_bracket("(S (NP ) (VP (PP )))");
  CHECK(ted(np, pp) == 1.0);
  CHECK(normalized_ted(np, pp) == doctest::Approx(0.25));
}

TEST_CASE("ted honors non-unit costs") {
  SyntaxTree a = parse_bracket("(A )");
  SyntaxTree ab = parse_bracket("(A (B ))");
  TedCosts costs;
  costs.insert = 0.5;
  costs.remove = 0.25;
  costs.relabel = 3.0;
  CHECK(ted(a, ab, costs) == 0.5);
  CHECK(ted(ab, a, costs) == 0.25);
  // Relabeling at 3.0 is dearer than delete plus insert at 0.75.
  CHECK(ted(a, parse_bracket("(B )"), costs) == 0.75);
}

TEST_CASE("normalized_ted clamps to the unit interval") {
  TedCosts costs;
  costs.relabel = 5.0;
  SyntaxTree a = parse_bracket("(A )");
  SyntaxTree b = parse_bracket("(B )");
  CHECK(normalized_ted(a, b, costs) == 1.0);
}

TEST_CASE("ted matches an independent recursion on random pairs") {
  Rng rng(1234);
  std::vector<std::string> labels = {"A", "B", "C"};
  for (int it = 0; it < 500; ++it) {
    SyntaxTree a = oracles::random_tree(rng, 12, labels);
    SyntaxTree b = oracles::random_tree(rng, 12, labels);
    CHECK(ted(a, b) == oracles::ted_reference(a, b));
  }
}

TEST_CASE("ted satisfies the metric axioms under unit costs") {
  Rng rng(77);
  std::vector<std::string> labels = {"A", "B", "C"};
  for (int it = 0; it < 200; ++it) {
    SyntaxTree a = oracles::random_tree(rng, 10, labels);
    SyntaxTree b = oracles::random_tree(rng, 10, labels);
    SyntaxTree c = oracles::random_tree(rng, 10, labels);
    double dab = ted(a, b);
    CHECK(dab == ted(b, a));
    CHECK(dab >= 0.0);
    CHECK(dab <= node_count(a) + node_count(b));
    CHECK(ted(a, c) <= dab + ted(b, c) + 1e-12);
    if (dab == 0.0) CHECK(a == b);

    double n = normalized_ted(a, b);
    CHECK(n >= 0.0);
    CHECK(n <= 1.0);
    // Unit-cost distance can exceed the larger node count, so the ratio
    // is clamped to 1.
    double ratio = dab / std::max(node_count(a), node_count(b));
    CHECK(n == doctest::Approx(std::min(1.0, ratio)));
  }
}
