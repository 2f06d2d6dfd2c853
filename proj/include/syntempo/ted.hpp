#pragma once

#include "syntempo/syntree.hpp"

namespace syntempo {

// Edit cost model for ordered-tree edit distance. Relabel applies only when
// labels differ; matching labels cost 0.
struct TedCosts {
  double insert = 1.0;
  double remove = 1.0;
  double relabel = 1.0;
};

// Exact ordered-tree edit distance (Zhang-Shasha keyroot decomposition).
double ted(const SyntaxTree& a, const SyntaxTree& b, const TedCosts& costs = {});

// ted(a, b) / max(node_count(a), node_count(b)), clamped to [0, 1].
// Zero iff the trees are structurally identical under unit costs.
double normalized_ted(const SyntaxTree& a, const SyntaxTree& b,
                      const TedCosts& costs = {});

}  // namespace syntempo
