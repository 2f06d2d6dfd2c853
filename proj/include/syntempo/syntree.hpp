#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace syntempo {

// Rooted ordered labeled tree for constituency parses and syntactic
// templates. Labels are opaque non-empty strings without parentheses or
// whitespace; terminals (words) are never stored, so a POS leaf like
// "(LS )" is simply a node with zero children. Immutable by convention
// after construction.
struct SyntaxTree {
  std::string label;
  std::vector<SyntaxTree> children;

  bool operator==(const SyntaxTree& other) const = default;
};

// Token sequence form of a template: each node contributes "(", its label
// and ")" in depth-first order.
using LinearTemplate = std::vector<std::string>;

// Parses a single-root bracket expression such as "(ROOT (S (VP )))".
// Whitespace between tokens is ignored. Throws Error with kind
// UnbalancedParens / EmptyLabel / TrailingContent; the message carries the
// byte offset of the defect.
SyntaxTree parse_bracket(std::string_view text);

// Depth-first emission of "(", label, children, ")"; parse_bracket on the
// joined tokens inverts it exactly.
LinearTemplate linearize(const SyntaxTree& tree);

// Canonical bracket string, e.g. "(ROOT (S (VP ) (. )))". Leaves render as
// "(X )". parse_bracket(to_bracket(t)) == t.
std::string to_bracket(const SyntaxTree& tree);

// Space-joined linearization tokens, e.g. "( ROOT ( S ) )".
std::string join_tokens(const LinearTemplate& tokens);

// Copy keeping every node with depth < max_levels (root depth 0).
SyntaxTree truncate(const SyntaxTree& tree, int max_levels);

int node_count(const SyntaxTree& tree);

// Number of levels; a root-only tree has height 1.
int height(const SyntaxTree& tree);

}  // namespace syntempo
