#include "syntempo/syntree.hpp"

#include <algorithm>

#include "syntempo/error.hpp"

namespace syntempo {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
         c == '\v';
}

struct BracketParser {
  std::string_view text;
  std::size_t pos = 0;

  [[noreturn]] void fail(ErrorKind kind, const std::string& what,
                         std::size_t at) {
    throw Error(kind, what + " at byte " + std::to_string(at));
  }

  void skip_space() {
    while (pos < text.size() && is_space(text[pos])) ++pos;
  }

  SyntaxTree parse_node() {
    if (pos >= text.size() || text[pos] != '(') {
      fail(ErrorKind::UnbalancedParens, "expected '('", pos);
    }
    const std::size_t open_at = pos;
    ++pos;
    skip_space();
    const std::size_t label_start = pos;
    while (pos < text.size() && !is_space(text[pos]) && text[pos] != '(' &&
           text[pos] != ')') {
      ++pos;
    }
    if (pos == label_start) {
      fail(ErrorKind::EmptyLabel, "missing node label", label_start);
    }
    SyntaxTree node;
    node.label = std::string(text.substr(label_start, pos - label_start));
    skip_space();
    while (pos < text.size() && text[pos] == '(') {
      node.children.push_back(parse_node());
      skip_space();
    }
    if (pos >= text.size() || text[pos] != ')') {
      fail(ErrorKind::UnbalancedParens, "unclosed '('", open_at);
    }
    ++pos;
    return node;
  }
};

void linearize_into(const SyntaxTree& tree, LinearTemplate& out) {
  out.emplace_back("(");
  out.push_back(tree.label);
  for (const auto& child : tree.children) linearize_into(child, out);
  out.emplace_back(")");
}

void bracket_into(const SyntaxTree& tree, std::string& out) {
  out += '(';
  out += tree.label;
  out += ' ';
  for (std::size_t i = 0; i < tree.children.size(); ++i) {
    bracket_into(tree.children[i], out);
    if (i + 1 < tree.children.size()) out += ' ';
  }
  out += ')';
}

void truncate_into(const SyntaxTree& tree, int depth, int max_levels,
                   SyntaxTree& out) {
  out.label = tree.label;
  if (depth + 1 >= max_levels) return;
  out.children.resize(tree.children.size());
  for (std::size_t i = 0; i < tree.children.size(); ++i) {
    truncate_into(tree.children[i], depth + 1, max_levels, out.children[i]);
  }
}

}  // namespace

SyntaxTree parse_bracket(std::string_view text) {
  BracketParser p{text};
  p.skip_space();
  SyntaxTree root = p.parse_node();
  p.skip_space();
  if (p.pos < text.size()) {
    p.fail(ErrorKind::TrailingContent, "content after root tree", p.pos);
  }
  return root;
}

LinearTemplate linearize(const SyntaxTree& tree) {
  LinearTemplate out;
  out.reserve(static_cast<std::size_t>(3 * node_count(tree)));
  linearize_into(tree, out);
  return out;
}

std::string to_bracket(const SyntaxTree& tree) {
  std::string out;
  bracket_into(tree, out);
  return out;
}

std::string join_tokens(const LinearTemplate& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

SyntaxTree truncate(const SyntaxTree& tree, int max_levels) {
  SyntaxTree out;
  truncate_into(tree, 0, max_levels, out);
  return out;
}

int node_count(const SyntaxTree& tree) {
  int n = 1;
  for (const auto& child : tree.children) n += node_count(child);
  return n;
}

int height(const SyntaxTree& tree) {
  int deepest = 0;
  for (const auto& child : tree.children) {
    deepest = std::max(deepest, height(child));
  }
  return deepest + 1;
}

}  // namespace syntempo
