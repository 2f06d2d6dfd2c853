#include "syntempo/ted.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace syntempo {

namespace {

// Left-to-right postorder flattening with per-node leftmost-leaf indices,
// the coordinate system of the Zhang-Shasha recurrence.
struct FlatTree {
  std::vector<const std::string*> labels;  // postorder
  std::vector<int> lml;                    // leftmost leaf of subtree i
  std::vector<int> keyroots;               // ascending

  explicit FlatTree(const SyntaxTree& root) {
    flatten(root);
    std::map<int, int> last_with_lml;
    for (int i = 0; i < static_cast<int>(lml.size()); ++i) {
      last_with_lml[lml[i]] = i;
    }
    for (const auto& [_, i] : last_with_lml) keyroots.push_back(i);
    std::sort(keyroots.begin(), keyroots.end());
  }

  int size() const { return static_cast<int>(labels.size()); }

 private:
  int flatten(const SyntaxTree& node) {
    int leftmost = -1;
    for (const auto& child : node.children) {
      const int child_lml = flatten(child);
      if (leftmost < 0) leftmost = child_lml;
    }
    const int index = static_cast<int>(labels.size());
    if (leftmost < 0) leftmost = index;
    labels.push_back(&node.label);
    lml.push_back(leftmost);
    return leftmost;
  }
};

class ZhangShasha {
 public:
  ZhangShasha(const FlatTree& a, const FlatTree& b, const TedCosts& costs)
      : a_(a), b_(b), costs_(costs), tree_dist_(a.size() * b.size(), 0.0) {}

  double run() {
    for (int i : a_.keyroots) {
      for (int j : b_.keyroots) {
        forest_dist(i, j);
      }
    }
    return tree_dist_[td_index(a_.size() - 1, b_.size() - 1)];
  }

 private:
  std::size_t td_index(int ai, int bi) const {
    return static_cast<std::size_t>(ai) * b_.size() + bi;
  }

  double relabel_cost(int ai, int bi) const {
    return *a_.labels[ai] == *b_.labels[bi] ? 0.0 : costs_.relabel;
  }

  // Fills tree_dist_ for every subtree pair whose roots share the keyroot
  // prefix (i, j); fd is indexed by forest prefix lengths.
  void forest_dist(int i, int j) {
    const int al = a_.lml[i];
    const int bl = b_.lml[j];
    const int m = i - al + 2;
    const int n = j - bl + 2;
    fd_.assign(static_cast<std::size_t>(m) * n, 0.0);
    auto fd = [&](int x, int y) -> double& {
      return fd_[static_cast<std::size_t>(x) * n + y];
    };
    for (int x = 1; x < m; ++x) fd(x, 0) = fd(x - 1, 0) + costs_.remove;
    for (int y = 1; y < n; ++y) fd(0, y) = fd(0, y - 1) + costs_.insert;
    for (int x = 1; x < m; ++x) {
      const int ai = x + al - 1;
      for (int y = 1; y < n; ++y) {
        const int bi = y + bl - 1;
        const double del = fd(x - 1, y) + costs_.remove;
        const double ins = fd(x, y - 1) + costs_.insert;
        if (a_.lml[ai] == al && b_.lml[bi] == bl) {
          const double sub = fd(x - 1, y - 1) + relabel_cost(ai, bi);
          const double best = std::min({del, ins, sub});
          fd(x, y) = best;
          tree_dist_[td_index(ai, bi)] = best;
        } else {
          const int p = a_.lml[ai] - al;
          const int q = b_.lml[bi] - bl;
          const double sub = fd(p, q) + tree_dist_[td_index(ai, bi)];
          fd(x, y) = std::min({del, ins, sub});
        }
      }
    }
  }

  const FlatTree& a_;
  const FlatTree& b_;
  const TedCosts& costs_;
  std::vector<double> tree_dist_;
  std::vector<double> fd_;
};

}  // namespace

double ted(const SyntaxTree& a, const SyntaxTree& b, const TedCosts& costs) {
  FlatTree fa(a);
  FlatTree fb(b);
  return ZhangShasha(fa, fb, costs).run();
}

double normalized_ted(const SyntaxTree& a, const SyntaxTree& b,
                      const TedCosts& costs) {
  const double denom = std::max(node_count(a), node_count(b));
  const double value = ted(a, b, costs) / denom;
  return std::clamp(value, 0.0, 1.0);
}

}  // namespace syntempo
