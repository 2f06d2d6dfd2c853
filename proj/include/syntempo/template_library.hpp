#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "syntempo/syntree.hpp"

namespace syntempo {

struct TemplateEntry {
  int id = 0;
  SyntaxTree tree;
  LinearTemplate tokens;    // linearize(tree)
  std::string bracket;      // to_bracket(tree); dedup key
  std::uint64_t frequency = 0;
  std::vector<SyntaxTree> paired_source_trees;  // truncated, arrival order
};

// Deduplicated, frequency-indexed store of truncated templates. Ids are
// assigned in first-occurrence order; the library is immutable once built
// and safe to share across threads.
class TemplateLibrary {
 public:
  // Reads one bracket tree per line; blank target lines are skipped (their
  // source line, when a source stream is given, is skipped with them).
  // Trees are truncated to max_levels before deduplication. A parallel
  // source stream must have the same line count; each non-blank source line
  // attaches a truncated pairing to its target's entry.
  static TemplateLibrary build_from_corpus(std::istream& targets,
                                           std::istream* sources = nullptr,
                                           int max_levels = 4);

  const std::vector<TemplateEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t total_frequency() const { return total_frequency_; }
  int max_levels() const { return max_levels_; }

  const TemplateEntry& entry(int id) const { return entries_.at(id); }

  // Exact-match lookup on the canonical bracket string; nullptr if absent.
  const TemplateEntry* find(const std::string& bracket) const;

  // Entry with maximal frequency; ties go to the smallest id.
  const TemplateEntry& most_frequent() const;

  // Uniform sample of n distinct entries; deterministic for a fixed seed.
  std::vector<const TemplateEntry*> random_sample(std::size_t n,
                                                  std::uint64_t seed) const;

  void save(const std::string& path) const;
  static TemplateLibrary load(const std::string& path);

 private:
  std::vector<TemplateEntry> entries_;
  std::unordered_map<std::string, int> by_bracket_;
  std::uint64_t total_frequency_ = 0;
  int max_levels_ = 4;
};

}  // namespace syntempo
