#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "syntempo/syntree.hpp"

namespace syntempo {

// Corpus-level BLEU in [0, 100]: 4-gram, uniform weights, brevity penalty,
// one reference per hypothesis. Zero n-gram precisions for n >= 2 are
// add-one smoothed; a zero unigram precision yields 0.
double bleu(const std::vector<std::vector<std::string>>& hypotheses,
            const std::vector<std::vector<std::string>>& references);

// alpha*bleu_r - (1-alpha)*bleu_s.
double ibleu(double bleu_r, double bleu_s, double alpha = 0.8);

// Multiple paraphrases of one source, with optional reference and parse
// trees (parallel to the paraphrase list when present).
struct ParaphraseSet {
  std::vector<std::string> source_tokens;
  std::vector<std::vector<std::string>> paraphrases;
  std::vector<std::string> reference_tokens;  // empty = unavailable
  std::vector<SyntaxTree> trees;              // empty = unavailable
};

// Mean over ordered pairs (i, j), i != j, of corpus BLEU taking paraphrase
// i of every source as hypothesis and paraphrase j as reference. Every set
// must carry the same number (>= 2) of paraphrases.
double m_bleu(const std::vector<ParaphraseSet>& sets);

// Percentage of paraphrases that exactly repeat an earlier paraphrase of
// the same source, micro-averaged over all sources.
double rep_rate(const std::vector<ParaphraseSet>& sets);

// Normalized TED between the paraphrase's tree and the template, computed
// on truncated trees unless full_depth is set.
double ted_metric(const SyntaxTree& paraphrase_tree,
                  const SyntaxTree& template_tree, int max_levels = 4,
                  bool full_depth = false);

// Mean ted_metric across a corpus; the parallel kernel and its serial
// reference produce identical results.
double ted_corpus(const std::vector<SyntaxTree>& paraphrase_trees,
                  const std::vector<SyntaxTree>& template_trees,
                  int max_levels, bool full_depth, int threads);
double ted_corpus_serial(const std::vector<SyntaxTree>& paraphrase_trees,
                         const std::vector<SyntaxTree>& template_trees,
                         int max_levels, bool full_depth);

// Precomputed sentence embeddings, keyed by the exact sentence string.
class EmbeddingTable {
 public:
  // JSONL lines {sentence, vector}; all vectors must share one dimension
  // and be finite.
  static EmbeddingTable load(const std::string& path);

  void insert(const std::string& sentence, std::vector<double> vec);
  const std::vector<double>& at(const std::string& sentence) const;
  int dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  int dim_ = -1;
  std::unordered_map<std::string, std::vector<double>> table_;
};

double cosine(const std::string& a, const std::string& b,
              const EmbeddingTable& table);

// Re-exported from the training module.
double pcc(const std::vector<double>& a, const std::vector<double>& b);

struct MetricReport {
  std::optional<double> bleu_s, bleu_r, ibleu, ted, m_bleu, rep_rate, cos_s,
      cos_r;
  // JSON object with a null for every unavailable metric.
  std::string to_json() const;
};

}  // namespace syntempo
