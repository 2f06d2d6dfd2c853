#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "syntempo/model.hpp"
#include "syntempo/syntree.hpp"
#include "syntempo/template_library.hpp"

namespace syntempo {

struct TrainExample {
  std::vector<std::string> source_tokens;
  SyntaxTree source_tree;
  SyntaxTree reference_tree;
};

// JSONL, one object per line: {source_tokens, source_tree, reference_tree}.
// source_tokens may be a list of strings or a whitespace-joined string.
std::vector<TrainExample> load_dataset(const std::string& path);

// Extends the vocabularies with every sentence token in the dataset and the
// linearization tokens of every library entry (first-occurrence order).
void fit_vocabs(Hyper& hyper, const std::vector<TrainExample>& examples,
                const TemplateLibrary& lib);

// One candidate template: either a library entry (library_id >= 0) or a
// truncated tree taken directly from a training pair.
struct Candidate {
  int library_id = -1;
  SyntaxTree tree;
  LinearTemplate tokens;
  std::string bracket;
};

// Slots 0 and 1 hold the truncated templates of x and y (merged when they
// are the same tree); the remaining slots are drawn uniformly without
// replacement from the library, excluding anything already present.
std::vector<Candidate> sample_candidates(const SyntaxTree& x_tree,
                                         const SyntaxTree& y_tree,
                                         const TemplateLibrary& lib, int k,
                                         std::uint64_t seed);

// --- quality oracle ---

// Deterministic synthetic quality for a (sentence, template) pair: a mix of
// syntactic closeness (1 - normalized TED against the sentence's own
// template) and a seeded hash feature of the two trees, clamped to [0,1].
double planted_quality(const SyntaxTree& x_tree, const SyntaxTree& t_tree,
                       std::uint64_t seed, int max_levels = 4);

class QualityOracle {
 public:
  // Synthetic oracle with a planted, learnable quality function.
  static QualityOracle planted(std::uint64_t seed, int max_levels = 4);
  // JSONL file of {source, template, quality}; keyed by the exact source
  // string (tokens joined by single spaces) and template bracket.
  static QualityOracle precomputed(const std::string& path);

  double quality(const TrainExample& example, const Candidate& cand) const;

 private:
  QualityOracle() = default;
  bool planted_ = false;
  std::uint64_t seed_ = 0;
  int max_levels_ = 4;
  std::unordered_map<std::string, double> table_;
};

// --- losses ---

double mse_loss(const std::vector<double>& s, const std::vector<double>& q);
double rank_loss(const std::vector<double>& s, const std::vector<double>& q);
// l1*mse + l2*rank; when ds is given it receives dL/ds_i (hinge subgradient
// 0 on the inactive side of each kink).
double total_loss(const std::vector<double>& s, const std::vector<double>& q,
                  double l1, double l2, std::vector<double>* ds = nullptr);

// Sample Pearson correlation; lengths must match and both sides need
// nonzero variance.
double pcc(const std::vector<double>& a, const std::vector<double>& b);

// --- optimization ---

struct TrainConfig {
  int k = 10;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int epochs = 10;
  int batch_size = 1;  // candidate sets per optimizer step
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = library default
};

// Decoupled-weight-decay adaptive-moment optimizer.
class AdamW {
 public:
  AdamW(std::size_t n, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grads,
            double lr);
  int steps_taken() const { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

struct CandidateSet {
  std::vector<Candidate> templates;
  std::vector<double> qualities;
};

CandidateSet make_candidate_set(const TrainExample& example,
                                const TemplateLibrary& lib,
                                const QualityOracle& oracle, int k,
                                std::uint64_t seed);

// Loss of one candidate set plus, when grads is given, its gradient summed
// into grads. Forward and backward passes fan out over threads; gradients
// are reduced in candidate-index order so the result is thread-invariant.
double set_loss_and_grad(const ModelParams& params,
                         const std::vector<std::string>& tokens,
                         const CandidateSet& set, double l1, double l2,
                         Gradients* grads, int threads);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double dev_pcc = 0.0;
};

struct TrainResult {
  ModelParams params;  // best dev PCC over all epochs
  std::vector<EpochStats> log;
  int best_epoch = -1;
  double best_dev_pcc = 0.0;
};

// Predictions/qualities over fixed per-example candidate sets; used for the
// per-epoch dev PCC and for held-out evaluation.
double evaluate_pcc(const ModelParams& params, const TemplateLibrary& lib,
                    const std::vector<TrainExample>& examples,
                    const QualityOracle& oracle, int k, std::uint64_t seed,
                    int threads);

TrainResult train(ModelParams params, const TemplateLibrary& lib,
                  const std::vector<TrainExample>& train_data,
                  const std::vector<TrainExample>& dev_data,
                  const QualityOracle& oracle, const TrainConfig& config);

}  // namespace syntempo
