#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written against the definitions directly (plain loops,
// naive recursion) rather than sharing code with the optimized versions.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "syntempo/model.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/syntree.hpp"
#include "syntempo/template_library.hpp"

namespace oracles {

// Memoized recursive forest edit distance (delete/insert/relabel, unit
// costs); exact for ordered trees, no keyroot machinery.
double ted_reference(const syntempo::SyntaxTree& a,
                     const syntempo::SyntaxTree& b);

// Scalar straight-line recomputation of the full scoring pipeline.
double score_reference(const syntempo::ModelParams& params,
                       const std::vector<std::string>& tokens,
                       const syntempo::LinearTemplate& tmpl);

// Central finite differences of score() over every parameter.
std::vector<double> fd_score_gradients(const syntempo::ModelParams& params,
                                       const std::vector<std::string>& tokens,
                                       const syntempo::LinearTemplate& tmpl,
                                       double eps);

// Step-by-step diverse-search simulator: no heap, membership kept in a
// plain list with linear-scan minimum.
struct SimEvent {
  bool fill = false;
  int candidate_id = 0;
  double candidate_score = 0.0;
  double min_ted = -1.0;  // <0 when not evaluated
  int popped_id = -1;
  double heap_min_after = 0.0;
};
struct SimResult {
  std::vector<std::pair<int, double>> members;  // unsorted
  std::vector<SimEvent> events;
};
SimResult dts_reference(const syntempo::TemplateLibrary& lib,
                        const std::vector<double>& scores, int capacity,
                        double beta);

// Loop oracles for the losses and statistics.
double mse_reference(const std::vector<double>& s,
                     const std::vector<double>& q);
double rank_reference(const std::vector<double>& s,
                      const std::vector<double>& q);
double pcc_reference(const std::vector<double>& a,
                     const std::vector<double>& b);

// Corpus BLEU with the same add-one-for-zero-counts smoothing, written
// against ordered-map n-gram tables.
double bleu_reference(const std::vector<std::vector<std::string>>& hyps,
                      const std::vector<std::vector<std::string>>& refs);

// Random ordered tree with 1..max_nodes nodes and labels drawn from the
// given alphabet.
syntempo::SyntaxTree random_tree(syntempo::Rng& rng, int max_nodes,
                                 const std::vector<std::string>& labels);

}  // namespace oracles
