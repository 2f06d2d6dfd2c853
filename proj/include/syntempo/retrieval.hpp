#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syntempo/model.hpp"
#include "syntempo/template_library.hpp"

namespace syntempo {

struct ScoredEntry {
  int id = 0;
  double score = 0.0;
};

struct RetrievalResult {
  std::vector<ScoredEntry> ranked;  // score descending, ties by lower id
  std::vector<std::string> source_tokens;
  std::uint64_t model_hash = 0;
  double wall_seconds = 0.0;  // informational; never serialized
};

// Scores every library entry for one sentence; out[i] is entry id i's
// score. With a cache the sentence is encoded once and each template reuses
// its precomputed tower output. Thread fan-out writes to id-indexed slots,
// so results do not depend on the thread count.
std::vector<double> score_library(const ModelParams& params,
                                  const std::vector<std::string>& tokens,
                                  const TemplateLibrary& lib,
                                  const TemplateEncodingCache* cache,
                                  int threads);
// Reference implementation: one direct score() call per entry, no cache,
// no parallelism.
std::vector<double> score_library_serial(const ModelParams& params,
                                         const std::vector<std::string>& tokens,
                                         const TemplateLibrary& lib);

// Exact full-scan top-k.
RetrievalResult retrieve_topk(const ModelParams& params,
                              const std::vector<std::string>& tokens,
                              const TemplateLibrary& lib,
                              const TemplateEncodingCache* cache, int k,
                              int threads);

// One mutation of the diverse-search heap; min_ted < 0 means the diversity
// test was not evaluated (unconditional fill).
struct DtsEvent {
  bool fill = false;
  int candidate_id = 0;
  double candidate_score = 0.0;
  double min_ted = -1.0;
  int popped_id = -1;
  double popped_score = 0.0;
  double heap_min_after = 0.0;
};

// Min-heap of (score, id) pairs; entries.front() is the minimum. A
// candidate replaces the minimum only when its normalized TED to every
// current member (the minimum included) exceeds beta and its score beats
// the minimum's.
struct DiverseSet {
  int capacity = 0;
  double beta = 0.0;
  std::vector<ScoredEntry> entries;  // heap order

  std::vector<ScoredEntry> sorted_desc() const;
};

// Single pass over the library in ascending id order. The first `capacity`
// candidates are pushed without any diversity test; strict mode applies the
// test during the fill as well (and may therefore return fewer entries).
DiverseSet dts(const ModelParams& params,
               const std::vector<std::string>& tokens,
               const TemplateLibrary& lib, const TemplateEncodingCache* cache,
               int capacity, double beta, int threads, bool strict = false,
               std::vector<DtsEvent>* events = nullptr);

// Same state machine driven by precomputed id-indexed scores.
DiverseSet dts_from_scores(const TemplateLibrary& lib,
                           const std::vector<double>& scores, int capacity,
                           double beta, bool strict = false,
                           std::vector<DtsEvent>* events = nullptr);

// --- heuristic baselines ---

const TemplateEntry& baseline_random(const TemplateLibrary& lib,
                                     std::uint64_t seed);
const TemplateEntry& baseline_freq(const TemplateLibrary& lib);
// Entry whose paired source tree is closest (normalized TED) to the
// sentence's truncated tree; ties by lower id.
const TemplateEntry& baseline_aesop_r(const SyntaxTree& x_tree,
                                      const TemplateLibrary& lib);

}  // namespace syntempo
