#include "syntempo/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "syntempo/error.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/ted.hpp"

namespace syntempo {

std::vector<double> score_library(const ModelParams& params,
                                  const std::vector<std::string>& tokens,
                                  const TemplateLibrary& lib,
                                  const TemplateEncodingCache* cache,
                                  int threads) {
  if (lib.empty()) {
    throw Error(ErrorKind::EmptyLibrary, "cannot score an empty library");
  }
  if (cache) {
    if (cache->param_hash != params.content_hash()) {
      throw Error(ErrorKind::StaleCache,
                  "template cache was built for different parameters");
    }
    if (cache->encodings.size() != lib.size()) {
      throw Error(ErrorKind::StaleCache,
                  "template cache entry count does not match the library");
    }
  }
  const int n = static_cast<int>(lib.size());
  std::vector<double> out(n, 0.0);
  const Matrix e_s = encode_sentence(params, tokens);
#ifdef _OPENMP
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 8) num_threads(nthreads)
  for (int i = 0; i < n; ++i) {
    if (cache) {
      out[i] = score_from_encodings(params, e_s, cache->encodings[i]);
    } else {
      const Matrix e_t = encode_template(params, lib.entries()[i].tokens);
      out[i] = score_from_encodings(params, e_s, e_t);
    }
  }
#else
  (void)threads;
  for (int i = 0; i < n; ++i) {
    if (cache) {
      out[i] = score_from_encodings(params, e_s, cache->encodings[i]);
    } else {
      const Matrix e_t = encode_template(params, lib.entries()[i].tokens);
      out[i] = score_from_encodings(params, e_s, e_t);
    }
  }
#endif
  return out;
}

std::vector<double> score_library_serial(
    const ModelParams& params, const std::vector<std::string>& tokens,
    const TemplateLibrary& lib) {
  if (lib.empty()) {
    throw Error(ErrorKind::EmptyLibrary, "cannot score an empty library");
  }
  std::vector<double> out(lib.size(), 0.0);
  for (std::size_t i = 0; i < lib.size(); ++i) {
    out[i] = score(params, tokens, lib.entries()[i].tokens);
  }
  return out;
}

RetrievalResult retrieve_topk(const ModelParams& params,
                              const std::vector<std::string>& tokens,
                              const TemplateLibrary& lib,
                              const TemplateEncodingCache* cache, int k,
                              int threads) {
  if (k < 1 || static_cast<std::size_t>(k) > lib.size()) {
    throw Error(ErrorKind::KTooLarge,
                "k = " + std::to_string(k) + " outside [1, " +
                    std::to_string(lib.size()) + "]");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> scores =
      score_library(params, tokens, lib, cache, threads);

  RetrievalResult result;
  result.source_tokens = tokens;
  result.model_hash = params.content_hash();
  result.ranked.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    result.ranked[i] = {static_cast<int>(i), scores[i]};
  }
  std::sort(result.ranked.begin(), result.ranked.end(),
            [](const ScoredEntry& a, const ScoredEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  result.ranked.resize(k);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

// --- diverse templates search ---

namespace {

// Min-heap comparison: the "largest" element under this ordering is the one
// with the smallest (score, id), which std::push_heap keeps at the front.
bool heap_after(const ScoredEntry& a, const ScoredEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id > b.id;
}

double min_ted_against(const TemplateLibrary& lib,
                       const std::vector<ScoredEntry>& members,
                       int candidate_id) {
  const SyntaxTree& cand = lib.entry(candidate_id).tree;
  double best = 1.0;
  for (const ScoredEntry& m : members) {
    best = std::min(best, normalized_ted(cand, lib.entry(m.id).tree));
  }
  return best;
}

}  // namespace

std::vector<ScoredEntry> DiverseSet::sorted_desc() const {
  std::vector<ScoredEntry> out = entries;
  std::sort(out.begin(), out.end(),
            [](const ScoredEntry& a, const ScoredEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return out;
}

DiverseSet dts_from_scores(const TemplateLibrary& lib,
                           const std::vector<double>& scores, int capacity,
                           double beta, bool strict,
                           std::vector<DtsEvent>* events) {
  if (lib.empty()) {
    throw Error(ErrorKind::EmptyLibrary, "cannot search an empty library");
  }
  if (scores.size() != lib.size()) {
    throw Error(ErrorKind::DimMismatch,
                "score vector does not match the library");
  }
  if (capacity < 1) {
    throw Error(ErrorKind::KTooLarge, "capacity must be >= 1");
  }
  DiverseSet set;
  set.capacity = capacity;
  set.beta = beta;

  auto log_event = [&](const DtsEvent& ev) {
    if (events) events->push_back(ev);
  };

  for (int id = 0; id < static_cast<int>(lib.size()); ++id) {
    const ScoredEntry cand{id, scores[id]};
    if (set.entries.size() < static_cast<std::size_t>(capacity)) {
      // fill phase: unconditional push, unless strict mode also enforces
      // the diversity threshold here
      DtsEvent ev;
      ev.fill = true;
      ev.candidate_id = id;
      ev.candidate_score = cand.score;
      if (strict && !set.entries.empty()) {
        ev.min_ted = min_ted_against(lib, set.entries, id);
        if (!(ev.min_ted > beta)) continue;
      }
      set.entries.push_back(cand);
      std::push_heap(set.entries.begin(), set.entries.end(), heap_after);
      ev.heap_min_after = set.entries.front().score;
      log_event(ev);
      continue;
    }
    const ScoredEntry& minimum = set.entries.front();
    if (!(cand.score > minimum.score)) continue;
    const double min_ted = min_ted_against(lib, set.entries, id);
    if (!(min_ted > beta)) continue;

    DtsEvent ev;
    ev.candidate_id = id;
    ev.candidate_score = cand.score;
    ev.min_ted = min_ted;
    ev.popped_id = minimum.id;
    ev.popped_score = minimum.score;
    std::pop_heap(set.entries.begin(), set.entries.end(), heap_after);
    set.entries.back() = cand;
    std::push_heap(set.entries.begin(), set.entries.end(), heap_after);
    ev.heap_min_after = set.entries.front().score;
    log_event(ev);
  }
  return set;
}

DiverseSet dts(const ModelParams& params,
               const std::vector<std::string>& tokens,
               const TemplateLibrary& lib, const TemplateEncodingCache* cache,
               int capacity, double beta, int threads, bool strict,
               std::vector<DtsEvent>* events) {
  const std::vector<double> scores =
      score_library(params, tokens, lib, cache, threads);
  return dts_from_scores(lib, scores, capacity, beta, strict, events);
}

// --- baselines ---

const TemplateEntry& baseline_random(const TemplateLibrary& lib,
                                     std::uint64_t seed) {
  if (lib.empty()) {
    throw Error(ErrorKind::EmptyLibrary, "cannot sample an empty library");
  }
  Rng rng(seed);
  return lib.entry(static_cast<int>(rng.next_below(lib.size())));
}

const TemplateEntry& baseline_freq(const TemplateLibrary& lib) {
  return lib.most_frequent();
}

const TemplateEntry& baseline_aesop_r(const SyntaxTree& x_tree,
                                      const TemplateLibrary& lib) {
  if (lib.empty()) {
    throw Error(ErrorKind::EmptyLibrary, "cannot search an empty library");
  }
  const SyntaxTree query = truncate(x_tree, lib.max_levels());
  const TemplateEntry* best = nullptr;
  double best_ted = 0.0;
  for (const TemplateEntry& e : lib.entries()) {
    for (const SyntaxTree& src : e.paired_source_trees) {
      const double t = normalized_ted(query, src);
      if (!best || t < best_ted) {
        best = &e;
        best_ted = t;
      }
      // within an entry only the minimum matters; across entries ties keep
      // the earlier (lower) id because of the strict <
    }
  }
  if (!best) {
    throw Error(ErrorKind::NoPairings,
                "library has no paired source trees");
  }
  return *best;
}

}  // namespace syntempo
