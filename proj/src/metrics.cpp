#include "syntempo/metrics.hpp"

#include <cmath>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "syntempo/error.hpp"
#include "syntempo/io_util.hpp"
#include "syntempo/ted.hpp"

namespace syntempo {

namespace {

using json = nlohmann::json;

constexpr int kMaxOrder = 4;

// n-grams keyed as tokens joined by an unlikely separator byte
void count_ngrams(const std::vector<std::string>& tokens, int n,
                  std::unordered_map<std::string, int>& counts) {
  if (static_cast<int>(tokens.size()) < n) return;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& hypotheses,
            const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "hypothesis and reference corpora differ in size");
  }
  if (hypotheses.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "empty corpus");
  }
  long long clip[kMaxOrder] = {0, 0, 0, 0};
  long long total[kMaxOrder] = {0, 0, 0, 0};
  long long hyp_len = 0, ref_len = 0;
  std::unordered_map<std::string, int> hyp_counts, ref_counts;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    hyp_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      hyp_counts.clear();
      ref_counts.clear();
      count_ngrams(hyp, n, hyp_counts);
      count_ngrams(ref, n, ref_counts);
      for (const auto& [key, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(key);
        if (it != ref_counts.end()) {
          clip[n - 1] += std::min(count, it->second);
        }
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    double p;
    if (clip[n - 1] > 0) {
      p = static_cast<double>(clip[n - 1]) / static_cast<double>(total[n - 1]);
    } else if (n >= 2) {
      // add-one smoothing on zero counts
      p = 1.0 / static_cast<double>(total[n - 1] + 1);
    } else {
      return 0.0;  // no unigram overlap at all
    }
    log_sum += std::log(p) / kMaxOrder;
  }
  const double bp =
      hyp_len > ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) /
                               static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_sum);
}

double ibleu(double bleu_r, double bleu_s, double alpha) {
  return alpha * bleu_r - (1.0 - alpha) * bleu_s;
}

namespace {

std::size_t common_paraphrase_count(const std::vector<ParaphraseSet>& sets) {
  if (sets.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no paraphrase sets");
  }
  const std::size_t d = sets.front().paraphrases.size();
  for (const auto& set : sets) {
    if (set.paraphrases.size() != d) {
      throw Error(ErrorKind::ParaphraseCountMismatch,
                  "paraphrase counts differ across sources (" +
                      std::to_string(set.paraphrases.size()) + " vs " +
                      std::to_string(d) + ")");
    }
  }
  if (d < 2) {
    throw Error(ErrorKind::TooFewParaphrases,
                "need at least 2 paraphrases per source");
  }
  return d;
}

}  // namespace

double m_bleu(const std::vector<ParaphraseSet>& sets) {
  const std::size_t d = common_paraphrase_count(sets);
  double sum = 0.0;
  int pairs = 0;
  std::vector<std::vector<std::string>> hyps(sets.size()), refs(sets.size());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      for (std::size_t s = 0; s < sets.size(); ++s) {
        hyps[s] = sets[s].paraphrases[i];
        refs[s] = sets[s].paraphrases[j];
      }
      sum += bleu(hyps, refs);
      ++pairs;
    }
  }
  return sum / pairs;
}

double rep_rate(const std::vector<ParaphraseSet>& sets) {
  if (sets.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no paraphrase sets");
  }
  for (const auto& set : sets) {
    if (set.paraphrases.size() < 2) {
      throw Error(ErrorKind::TooFewParaphrases,
                  "need at least 2 paraphrases per source");
    }
  }
  long long repeats = 0, totals = 0;
  std::unordered_set<std::string> seen;
  for (const auto& set : sets) {
    seen.clear();
    for (const auto& para : set.paraphrases) {
      std::string key;
      for (std::size_t i = 0; i < para.size(); ++i) {
        if (i) key += '\x1f';
        key += para[i];
      }
      if (!seen.insert(std::move(key)).second) ++repeats;
      ++totals;
    }
  }
  return 100.0 * static_cast<double>(repeats) / static_cast<double>(totals);
}

double ted_metric(const SyntaxTree& paraphrase_tree,
                  const SyntaxTree& template_tree, int max_levels,
                  bool full_depth) {
  if (full_depth) return normalized_ted(paraphrase_tree, template_tree);
  return normalized_ted(truncate(paraphrase_tree, max_levels),
                        truncate(template_tree, max_levels));
}

double ted_corpus_serial(const std::vector<SyntaxTree>& paraphrase_trees,
                         const std::vector<SyntaxTree>& template_trees,
                         int max_levels, bool full_depth) {
  if (paraphrase_trees.size() != template_trees.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "tree lists differ in size");
  }
  if (paraphrase_trees.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no trees to compare");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < paraphrase_trees.size(); ++i) {
    sum += ted_metric(paraphrase_trees[i], template_trees[i], max_levels,
                      full_depth);
  }
  return sum / static_cast<double>(paraphrase_trees.size());
}

double ted_corpus(const std::vector<SyntaxTree>& paraphrase_trees,
                  const std::vector<SyntaxTree>& template_trees,
                  int max_levels, bool full_depth, int threads) {
  if (paraphrase_trees.size() != template_trees.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "tree lists differ in size");
  }
  if (paraphrase_trees.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no trees to compare");
  }
  const int n = static_cast<int>(paraphrase_trees.size());
  std::vector<double> per(n, 0.0);
#ifdef _OPENMP
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(nthreads)
  for (int i = 0; i < n; ++i) {
    per[i] = ted_metric(paraphrase_trees[i], template_trees[i], max_levels,
                        full_depth);
  }
#else
  (void)threads;
  for (int i = 0; i < n; ++i) {
    per[i] = ted_metric(paraphrase_trees[i], template_trees[i], max_levels,
                        full_depth);
  }
#endif
  // fixed-order reduction
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += per[i];
  return sum / static_cast<double>(n);
}

// --- embeddings ---

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in = open_input(path);
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(std::move(line));
    if (is_blank_line(line)) continue;
    try {
      json j = json::parse(line);
      table.insert(j.at("sentence").get<std::string>(),
                   j.at("vector").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, path + " line " +
                                             std::to_string(lineno) + ": " +
                                             e.what());
    }
  }
  return table;
}

void EmbeddingTable::insert(const std::string& sentence,
                            std::vector<double> vec) {
  if (vec.empty()) {
    throw Error(ErrorKind::ParseError,
                "empty embedding vector for \"" + sentence + "\"");
  }
  for (double v : vec) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::ParseError,
                  "non-finite embedding value for \"" + sentence + "\"");
    }
  }
  if (dim_ < 0) {
    dim_ = static_cast<int>(vec.size());
  } else if (dim_ != static_cast<int>(vec.size())) {
    throw Error(ErrorKind::DimMismatch,
                "embedding dimension " + std::to_string(vec.size()) +
                    " does not match table dimension " +
                    std::to_string(dim_));
  }
  table_[sentence] = std::move(vec);
}

const std::vector<double>& EmbeddingTable::at(
    const std::string& sentence) const {
  auto it = table_.find(sentence);
  if (it == table_.end()) {
    throw Error(ErrorKind::MissingEmbedding,
                "no embedding for \"" + sentence + "\"");
  }
  return it->second;
}

double cosine(const std::string& a, const std::string& b,
              const EmbeddingTable& table) {
  const std::vector<double>& va = table.at(a);
  const std::vector<double>& vb = table.at(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorKind::ZeroVector,
                "cosine undefined for a zero embedding");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string MetricReport::to_json() const {
  json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("bleu_s", bleu_s);
  put("bleu_r", bleu_r);
  put("ibleu", ibleu);
  put("ted", ted);
  put("m_bleu", m_bleu);
  put("rep_rate", rep_rate);
  put("cos_s", cos_s);
  put("cos_r", cos_r);
  return j.dump(2);
}

}  // namespace syntempo
