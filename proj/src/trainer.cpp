#include "syntempo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "syntempo/error.hpp"
#include "syntempo/io_util.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/ted.hpp"

namespace syntempo {

namespace {

using json = nlohmann::json;

std::string join_tokens_spaced(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::vector<TrainExample> load_dataset(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<TrainExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(std::move(line));
    if (is_blank_line(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, path + " line " +
                                             std::to_string(lineno) + ": " +
                                             e.what());
    }
    TrainExample ex;
    try {
      const json& toks = j.at("source_tokens");
      if (toks.is_string()) {
        ex.source_tokens = split_ws(toks.get<std::string>());
      } else {
        ex.source_tokens = toks.get<std::vector<std::string>>();
      }
      ex.source_tree = parse_bracket(j.at("source_tree").get<std::string>());
      ex.reference_tree =
          parse_bracket(j.at("reference_tree").get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, path + " line " +
                                             std::to_string(lineno) + ": " +
                                             e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, path + " line " +
                                             std::to_string(lineno) + ": " +
                                             e.what());
    }
    if (ex.source_tokens.empty()) {
      throw Error(ErrorKind::ParseError,
                  path + " line " + std::to_string(lineno) +
                      ": empty source_tokens");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void fit_vocabs(Hyper& hyper, const std::vector<TrainExample>& examples,
                const TemplateLibrary& lib) {
  for (const auto& ex : examples) {
    for (const auto& tok : ex.source_tokens) hyper.sentence_vocab.add(tok);
  }
  for (const auto& entry : lib.entries()) {
    for (const auto& tok : entry.tokens) hyper.template_vocab.add(tok);
  }
}

std::vector<Candidate> sample_candidates(const SyntaxTree& x_tree,
                                         const SyntaxTree& y_tree,
                                         const TemplateLibrary& lib, int k,
                                         std::uint64_t seed) {
  if (k < 2) {
    throw Error(ErrorKind::LibraryTooSmall, "candidate count must be >= 2");
  }
  if (lib.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::LibraryTooSmall,
                "library has " + std::to_string(lib.size()) +
                    " templates, need at least " + std::to_string(k));
  }
  const int levels = lib.max_levels();
  std::vector<Candidate> out;
  out.reserve(k);
  auto push_tree = [&](const SyntaxTree& tree) {
    Candidate c;
    c.tree = truncate(tree, levels);
    c.bracket = to_bracket(c.tree);
    for (const Candidate& prev : out) {
      if (prev.bracket == c.bracket) return;  // dedup frees the slot
    }
    c.tokens = linearize(c.tree);
    if (const TemplateEntry* e = lib.find(c.bracket)) c.library_id = e->id;
    out.push_back(std::move(c));
  };
  push_tree(x_tree);
  push_tree(y_tree);

  Rng rng(seed);
  // Walk a whole-library shuffle and keep entries not already present;
  // uniform without replacement among the non-excluded templates.
  std::vector<std::size_t> order =
      rng.sample_indices(lib.size(), lib.size());
  for (std::size_t idx : order) {
    if (out.size() == static_cast<std::size_t>(k)) break;
    const TemplateEntry& e = lib.entry(static_cast<int>(idx));
    bool dup = false;
    for (const Candidate& prev : out) {
      if (prev.bracket == e.bracket) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    Candidate c;
    c.library_id = e.id;
    c.tree = e.tree;
    c.tokens = e.tokens;
    c.bracket = e.bracket;
    out.push_back(std::move(c));
  }
  if (out.size() != static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::LibraryTooSmall,
                "library too small to fill " + std::to_string(k) +
                    " distinct candidates");
  }
  return out;
}

// --- oracle ---

double planted_quality(const SyntaxTree& x_tree, const SyntaxTree& t_tree,
                       std::uint64_t seed, int max_levels) {
  const SyntaxTree xt = truncate(x_tree, max_levels);
  const double closeness = 1.0 - normalized_ted(xt, t_tree);

  auto label_counts = [](const SyntaxTree& tree) {
    std::map<std::string, int> counts;
    std::vector<const SyntaxTree*> stack{&tree};
    while (!stack.empty()) {
      const SyntaxTree* node = stack.back();
      stack.pop_back();
      ++counts[node->label];
      for (const auto& ch : node->children) stack.push_back(&ch);
    }
    return counts;
  };
  auto label_mean = [&](const std::map<std::string, int>& counts,
                        std::uint64_t salt) {
    double sum = 0.0;
    int total = 0;
    for (const auto& [label, n] : counts) {
      sum += hash_unit(label, seed ^ salt) * n;
      total += n;
    }
    return sum / static_cast<double>(total);
  };
  // Positioned feature bag: each node contributes its label decorated with
  // clamped depth and sibling index, so the overlap rewards structural
  // agreement and not just shared vocabulary.
  auto feature_counts = [](const SyntaxTree& tree) {
    std::map<std::string, int> counts;
    auto walk = [&](auto&& self, const SyntaxTree& node, int depth,
                    int sib) -> void {
      ++counts[node.label + '@' + std::to_string(std::min(depth, 3)) + '#' +
               std::to_string(std::min(sib, 3))];
      int i = 0;
      for (const auto& ch : node.children) self(self, ch, depth + 1, i++);
    };
    walk(walk, tree, 0, 0);
    return counts;
  };

  // Hash-weighted multiset overlap of the positioned feature bags: the
  // interaction part of the planted signal. Weights stay in [0.25, 1) so
  // the ratio is well conditioned; identical bags give exactly 1.
  auto weight = [&](const std::string& key) {
    return 0.25 + 0.75 * hash_unit(key, seed ^ 0x6f766c70ull);
  };
  const std::map<std::string, int> fx = feature_counts(xt);
  const std::map<std::string, int> ft = feature_counts(t_tree);
  double shared = 0.0, wx = 0.0, wt = 0.0;
  for (const auto& [key, n] : fx) wx += weight(key) * n;
  for (const auto& [key, n] : ft) wt += weight(key) * n;
  for (const auto& [key, n] : fx) {
    auto it = ft.find(key);
    if (it != ft.end()) shared += weight(key) * std::min(n, it->second);
  }
  const double overlap = shared / std::max(wx, wt);

  const double a = label_mean(label_counts(xt), 0x73726331ull);
  const double b = label_mean(label_counts(t_tree), 0x73726332ull);
  const double g = 0.7 * overlap + 0.15 * a + 0.15 * b;

  return std::clamp(0.6 * closeness + 0.4 * g, 0.0, 1.0);
}

QualityOracle QualityOracle::planted(std::uint64_t seed, int max_levels) {
  QualityOracle o;
  o.planted_ = true;
  o.seed_ = seed;
  o.max_levels_ = max_levels;
  return o;
}

QualityOracle QualityOracle::precomputed(const std::string& path) {
  QualityOracle o;
  o.planted_ = false;
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(std::move(line));
    if (is_blank_line(line)) continue;
    try {
      json j = json::parse(line);
      const std::string key = j.at("source").get<std::string>() + '\t' +
                              j.at("template").get<std::string>();
      o.table_[key] = std::clamp(j.at("quality").get<double>(), 0.0, 1.0);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, path + " line " +
                                             std::to_string(lineno) + ": " +
                                             e.what());
    }
  }
  return o;
}

double QualityOracle::quality(const TrainExample& example,
                              const Candidate& cand) const {
  if (planted_) {
    return planted_quality(example.source_tree, cand.tree, seed_,
                           max_levels_);
  }
  const std::string key =
      join_tokens_spaced(example.source_tokens) + '\t' + cand.bracket;
  auto it = table_.find(key);
  if (it == table_.end()) {
    throw Error(ErrorKind::OracleMiss,
                "no quality for source \"" +
                    join_tokens_spaced(example.source_tokens) +
                    "\" with template " + cand.bracket);
  }
  return it->second;
}

// --- losses ---

double mse_loss(const std::vector<double>& s, const std::vector<double>& q) {
  if (s.size() != q.size() || s.empty()) {
    throw Error(ErrorKind::LengthMismatch,
                "mse_loss needs equal non-empty vectors");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - q[i];
    sum += d * d;
  }
  return sum / static_cast<double>(s.size());
}

double rank_loss(const std::vector<double>& s, const std::vector<double>& q) {
  if (s.size() != q.size() || s.size() < 2) {
    throw Error(ErrorKind::LengthMismatch,
                "rank_loss needs equal vectors of length >= 2");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double dq = q[i] - q[j];
      if (dq >= 0.0) continue;  // indicator 1[dq < 0]
      const double margin = (s[i] - s[j]) - dq;
      if (margin > 0.0) sum += margin;
    }
  }
  return sum;
}

double total_loss(const std::vector<double>& s, const std::vector<double>& q,
                  double l1, double l2, std::vector<double>* ds) {
  const double loss = l1 * mse_loss(s, q) + l2 * rank_loss(s, q);
  if (ds) {
    ds->assign(s.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      (*ds)[i] += l1 * 2.0 * (s[i] - q[i]) * inv;
    }
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        const double dq = q[i] - q[j];
        if (dq >= 0.0) continue;
        if ((s[i] - s[j]) - dq > 0.0) {  // subgradient 0 at the kink
          (*ds)[i] += l2;
          (*ds)[j] -= l2;
        }
      }
    }
  }
  return loss;
}

double pcc(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorKind::LengthMismatch,
                "pcc needs equal vectors of length >= 2");
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw Error(ErrorKind::ZeroVariance,
                "pcc undefined for a constant vector");
  }
  return sab / std::sqrt(saa * sbb);
}

// --- optimizer ---

AdamW::AdamW(std::size_t n, double weight_decay, double beta1, double beta2,
             double eps)
    : weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(n, 0.0),
      v_(n, 0.0) {}

void AdamW::step(std::vector<double>& params,
                 const std::vector<double>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorKind::DimMismatch, "optimizer size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) +
                       weight_decay_ * params[i]);
  }
}

// --- training loop ---

CandidateSet make_candidate_set(const TrainExample& example,
                                const TemplateLibrary& lib,
                                const QualityOracle& oracle, int k,
                                std::uint64_t seed) {
  CandidateSet set;
  set.templates = sample_candidates(example.source_tree,
                                    example.reference_tree, lib, k, seed);
  set.qualities.reserve(set.templates.size());
  for (const Candidate& c : set.templates) {
    set.qualities.push_back(oracle.quality(example, c));
  }
  return set;
}

double set_loss_and_grad(const ModelParams& params,
                         const std::vector<std::string>& tokens,
                         const CandidateSet& set, double l1, double l2,
                         Gradients* grads, int threads) {
  const int k = static_cast<int>(set.templates.size());
  std::vector<ScoreTrace> traces(k);
  std::vector<double> s(k);
#ifdef _OPENMP
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (int i = 0; i < k; ++i) {
    s[i] = score(params, tokens, set.templates[i].tokens, &traces[i]);
  }
#else
  (void)threads;
  for (int i = 0; i < k; ++i) {
    s[i] = score(params, tokens, set.templates[i].tokens, &traces[i]);
  }
#endif
  std::vector<double> ds;
  const double loss = total_loss(s, set.qualities, l1, l2, &ds);
  if (grads) {
    // one buffer per candidate, reduced in index order so thread count
    // never changes the summation order
    std::vector<Gradients> partial(k);
#ifdef _OPENMP
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (int i = 0; i < k; ++i) {
      if (ds[i] != 0.0) backward_into(params, traces[i], ds[i], partial[i]);
    }
#else
    for (int i = 0; i < k; ++i) {
      if (ds[i] != 0.0) backward_into(params, traces[i], ds[i], partial[i]);
    }
#endif
    if (grads->values.empty()) {
      grads->values.assign(params.layout().total, 0.0);
    }
    for (int i = 0; i < k; ++i) {
      if (partial[i].values.empty()) continue;
      for (std::size_t p = 0; p < grads->values.size(); ++p) {
        grads->values[p] += partial[i].values[p];
      }
    }
  }
  return loss;
}

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = Rng::mix64(base ^ Rng::mix64(tag));
  z = Rng::mix64(z ^ (a * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull));
  return Rng::mix64(z ^ b);
}

constexpr std::uint64_t kTagTrain = 0x747261696e736574ull;
constexpr std::uint64_t kTagDev = 0x6465767365740000ull;
constexpr std::uint64_t kTagOrder = 0x6f72646572000000ull;

}  // namespace

double evaluate_pcc(const ModelParams& params, const TemplateLibrary& lib,
                    const std::vector<TrainExample>& examples,
                    const QualityOracle& oracle, int k, std::uint64_t seed,
                    int threads) {
  if (examples.empty()) {
    throw Error(ErrorKind::EmptyInput, "no examples to evaluate");
  }
  std::vector<double> preds, quals;
  const int ne = static_cast<int>(examples.size());
  std::vector<CandidateSet> sets(ne);
  for (int e = 0; e < ne; ++e) {
    sets[e] = make_candidate_set(examples[e], lib, oracle, k,
                                 derive_seed(seed, kTagDev, e));
  }
  const int total = ne * k;
  preds.assign(total, 0.0);
  quals.assign(total, 0.0);
#ifdef _OPENMP
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (int idx = 0; idx < total; ++idx) {
    const int e = idx / k;
    const int i = idx % k;
    preds[idx] = score(params, examples[e].source_tokens,
                       sets[e].templates[i].tokens);
    quals[idx] = sets[e].qualities[i];
  }
#else
  (void)threads;
  for (int idx = 0; idx < total; ++idx) {
    const int e = idx / k;
    const int i = idx % k;
    preds[idx] = score(params, examples[e].source_tokens,
                       sets[e].templates[i].tokens);
    quals[idx] = sets[e].qualities[i];
  }
#endif
  return pcc(preds, quals);
}

TrainResult train(ModelParams params, const TemplateLibrary& lib,
                  const std::vector<TrainExample>& train_data,
                  const std::vector<TrainExample>& dev_data,
                  const QualityOracle& oracle, const TrainConfig& config) {
  if (train_data.empty()) {
    throw Error(ErrorKind::EmptyInput, "empty training dataset");
  }
  TrainResult result;
  result.params = params;
  if (config.epochs <= 0) return result;

  const int ne = static_cast<int>(train_data.size());
  const int batch = std::max(1, config.batch_size);
  const long long steps_per_epoch = (ne + batch - 1) / batch;
  const long long total_steps =
      steps_per_epoch * static_cast<long long>(config.epochs);
  const long long warmup = static_cast<long long>(
      std::ceil(config.warmup_frac * static_cast<double>(total_steps)));

  // Linear warmup to the peak rate, then linear decay to a floor; the
  // floor keeps late epochs productive on short desk-scale schedules.
  constexpr double kLrFloorFrac = 0.25;
  auto lr_at = [&](long long t) {
    if (warmup > 0 && t < warmup) {
      return config.lr * static_cast<double>(t + 1) /
             static_cast<double>(warmup);
    }
    if (total_steps == warmup) return config.lr;
    const double progress = static_cast<double>(t - warmup) /
                            static_cast<double>(total_steps - warmup);
    return config.lr * (1.0 - (1.0 - kLrFloorFrac) * progress);
  };

  AdamW opt(params.layout().total, config.weight_decay);
  long long step_index = 0;
  double best = -2.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order(ne);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(config.seed, kTagOrder, epoch));
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    long long sets_done = 0;
    int cursor = 0;
    while (cursor < ne) {
      const int take = std::min(batch, ne - cursor);
      Gradients grads;
      grads.values.assign(params.layout().total, 0.0);
      double batch_loss = 0.0;
      for (int b = 0; b < take; ++b) {
        const int ei = order[cursor + b];
        const CandidateSet set = make_candidate_set(
            train_data[ei], lib, oracle, config.k,
            derive_seed(config.seed, kTagTrain, epoch, ei));
        batch_loss += set_loss_and_grad(params,
                                        train_data[ei].source_tokens, set,
                                        config.lambda1, config.lambda2,
                                        &grads, config.threads);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::NonFiniteLoss,
                    "non-finite loss at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(step_index));
      }
      if (take > 1) {
        const double inv = 1.0 / take;
        for (double& g : grads.values) g *= inv;
        batch_loss *= inv;
      }
      opt.step(params.mutable_values(), grads.values, lr_at(step_index));
      ++step_index;
      loss_sum += batch_loss;
      ++sets_done;
      cursor += take;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(sets_done);
    if (dev_data.empty()) {
      stats.dev_pcc = 0.0;
    } else {
      try {
        stats.dev_pcc = evaluate_pcc(params, lib, dev_data, oracle, config.k,
                                     config.seed, config.threads);
      } catch (const Error& e) {
        // A saturated model can emit one constant prediction for the whole
        // dev sweep; score that epoch as uncorrelated instead of aborting.
        if (e.kind() != ErrorKind::ZeroVariance) throw;
        stats.dev_pcc = 0.0;
      }
    }
    result.log.push_back(stats);
    if (dev_data.empty() || stats.dev_pcc > best) {
      best = dev_data.empty() ? best : stats.dev_pcc;
      result.params = params;
      result.best_epoch = epoch;
      result.best_dev_pcc = dev_data.empty() ? 0.0 : stats.dev_pcc;
    }
  }
  return result;
}

}  // namespace syntempo
