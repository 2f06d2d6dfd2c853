#include "syntempo/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "syntempo/error.hpp"
#include "syntempo/io_util.hpp"
#include "syntempo/rng.hpp"

namespace syntempo {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kTagSalt = 0x7461672d73616c74ull;
constexpr std::uint64_t kRefSalt = 0x7265662d73616c74ull;

const char* const kTagLabels[4] = {"TA", "TB", "TC", "TD"};
const char* const kPhraseLabels[4] = {"NP", "VP", "PP", "AP"};

int token_class(const std::string& token, std::uint64_t seed) {
  return static_cast<int>(hash_unit(token, seed ^ kTagSalt) * 4.0) & 3;
}

}  // namespace

SyntaxTree synth_source_tree(const std::vector<std::string>& tokens,
                             std::uint64_t seed) {
  if (tokens.empty()) {
    throw Error(ErrorKind::EmptyInput, "cannot build a tree for no tokens");
  }
  SyntaxTree root{"ROOT", {}};
  SyntaxTree s{"S", {}};
  std::size_t i = 0;
  while (i < tokens.size()) {
    // chunk head's class picks the chunk width (2 or 3)
    const int head_class = token_class(tokens[i], seed);
    std::size_t width = 2 + (head_class & 1);
    width = std::min(width, tokens.size() - i);
    SyntaxTree chunk{"", {}};
    int class_sum = 0;
    for (std::size_t j = 0; j < width; ++j) {
      const int cls = token_class(tokens[i + j], seed);
      class_sum += cls;
      SyntaxTree tag{kTagLabels[cls], {}};
      tag.children.push_back(SyntaxTree{tokens[i + j], {}});
      chunk.children.push_back(std::move(tag));
    }
    chunk.label = kPhraseLabels[class_sum & 3];
    s.children.push_back(std::move(chunk));
    i += width;
  }
  root.children.push_back(std::move(s));
  return root;
}

namespace {

// Reference trees edit the source structure: rotate the chunks, sometimes
// retag a phrase, sometimes drop a chunk. Driven by a hash of the sentence
// so the whole corpus stays reproducible.
SyntaxTree make_reference_tree(const SyntaxTree& source,
                               const std::vector<std::string>& tokens,
                               std::uint64_t seed) {
  SyntaxTree out = source;
  SyntaxTree& s = out.children.front();
  const std::size_t c = s.children.size();
  std::string key;
  for (const auto& t : tokens) key += t + ' ';
  const std::uint64_t h =
      Rng::mix64(fnv1a(key.data(), key.size()) ^ seed ^ kRefSalt);
  Rng rng(h);

  if (c >= 2) {
    const std::size_t rot = 1 + rng.next_below(c - 1);
    std::rotate(s.children.begin(), s.children.begin() + rot,
                s.children.end());
  }
  if (c >= 3 && rng.next_unit() < 0.35) {
    s.children.erase(s.children.begin() +
                     static_cast<std::ptrdiff_t>(rng.next_below(c)));
  }
  for (auto& chunk : s.children) {
    if (rng.next_unit() < 0.25) {
      for (int g = 0; g < 4; ++g) {
        if (chunk.label == kPhraseLabels[g]) {
          chunk.label = kPhraseLabels[(g + 1) & 3];
          break;
        }
      }
    }
  }
  return out;
}

TrainExample make_example(int index, std::uint64_t stream,
                          const SynthConfig& cfg) {
  Rng rng(Rng::mix64(cfg.seed ^ Rng::mix64(stream ^ index)));
  const int span = cfg.max_len - cfg.min_len + 1;
  const int n = cfg.min_len + static_cast<int>(rng.next_below(span));
  TrainExample ex;
  ex.source_tokens.reserve(n);
  char buf[16];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "w%03d",
                  static_cast<int>(rng.next_below(cfg.vocab_size)));
    ex.source_tokens.emplace_back(buf);
  }
  ex.source_tree = synth_source_tree(ex.source_tokens, cfg.seed);
  ex.reference_tree =
      make_reference_tree(ex.source_tree, ex.source_tokens, cfg.seed);
  return ex;
}

constexpr std::uint64_t kTrainStream = 0x747261696eull;
constexpr std::uint64_t kDevStream = 0x646576ull;
constexpr std::uint64_t kTestStream = 0x74657374ull;

void write_split(const std::vector<TrainExample>& split,
                 const std::string& path) {
  std::ofstream out = open_output(path);
  for (const auto& ex : split) {
    json j = {
        {"source_tokens", ex.source_tokens},
        {"source_tree", to_bracket(ex.source_tree)},
        {"reference_tree", to_bracket(ex.reference_tree)},
    };
    out << j.dump() << "\n";
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

}  // namespace

SynthCorpus generate_synth(const SynthConfig& cfg) {
  if (cfg.vocab_size < 1 || cfg.min_len < 1 || cfg.max_len < cfg.min_len) {
    throw Error(ErrorKind::Usage, "invalid synthetic corpus configuration");
  }
  SynthCorpus corpus;
  corpus.train.reserve(cfg.train_sources);
  for (int i = 0; i < cfg.train_sources; ++i) {
    corpus.train.push_back(make_example(i, kTrainStream, cfg));
  }
  corpus.dev.reserve(cfg.dev_sources);
  for (int i = 0; i < cfg.dev_sources; ++i) {
    corpus.dev.push_back(make_example(i, kDevStream, cfg));
  }
  corpus.test.reserve(cfg.test_sources);
  for (int i = 0; i < cfg.test_sources; ++i) {
    corpus.test.push_back(make_example(i, kTestStream, cfg));
  }
  return corpus;
}

void write_synth(const SynthCorpus& corpus, const SynthConfig& cfg,
                 const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string base = dir + "/";
  write_split(corpus.train, base + "train.jsonl");
  write_split(corpus.dev, base + "dev.jsonl");
  write_split(corpus.test, base + "test.jsonl");

  {
    std::ofstream refs = open_output(base + "ref_trees.txt");
    std::ofstream srcs = open_output(base + "src_trees.txt");
    for (const auto& ex : corpus.train) {
      refs << to_bracket(ex.reference_tree) << "\n";
      srcs << to_bracket(ex.source_tree) << "\n";
    }
  }

  json meta = {
      {"planted_seed", cfg.seed},
      {"vocab_size", cfg.vocab_size},
      {"max_levels", cfg.max_levels},
      {"train_sources", corpus.train.size()},
      {"dev_sources", corpus.dev.size()},
      {"test_sources", corpus.test.size()},
  };
  std::ofstream out = open_output(base + "meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace syntempo
