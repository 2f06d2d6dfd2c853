#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syntempo/trainer.hpp"

namespace syntempo {

// Synthetic corpus generator. Sentences are random token sequences; each
// sentence's parse tree is a pure function of its tokens (token hash ->
// tag class -> chunk structure), so the planted quality of any (sentence,
// template) pair is learnable from the tokens alone. References are
// structural edits of the source tree (chunk rotation, relabeling, chunk
// drop), giving the template library realistic near-duplicates.
struct SynthConfig {
  int train_sources = 2000;
  int dev_sources = 300;
  int test_sources = 300;
  int vocab_size = 200;
  int min_len = 4;
  int max_len = 12;
  std::uint64_t seed = 0;
  int max_levels = 4;
};

struct SynthCorpus {
  std::vector<TrainExample> train, dev, test;
};

// Parse tree implied by a token sequence (deterministic given the seed).
SyntaxTree synth_source_tree(const std::vector<std::string>& tokens,
                             std::uint64_t seed);

SynthCorpus generate_synth(const SynthConfig& config);

// Writes train/dev/test.jsonl, ref_trees.txt + src_trees.txt (training
// split, full depth, for library building), and meta.json into dir.
void write_synth(const SynthCorpus& corpus, const SynthConfig& config,
                 const std::string& dir);

}  // namespace syntempo
