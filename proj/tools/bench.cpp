// Compares the OpenMP kernels against their serial reference
// implementations on a synthetic workload and reports wall times plus the
// maximum divergence (which must be zero by construction).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "syntempo/metrics.hpp"
#include "syntempo/model.hpp"
#include "syntempo/retrieval.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/synth.hpp"
#include "syntempo/template_library.hpp"
#include "syntempo/trainer.hpp"

using namespace syntempo;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Workload {
  TemplateLibrary lib;
  ModelParams params;
  std::vector<std::string> sentence;
  std::vector<SyntaxTree> para_trees, tmpl_trees;
};

Workload build_workload(int entries) {
  SynthConfig cfg;
  cfg.train_sources = entries;
  cfg.dev_sources = 0;
  cfg.test_sources = 0;
  cfg.vocab_size = 120;
  cfg.seed = 7;
  SynthCorpus corpus = generate_synth(cfg);

  std::ostringstream refs, srcs;
  for (const auto& ex : corpus.train) {
    refs << to_bracket(ex.reference_tree) << "\n";
    srcs << to_bracket(ex.source_tree) << "\n";
  }
  std::istringstream ref_in(refs.str()), src_in(srcs.str());

  Hyper hyper;
  hyper.d_model = 16;
  hyper.n_layers = 1;
  hyper.n_heads = 2;
  hyper.ffn_hidden = 32;
  hyper.max_template_len = 96;

  Workload w{TemplateLibrary::build_from_corpus(ref_in, &src_in, 4),
             ModelParams(), {}, {}, {}};
  fit_vocabs(hyper, corpus.train, w.lib);
  w.params = ModelParams(hyper, 13);
  w.sentence = corpus.train.front().source_tokens;
  for (const auto& ex : corpus.train) {
    w.para_trees.push_back(ex.source_tree);
    w.tmpl_trees.push_back(ex.reference_tree);
  }
  return w;
}

void report(const char* name, double serial_s, double parallel_s,
            double max_diff) {
  std::printf("%-18s serial %8.3fs  parallel %8.3fs  speedup %5.2fx  "
              "max|diff| %g\n",
              name, serial_s, parallel_s, serial_s / parallel_s, max_diff);
}

}  // namespace

int main(int argc, char** argv) {
  int entries = 600;
  if (argc > 1) entries = std::atoi(argv[1]);
  const int threads = omp_get_max_threads();
  std::printf("workload: %d corpus entries, %d threads\n", entries, threads);

  Workload w = build_workload(entries);
  std::printf("library: %zu templates\n", w.lib.size());

  {
    double t0 = now_seconds();
    TemplateEncodingCache serial = encode_library_serial(w.params, w.lib);
    double t1 = now_seconds();
    TemplateEncodingCache parallel = encode_library(w.params, w.lib, threads);
    double t2 = now_seconds();
    double diff = 0.0;
    for (std::size_t i = 0; i < serial.encodings.size(); ++i) {
      const auto& a = serial.encodings[i].a;
      const auto& b = parallel.encodings[i].a;
      for (std::size_t j = 0; j < a.size(); ++j)
        diff = std::max(diff, std::abs(a[j] - b[j]));
    }
    report("encode_library", t1 - t0, t2 - t1, diff);
  }

  {
    double t0 = now_seconds();
    std::vector<double> serial =
        score_library_serial(w.params, w.sentence, w.lib);
    double t1 = now_seconds();
    std::vector<double> parallel =
        score_library(w.params, w.sentence, w.lib, nullptr, threads);
    double t2 = now_seconds();
    double diff = 0.0;
    for (std::size_t i = 0; i < serial.size(); ++i)
      diff = std::max(diff, std::abs(serial[i] - parallel[i]));
    report("score_library", t1 - t0, t2 - t1, diff);
  }

  {
    double t0 = now_seconds();
    double serial =
        ted_corpus_serial(w.para_trees, w.tmpl_trees, 4, true);
    double t1 = now_seconds();
    double parallel =
        ted_corpus(w.para_trees, w.tmpl_trees, 4, true, threads);
    double t2 = now_seconds();
    report("ted_corpus", t1 - t0, t2 - t1, std::abs(serial - parallel));
  }

  return 0;
}
