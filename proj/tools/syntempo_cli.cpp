// Command-line surface for the template retrieval pipeline. Data goes to
// stdout or --out files; progress and diagnostics go to stderr; errors are
// emitted as one JSON line on stderr with exit code 2 (usage), 3 (bad
// data) or 4 (internal invariant).

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "syntempo/error.hpp"
#include "syntempo/io_util.hpp"
#include "syntempo/metrics.hpp"
#include "syntempo/model.hpp"
#include "syntempo/retrieval.hpp"
#include "syntempo/synth.hpp"
#include "syntempo/syntree.hpp"
#include "syntempo/ted.hpp"
#include "syntempo/template_library.hpp"
#include "syntempo/trainer.hpp"

using json = nlohmann::json;
using namespace syntempo;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 2;
    case ErrorKind::DimMismatch:
    case ErrorKind::TraceMismatch:
    case ErrorKind::NonFiniteLoss:
      return 4;
    default:
      return 3;
  }
}

void print_error(const std::string& kind, const std::string& message) {
  json err = {{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

// Settings from an optional JSON config file; a flag given on the command
// line always wins. Keys are the long option names without the leading
// dashes, e.g. {"max-levels": 3, "beta": 0.25}.
struct ConfigFile {
  CLI::App* sub = nullptr;
  json values = json::object();

  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in = open_input(path);
    try {
      values = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError,
                  "config file " + path + ": " + e.what());
    }
    if (!values.is_object()) {
      throw Error(ErrorKind::ParseError,
                  "config file " + path + " must hold a JSON object");
    }
    for (const auto& [key, _] : values.items()) {
      if (!sub->get_option_no_throw("--" + key)) {
        throw Error(ErrorKind::Usage,
                    "config file " + path + ": unknown setting \"" + key +
                        "\"");
      }
    }
  }

  template <typename T>
  void merge(const std::string& key, T& value) const {
    if (sub->count("--" + key) == 0 && values.contains(key)) {
      try {
        value = values.at(key).get<T>();
      } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError,
                    "config setting \"" + key + "\": " + e.what());
      }
    }
  }
};

// Required settings may come from the flag or the config file, so presence
// is checked only after the merge.
void require(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw Error(ErrorKind::Usage, std::string(flag) + " is required");
  }
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> tokens_from_json(const json& j, const char* what) {
  if (j.is_string()) return split_tokens(j.get<std::string>());
  if (j.is_array()) {
    std::vector<std::string> out;
    for (const auto& t : j) {
      if (!t.is_string()) {
        throw Error(ErrorKind::ParseError,
                    std::string(what) + " must hold strings");
      }
      out.push_back(t.get<std::string>());
    }
    return out;
  }
  throw Error(ErrorKind::ParseError,
              std::string(what) + " must be a string or string array");
}

std::string join_with_spaces(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// One sentence per non-blank line, whitespace tokenized.
std::vector<std::vector<std::string>> read_sentences(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    line = chomp(line);
    if (is_blank_line(line)) continue;
    out.push_back(split_tokens(line));
  }
  if (out.empty()) {
    throw Error(ErrorKind::EmptyInput, "no sentences in " + path);
  }
  return out;
}

std::ostream& data_stream(const std::string& out_path, std::ofstream& file) {
  if (out_path.empty()) return std::cout;
  file = open_output(out_path);
  return file;
}

// --- index ---

struct IndexArgs {
  std::string targets, sources, out, config;
  int max_levels = 4;
};

void run_index(const IndexArgs& a) {
  require(a.targets, "--targets");
  require(a.out, "--out");
  std::ifstream targets = open_input(a.targets);
  std::optional<std::ifstream> sources;
  if (!a.sources.empty()) sources.emplace(open_input(a.sources));
  TemplateLibrary lib = TemplateLibrary::build_from_corpus(
      targets, sources ? &*sources : nullptr, a.max_levels);
  lib.save(a.out);
  std::cerr << "indexed " << lib.size() << " templates (frequency "
            << lib.total_frequency() << ") -> " << a.out << "\n";
}

// --- train ---

struct TrainArgs {
  std::string dataset, dev, library, out, log, oracle, config;
  std::uint64_t oracle_seed = 0;
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int ffn_hidden = 128;
  int max_sentence_len = 64;
  int max_template_len = 192;
  bool no_head_bias = false;
  TrainConfig train;
};

void run_train(const TrainArgs& a) {
  require(a.dataset, "--dataset");
  require(a.library, "--library");
  require(a.out, "--out");
  TemplateLibrary lib = TemplateLibrary::load(a.library);
  std::vector<TrainExample> data = load_dataset(a.dataset);
  std::vector<TrainExample> dev;
  if (!a.dev.empty()) dev = load_dataset(a.dev);

  Hyper hyper;
  hyper.d_model = a.d_model;
  hyper.n_layers = a.layers;
  hyper.n_heads = a.heads;
  hyper.ffn_hidden = a.ffn_hidden;
  hyper.max_sentence_len = a.max_sentence_len;
  hyper.max_template_len = a.max_template_len;
  hyper.head_bias = !a.no_head_bias;
  fit_vocabs(hyper, data, lib);
  for (const auto& ex : dev)
    for (const auto& tok : ex.source_tokens) hyper.sentence_vocab.add(tok);
  hyper.validate();

  QualityOracle oracle = a.oracle.empty()
                             ? QualityOracle::planted(a.oracle_seed,
                                                      lib.max_levels())
                             : QualityOracle::precomputed(a.oracle);

  ModelParams params(hyper, a.train.seed);
  TrainResult result = train(std::move(params), lib, data, dev, oracle,
                             a.train);
  save_checkpoint(result.params, a.out);

  if (!a.log.empty()) {
    std::ofstream log = open_output(a.log);
    for (const EpochStats& s : result.log) {
      json line = {{"epoch", s.epoch},
                   {"mean_loss", s.mean_loss},
                   {"dev_pcc", s.dev_pcc}};
      log << line.dump() << "\n";
    }
  }
  for (const EpochStats& s : result.log) {
    std::cerr << "epoch " << s.epoch << ": loss " << s.mean_loss
              << ", dev pcc " << s.dev_pcc << "\n";
  }
  json summary = {{"epochs", static_cast<int>(result.log.size())},
                  {"best_epoch", result.best_epoch},
                  {"best_dev_pcc", result.best_dev_pcc},
                  {"checkpoint", a.out}};
  std::cout << summary.dump() << "\n";
}

// --- score ---

struct ScoreArgs {
  std::string checkpoint, source, tmpl, config;
};

void run_score(const ScoreArgs& a) {
  require(a.checkpoint, "--checkpoint");
  require(a.source, "--source");
  require(a.tmpl, "--template");
  ModelParams params = load_checkpoint(a.checkpoint);
  std::vector<std::string> tokens = split_tokens(a.source);
  LinearTemplate tmpl = linearize(parse_bracket(a.tmpl));
  double s = score(params, tokens, tmpl);
  std::printf("%.6f\n", s);
}

// --- retrieve / retrieve-diverse ---

struct RetrieveArgs {
  std::string checkpoint, library, input, source, out, replay_log, config;
  int k = 10;
  int capacity = 10;
  double beta = 0.2;
  int threads = 0;
  bool strict_dts = false;
};

std::vector<std::vector<std::string>> retrieve_inputs(const RetrieveArgs& a) {
  if (a.input.empty() == a.source.empty()) {
    throw Error(ErrorKind::Usage,
                "exactly one of --input and --source is required");
  }
  if (!a.source.empty()) return {split_tokens(a.source)};
  return read_sentences(a.input);
}

void run_retrieve(const RetrieveArgs& a) {
  require(a.checkpoint, "--checkpoint");
  require(a.library, "--library");
  ModelParams params = load_checkpoint(a.checkpoint);
  TemplateLibrary lib = TemplateLibrary::load(a.library);
  auto sentences = retrieve_inputs(a);

  std::ofstream file;
  std::ostream& out = data_stream(a.out, file);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    RetrievalResult res = retrieve_topk(params, sentences[i], lib, nullptr,
                                        a.k, a.threads);
    for (std::size_t r = 0; r < res.ranked.size(); ++r) {
      json line = {{"sentence", i},
                   {"rank", static_cast<int>(r)},
                   {"template", lib.entry(res.ranked[r].id).bracket},
                   {"score", res.ranked[r].score}};
      out << line.dump() << "\n";
    }
    std::cerr << "retrieved " << res.ranked.size() << " templates for sentence "
              << i << "\n";
  }
}

void run_retrieve_diverse(const RetrieveArgs& a) {
  require(a.checkpoint, "--checkpoint");
  require(a.library, "--library");
  ModelParams params = load_checkpoint(a.checkpoint);
  TemplateLibrary lib = TemplateLibrary::load(a.library);
  auto sentences = retrieve_inputs(a);

  std::ofstream file;
  std::ostream& out = data_stream(a.out, file);
  std::ofstream replay;
  if (!a.replay_log.empty()) replay = open_output(a.replay_log);

  for (std::size_t i = 0; i < sentences.size(); ++i) {
    std::vector<DtsEvent> events;
    DiverseSet set = dts(params, sentences[i], lib, nullptr, a.capacity,
                         a.beta, a.threads, a.strict_dts,
                         a.replay_log.empty() ? nullptr : &events);
    std::vector<ScoredEntry> ranked = set.sorted_desc();
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      json line = {{"sentence", i},
                   {"rank", static_cast<int>(r)},
                   {"template", lib.entry(ranked[r].id).bracket},
                   {"score", ranked[r].score}};
      out << line.dump() << "\n";
    }
    for (const DtsEvent& ev : events) {
      json line = {{"sentence", i},
                   {"fill", ev.fill},
                   {"id", ev.candidate_id},
                   {"score", ev.candidate_score},
                   {"min_ted", ev.min_ted},
                   {"popped_id", ev.popped_id},
                   {"popped_score", ev.popped_score},
                   {"heap_min_after", ev.heap_min_after}};
      replay << line.dump() << "\n";
    }
    std::cerr << "diverse search kept " << ranked.size()
              << " templates for sentence " << i << "\n";
  }
}

// --- eval ---

struct EvalArgs {
  std::string sets, templates, embeddings, out, config;
  double alpha = 0.8;
  int max_levels = 4;
  bool full_depth_ted = false;
  int threads = 0;
};

std::vector<ParaphraseSet> load_sets(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<ParaphraseSet> sets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_blank_line(line)) continue;
    json row;
    try {
      row = json::parse(line);
      ParaphraseSet set;
      set.source_tokens = tokens_from_json(row.at("source"), "source");
      for (const auto& p : row.at("paraphrases"))
        set.paraphrases.push_back(tokens_from_json(p, "paraphrase"));
      if (row.contains("reference"))
        set.reference_tokens =
            tokens_from_json(row.at("reference"), "reference");
      if (row.contains("trees")) {
        for (const auto& t : row.at("trees"))
          set.trees.push_back(parse_bracket(t.get<std::string>()));
        if (set.trees.size() != set.paraphrases.size()) {
          throw Error(ErrorKind::LengthMismatch,
                      "trees must parallel the paraphrases");
        }
      }
      if (set.paraphrases.empty()) {
        throw Error(ErrorKind::ParseError, "a set needs >= 1 paraphrase");
      }
      sets.push_back(std::move(set));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError,
                  path + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), path + " line " + std::to_string(line_no) + ": " +
                                e.what());
    }
  }
  if (sets.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no paraphrase sets in " + path);
  }
  return sets;
}

// Single-output metrics (bleu_s, bleu_r, ted, cos_s, cos_r) evaluate the
// first paraphrase of each set; m_bleu and rep_rate consume all of them.
void run_eval(const EvalArgs& a) {
  require(a.sets, "--sets");
  std::vector<ParaphraseSet> sets = load_sets(a.sets);

  std::vector<std::vector<std::string>> first, srcs;
  for (const auto& s : sets) {
    first.push_back(s.paraphrases.front());
    srcs.push_back(s.source_tokens);
  }

  MetricReport report;
  report.bleu_s = bleu(first, srcs);

  bool all_refs = true;
  for (const auto& s : sets) all_refs = all_refs && !s.reference_tokens.empty();
  if (all_refs) {
    std::vector<std::vector<std::string>> refs;
    for (const auto& s : sets) refs.push_back(s.reference_tokens);
    report.bleu_r = bleu(first, refs);
    report.ibleu = ibleu(*report.bleu_r, *report.bleu_s, a.alpha);
  }

  bool multi = true;
  for (const auto& s : sets) multi = multi && s.paraphrases.size() >= 2;
  if (multi) report.m_bleu = m_bleu(sets);
  report.rep_rate = rep_rate(sets);

  if (!a.templates.empty()) {
    std::ifstream tin = open_input(a.templates);
    std::vector<SyntaxTree> tmpls;
    std::string line;
    while (std::getline(tin, line)) {
      line = chomp(line);
      if (is_blank_line(line)) continue;
      tmpls.push_back(parse_bracket(line));
    }
    if (tmpls.size() != sets.size()) {
      throw Error(ErrorKind::LengthMismatch,
                  "template count does not match paraphrase sets");
    }
    bool all_trees = true;
    for (const auto& s : sets) all_trees = all_trees && !s.trees.empty();
    if (all_trees) {
      std::vector<SyntaxTree> para_trees;
      for (const auto& s : sets) para_trees.push_back(s.trees.front());
      report.ted = ted_corpus(para_trees, tmpls, a.max_levels,
                              a.full_depth_ted, a.threads);
    }
  }

  if (!a.embeddings.empty()) {
    EmbeddingTable table = EmbeddingTable::load(a.embeddings);
    double sum_s = 0.0, sum_r = 0.0;
    for (const auto& s : sets) {
      sum_s += cosine(join_with_spaces(s.paraphrases.front()),
                      join_with_spaces(s.source_tokens), table);
      if (all_refs)
        sum_r += cosine(join_with_spaces(s.paraphrases.front()),
                        join_with_spaces(s.reference_tokens), table);
    }
    report.cos_s = sum_s / static_cast<double>(sets.size());
    if (all_refs) report.cos_r = sum_r / static_cast<double>(sets.size());
  }

  std::ofstream file;
  std::ostream& out = data_stream(a.out, file);
  out << report.to_json() << "\n";
}

// --- synth ---

struct SynthArgs {
  std::string out_dir, config;
  SynthConfig synth;
};

void run_synth(const SynthArgs& a) {
  require(a.out_dir, "--out-dir");
  SynthCorpus corpus = generate_synth(a.synth);
  write_synth(corpus, a.synth, a.out_dir);
  std::cerr << "wrote " << corpus.train.size() << " train / "
            << corpus.dev.size() << " dev / " << corpus.test.size()
            << " test examples -> " << a.out_dir << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"syntactic template retrieval pipeline"};
  app.require_subcommand(1);

  IndexArgs ia;
  CLI::App* index = app.add_subcommand(
      "index", "build a deduplicated template library from parse trees");
  index->add_option("--targets", ia.targets,
                    "reference parse trees, one bracket tree per line");
  index->add_option("--sources", ia.sources,
                    "optional parallel source parse trees");
  index->add_option("--max-levels", ia.max_levels,
                    "truncation depth for templates");
  index->add_option("--out", ia.out, "library file to write");
  index->add_option("--config", ia.config, "JSON config file; flags override");

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "fit the retrieval model");
  tr->add_option("--dataset", ta.dataset, "training JSONL");
  tr->add_option("--dev", ta.dev, "dev JSONL for per-epoch correlation");
  tr->add_option("--library", ta.library, "template library file");
  tr->add_option("--out", ta.out, "checkpoint file to write");
  tr->add_option("--log", ta.log, "per-epoch JSONL log file");
  tr->add_option("--oracle-file", ta.oracle,
                 "precomputed quality table (JSONL)");
  tr->add_option("--oracle-seed", ta.oracle_seed,
                 "seed for the planted synthetic oracle");
  tr->add_option("--d-model", ta.d_model, "embedding width");
  tr->add_option("--layers", ta.layers, "encoder blocks per tower");
  tr->add_option("--heads", ta.heads, "attention heads");
  tr->add_option("--ffn-hidden", ta.ffn_hidden, "feed-forward width");
  tr->add_option("--max-sentence-len", ta.max_sentence_len,
                 "sentence token cap");
  tr->add_option("--max-template-len", ta.max_template_len,
                 "template token cap");
  tr->add_flag("--no-head-bias", ta.no_head_bias,
               "drop the scoring head's bias term");
  tr->add_option("--k", ta.train.k, "candidate templates per example");
  tr->add_option("--lambda1", ta.train.lambda1, "regression loss weight");
  tr->add_option("--lambda2", ta.train.lambda2, "ranking loss weight");
  tr->add_option("--lr", ta.train.lr, "peak learning rate");
  tr->add_option("--weight-decay", ta.train.weight_decay,
                 "decoupled weight decay");
  tr->add_option("--epochs", ta.train.epochs, "training epochs");
  tr->add_option("--batch-size", ta.train.batch_size,
                 "candidate sets per optimizer step");
  tr->add_option("--warmup-frac", ta.train.warmup_frac,
                 "fraction of steps spent warming up");
  tr->add_option("--seed", ta.train.seed,
                 "seed for init, shuffling and candidate draws");
  tr->add_option("--threads", ta.train.threads,
                 "scoring fan-out (0 = all cores)");
  tr->add_option("--config", ta.config, "JSON config file; flags override");

  ScoreArgs sa;
  CLI::App* sc = app.add_subcommand("score",
                                    "score one sentence against one template");
  sc->add_option("--checkpoint", sa.checkpoint, "model checkpoint");
  sc->add_option("--source", sa.source, "sentence (whitespace tokenized)");
  sc->add_option("--template", sa.tmpl, "template as a bracket expression");
  sc->add_option("--config", sa.config, "JSON config file; flags override");

  RetrieveArgs ra;
  CLI::App* re = app.add_subcommand("retrieve",
                                    "rank the whole library for sentences");
  re->add_option("--checkpoint", ra.checkpoint, "model checkpoint");
  re->add_option("--library", ra.library, "template library file");
  re->add_option("--input", ra.input, "sentence file, one per line");
  re->add_option("--source", ra.source, "a single sentence");
  re->add_option("-k,--k", ra.k, "templates to return per sentence");
  re->add_option("--threads", ra.threads, "scoring fan-out (0 = all cores)");
  re->add_option("--out", ra.out, "JSONL output file (default stdout)");
  re->add_option("--config", ra.config, "JSON config file; flags override");

  RetrieveArgs da;
  CLI::App* dv = app.add_subcommand(
      "retrieve-diverse", "greedy heap search for diverse high scorers");
  dv->add_option("--checkpoint", da.checkpoint, "model checkpoint");
  dv->add_option("--library", da.library, "template library file");
  dv->add_option("--input", da.input, "sentence file, one per line");
  dv->add_option("--source", da.source, "a single sentence");
  dv->add_option("-d,--capacity", da.capacity, "diverse set size");
  dv->add_option("--beta", da.beta, "minimum pairwise normalized distance");
  dv->add_flag("--strict-dts", da.strict_dts,
               "apply the diversity test during the fill phase too");
  dv->add_option("--threads", da.threads, "scoring fan-out (0 = all cores)");
  dv->add_option("--out", da.out, "JSONL output file (default stdout)");
  dv->add_option("--replay-log", da.replay_log,
                 "JSONL heap mutation log for audits");
  dv->add_option("--config", da.config, "JSON config file; flags override");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "paraphrase metric report");
  ev->add_option("--sets", ea.sets,
                 "JSONL paraphrase sets: {source, paraphrases, reference?, "
                 "trees?}");
  ev->add_option("--templates", ea.templates,
                 "bracket templates aligned with the sets");
  ev->add_option("--embeddings", ea.embeddings,
                 "JSONL embedding table {sentence, vector}");
  ev->add_option("--alpha", ea.alpha, "reference weight inside ibleu");
  ev->add_option("--max-levels", ea.max_levels, "tree truncation depth");
  ev->add_flag("--full-depth-ted", ea.full_depth_ted,
               "compare full parse trees instead of truncations");
  ev->add_option("--threads", ea.threads, "scoring fan-out (0 = all cores)");
  ev->add_option("--out", ea.out, "report file (default stdout)");
  ev->add_option("--config", ea.config, "JSON config file; flags override");

  SynthArgs ya;
  CLI::App* sy = app.add_subcommand("synth",
                                    "generate a synthetic paraphrase corpus");
  sy->add_option("--out-dir", ya.out_dir, "directory for the corpus files");
  sy->add_option("--train", ya.synth.train_sources, "training examples");
  sy->add_option("--dev", ya.synth.dev_sources, "dev examples");
  sy->add_option("--test", ya.synth.test_sources, "test examples");
  sy->add_option("--vocab", ya.synth.vocab_size, "token vocabulary size");
  sy->add_option("--min-len", ya.synth.min_len, "minimum sentence length");
  sy->add_option("--max-len", ya.synth.max_len, "maximum sentence length");
  sy->add_option("--seed", ya.synth.seed, "corpus and oracle seed");
  sy->add_option("--max-levels", ya.synth.max_levels,
                 "template truncation depth");
  sy->add_option("--config", ya.config, "JSON config file; flags override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text to stdout, exit 0
  } catch (const CLI::ParseError& e) {
    print_error("Usage", e.what());
    return 2;
  }

  if (index->parsed()) {
    ConfigFile cfg{index};
    cfg.load(ia.config);
    cfg.merge("targets", ia.targets);
    cfg.merge("sources", ia.sources);
    cfg.merge("max-levels", ia.max_levels);
    cfg.merge("out", ia.out);
    run_index(ia);
  } else if (tr->parsed()) {
    ConfigFile cfg{tr};
    cfg.load(ta.config);
    cfg.merge("dataset", ta.dataset);
    cfg.merge("dev", ta.dev);
    cfg.merge("library", ta.library);
    cfg.merge("out", ta.out);
    cfg.merge("log", ta.log);
    cfg.merge("oracle-file", ta.oracle);
    cfg.merge("oracle-seed", ta.oracle_seed);
    cfg.merge("d-model", ta.d_model);
    cfg.merge("layers", ta.layers);
    cfg.merge("heads", ta.heads);
    cfg.merge("ffn-hidden", ta.ffn_hidden);
    cfg.merge("max-sentence-len", ta.max_sentence_len);
    cfg.merge("max-template-len", ta.max_template_len);
    cfg.merge("no-head-bias", ta.no_head_bias);
    cfg.merge("k", ta.train.k);
    cfg.merge("lambda1", ta.train.lambda1);
    cfg.merge("lambda2", ta.train.lambda2);
    cfg.merge("lr", ta.train.lr);
    cfg.merge("weight-decay", ta.train.weight_decay);
    cfg.merge("epochs", ta.train.epochs);
    cfg.merge("batch-size", ta.train.batch_size);
    cfg.merge("warmup-frac", ta.train.warmup_frac);
    cfg.merge("seed", ta.train.seed);
    cfg.merge("threads", ta.train.threads);
    run_train(ta);
  } else if (sc->parsed()) {
    ConfigFile cfg{sc};
    cfg.load(sa.config);
    cfg.merge("checkpoint", sa.checkpoint);
    cfg.merge("source", sa.source);
    cfg.merge("template", sa.tmpl);
    run_score(sa);
  } else if (re->parsed()) {
    ConfigFile cfg{re};
    cfg.load(ra.config);
    cfg.merge("checkpoint", ra.checkpoint);
    cfg.merge("library", ra.library);
    cfg.merge("input", ra.input);
    cfg.merge("source", ra.source);
    cfg.merge("k", ra.k);
    cfg.merge("threads", ra.threads);
    cfg.merge("out", ra.out);
    run_retrieve(ra);
  } else if (dv->parsed()) {
    ConfigFile cfg{dv};
    cfg.load(da.config);
    cfg.merge("checkpoint", da.checkpoint);
    cfg.merge("library", da.library);
    cfg.merge("input", da.input);
    cfg.merge("source", da.source);
    cfg.merge("capacity", da.capacity);
    cfg.merge("beta", da.beta);
    cfg.merge("strict-dts", da.strict_dts);
    cfg.merge("threads", da.threads);
    cfg.merge("out", da.out);
    cfg.merge("replay-log", da.replay_log);
    run_retrieve_diverse(da);
  } else if (ev->parsed()) {
    ConfigFile cfg{ev};
    cfg.load(ea.config);
    cfg.merge("sets", ea.sets);
    cfg.merge("templates", ea.templates);
    cfg.merge("embeddings", ea.embeddings);
    cfg.merge("alpha", ea.alpha);
    cfg.merge("max-levels", ea.max_levels);
    cfg.merge("full-depth-ted", ea.full_depth_ted);
    cfg.merge("threads", ea.threads);
    cfg.merge("out", ea.out);
    run_eval(ea);
  } else if (sy->parsed()) {
    ConfigFile cfg{sy};
    cfg.load(ya.config);
    cfg.merge("out-dir", ya.out_dir);
    cfg.merge("train", ya.synth.train_sources);
    cfg.merge("dev", ya.synth.dev_sources);
    cfg.merge("test", ya.synth.test_sources);
    cfg.merge("vocab", ya.synth.vocab_size);
    cfg.merge("min-len", ya.synth.min_len);
    cfg.merge("max-len", ya.synth.max_len);
    cfg.merge("seed", ya.synth.seed);
    cfg.merge("max-levels", ya.synth.max_levels);
    run_synth(ya);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    print_error(e.kind_name(), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 4;
  }
}
