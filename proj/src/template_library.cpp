#include "syntempo/template_library.hpp"

#include <istream>

#include <nlohmann/json.hpp>

#include "syntempo/error.hpp"
#include "syntempo/io_util.hpp"
#include "syntempo/rng.hpp"

namespace syntempo {

namespace {

using json = nlohmann::json;

constexpr const char* kFormat = "syntempo-lib";
constexpr int kVersion = 1;

SyntaxTree parse_line(const std::string& line, std::size_t line_no,
                      const char* stream_name) {
  try {
    return parse_bracket(line);
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError,
                std::string(stream_name) + " line " + std::to_string(line_no) +
                    ": " + e.what());
  }
}

}  // namespace

TemplateLibrary TemplateLibrary::build_from_corpus(std::istream& targets,
                                                   std::istream* sources,
                                                   int max_levels) {
  TemplateLibrary lib;
  lib.max_levels_ = max_levels;
  std::string target_line;
  std::string source_line;
  std::size_t line_no = 0;
  while (std::getline(targets, target_line)) {
    ++line_no;
    bool have_source = false;
    if (sources) {
      if (!std::getline(*sources, source_line)) {
        throw Error(ErrorKind::LengthMismatch,
                    "source stream ended before target line " +
                        std::to_string(line_no));
      }
      have_source = !is_blank_line(source_line);
    }
    target_line = chomp(target_line);
    if (is_blank_line(target_line)) continue;

    SyntaxTree tree =
        truncate(parse_line(target_line, line_no, "targets"), max_levels);
    std::string key = to_bracket(tree);
    auto [it, inserted] =
        lib.by_bracket_.try_emplace(key, static_cast<int>(lib.entries_.size()));
    if (inserted) {
      TemplateEntry entry;
      entry.id = it->second;
      entry.tokens = linearize(tree);
      entry.bracket = std::move(key);
      entry.tree = std::move(tree);
      lib.entries_.push_back(std::move(entry));
    }
    TemplateEntry& entry = lib.entries_[static_cast<std::size_t>(it->second)];
    entry.frequency += 1;
    lib.total_frequency_ += 1;
    if (have_source) {
      SyntaxTree src = parse_line(chomp(source_line), line_no, "sources");
      entry.paired_source_trees.push_back(truncate(src, max_levels));
    }
  }
  if (sources && std::getline(*sources, source_line)) {
    throw Error(ErrorKind::LengthMismatch,
                "source stream longer than target stream");
  }
  return lib;
}

const TemplateEntry* TemplateLibrary::find(const std::string& bracket) const {
  auto it = by_bracket_.find(bracket);
  return it == by_bracket_.end() ? nullptr : &entries_[static_cast<std::size_t>(it->second)];
}

const TemplateEntry& TemplateLibrary::most_frequent() const {
  if (entries_.empty()) {
    throw Error(ErrorKind::EmptyLibrary, "most_frequent on empty library");
  }
  const TemplateEntry* best = &entries_.front();
  for (const auto& entry : entries_) {
    if (entry.frequency > best->frequency) best = &entry;
  }
  return *best;
}

std::vector<const TemplateEntry*> TemplateLibrary::random_sample(
    std::size_t n, std::uint64_t seed) const {
  if (n > entries_.size()) {
    throw Error(ErrorKind::SampleTooLarge,
                "sample of " + std::to_string(n) + " from " +
                    std::to_string(entries_.size()) + " entries");
  }
  Rng rng(seed);
  std::vector<const TemplateEntry*> out;
  out.reserve(n);
  for (std::size_t idx : rng.sample_indices(entries_.size(), n)) {
    out.push_back(&entries_[idx]);
  }
  return out;
}

void TemplateLibrary::save(const std::string& path) const {
  auto out = open_output(path);
  json header = {{"format", kFormat},
                 {"version", kVersion},
                 {"entries", entries_.size()},
                 {"total_frequency", total_frequency_},
                 {"max_levels", max_levels_}};
  out << header.dump() << '\n';
  for (const auto& entry : entries_) {
    json paired = json::array();
    for (const auto& tree : entry.paired_source_trees) {
      paired.push_back(to_bracket(tree));
    }
    json record = {{"id", entry.id},
                   {"template", entry.bracket},
                   {"frequency", entry.frequency},
                   {"paired", std::move(paired)}};
    out << record.dump() << '\n';
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

TemplateLibrary TemplateLibrary::load(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::FormatVersionMismatch, "empty library file: " + path);
  }
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() ||
      header.value("format", "") != kFormat) {
    throw Error(ErrorKind::FormatVersionMismatch,
                "not a " + std::string(kFormat) + " file: " + path);
  }
  if (header.value("version", -1) != kVersion) {
    throw Error(ErrorKind::FormatVersionMismatch,
                "unsupported library version in " + path);
  }
  TemplateLibrary lib;
  lib.max_levels_ = header.value("max_levels", 4);
  const auto expected = header.value("entries", std::size_t{0});
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_line(line)) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw Error(ErrorKind::ParseError,
                  "library record at line " + std::to_string(line_no) +
                      " is not valid JSON");
    }
    TemplateEntry entry;
    entry.id = record.at("id").get<int>();
    if (entry.id != static_cast<int>(lib.entries_.size())) {
      throw Error(ErrorKind::ParseError,
                  "non-dense entry id at line " + std::to_string(line_no));
    }
    entry.bracket = record.at("template").get<std::string>();
    entry.tree = parse_bracket(entry.bracket);
    entry.tokens = linearize(entry.tree);
    entry.frequency = record.at("frequency").get<std::uint64_t>();
    for (const auto& paired : record.at("paired")) {
      entry.paired_source_trees.push_back(
          parse_bracket(paired.get<std::string>()));
    }
    lib.total_frequency_ += entry.frequency;
    lib.by_bracket_.emplace(entry.bracket, entry.id);
    lib.entries_.push_back(std::move(entry));
  }
  if (lib.entries_.size() != expected) {
    throw Error(ErrorKind::FormatVersionMismatch,
                "entry count mismatch in " + path);
  }
  return lib;
}

}  // namespace syntempo
