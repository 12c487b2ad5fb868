#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "weaktag/error.hpp"
#include "weaktag/features.hpp"
#include "weaktag/models.hpp"

namespace weaktag {

enum class Split { development, evaluation };

inline std::string_view to_string(Split s) {
  return s == Split::development ? "development" : "evaluation";
}

inline Split parse_split(std::string_view s) {
  if (s == "development") return Split::development;
  if (s == "evaluation") return Split::evaluation;
  fail(Errc::invalid_argument, "split must be development or evaluation, got '" + std::string(s) + "'");
}

/// One row of a weak-label index. Fold 0 means "no fold assigned".
struct IndexEntry {
  std::string clip_id;
  std::string label_string;
  ClipLabel label;
  int fold = 0;
  Split split = Split::development;
};

struct WeakDatasetIndex {
  TagVocabulary vocabulary;
  std::vector<IndexEntry> entries;
  std::vector<std::string> warnings;
};

/// Parses lines `clip_id,label_string,fold,split`. Label strings concatenate
/// single-letter tags (e.g. `cpo`); repeated letters collapse. Blank lines
/// and lines starting with '#' are skipped.
inline WeakDatasetIndex parse_weak_labels(std::istream& in, const TagVocabulary& vocab,
                                          const std::string& source = "index") {
  WeakDatasetIndex index;
  index.vocabulary = vocab;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 4) fail(Errc::malformed_line, where + ": expected 4 comma-separated fields");

    IndexEntry e;
    e.clip_id = fields[0];
    if (e.clip_id.empty()) fail(Errc::malformed_line, where + ": empty clip id");
    if (!seen.insert(e.clip_id).second) fail(Errc::duplicate_clip, where + ": " + e.clip_id);
    e.label_string = fields[1];
    e.label.t.assign(vocab.size(), 0);
    for (char c : fields[1]) {
      const auto k = vocab.index_of(std::string(1, c));
      if (!k) fail(Errc::unknown_tag, where + ": tag letter '" + std::string(1, c) + "'");
      e.label.t[*k] = 1;
    }
    if (fields[1].empty()) index.warnings.push_back(where + ": " + e.clip_id + " has no tags");
    if (!fields[2].empty()) {
      try {
        std::size_t used = 0;
        e.fold = std::stoi(fields[2], &used);
        if (used != fields[2].size() || e.fold < 0) throw std::invalid_argument("fold");
      } catch (const std::exception&) {
        fail(Errc::malformed_line, where + ": bad fold '" + fields[2] + "'");
      }
    }
    try {
      e.split = parse_split(fields[3]);
    } catch (const Error&) {
      fail(Errc::malformed_line, where + ": bad split '" + fields[3] + "'");
    }
    index.entries.push_back(std::move(e));
  }
  return index;
}

inline WeakDatasetIndex load_weak_labels(const std::filesystem::path& path,
                                         const TagVocabulary& vocab) {
  if (!std::filesystem::exists(path)) fail(Errc::file_not_found, path.string());
  std::ifstream in(path);
  return parse_weak_labels(in, vocab, path.string());
}

/// Label string for a binary label, in vocabulary order.
inline std::string label_string(const ClipLabel& label, const TagVocabulary& vocab) {
  std::string s;
  for (std::size_t k = 0; k < label.size(); ++k)
    if (label[k]) s += vocab[k];
  return s;
}

/// Restricts labels to a sub-vocabulary (used to exclude tags such as 'S').
inline ClipLabel project_label(const ClipLabel& label, const TagVocabulary& from,
                               const TagVocabulary& to) {
  ClipLabel out;
  out.t.assign(to.size(), 0);
  for (std::size_t k = 0; k < to.size(); ++k) {
    const auto src = from.index_of(to[k]);
    require(src.has_value(), Errc::unknown_tag, to[k]);
    out.t[k] = label.t[*src];
  }
  return out;
}

/// A featurized clip ready for training or evaluation.
struct LabelledClip {
  std::string id;
  BlockSequence blocks;
  ClipLabel label;
  int fold = 0;
};

using Dataset = std::vector<LabelledClip>;

}  // namespace weaktag
