#pragma once

// Labeled dataset ingestion, class counts, and stratified train/test rounds.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sentingram/detail/random.hpp"
#include "sentingram/error.hpp"

namespace sentingram {

// Fixed order positive < neutral < negative. This order indexes every
// per-class array in the library and breaks every argmax tie.
enum class Label : std::uint8_t { positive = 0, neutral = 1, negative = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {Label::positive, Label::neutral,
                                                            Label::negative};

constexpr std::size_t index_of(Label label) noexcept { return static_cast<std::size_t>(label); }

constexpr std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::positive:
      return "positive";
    case Label::neutral:
      return "neutral";
    case Label::negative:
      return "negative";
  }
  return "?";
}

// Case-insensitive; surrounding whitespace ignored.
inline std::optional<Label> try_parse_label(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Label label : kAllLabels) {
    if (lower == to_string(label)) return label;
  }
  return std::nullopt;
}

inline Label parse_label(std::string_view text) {
  if (auto label = try_parse_label(text)) return *label;
  throw Error("unknown sentiment label '" + std::string(text) +
              "' (expected positive, neutral or negative)");
}

inline std::ostream& operator<<(std::ostream& os, Label label) { return os << to_string(label); }

using DocId = std::uint32_t;

struct LabeledDocument {
  DocId id = 0;
  std::string text;
  Label label = Label::neutral;
};

struct LabeledDataset {
  std::string name;
  std::vector<LabeledDocument> documents;

  std::size_t size() const noexcept { return documents.size(); }
  bool empty() const noexcept { return documents.empty(); }

  std::vector<Label> labels() const {
    std::vector<Label> out;
    out.reserve(documents.size());
    for (const auto& doc : documents) out.push_back(doc.label);
    return out;
  }
};

using ClassCounts = std::array<std::size_t, kNumLabels>;

inline ClassCounts count_labels(const std::vector<Label>& labels) {
  ClassCounts counts{};
  for (Label label : labels) ++counts[index_of(label)];
  return counts;
}

inline ClassCounts class_distribution(const LabeledDataset& ds) {
  ClassCounts counts{};
  for (const auto& doc : ds.documents) ++counts[index_of(doc.label)];
  return counts;
}

namespace detail {

// RFC 4180 record reader. Quoted fields may contain commas, doubled quotes
// and line breaks. Tracks the physical line on which each record starts.
class CsvReader {
 public:
  explicit CsvReader(std::string content) : data_(std::move(content)) {
    if (data_.size() >= 3 && data_.compare(0, 3, "\xEF\xBB\xBF") == 0) pos_ = 3;
  }

  // Returns false at end of input. Throws Error on an unterminated quote.
  bool next(std::vector<std::string>& fields, std::size_t& start_line) {
    fields.clear();
    if (pos_ >= data_.size()) return false;
    start_line = line_;
    std::string field;
    bool quoted = false;
    bool field_was_quoted = false;
    while (pos_ < data_.size()) {
      const char c = data_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < data_.size() && data_[pos_] == '"') {
            field += '"';
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field += c;
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_was_quoted) {
        quoted = true;
        field_was_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
      } else if (c == '\n' || c == '\r') {
        if (c == '\r' && pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
        ++line_;
        fields.push_back(std::move(field));
        return true;
      } else {
        field += c;
      }
    }
    if (quoted) {
      throw Error("line " + std::to_string(start_line) + ": unterminated quoted field");
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace detail

// Parses CSV content with header `text,label`. `source` names the input in
// diagnostics.
inline LabeledDataset parse_dataset_csv(std::string content, const std::string& source,
                                        std::string name) {
  detail::CsvReader reader(std::move(content));
  std::vector<std::string> fields;
  std::size_t line = 0;
  auto fail = [&](const std::string& what) -> Error {
    return Error(source + ":" + std::to_string(line) + ": " + what);
  };

  if (!reader.next(fields, line)) throw Error(source + ": empty file (missing header text,label)");
  if (fields.size() != 2 || fields[0] != "text" || fields[1] != "label") {
    throw fail("header must be exactly 'text,label'");
  }

  LabeledDataset ds;
  ds.name = std::move(name);
  while (reader.next(fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != 2) {
      throw fail("malformed row: expected 2 fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw fail("malformed row: empty text");
    auto label = try_parse_label(fields[1]);
    if (!label) throw fail("unknown sentiment label '" + fields[1] + "'");
    ds.documents.push_back(
        {static_cast<DocId>(ds.documents.size()), std::move(fields[0]), *label});
  }
  return ds;
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open dataset file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_csv(buf.str(), path.string(), path.stem().string());
}

struct SplitRound {
  std::vector<DocId> train_ids;  // ascending
  std::vector<DocId> test_ids;   // ascending
};

struct SplitPlan {
  std::vector<SplitRound> rounds;
  std::uint64_t seed = 0;
  double test_fraction = 0.1;
  std::vector<std::string> warnings;

  friend bool operator==(const SplitPlan& a, const SplitPlan& b) {
    if (a.seed != b.seed || a.test_fraction != b.test_fraction || a.rounds.size() != b.rounds.size())
      return false;
    for (std::size_t r = 0; r < a.rounds.size(); ++r) {
      if (a.rounds[r].train_ids != b.rounds[r].train_ids ||
          a.rounds[r].test_ids != b.rounds[r].test_ids)
        return false;
    }
    return true;
  }
};

// Number of test items drawn from a class of `count` members. Classes with a
// single member contribute none.
inline std::size_t stratified_test_count(std::size_t count, double test_fraction) {
  if (count < 2) return 0;
  auto n = static_cast<std::size_t>(std::llround(static_cast<double>(count) * test_fraction));
  return std::clamp<std::size_t>(n, 1, count - 1);
}

// Independent stratified random splits, one per round. Ids are the document
// positions' ids; classes are shuffled separately with a per-round stream.
inline SplitPlan stratified_shuffle_splits(const std::vector<DocId>& ids,
                                           const std::vector<Label>& labels, std::size_t rounds,
                                           double test_fraction, std::uint64_t seed) {
  if (ids.size() != labels.size()) throw Error("split: ids and labels differ in length");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error("split: test fraction must lie strictly between 0 and 1");
  }
  if (rounds == 0) throw Error("split: at least one round is required");

  std::array<std::vector<DocId>, kNumLabels> by_class;
  for (std::size_t i = 0; i < ids.size(); ++i) by_class[index_of(labels[i])].push_back(ids[i]);

  SplitPlan plan;
  plan.seed = seed;
  plan.test_fraction = test_fraction;
  bool any_splittable = false;
  for (Label label : kAllLabels) {
    const auto n = by_class[index_of(label)].size();
    if (n >= 2) any_splittable = true;
    if (n == 1) {
      plan.warnings.push_back("class '" + std::string(to_string(label)) +
                              "' has a single member; it is kept in every training partition");
    }
  }
  if (!any_splittable) {
    throw Error("split: dataset too small; no class has the two members needed to populate "
                "both partitions");
  }
  for (auto& members : by_class) std::sort(members.begin(), members.end());

  for (std::size_t r = 0; r < rounds; ++r) {
    detail::Rng rng(detail::mix_seed(seed, r));
    SplitRound round;
    for (const auto& members : by_class) {
      auto shuffled = members;
      rng.shuffle(shuffled);
      const auto n_test = stratified_test_count(shuffled.size(), test_fraction);
      round.test_ids.insert(round.test_ids.end(), shuffled.begin(), shuffled.begin() + n_test);
      round.train_ids.insert(round.train_ids.end(), shuffled.begin() + n_test, shuffled.end());
    }
    std::sort(round.train_ids.begin(), round.train_ids.end());
    std::sort(round.test_ids.begin(), round.test_ids.end());
    plan.rounds.push_back(std::move(round));
  }
  return plan;
}

inline SplitPlan stratified_shuffle_splits(const LabeledDataset& ds, std::size_t rounds,
                                           double test_fraction, std::uint64_t seed) {
  std::vector<DocId> ids;
  ids.reserve(ds.size());
  for (const auto& doc : ds.documents) ids.push_back(doc.id);
  return stratified_shuffle_splits(ids, ds.labels(), rounds, test_fraction, seed);
}

// Audit export: `round,doc_id,partition` triples, rounds numbered from 0.
inline void write_split_plan(std::ostream& os, const SplitPlan& plan) {
  os << "round,doc_id,partition\n";
  for (std::size_t r = 0; r < plan.rounds.size(); ++r) {
    for (DocId id : plan.rounds[r].train_ids) os << r << ',' << id << ",train\n";
    for (DocId id : plan.rounds[r].test_ids) os << r << ',' << id << ",test\n";
  }
}

}  // namespace sentingram
