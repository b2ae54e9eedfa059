#pragma once

// N-gram dictionary: exhaustive enumeration of contiguous phrases up to
// max_n tokens, corpus/document frequencies, singleton pruning and n-gram IDF
// weights.
//
// For a phrase g over a corpus of N documents,
//
//   weight(g) = ln( N * df_phrase(g) / df_terms(g)^2 )
//
// where df_phrase counts documents containing g contiguously and df_terms
// counts documents containing every distinct token of g anywhere. For a
// unigram df_phrase == df_terms, so the weight is the classic ln(N / df).
// Token sets that co-occur mostly as the phrase score high; token sets that
// co-occur but rarely as the phrase go negative.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sentingram/detail/fingerprint.hpp"
#include "sentingram/error.hpp"
#include "sentingram/preprocess.hpp"

namespace sentingram {

using Phrase = std::vector<std::string>;

inline constexpr std::size_t kMaxNGramLength = 10;

inline std::string join_phrase(const Phrase& phrase) {
  std::string out;
  for (std::size_t i = 0; i < phrase.size(); ++i) {
    if (i) out += ' ';
    out += phrase[i];
  }
  return out;
}

inline Phrase split_phrase(std::string_view text) {
  Phrase out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(' ', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) out.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

// Every contiguous subsequence of length 1..max_n with its occurrence count.
// Overlapping occurrences are all counted.
inline std::map<Phrase, std::size_t> enumerate_ngrams(const TokenSequence& tokens,
                                                      std::size_t max_n) {
  if (max_n < 1 || max_n > kMaxNGramLength) throw Error("max_n must lie in [1, 10]");
  std::map<Phrase, std::size_t> counts;
  for (std::size_t start = 0; start < tokens.size(); ++start) {
    Phrase phrase;
    for (std::size_t len = 1; len <= max_n && start + len <= tokens.size(); ++len) {
      phrase.push_back(tokens[start + len - 1]);
      ++counts[phrase];
    }
  }
  return counts;
}

struct NGramEntry {
  Phrase phrase;
  std::size_t freq = 0;
  std::size_t df_phrase = 0;
  std::size_t df_terms = 0;
  double weight = 0.0;

  std::size_t n() const noexcept { return phrase.size(); }
  std::string text() const { return join_phrase(phrase); }
};

inline double ngram_idf_weight(std::size_t df_phrase, std::size_t df_terms, std::size_t corpus_size) {
  assert(df_phrase >= 1 && df_phrase <= df_terms && df_terms <= corpus_size);
  const auto n = static_cast<double>(corpus_size);
  const auto dp = static_cast<double>(df_phrase);
  const auto dt = static_cast<double>(df_terms);
  return std::log(n * dp / (dt * dt));
}

inline double ngram_idf_weight(const NGramEntry& entry, std::size_t corpus_size) {
  return ngram_idf_weight(entry.df_phrase, entry.df_terms, corpus_size);
}

inline std::string format_weight(double weight) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", weight);
  return buf;
}

struct DictionaryOptions {
  std::size_t max_n = kMaxNGramLength;
  std::size_t min_freq = 2;
  // Describes the preprocessing that produced the token streams; part of the
  // fingerprint.
  std::string preprocess_tag = "unspecified";
};

class NGramDictionary {
 public:
  NGramDictionary() = default;

  // `entries` must already be in the order they should be exported in.
  NGramDictionary(std::size_t corpus_size, DictionaryOptions options, std::vector<NGramEntry> entries)
      : corpus_size_(corpus_size), options_(std::move(options)), entries_(std::move(entries)) {
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].text(), static_cast<std::uint32_t>(i)).second) {
        throw Error("dictionary: duplicate phrase '" + entries_[i].text() + "'");
      }
      longest_ = std::max(longest_, entries_[i].n());
    }
    detail::Fingerprint fp;
    fp.update(corpus_size_).update(options_.max_n).update(options_.min_freq).update(
        options_.preprocess_tag);
    for (const auto& e : entries_) {
      fp.update(e.text()).update(e.freq).update(e.df_phrase).update(e.df_terms).update(
          format_weight(e.weight));
    }
    fingerprint_ = fp.hex();
  }

  std::size_t corpus_size() const noexcept { return corpus_size_; }
  std::size_t max_n() const noexcept { return options_.max_n; }
  std::size_t min_freq() const noexcept { return options_.min_freq; }
  const DictionaryOptions& options() const noexcept { return options_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  // Longest phrase actually present.
  std::size_t longest() const noexcept { return longest_; }
  const std::vector<NGramEntry>& entries() const noexcept { return entries_; }
  const NGramEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

  std::optional<std::uint32_t> find(std::string_view phrase_text) const {
    auto it = index_.find(std::string(phrase_text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::uint32_t> find(const Phrase& phrase) const { return find(join_phrase(phrase)); }

  // Number of entries per phrase length, index 0 unused.
  std::vector<std::size_t> counts_by_length() const {
    std::vector<std::size_t> counts(options_.max_n + 1, 0);
    for (const auto& e : entries_) ++counts[e.n()];
    return counts;
  }

  friend bool operator==(const NGramDictionary& a, const NGramDictionary& b) {
    return a.fingerprint_ == b.fingerprint_;
  }

 private:
  std::size_t corpus_size_ = 0;
  DictionaryOptions options_;
  std::vector<NGramEntry> entries_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t longest_ = 0;
  std::string fingerprint_;
};

// Descending weight, then ascending phrase text.
inline void sort_canonical(std::vector<NGramEntry>& entries) {
  std::vector<std::pair<std::string, std::size_t>> keys;
  keys.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) keys.emplace_back(entries[i].text(), i);
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    const double wa = entries[a.second].weight;
    const double wb = entries[b.second].weight;
    if (wa != wb) return wa > wb;
    return a.first < b.first;
  });
  std::vector<NGramEntry> sorted;
  sorted.reserve(entries.size());
  for (const auto& [text, i] : keys) sorted.push_back(std::move(entries[i]));
  entries = std::move(sorted);
}

namespace detail {

struct IdSequenceHash {
  std::size_t operator()(const std::vector<std::uint32_t>& ids) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto id : ids) {
      h ^= id;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

inline std::size_t intersect_count(std::vector<const std::vector<std::uint32_t>*> lists) {
  std::sort(lists.begin(), lists.end(),
            [](const auto* a, const auto* b) { return a->size() < b->size(); });
  std::vector<std::uint32_t> acc = *lists.front();
  std::vector<std::uint32_t> next;
  for (std::size_t i = 1; i < lists.size() && !acc.empty(); ++i) {
    next.clear();
    std::set_intersection(acc.begin(), acc.end(), lists[i]->begin(), lists[i]->end(),
                          std::back_inserter(next));
    acc.swap(next);
  }
  return acc.size();
}

}  // namespace detail

// Sliding-window enumeration over each document into one aggregate keyed by
// token-id sequences. Statistics are independent of document order except
// through the final canonical sort, which is total.
inline NGramDictionary build_dictionary(std::span<const TokenSequence> docs,
                                        DictionaryOptions options = {}) {
  if (options.max_n < 1 || options.max_n > kMaxNGramLength) throw Error("max_n must lie in [1, 10]");
  if (options.min_freq < 1) throw Error("min_freq must be at least 1");
  if (docs.empty()) throw Error("cannot build a dictionary from zero documents");

  std::unordered_map<std::string, std::uint32_t> vocab;
  std::vector<std::string> words;
  std::vector<std::vector<std::uint32_t>> postings;  // token id -> ascending doc ids
  std::vector<std::vector<std::uint32_t>> encoded(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    encoded[d].reserve(docs[d].size());
    for (const auto& token : docs[d]) {
      auto [it, inserted] = vocab.emplace(token, static_cast<std::uint32_t>(words.size()));
      if (inserted) {
        words.push_back(token);
        postings.emplace_back();
      }
      auto& list = postings[it->second];
      if (list.empty() || list.back() != d) list.push_back(static_cast<std::uint32_t>(d));
      encoded[d].push_back(it->second);
    }
  }

  struct Stats {
    std::size_t freq = 0;
    std::size_t df_phrase = 0;
    std::size_t last_doc = SIZE_MAX;
  };
  std::unordered_map<std::vector<std::uint32_t>, Stats, detail::IdSequenceHash> stats;
  std::vector<std::uint32_t> key;
  for (std::size_t d = 0; d < encoded.size(); ++d) {
    const auto& ids = encoded[d];
    for (std::size_t start = 0; start < ids.size(); ++start) {
      key.clear();
      for (std::size_t len = 1; len <= options.max_n && start + len <= ids.size(); ++len) {
        key.push_back(ids[start + len - 1]);
        auto& s = stats[key];
        ++s.freq;
        if (s.last_doc != d) {
          s.last_doc = d;
          ++s.df_phrase;
        }
      }
    }
  }

  const std::size_t n_docs = docs.size();
  std::unordered_map<std::vector<std::uint32_t>, std::size_t, detail::IdSequenceHash> term_set_df;
  std::vector<NGramEntry> entries;
  for (const auto& [ids, s] : stats) {
    if (s.freq < options.min_freq) continue;
    std::vector<std::uint32_t> term_set(ids);
    std::sort(term_set.begin(), term_set.end());
    term_set.erase(std::unique(term_set.begin(), term_set.end()), term_set.end());
    auto cached = term_set_df.find(term_set);
    std::size_t df_terms;
    if (cached != term_set_df.end()) {
      df_terms = cached->second;
    } else {
      std::vector<const std::vector<std::uint32_t>*> lists;
      for (auto id : term_set) lists.push_back(&postings[id]);
      df_terms = detail::intersect_count(std::move(lists));
      term_set_df.emplace(std::move(term_set), df_terms);
    }
    NGramEntry entry;
    for (auto id : ids) entry.phrase.push_back(words[id]);
    entry.freq = s.freq;
    entry.df_phrase = s.df_phrase;
    entry.df_terms = df_terms;
    entry.weight = ngram_idf_weight(entry, n_docs);
    entries.push_back(std::move(entry));
  }
  sort_canonical(entries);
  return NGramDictionary(n_docs, std::move(options), std::move(entries));
}

inline NGramDictionary build_dictionary(const std::vector<TokenSequence>& docs,
                                        DictionaryOptions options = {}) {
  return build_dictionary(std::span<const TokenSequence>(docs), std::move(options));
}

// TSV export. Leading '#' lines carry dictionary metadata and any caller
// supplied provenance lines (`extra`, written verbatim after "# "), then the
// column header, then one row per entry in dictionary order.
inline void write_dictionary_tsv(std::ostream& os, const NGramDictionary& dict,
                                 const std::vector<std::string>& extra = {}) {
  os << "# sentingram-dictionary\t1\n";
  os << "# corpus_size\t" << dict.corpus_size() << '\n';
  os << "# max_n\t" << dict.max_n() << '\n';
  os << "# min_freq\t" << dict.min_freq() << '\n';
  os << "# preprocess\t" << dict.options().preprocess_tag << '\n';
  for (const auto& line : extra) os << "# " << line << '\n';
  os << "phrase\tn\tfreq\tdf_phrase\tdf_terms\tweight\n";
  for (const auto& e : dict.entries()) {
    os << e.text() << '\t' << e.n() << '\t' << e.freq << '\t' << e.df_phrase << '\t' << e.df_terms
       << '\t' << format_weight(e.weight) << '\n';
  }
}

struct LoadedDictionary {
  NGramDictionary dictionary;
  std::vector<std::string> extra;
};

// Inverse of write_dictionary_tsv. Row order is preserved so a re-export is
// byte-identical.
inline LoadedDictionary read_dictionary_tsv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return Error("dictionary line " + std::to_string(line_no) + ": " + what);
  };
  auto parse_size = [&](const std::string& text) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(text, &pos);
    } catch (const std::exception&) {
      throw fail("expected an unsigned integer, got '" + text + "'");
    }
    if (pos != text.size()) throw fail("expected an unsigned integer, got '" + text + "'");
    return static_cast<std::size_t>(v);
  };

  std::optional<std::size_t> corpus_size;
  DictionaryOptions options;
  std::vector<std::string> extra;
  bool saw_magic = false;
  bool saw_header = false;
  std::vector<NGramEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (!saw_header && line.rfind("# ", 0) == 0) {
      const std::string body = line.substr(2);
      const auto tab = body.find('\t');
      const std::string key = body.substr(0, tab);
      const std::string value = tab == std::string::npos ? "" : body.substr(tab + 1);
      if (key == "sentingram-dictionary") {
        if (value != "1") throw fail("unsupported dictionary version " + value);
        saw_magic = true;
      } else if (key == "corpus_size") {
        corpus_size = parse_size(value);
      } else if (key == "max_n") {
        options.max_n = parse_size(value);
      } else if (key == "min_freq") {
        options.min_freq = parse_size(value);
      } else if (key == "preprocess") {
        options.preprocess_tag = value;
      } else {
        extra.push_back(body);
      }
      continue;
    }
    if (!saw_header) {
      if (line != "phrase\tn\tfreq\tdf_phrase\tdf_terms\tweight") throw fail("bad column header");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 6) throw fail("expected 6 columns");
    NGramEntry e;
    e.phrase = split_phrase(cols[0]);
    if (e.phrase.empty() || e.phrase.size() != parse_size(cols[1])) throw fail("phrase length mismatch");
    e.freq = parse_size(cols[2]);
    e.df_phrase = parse_size(cols[3]);
    e.df_terms = parse_size(cols[4]);
    if (!corpus_size) throw fail("rows before corpus_size metadata");
    if (!(e.df_phrase >= 1 && e.df_phrase <= e.df_terms && e.df_terms <= *corpus_size &&
          e.freq >= e.df_phrase)) {
      throw fail("inconsistent statistics for '" + e.text() + "'");
    }
    // Weights are recomputed from the counts; the printed column must agree.
    e.weight = ngram_idf_weight(e, *corpus_size);
    if (format_weight(e.weight) != cols[5]) throw fail("weight column disagrees with the counts");
    entries.push_back(std::move(e));
  }
  if (!saw_magic || !corpus_size) throw Error("dictionary: missing metadata header");
  if (!saw_header) throw Error("dictionary: missing column header");
  return {NGramDictionary(*corpus_size, std::move(options), std::move(entries)), std::move(extra)};
}

}  // namespace sentingram
