#pragma once

// Text normalization: character filtering, whitespace tokenization and
// stop-word removal.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sentingram/detail/stopwords_en.hpp"
#include "sentingram/error.hpp"

namespace sentingram {

// Lowercase tokens over [a-z0-9], in source order.
using TokenSequence = std::vector<std::string>;

constexpr bool is_ascii_alnum(unsigned char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

// Replaces every character outside [A-Za-z0-9] by one space. Input is read as
// UTF-8, so a multi-byte code point becomes a single space.
inline std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    if (is_ascii_alnum(c)) {
      out += static_cast<char>(c);
    } else if ((c & 0xC0) != 0x80) {
      out += ' ';
    }
  }
  return out;
}

inline TokenSequence tokenize(std::string_view clean) {
  TokenSequence tokens;
  std::string current;
  for (unsigned char c : clean) {
    if (is_ascii_alnum(c)) {
      current += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

class StopList {
 public:
  StopList() = default;
  StopList(std::set<std::string, std::less<>> words, std::string source_tag)
      : words_(std::move(words)), source_tag_(std::move(source_tag)) {}

  // The list compiled into the library.
  static StopList english() {
    std::set<std::string, std::less<>> words;
    for (std::string_view w : detail::kDefaultStopWords) words.emplace(w);
    return StopList(std::move(words), std::string(detail::kDefaultStopListTag));
  }

  // One word per line, '#' begins a comment. Words are normalized the same
  // way as document text so membership stays exact-match on tokens.
  static StopList load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(path.string() + ": cannot open stop-word list");
    std::set<std::string, std::less<>> words;
    std::string line;
    while (std::getline(in, line)) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      for (auto& token : tokenize(clean_text(line))) words.insert(std::move(token));
    }
    return StopList(std::move(words), "file:" + path.filename().string());
  }

  bool contains(std::string_view token) const { return words_.find(token) != words_.end(); }
  std::size_t size() const noexcept { return words_.size(); }
  const std::string& source_tag() const noexcept { return source_tag_; }
  const std::set<std::string, std::less<>>& words() const noexcept { return words_; }

 private:
  std::set<std::string, std::less<>> words_;
  std::string source_tag_ = "empty";
};

inline TokenSequence remove_stopwords(TokenSequence tokens, const StopList& stop_list) {
  std::erase_if(tokens, [&](const std::string& t) { return stop_list.contains(t); });
  return tokens;
}

struct PreprocessOptions {
  bool remove_stopwords = true;
  StopList stop_list = StopList::english();
};

inline TokenSequence preprocess(std::string_view raw, const PreprocessOptions& options) {
  auto tokens = tokenize(clean_text(raw));
  if (options.remove_stopwords) tokens = remove_stopwords(std::move(tokens), options.stop_list);
  return tokens;
}

}  // namespace sentingram
