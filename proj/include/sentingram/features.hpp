#pragma once

// Sparse document vectors over an n-gram dictionary, plus SMOTE oversampling
// of training rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sentingram/corpus_io.hpp"
#include "sentingram/detail/random.hpp"
#include "sentingram/error.hpp"
#include "sentingram/ngram_index.hpp"

namespace sentingram {

enum class FeatureScheme { count_x_weight, binary_x_weight, count };

inline std::string_view to_string(FeatureScheme scheme) noexcept {
  switch (scheme) {
    case FeatureScheme::count_x_weight:
      return "count_x_weight";
    case FeatureScheme::binary_x_weight:
      return "binary_x_weight";
    case FeatureScheme::count:
      return "count";
  }
  return "?";
}

inline FeatureScheme parse_feature_scheme(std::string_view text) {
  for (auto s : {FeatureScheme::count_x_weight, FeatureScheme::binary_x_weight, FeatureScheme::count}) {
    if (text == to_string(s)) return s;
  }
  throw Error("unknown feature scheme '" + std::string(text) + "'");
}

struct Feature {
  std::uint32_t index = 0;
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

// Entries sorted by index, values nonzero.
struct FeatureVector {
  std::vector<Feature> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t nnz() const noexcept { return entries.size(); }

  double get(std::uint32_t index) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), index,
                               [](const Feature& f, std::uint32_t i) { return f.index < i; });
    return it != entries.end() && it->index == index ? it->value : 0.0;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& f : entries) s += f.value * f.value;
    return s;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline double dot(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() && j != b.entries.end()) {
    if (i->index < j->index) {
      ++i;
    } else if (j->index < i->index) {
      ++j;
    } else {
      s += i->value * j->value;
      ++i;
      ++j;
    }
  }
  return s;
}

inline double squared_distance(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() || j != b.entries.end()) {
    if (j == b.entries.end() || (i != a.entries.end() && i->index < j->index)) {
      s += i->value * i->value;
      ++i;
    } else if (i == a.entries.end() || j->index < i->index) {
      s += j->value * j->value;
      ++j;
    } else {
      const double d = i->value - j->value;
      s += d * d;
      ++i;
      ++j;
    }
  }
  return s;
}

class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t dimension, std::string fingerprint)
      : dimension_(dimension), fingerprint_(std::move(fingerprint)) {}

  void push_back(FeatureVector row, Label label) {
    if (!row.entries.empty() && row.entries.back().index >= dimension_) {
      throw Error("feature index out of range for matrix dimension " + std::to_string(dimension_));
    }
    rows_.push_back(std::move(row));
    labels_.push_back(label);
  }

  std::size_t rows() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  const FeatureVector& row(std::size_t i) const { return rows_[i]; }
  const std::vector<FeatureVector>& row_data() const noexcept { return rows_; }
  Label label(std::size_t i) const { return labels_[i]; }
  const std::vector<Label>& labels() const noexcept { return labels_; }

  // Rows at `indices`, in that order.
  FeatureMatrix subset(std::span<const std::size_t> indices) const {
    FeatureMatrix out(dimension_, fingerprint_);
    out.rows_.reserve(indices.size());
    out.labels_.reserve(indices.size());
    for (auto i : indices) {
      out.rows_.push_back(rows_[i]);
      out.labels_.push_back(labels_[i]);
    }
    return out;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t dimension_ = 0;
  std::string fingerprint_;
  std::vector<FeatureVector> rows_;
  std::vector<Label> labels_;
};

// Counts every contiguous occurrence of every dictionary phrase in `tokens`
// (overlaps included) and maps the counts to values by `scheme`.
inline FeatureVector vectorize(const TokenSequence& tokens, const NGramDictionary& dict,
                               FeatureScheme scheme = FeatureScheme::count_x_weight) {
  std::unordered_map<std::uint32_t, std::size_t> counts;
  const std::size_t longest = dict.longest();
  std::string key;
  for (std::size_t start = 0; start < tokens.size(); ++start) {
    key.clear();
    for (std::size_t len = 1; len <= longest && start + len <= tokens.size(); ++len) {
      if (len > 1) key += ' ';
      key += tokens[start + len - 1];
      if (auto idx = dict.find(key)) ++counts[*idx];
    }
  }
  FeatureVector v;
  v.entries.reserve(counts.size());
  for (const auto& [idx, c] : counts) {
    const double w = dict[idx].weight;
    double value = 0.0;
    switch (scheme) {
      case FeatureScheme::count_x_weight:
        value = static_cast<double>(c) * w;
        break;
      case FeatureScheme::binary_x_weight:
        value = w;
        break;
      case FeatureScheme::count:
        value = static_cast<double>(c);
        break;
    }
    if (value != 0.0) v.entries.push_back({idx, value});
  }
  std::sort(v.entries.begin(), v.entries.end(),
            [](const Feature& a, const Feature& b) { return a.index < b.index; });
  return v;
}

// Appends one document to a matrix built against `dict`; the dictionary must
// be the one the matrix was created for.
inline void vectorize_into(FeatureMatrix& m, const TokenSequence& tokens, Label label,
                           const NGramDictionary& dict, FeatureScheme scheme) {
  if (m.fingerprint() != dict.fingerprint()) {
    throw Error("dictionary fingerprint " + dict.fingerprint() +
                " does not match the matrix under construction (" + m.fingerprint() + ")");
  }
  m.push_back(vectorize(tokens, dict, scheme), label);
}

inline FeatureMatrix vectorize_corpus(std::span<const TokenSequence> docs, std::span<const Label> labels,
                                      const NGramDictionary& dict,
                                      FeatureScheme scheme = FeatureScheme::count_x_weight) {
  if (docs.size() != labels.size()) throw Error("vectorize_corpus: documents and labels differ in length");
  FeatureMatrix m(dict.size(), dict.fingerprint());
  for (std::size_t i = 0; i < docs.size(); ++i) vectorize_into(m, docs[i], labels[i], dict, scheme);
  return m;
}

// Coordinate-format dump (`row col value`) for debugging; labels go to a
// separate stream, one per line.
inline void write_matrix_coo(std::ostream& values, std::ostream& labels, const FeatureMatrix& m) {
  values.precision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (const auto& f : m.row(r).entries) values << r << ' ' << f.index << ' ' << f.value << '\n';
    labels << to_string(m.label(r)) << '\n';
  }
}

namespace detail {

// Point on the segment from `a` to `b` at fraction `lambda`, clamped per
// coordinate to the parents' range so rounding can never leave the box.
inline FeatureVector interpolate(const FeatureVector& a, const FeatureVector& b, double lambda) {
  FeatureVector out;
  auto emit = [&](std::uint32_t index, double x, double y) {
    double v = x + lambda * (y - x);
    v = std::clamp(v, std::min(x, y), std::max(x, y));
    if (v != 0.0) out.entries.push_back({index, v});
  };
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() || j != b.entries.end()) {
    if (j == b.entries.end() || (i != a.entries.end() && i->index < j->index)) {
      emit(i->index, i->value, 0.0);
      ++i;
    } else if (i == a.entries.end() || j->index < i->index) {
      emit(j->index, 0.0, j->value);
      ++j;
    } else {
      emit(i->index, i->value, j->value);
      ++i;
      ++j;
    }
  }
  return out;
}

}  // namespace detail

struct SmoteResult {
  FeatureMatrix matrix;
  // For each appended synthetic row: the two original rows it interpolates.
  std::vector<std::pair<std::size_t, std::size_t>> parents;
};

// Grows every non-majority class to the majority count with synthetic rows
// x_i + lambda * (x_nn - x_i), x_nn drawn from the k nearest same-class rows
// (Euclidean; ties by lower row index). Original rows keep their positions;
// synthetic rows are appended class by class in label order.
inline SmoteResult smote_oversample_traced(const FeatureMatrix& m, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw Error("SMOTE: k must be at least 1");
  std::array<std::vector<std::size_t>, kNumLabels> members;
  for (std::size_t r = 0; r < m.rows(); ++r) members[index_of(m.label(r))].push_back(r);
  std::size_t majority = 0;
  for (const auto& c : members) majority = std::max(majority, c.size());

  SmoteResult result{m, {}};
  for (Label label : kAllLabels) {
    const auto& rows = members[index_of(label)];
    if (rows.empty() || rows.size() == majority) continue;
    if (rows.size() < 2) {
      throw Error("SMOTE: class '" + std::string(to_string(label)) +
                  "' has a single member; cannot synthesize neighbours");
    }
    const std::size_t kk = std::min(k, rows.size() - 1);
    // k nearest neighbours per member, computed once.
    std::vector<std::vector<std::size_t>> neighbours(rows.size());
    for (std::size_t a = 0; a < rows.size(); ++a) {
      std::vector<std::pair<double, std::size_t>> dist;
      dist.reserve(rows.size() - 1);
      for (std::size_t b = 0; b < rows.size(); ++b) {
        if (a != b) dist.emplace_back(squared_distance(m.row(rows[a]), m.row(rows[b])), rows[b]);
      }
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
      for (std::size_t t = 0; t < kk; ++t) neighbours[a].push_back(dist[t].second);
    }
    detail::Rng rng(detail::mix_seed(seed, index_of(label)));
    for (std::size_t s = rows.size(); s < majority; ++s) {
      const std::size_t a = rng.below(rows.size());
      const std::size_t nn = neighbours[a][rng.below(kk)];
      const double lambda = rng.uniform();
      result.matrix.push_back(detail::interpolate(m.row(rows[a]), m.row(nn), lambda), label);
      result.parents.emplace_back(rows[a], nn);
    }
  }
  return result;
}

inline FeatureMatrix smote_oversample(const FeatureMatrix& m, std::size_t k, std::uint64_t seed) {
  return smote_oversample_traced(m, k, seed).matrix;
}

}  // namespace sentingram
