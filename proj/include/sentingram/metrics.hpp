#pragma once

// Confusion matrices, per-class precision/recall/F1 and weighted F1.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sentingram/corpus_io.hpp"
#include "sentingram/error.hpp"

namespace sentingram {

// counts[true][predicted], indexed in label order.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> counts{};

  std::size_t trace() const noexcept {
    std::size_t t = 0;
    for (std::size_t c = 0; c < kNumLabels; ++c) t += counts[c][c];
    return t;
  }

  std::size_t total() const noexcept {
    std::size_t t = 0;
    for (const auto& row : counts) {
      for (auto v : row) t += v;
    }
    return t;
  }

  std::size_t support(Label l) const noexcept {
    std::size_t s = 0;
    for (auto v : counts[index_of(l)]) s += v;
    return s;
  }

  std::size_t predicted(Label l) const noexcept {
    std::size_t s = 0;
    for (const auto& row : counts) s += row[index_of(l)];
    return s;
  }

  ConfusionMatrix transposed() const {
    ConfusionMatrix t;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      for (std::size_t j = 0; j < kNumLabels; ++j) t.counts[j][i] = counts[i][j];
    }
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      for (std::size_t j = 0; j < kNumLabels; ++j) counts[i][j] += o.counts[i][j];
    }
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error("confusion_matrix: " + std::to_string(truth.size()) + " true labels vs " +
                std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.counts[index_of(truth[i])][index_of(predicted[i])];
  return cm;
}

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  std::size_t predicted = 0;
  // False only when the class has neither true nor predicted instances.
  bool defined = false;
};

struct ClassMetrics {
  std::array<ClassScore, kNumLabels> classes{};

  const ClassScore& operator[](Label l) const { return classes[index_of(l)]; }
  ClassScore& operator[](Label l) { return classes[index_of(l)]; }
};

// Zero denominators yield 0; F1 is 0 when precision + recall is 0.
inline ClassMetrics per_class_prf(const ConfusionMatrix& cm) {
  ClassMetrics m;
  for (Label l : kAllLabels) {
    auto& s = m[l];
    const auto c = index_of(l);
    const double tp = static_cast<double>(cm.counts[c][c]);
    s.support = cm.support(l);
    s.predicted = cm.predicted(l);
    s.defined = s.support > 0 || s.predicted > 0;
    s.precision = s.predicted ? tp / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.support ? tp / static_cast<double>(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  return m;
}

// sum_c support_c * F1_c / sum_c support_c over classes with support.
inline double weighted_f1(std::span<const std::size_t> supports, std::span<const double> f1) {
  if (supports.size() != f1.size()) throw Error("weighted_f1: supports and scores differ in length");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < supports.size(); ++c) {
    if (supports[c] == 0) continue;
    num += static_cast<double>(supports[c]) * f1[c];
    den += static_cast<double>(supports[c]);
  }
  if (den == 0.0) throw Error("weighted_f1: every class has zero support");
  return num / den;
}

inline double weighted_f1(const ClassMetrics& m) {
  std::array<std::size_t, kNumLabels> supports{};
  std::array<double, kNumLabels> f1{};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    supports[c] = m.classes[c].support;
    f1[c] = m.classes[c].f1;
  }
  return weighted_f1(supports, f1);
}

inline double weighted_f1(std::span<const Label> truth, std::span<const Label> predicted) {
  return weighted_f1(per_class_prf(confusion_matrix(truth, predicted)));
}

}  // namespace sentingram
