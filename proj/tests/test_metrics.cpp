#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sentingram/metrics.hpp"

using namespace sentingram;

namespace {

ConfusionMatrix from_counts(const std::array<std::array<std::size_t, 3>, 3>& counts) {
  ConfusionMatrix cm;
  cm.counts = counts;
  return cm;
}

const Label P = Label::positive;
const Label U = Label::neutral;
const Label N = Label::negative;

}  // namespace

TEST(Confusion, HandCount) {
  const std::vector<Label> truth = {P, P, N};
  const std::vector<Label> pred = {P, N, N};
  const auto cm = confusion_matrix(truth, pred);
  EXPECT_EQ(cm.trace(), 2u);
  EXPECT_EQ(cm.counts[0][2], 1u);
  EXPECT_EQ(cm.total(), 3u);
  EXPECT_THROW(confusion_matrix(truth, std::vector<Label>{P}), Error);
}

TEST(Confusion, TraceEqualsMatchesProperty) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Label> a, b;
    const std::size_t n = gen() % 40;
    std::size_t same = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(kAllLabels[gen() % 3]);
      b.push_back(kAllLabels[gen() % 3]);
      same += a.back() == b.back();
    }
    EXPECT_EQ(confusion_matrix(a, b).trace(), same);
    EXPECT_EQ(confusion_matrix(a, a).trace(), n);
  }
}

TEST(PerClass, HandFixtures) {
  for (const auto& f : oracle::metric_fixtures()) {
    const auto m = per_class_prf(from_counts(f.counts));
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(m.classes[c].precision, f.precision[c], 1e-9);
      EXPECT_NEAR(m.classes[c].recall, f.recall[c], 1e-9);
      EXPECT_NEAR(m.classes[c].f1, f.f1[c], 1e-9);
    }
    EXPECT_NEAR(weighted_f1(m), f.weighted_f1, 1e-9);
  }
}

TEST(PerClass, AllNeutralPredictionOnJiraShapedTruth) {
  const std::vector<Label> truth = {P, P, N, N, N};
  const std::vector<Label> pred(5, U);
  const auto cm = confusion_matrix(truth, pred);
  EXPECT_EQ(cm.predicted(U), 5u);
  const auto m = per_class_prf(cm);
  EXPECT_EQ(m[U].precision, 0.0);
  EXPECT_EQ(m[U].support, 0u);
  EXPECT_TRUE(m[U].defined);
  EXPECT_TRUE(m[P].defined);
}

TEST(PerClass, AbsentClassIsUndefined) {
  const auto m = per_class_prf(confusion_matrix(std::vector<Label>{P, N}, std::vector<Label>{P, N}));
  EXPECT_FALSE(m[U].defined);
  EXPECT_EQ(m[P].f1, 1.0);
  EXPECT_EQ(m[N].f1, 1.0);
}

TEST(PerClass, TransposeSwapsPrecisionAndRecall) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 100; ++t) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts) {
      for (auto& v : row) v = gen() % 6;
    }
    const auto a = per_class_prf(cm);
    const auto b = per_class_prf(cm.transposed());
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_DOUBLE_EQ(a.classes[c].precision, b.classes[c].recall);
      EXPECT_DOUBLE_EQ(a.classes[c].recall, b.classes[c].precision);
    }
  }
}

TEST(WeightedF1, TableDerivedValue) {
  const std::vector<std::size_t> supports = {178, 1191, 131};
  const std::vector<double> f1 = {0.418, 0.904, 0.514};
  EXPECT_NEAR(weighted_f1(supports, f1), 0.812, 0.001);
}

TEST(WeightedF1, SimpleCasesAndBounds) {
  EXPECT_DOUBLE_EQ(weighted_f1(std::vector<std::size_t>{0, 4, 0}, std::vector<double>{0.1, 0.7, 0.9}), 0.7);
  EXPECT_NEAR(weighted_f1(std::vector<std::size_t>{3, 3, 3}, std::vector<double>{0.2, 0.4, 0.6}), 0.4, 1e-12);
  EXPECT_THROW(weighted_f1(std::vector<std::size_t>{0, 0, 0}, std::vector<double>{1, 1, 1}), Error);
  EXPECT_THROW(weighted_f1(std::vector<std::size_t>{1}, std::vector<double>{1, 1}), Error);

  std::mt19937_64 gen(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<Label> a, b;
    for (int i = 0; i < 30; ++i) {
      a.push_back(kAllLabels[gen() % 3]);
      b.push_back(kAllLabels[gen() % 3]);
    }
    const auto m = per_class_prf(confusion_matrix(a, b));
    double lo = 1.0, hi = 0.0;
    for (const auto& s : m.classes) {
      if (s.support == 0) continue;
      lo = std::min(lo, s.f1);
      hi = std::max(hi, s.f1);
    }
    const double w = weighted_f1(m);
    EXPECT_GE(w, lo - 1e-12);
    EXPECT_LE(w, hi + 1e-12);
  }
}
