#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sentingram/features.hpp"

using namespace sentingram;

namespace {

NGramDictionary small_dictionary() {
  // "not work" and its unigrams survive pruning.
  const std::vector<TokenSequence> docs = {{"not", "work", "fine"}, {"not", "work"}, {"work", "not", "fine"}};
  return build_dictionary(docs, {3, 2, "t"});
}

FeatureMatrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t dim,
                            std::array<std::size_t, 3> per_class) {
  FeatureMatrix m(dim, "fp");
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < per_class[c] && m.rows() < rows + 1000; ++r) {
      FeatureVector v;
      for (std::uint32_t j = 0; j < dim; ++j) {
        if (gen() % 3 == 0) v.entries.push_back({j, static_cast<double>(gen() % 1000) / 100.0 - 3.0});
      }
      std::erase_if(v.entries, [](const Feature& f) { return f.value == 0.0; });
      m.push_back(v, kAllLabels[c]);
    }
  }
  return m;
}

}  // namespace

TEST(Vectorize, SchemesOverCountedOccurrences) {
  const auto dict = small_dictionary();
  const TokenSequence doc = {"not", "work", "not", "work", "fine"};
  const auto nw = *dict.find("not work");
  const auto n = *dict.find("not");
  const auto cw = vectorize(doc, dict, FeatureScheme::count_x_weight);
  EXPECT_DOUBLE_EQ(cw.get(nw), 2.0 * dict[nw].weight);
  EXPECT_DOUBLE_EQ(cw.get(n), 2.0 * dict[n].weight);
  EXPECT_DOUBLE_EQ(vectorize(doc, dict, FeatureScheme::binary_x_weight).get(nw), dict[nw].weight);
  EXPECT_DOUBLE_EQ(vectorize(doc, dict, FeatureScheme::count).get(nw), 2.0);
  EXPECT_TRUE(vectorize({"unknown", "words"}, dict).empty());
  const auto v = vectorize(doc, dict, FeatureScheme::count);
  EXPECT_TRUE(std::is_sorted(v.entries.begin(), v.entries.end(),
                             [](const Feature& a, const Feature& b) { return a.index < b.index; }));
}

TEST(Vectorize, FingerprintMismatchIsRejected) {
  const auto dict = small_dictionary();
  FeatureMatrix other(dict.size(), "something-else");
  EXPECT_THROW(vectorize_into(other, {"not"}, Label::positive, dict, FeatureScheme::count), Error);
  FeatureMatrix m(dict.size(), dict.fingerprint());
  vectorize_into(m, {"not", "work"}, Label::negative, dict, FeatureScheme::count);
  EXPECT_EQ(m.rows(), 1u);
  EXPECT_EQ(m.label(0), Label::negative);
  FeatureVector bad;
  bad.entries.push_back({static_cast<std::uint32_t>(dict.size()), 1.0});
  EXPECT_THROW(m.push_back(bad, Label::positive), Error);
}

TEST(Vectorize, CooExport) {
  const auto dict = small_dictionary();
  const std::vector<TokenSequence> docs = {{"not", "work"}, {"fine"}};
  const std::vector<Label> labels = {Label::negative, Label::positive};
  const auto m = vectorize_corpus(docs, labels, dict, FeatureScheme::count);
  std::ostringstream values, lab;
  write_matrix_coo(values, lab, m);
  EXPECT_EQ(lab.str(), "negative\npositive\n");
  const auto text = values.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(SparseAlgebra, DotAndDistance) {
  FeatureVector a{{{0, 1.0}, {2, 2.0}}};
  FeatureVector b{{{1, 3.0}, {2, -1.0}}};
  EXPECT_DOUBLE_EQ(dot(a, b), -2.0);
  EXPECT_DOUBLE_EQ(squared_distance(a, b), 1.0 + 9.0 + 9.0);
  EXPECT_DOUBLE_EQ(squared_distance(a, a), 0.0);
}

TEST(Smote, BalancesAndStaysInsideParentBoxes) {
  std::mt19937_64 gen(3);
  const auto m = random_matrix(gen, 0, 8, {12, 5, 3});
  const auto result = smote_oversample_traced(m, 3, 42);
  const auto& out = result.matrix;
  std::array<std::size_t, 3> counts{};
  for (Label l : out.labels()) ++counts[index_of(l)];
  EXPECT_EQ(counts, (std::array<std::size_t, 3>{12, 12, 12}));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    EXPECT_EQ(out.row(i), m.row(i));
    EXPECT_EQ(out.label(i), m.label(i));
  }
  ASSERT_EQ(result.parents.size(), out.rows() - m.rows());
  for (std::size_t s = 0; s < result.parents.size(); ++s) {
    const auto& x = out.row(m.rows() + s);
    const auto [a, b] = result.parents[s];
    EXPECT_EQ(m.label(a), out.label(m.rows() + s));
    EXPECT_EQ(m.label(b), out.label(m.rows() + s));
    EXPECT_NE(a, b);
    for (std::uint32_t j = 0; j < 8; ++j) {
      const double lo = std::min(m.row(a).get(j), m.row(b).get(j));
      const double hi = std::max(m.row(a).get(j), m.row(b).get(j));
      EXPECT_GE(x.get(j), lo);
      EXPECT_LE(x.get(j), hi);
    }
  }
  EXPECT_EQ(smote_oversample(m, 3, 42), out);
}

TEST(Smote, NearestNeighbourWithKOne) {
  // Two minority rows: each one's only neighbour is the other.
  FeatureMatrix m(1, "fp");
  for (int i = 0; i < 4; ++i) m.push_back(FeatureVector{{{0, 10.0 + i}}}, Label::neutral);
  m.push_back(FeatureVector{{{0, 1.0}}}, Label::positive);
  m.push_back(FeatureVector{{{0, 3.0}}}, Label::positive);
  const auto r = smote_oversample_traced(m, 1, 7);
  ASSERT_EQ(r.matrix.rows(), 8u);
  for (std::size_t s = 6; s < 8; ++s) {
    EXPECT_EQ(r.matrix.label(s), Label::positive);
    const double v = r.matrix.row(s).get(0);
    EXPECT_GE(v, 1.0);
    EXPECT_LE(v, 3.0);
  }
}

TEST(Smote, Errors) {
  FeatureMatrix m(1, "fp");
  m.push_back(FeatureVector{{{0, 1.0}}}, Label::positive);
  m.push_back(FeatureVector{{{0, 2.0}}}, Label::positive);
  m.push_back(FeatureVector{{{0, 3.0}}}, Label::negative);
  EXPECT_THROW(smote_oversample(m, 1, 1), Error);  // single-member minority
  EXPECT_THROW(smote_oversample(m, 0, 1), Error);
}
