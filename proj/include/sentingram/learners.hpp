#pragma once

// Classifier portfolio: multinomial naive Bayes, multinomial logistic
// regression, one-vs-rest linear SVM and a random forest of CART trees.
// All learners consume FeatureMatrix rows and are deterministic in their seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sentingram/corpus_io.hpp"
#include "sentingram/detail/random.hpp"
#include "sentingram/error.hpp"
#include "sentingram/features.hpp"

namespace sentingram {

enum class LearnerKind : std::uint8_t { multinomial_nb, logistic_regression, linear_svm, random_forest };

inline constexpr std::array<LearnerKind, 4> kAllLearnerKinds = {
    LearnerKind::multinomial_nb, LearnerKind::logistic_regression, LearnerKind::linear_svm,
    LearnerKind::random_forest};

constexpr std::string_view to_string(LearnerKind kind) noexcept {
  switch (kind) {
    case LearnerKind::multinomial_nb:
      return "multinomial_nb";
    case LearnerKind::logistic_regression:
      return "logistic_regression";
    case LearnerKind::linear_svm:
      return "linear_svm";
    case LearnerKind::random_forest:
      return "random_forest";
  }
  return "?";
}

inline LearnerKind parse_learner_kind(std::string_view text) {
  for (auto kind : kAllLearnerKinds) {
    if (text == to_string(kind)) return kind;
  }
  throw Error("unknown learner kind '" + std::string(text) + "'");
}

using Hyperparams = std::map<std::string, double>;

struct ParamSpec {
  std::string name;
  double lo;
  double hi;
  double default_value;
  bool log_scale = false;
  bool integer = false;
};

inline const std::vector<ParamSpec>& param_space(LearnerKind kind) {
  static const std::vector<ParamSpec> nb = {{"alpha", 1e-3, 10.0, 1.0, true, false}};
  static const std::vector<ParamSpec> lr = {{"lambda", 1e-6, 1e-1, 1e-4, true, false},
                                            {"learning_rate", 1e-2, 1.0, 0.5, true, false},
                                            {"epochs", 5, 60, 30, false, true},
                                            {"l2_normalize", 0, 1, 1, false, true}};
  static const std::vector<ParamSpec> svm = {{"lambda", 1e-6, 1e-1, 1e-4, true, false},
                                             {"learning_rate", 1e-2, 1.0, 0.1, true, false},
                                             {"epochs", 5, 60, 30, false, true},
                                             {"l2_normalize", 0, 1, 1, false, true}};
  static const std::vector<ParamSpec> rf = {{"n_trees", 5, 60, 30, false, true},
                                            {"max_depth", 0, 30, 0, false, true},
                                            {"feature_fraction", 0.05, 1.0, 0.3, false, false},
                                            {"min_samples_split", 2, 10, 2, false, true},
                                            {"bootstrap", 0, 1, 1, false, true}};
  switch (kind) {
    case LearnerKind::multinomial_nb:
      return nb;
    case LearnerKind::logistic_regression:
      return lr;
    case LearnerKind::linear_svm:
      return svm;
    case LearnerKind::random_forest:
      return rf;
  }
  return nb;
}

inline Hyperparams default_hyperparams(LearnerKind kind) {
  Hyperparams hp;
  for (const auto& p : param_space(kind)) hp[p.name] = p.default_value;
  return hp;
}

// Fills missing names with defaults and checks names, ranges and integrality.
inline Hyperparams validate_hyperparams(LearnerKind kind, const Hyperparams& hp) {
  Hyperparams out = default_hyperparams(kind);
  for (const auto& [name, value] : hp) {
    const auto& space = param_space(kind);
    auto spec = std::find_if(space.begin(), space.end(), [&](const ParamSpec& p) { return p.name == name; });
    if (spec == space.end()) {
      throw Error("hyperparameter '" + name + "' is not defined for " + std::string(to_string(kind)));
    }
    if (!(value >= spec->lo && value <= spec->hi)) {
      throw Error("hyperparameter '" + name + "' = " + std::to_string(value) + " outside [" +
                  std::to_string(spec->lo) + ", " + std::to_string(spec->hi) + "]");
    }
    if (spec->integer && value != std::floor(value)) {
      throw Error("hyperparameter '" + name + "' must be an integer");
    }
    out[name] = value;
  }
  return out;
}

inline Hyperparams sample_hyperparams(LearnerKind kind, detail::Rng& rng) {
  Hyperparams hp;
  for (const auto& p : param_space(kind)) {
    double v;
    if (p.integer) {
      const auto span = static_cast<std::uint64_t>(p.hi - p.lo) + 1;
      v = p.lo + static_cast<double>(rng.below(span));
    } else if (p.log_scale) {
      v = std::exp(rng.uniform(std::log(p.lo), std::log(p.hi)));
      v = std::clamp(v, p.lo, p.hi);
    } else {
      v = rng.uniform(p.lo, p.hi);
    }
    hp[p.name] = v;
  }
  return hp;
}

// ---------------------------------------------------------------------------
// Learned parameters

struct NaiveBayesParams {
  std::vector<double> log_prior;                    // per class
  std::vector<std::vector<double>> log_likelihood;  // class x feature
};

struct LinearParams {
  std::vector<std::vector<double>> weights;  // class x feature
  std::vector<double> bias;                  // per class
  bool l2_normalize = true;
  std::vector<double> objective_trace;  // training objective after each epoch
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::array<std::uint32_t, kNumLabels> counts{};

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

inline Label majority_label(const std::array<std::uint32_t, kNumLabels>& counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumLabels; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return kAllLabels[best];
}

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(const FeatureVector& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x.get(static_cast<std::uint32_t>(n.feature)) <= n.threshold ? n.left
                                                                                            : n.right);
    }
    return nodes[i];
  }

  Label predict(const FeatureVector& x) const { return majority_label(leaf_for(x).counts); }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestParams {
  std::vector<DecisionTree> trees;
};

struct ConstantParams {};

struct TrainedModel {
  LearnerKind kind = LearnerKind::multinomial_nb;
  Hyperparams hyperparams;
  std::vector<Label> classes;  // observed at training, ascending
  std::size_t dimension = 0;
  std::string fingerprint;
  std::variant<ConstantParams, NaiveBayesParams, LinearParams, ForestParams> params;
};

// ---------------------------------------------------------------------------
// Softmax (multinomial logistic) objective
//
//   J(W, b) = (1/n) sum_i -log softmax(W x_i + b)[y_i] + (lambda/2) ||W||^2
//
// Exposed for gradient checking; targets are indices into the class list.

namespace linear {

inline std::vector<double> margins(const std::vector<std::vector<double>>& w, const std::vector<double>& b,
                                   const FeatureVector& x) {
  std::vector<double> z(b);
  for (std::size_t c = 0; c < w.size(); ++c) {
    for (const auto& f : x.entries) z[c] += w[c][f.index] * f.value;
  }
  return z;
}

inline void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

inline double softmax_objective(const std::vector<std::vector<double>>& w, const std::vector<double>& b,
                                std::span<const FeatureVector> rows, std::span<const std::size_t> targets,
                                double lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto z = margins(w, b, rows[i]);
    const double mx = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - mx);
    loss += mx + std::log(lse) - z[targets[i]];
  }
  double reg = 0.0;
  for (const auto& row : w) {
    for (double v : row) reg += v * v;
  }
  return loss / static_cast<double>(rows.size()) + 0.5 * lambda * reg;
}

inline void softmax_gradient(const std::vector<std::vector<double>>& w, const std::vector<double>& b,
                             std::span<const FeatureVector> rows, std::span<const std::size_t> targets,
                             double lambda, std::vector<std::vector<double>>& grad_w,
                             std::vector<double>& grad_b) {
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  grad_w.assign(w.size(), std::vector<double>(w.empty() ? 0 : w[0].size(), 0.0));
  grad_b.assign(b.size(), 0.0);
  for (std::size_t c = 0; c < w.size(); ++c) {
    for (std::size_t j = 0; j < w[c].size(); ++j) grad_w[c][j] = lambda * w[c][j];
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto p = margins(w, b, rows[i]);
    softmax_inplace(p);
    p[targets[i]] -= 1.0;
    for (std::size_t c = 0; c < w.size(); ++c) {
      grad_b[c] += p[c] * inv_n;
      for (const auto& f : rows[i].entries) grad_w[c][f.index] += p[c] * f.value * inv_n;
    }
  }
}

// Sum over classes of the one-vs-rest hinge objectives
//   (lambda/2) ||w_c||^2 + (1/n) sum_i max(0, 1 - y_ic (w_c x_i + b_c)).
inline double ovr_hinge_objective(const std::vector<std::vector<double>>& w, const std::vector<double>& b,
                                  std::span<const FeatureVector> rows, std::span<const std::size_t> targets,
                                  double lambda) {
  double total = 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double z = b[c];
      for (const auto& f : rows[i].entries) z += w[c][f.index] * f.value;
      const double y = targets[i] == c ? 1.0 : -1.0;
      loss += std::max(0.0, 1.0 - y * z);
    }
    double reg = 0.0;
    for (double v : w[c]) reg += v * v;
    total += loss / static_cast<double>(rows.size()) + 0.5 * lambda * reg;
  }
  return total;
}

inline FeatureVector l2_normalized(const FeatureVector& x) {
  const double norm = std::sqrt(x.squared_norm());
  if (norm == 0.0) return x;
  FeatureVector out = x;
  for (auto& f : out.entries) f.value /= norm;
  return out;
}

}  // namespace linear

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline std::vector<Label> observed_classes(const FeatureMatrix& m) {
  std::array<bool, kNumLabels> seen{};
  for (Label l : m.labels()) seen[index_of(l)] = true;
  std::vector<Label> classes;
  for (Label l : kAllLabels) {
    if (seen[index_of(l)]) classes.push_back(l);
  }
  return classes;
}

inline std::vector<std::size_t> class_targets(const FeatureMatrix& m, const std::vector<Label>& classes) {
  std::array<std::size_t, kNumLabels> pos{};
  for (std::size_t c = 0; c < classes.size(); ++c) pos[index_of(classes[c])] = c;
  std::vector<std::size_t> targets;
  targets.reserve(m.rows());
  for (Label l : m.labels()) targets.push_back(pos[index_of(l)]);
  return targets;
}

inline NaiveBayesParams train_naive_bayes(const FeatureMatrix& m, const std::vector<Label>& classes,
                                          double alpha) {
  const auto targets = class_targets(m, classes);
  const std::size_t nc = classes.size();
  const std::size_t dim = m.dimension();
  std::vector<std::vector<double>> totals(nc, std::vector<double>(dim, 0.0));
  std::vector<double> class_rows(nc, 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    class_rows[targets[i]] += 1.0;
    for (const auto& f : m.row(i).entries) {
      // Multinomial evidence must be nonnegative; negative weights clamp to 0.
      if (f.value > 0.0) totals[targets[i]][f.index] += f.value;
    }
  }
  NaiveBayesParams p;
  p.log_likelihood.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    p.log_prior.push_back(std::log(class_rows[c] / static_cast<double>(m.rows())));
    double sum = 0.0;
    for (double v : totals[c]) sum += v;
    const double denom = std::log(sum + alpha * static_cast<double>(dim));
    p.log_likelihood[c].resize(dim);
    for (std::size_t j = 0; j < dim; ++j) p.log_likelihood[c][j] = std::log(totals[c][j] + alpha) - denom;
  }
  return p;
}

inline std::vector<FeatureVector> prepared_rows(const FeatureMatrix& m, bool normalize) {
  std::vector<FeatureVector> rows;
  rows.reserve(m.rows());
  for (const auto& r : m.row_data()) rows.push_back(normalize ? linear::l2_normalized(r) : r);
  return rows;
}

// Epoch-based SGD over a seeded shuffle. Weights are kept as scale * V so the
// L2 shrink step costs O(1) per sample.
enum class LinearLoss { softmax, ovr_hinge };

inline LinearParams train_linear(const FeatureMatrix& m, const std::vector<Label>& classes,
                                 const Hyperparams& hp, std::uint64_t seed, LinearLoss loss) {
  const double lambda = hp.at("lambda");
  const double lr = hp.at("learning_rate");
  const auto epochs = static_cast<std::size_t>(hp.at("epochs"));
  const bool normalize = hp.at("l2_normalize") != 0.0;
  const auto rows = prepared_rows(m, normalize);
  const auto targets = class_targets(m, classes);
  const std::size_t nc = classes.size();
  const std::size_t dim = m.dimension();

  std::vector<std::vector<double>> v(nc, std::vector<double>(dim, 0.0));
  std::vector<double> bias(nc, 0.0);
  double scale = 1.0;
  auto materialize = [&] {
    std::vector<std::vector<double>> w = v;
    for (auto& row : w) {
      for (auto& x : row) x *= scale;
    }
    return w;
  };
  auto objective = [&](const std::vector<std::vector<double>>& w) {
    return loss == LinearLoss::softmax ? linear::softmax_objective(w, bias, rows, targets, lambda)
                                       : linear::ovr_hinge_objective(w, bias, rows, targets, lambda);
  };

  LinearParams p;
  p.l2_normalize = normalize;
  Rng rng(seed);
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> z(nc);
  double previous = objective(materialize());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    const double eta = lr / (1.0 + static_cast<double>(epoch));
    const double shrink = 1.0 - eta * lambda;
    for (std::size_t i : order) {
      const auto& x = rows[i];
      for (std::size_t c = 0; c < nc; ++c) {
        double dotv = 0.0;
        for (const auto& f : x.entries) dotv += v[c][f.index] * f.value;
        z[c] = scale * dotv + bias[c];
      }
      if (shrink > 0.0) scale *= shrink;
      if (loss == LinearLoss::softmax) {
        linear::softmax_inplace(z);
        z[targets[i]] -= 1.0;  // gradient of cross-entropy wrt margins
        for (std::size_t c = 0; c < nc; ++c) {
          const double step = eta * z[c];
          if (step == 0.0) continue;
          for (const auto& f : x.entries) v[c][f.index] -= step * f.value / scale;
          bias[c] -= step;
        }
      } else {
        for (std::size_t c = 0; c < nc; ++c) {
          const double y = targets[i] == c ? 1.0 : -1.0;
          if (y * z[c] >= 1.0) continue;
          for (const auto& f : x.entries) v[c][f.index] += eta * y * f.value / scale;
          bias[c] += eta * y;
        }
      }
      if (scale < 1e-9) {
        for (auto& row : v) {
          for (auto& x2 : row) x2 *= scale;
        }
        scale = 1.0;
      }
    }
    const double current = objective(materialize());
    p.objective_trace.push_back(current);
    const double rel = std::abs(previous - current) / std::max(std::abs(previous), 1e-12);
    previous = current;
    if (rel < 1e-6) break;
  }
  p.weights = materialize();
  p.bias = bias;
  return p;
}

struct TreeOptions {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_split = 2;
  double feature_fraction = 1.0;
};

inline double gini(const std::array<double, kNumLabels>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 1.0;
  for (double c : counts) {
    const double p = c / total;
    s -= p * p;
  }
  return s;
}

class TreeGrower {
 public:
  TreeGrower(const FeatureMatrix& m, TreeOptions options, Rng& rng)
      : m_(m), options_(options), rng_(rng) {}

  DecisionTree grow(std::vector<std::size_t> sample) {
    tree_.nodes.clear();
    build(std::move(sample), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  std::int32_t build(std::vector<std::size_t> rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::array<std::uint32_t, kNumLabels> counts{};
    for (auto r : rows) ++counts[index_of(m_.label(r))];
    tree_.nodes[id].counts = counts;

    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    if (pure || rows.size() < options_.min_samples_split ||
        (options_.max_depth > 0 && depth >= options_.max_depth)) {
      return id;
    }
    const Split split = best_split(rows, counts);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) {
      (m_.row(r).get(static_cast<std::uint32_t>(split.feature)) <= split.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    tree_.nodes[id].feature = split.feature;
    tree_.nodes[id].threshold = split.threshold;
    const auto l = build(std::move(left), depth + 1);
    const auto r = build(std::move(right), depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, const std::array<std::uint32_t, kNumLabels>& counts) {
    struct Hit {
      std::uint32_t feature;
      double value;
      std::uint8_t label;
    };
    std::vector<Hit> hits;
    for (auto r : rows) {
      const auto label = static_cast<std::uint8_t>(index_of(m_.label(r)));
      for (const auto& f : m_.row(r).entries) hits.push_back({f.index, f.value, label});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      return a.feature != b.feature ? a.feature < b.feature : a.value < b.value;
    });
    // [begin, end) ranges of `hits` per feature present in this node.
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < hits.size();) {
      std::size_t j = i;
      while (j < hits.size() && hits[j].feature == hits[i].feature) ++j;
      groups.emplace_back(i, j);
      i = j;
    }
    if (groups.empty()) return {};

    std::vector<std::size_t> chosen(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) chosen[g] = g;
    if (options_.feature_fraction < 1.0) {
      const auto want = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(options_.feature_fraction * static_cast<double>(groups.size()))));
      for (std::size_t i = 0; i < want; ++i) std::swap(chosen[i], chosen[i + rng_.below(chosen.size() - i)]);
      chosen.resize(want);
      std::sort(chosen.begin(), chosen.end());
    }

    const double n = static_cast<double>(rows.size());
    std::array<double, kNumLabels> total{};
    for (std::size_t c = 0; c < kNumLabels; ++c) total[c] = counts[c];
    const double parent = gini(total, n);

    Split best;
    for (auto g : chosen) {
      const auto [begin, end] = groups[g];
      // Values in ascending order with the implicit zeros inserted as one block.
      std::array<double, kNumLabels> zeros = total;
      for (std::size_t i = begin; i < end; ++i) zeros[hits[i].label] -= 1.0;
      const double zero_count = zeros[0] + zeros[1] + zeros[2];

      std::array<double, kNumLabels> left{};
      double left_n = 0.0;
      auto consider = [&](double lo, double hi) {
        if (left_n <= 0.0 || left_n >= n) return;
        std::array<double, kNumLabels> right{};
        for (std::size_t c = 0; c < kNumLabels; ++c) right[c] = total[c] - left[c];
        const double gain =
            parent - (left_n / n) * gini(left, left_n) - ((n - left_n) / n) * gini(right, n - left_n);
        if (gain > best.gain + 1e-12) {
          best.gain = gain;
          best.feature = static_cast<std::int32_t>(hits[begin].feature);
          best.threshold = lo + (hi - lo) / 2.0;
          if (best.threshold >= hi) best.threshold = lo;
        }
      };
      bool zeros_added = zero_count == 0.0;
      auto add_zeros = [&](double next_value) {
        for (std::size_t c = 0; c < kNumLabels; ++c) left[c] += zeros[c];
        left_n += zero_count;
        zeros_added = true;
        consider(0.0, next_value);
      };
      for (std::size_t i = begin; i < end; ++i) {
        const double v = hits[i].value;
        if (!zeros_added && v > 0.0) add_zeros(v);
        left[hits[i].label] += 1.0;
        left_n += 1.0;
        const bool last_of_value = i + 1 == end || hits[i + 1].value != v;
        if (!last_of_value) continue;
        if (i + 1 < end) {
          const double next = hits[i + 1].value;
          if (!zeros_added && next > 0.0) {
            consider(v, 0.0);
          } else {
            consider(v, next);
          }
        } else if (!zeros_added) {
          consider(v, 0.0);
        }
      }
    }
    if (best.gain <= 1e-12) return {};
    return best;
  }

  const FeatureMatrix& m_;
  TreeOptions options_;
  Rng& rng_;
  DecisionTree tree_;
};

}  // namespace detail

inline DecisionTree grow_tree(const FeatureMatrix& m, std::vector<std::size_t> sample,
                              detail::TreeOptions options, detail::Rng& rng) {
  return detail::TreeGrower(m, options, rng).grow(std::move(sample));
}

inline TrainedModel train(LearnerKind kind, const Hyperparams& hp_in, const FeatureMatrix& m,
                          std::uint64_t seed) {
  if (m.empty()) throw Error("cannot train on an empty matrix");
  TrainedModel model;
  model.kind = kind;
  model.hyperparams = validate_hyperparams(kind, hp_in);
  model.classes = detail::observed_classes(m);
  model.dimension = m.dimension();
  model.fingerprint = m.fingerprint();
  const auto& hp = model.hyperparams;

  if (model.classes.size() == 1) {
    model.params = ConstantParams{};
    return model;
  }
  switch (kind) {
    case LearnerKind::multinomial_nb:
      model.params = detail::train_naive_bayes(m, model.classes, hp.at("alpha"));
      break;
    case LearnerKind::logistic_regression:
      model.params = detail::train_linear(m, model.classes, hp, seed, detail::LinearLoss::softmax);
      break;
    case LearnerKind::linear_svm:
      model.params = detail::train_linear(m, model.classes, hp, seed, detail::LinearLoss::ovr_hinge);
      break;
    case LearnerKind::random_forest: {
      detail::TreeOptions opts;
      opts.max_depth = static_cast<std::size_t>(hp.at("max_depth"));
      opts.min_samples_split = static_cast<std::size_t>(hp.at("min_samples_split"));
      opts.feature_fraction = hp.at("feature_fraction");
      const bool bootstrap = hp.at("bootstrap") != 0.0;
      const auto n_trees = static_cast<std::size_t>(hp.at("n_trees"));
      ForestParams forest;
      for (std::size_t t = 0; t < n_trees; ++t) {
        detail::Rng rng(detail::mix_seed(seed, t));
        std::vector<std::size_t> sample(m.rows());
        for (std::size_t i = 0; i < sample.size(); ++i) sample[i] = bootstrap ? rng.below(m.rows()) : i;
        if (bootstrap) std::sort(sample.begin(), sample.end());
        forest.trees.push_back(grow_tree(m, std::move(sample), opts, rng));
      }
      model.params = std::move(forest);
      break;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Prediction

// Per-row scores over `classes` (the model's observed classes, ascending).
// Naive Bayes: normalized log-posteriors. Linear models: softmax of margins.
// Forest: fraction of trees voting for each class.
struct ScoreTable {
  std::vector<Label> classes;
  std::vector<std::vector<double>> rows;
};

namespace detail {

inline void check_dimension(const TrainedModel& model, const FeatureMatrix& rows) {
  if (rows.dimension() != model.dimension) {
    throw Error("row dimensionality " + std::to_string(rows.dimension()) + " does not match model (" +
                std::to_string(model.dimension) + ")");
  }
}

inline std::vector<double> score_row(const TrainedModel& model, const FeatureVector& x) {
  const std::size_t nc = model.classes.size();
  return std::visit(
      [&](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          return std::vector<double>(nc, model.kind == LearnerKind::multinomial_nb ? 0.0 : 1.0);
        } else if constexpr (std::is_same_v<P, NaiveBayesParams>) {
          std::vector<double> s(p.log_prior);
          for (std::size_t c = 0; c < nc; ++c) {
            for (const auto& f : x.entries) {
              if (f.value > 0.0) s[c] += f.value * p.log_likelihood[c][f.index];
            }
          }
          const double mx = *std::max_element(s.begin(), s.end());
          double sum = 0.0;
          for (double v : s) sum += std::exp(v - mx);
          const double lse = mx + std::log(sum);
          for (auto& v : s) v -= lse;
          return s;
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          auto z = linear::margins(p.weights, p.bias, p.l2_normalize ? linear::l2_normalized(x) : x);
          linear::softmax_inplace(z);
          return z;
        } else {
          std::vector<double> votes(nc, 0.0);
          std::array<std::size_t, kNumLabels> pos{};
          for (std::size_t c = 0; c < nc; ++c) pos[index_of(model.classes[c])] = c;
          for (const auto& tree : p.trees) votes[pos[index_of(tree.predict(x))]] += 1.0;
          for (auto& v : votes) v /= static_cast<double>(p.trees.size());
          return votes;
        }
      },
      model.params);
}

// First maximum wins, so ties go to the lowest label.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace detail

inline ScoreTable predict_scores(const TrainedModel& model, const FeatureMatrix& rows) {
  detail::check_dimension(model, rows);
  ScoreTable out{model.classes, {}};
  out.rows.reserve(rows.rows());
  for (const auto& x : rows.row_data()) out.rows.push_back(detail::score_row(model, x));
  return out;
}

inline std::vector<Label> predict(const TrainedModel& model, const FeatureMatrix& rows) {
  detail::check_dimension(model, rows);
  std::vector<Label> out;
  out.reserve(rows.rows());
  for (const auto& x : rows.row_data()) {
    const auto s = detail::score_row(model, x);
    out.push_back(model.classes[detail::argmax(s)]);
  }
  return out;
}

using ClassProbabilities = std::array<double, kNumLabels>;

// Probabilities over all three labels (0 for classes unseen in training); the
// common currency for averaging models of different kinds.
inline std::vector<ClassProbabilities> predict_proba(const TrainedModel& model, const FeatureMatrix& rows) {
  detail::check_dimension(model, rows);
  std::vector<ClassProbabilities> out;
  out.reserve(rows.rows());
  const bool log_scores =
      model.kind == LearnerKind::multinomial_nb && !std::holds_alternative<ConstantParams>(model.params);
  for (const auto& x : rows.row_data()) {
    const auto s = detail::score_row(model, x);
    ClassProbabilities p{};
    for (std::size_t c = 0; c < s.size(); ++c) {
      p[index_of(model.classes[c])] = log_scores ? std::exp(s[c]) : s[c];
    }
    if (std::holds_alternative<ConstantParams>(model.params)) p[index_of(model.classes[0])] = 1.0;
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization (JSON container)

inline nlohmann::json to_json(const TrainedModel& model) {
  using nlohmann::json;
  json j;
  j["format"] = "sentingram-model";
  j["version"] = 1;
  j["kind"] = to_string(model.kind);
  j["hyperparameters"] = model.hyperparams;
  json classes = json::array();
  for (Label l : model.classes) classes.push_back(to_string(l));
  j["classes"] = classes;
  j["dimension"] = model.dimension;
  j["fingerprint"] = model.fingerprint;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          j["params"] = {{"type", "constant"}};
        } else if constexpr (std::is_same_v<P, NaiveBayesParams>) {
          j["params"] = {{"type", "naive_bayes"}, {"log_prior", p.log_prior}, {"log_likelihood", p.log_likelihood}};
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          j["params"] = {{"type", "linear"},
                         {"weights", p.weights},
                         {"bias", p.bias},
                         {"l2_normalize", p.l2_normalize},
                         {"objective_trace", p.objective_trace}};
        } else {
          json trees = json::array();
          for (const auto& t : p.trees) {
            json nodes = json::array();
            for (const auto& n : t.nodes) {
              nodes.push_back({n.feature, n.threshold, n.left, n.right, n.counts});
            }
            trees.push_back(nodes);
          }
          j["params"] = {{"type", "forest"}, {"trees", trees}};
        }
      },
      model.params);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "sentingram-model" || j.at("version") != 1) throw Error("not a sentingram model");
    TrainedModel m;
    m.kind = parse_learner_kind(j.at("kind").get<std::string>());
    m.hyperparams = j.at("hyperparameters").get<Hyperparams>();
    for (const auto& c : j.at("classes")) m.classes.push_back(parse_label(c.get<std::string>()));
    m.dimension = j.at("dimension").get<std::size_t>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
    const auto& p = j.at("params");
    const auto type = p.at("type").get<std::string>();
    if (type == "constant") {
      m.params = ConstantParams{};
    } else if (type == "naive_bayes") {
      NaiveBayesParams nb;
      nb.log_prior = p.at("log_prior").get<std::vector<double>>();
      nb.log_likelihood = p.at("log_likelihood").get<std::vector<std::vector<double>>>();
      m.params = std::move(nb);
    } else if (type == "linear") {
      LinearParams lp;
      lp.weights = p.at("weights").get<std::vector<std::vector<double>>>();
      lp.bias = p.at("bias").get<std::vector<double>>();
      lp.l2_normalize = p.at("l2_normalize").get<bool>();
      lp.objective_trace = p.at("objective_trace").get<std::vector<double>>();
      m.params = std::move(lp);
    } else if (type == "forest") {
      ForestParams fp;
      for (const auto& t : p.at("trees")) {
        DecisionTree tree;
        for (const auto& n : t) {
          TreeNode node;
          node.feature = n.at(0).get<std::int32_t>();
          node.threshold = n.at(1).get<double>();
          node.left = n.at(2).get<std::int32_t>();
          node.right = n.at(3).get<std::int32_t>();
          node.counts = n.at(4).get<std::array<std::uint32_t, kNumLabels>>();
          tree.nodes.push_back(node);
        }
        fp.trees.push_back(std::move(tree));
      }
      m.params = std::move(fp);
    } else {
      throw Error("unknown model parameter type '" + type + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed model: ") + e.what());
  }
}

}  // namespace sentingram
