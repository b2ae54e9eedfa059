#pragma once

// Experiment harness: stratified rounds over the full pipeline, round
// averaged metrics, and per-class discriminative n-gram reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sentingram/automl.hpp"
#include "sentingram/corpus_io.hpp"
#include "sentingram/detail/random.hpp"
#include "sentingram/features.hpp"
#include "sentingram/learners.hpp"
#include "sentingram/metrics.hpp"
#include "sentingram/ngram_index.hpp"
#include "sentingram/preprocess.hpp"

namespace sentingram {

// ---------------------------------------------------------------------------
// Discriminative n-grams

struct RankedPhrase {
  std::string phrase;
  double score = 0.0;
};

using PhraseRanking = std::array<std::vector<RankedPhrase>, kNumLabels>;

// Per class, one score per dictionary feature; NaN marks "not ranked for this
// class". Empty vectors for classes the model never saw.
using FeatureScores = std::array<std::vector<double>, kNumLabels>;

namespace detail {

inline FeatureScores margin_scores(const std::vector<Label>& classes,
                                   const std::vector<std::vector<double>>& per_class, std::size_t dim) {
  FeatureScores out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto& scores = out[index_of(classes[c])];
    scores.assign(dim, nan);
    for (std::size_t g = 0; g < dim; ++g) {
      double rival = -std::numeric_limits<double>::infinity();
      for (std::size_t o = 0; o < classes.size(); ++o) {
        if (o != c) rival = std::max(rival, per_class[o][g]);
      }
      scores[g] = classes.size() == 1 ? per_class[c][g] : per_class[c][g] - rival;
    }
  }
  return out;
}

// Accuracy drop on `data` when feature g's column is permuted across rows,
// credited to the majority class among rows where g is nonzero. Only
// features the forest splits on can change a prediction.
inline FeatureScores forest_scores(const TrainedModel& model, const ForestParams& forest,
                                   const FeatureMatrix& data, std::uint64_t seed) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  FeatureScores out;
  for (Label l : model.classes) out[index_of(l)].assign(model.dimension, nan);
  if (data.empty()) return out;

  std::vector<std::uint32_t> used;
  for (const auto& tree : forest.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature >= 0) used.push_back(static_cast<std::uint32_t>(node.feature));
    }
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  auto forest_predict = [&](const FeatureVector& x) {
    std::array<double, kNumLabels> votes{};
    for (const auto& t : forest.trees) votes[index_of(t.predict(x))] += 1.0;
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumLabels; ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    return kAllLabels[best];
  };
  std::vector<Label> base(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) base[i] = forest_predict(data.row(i));

  for (auto g : used) {
    std::vector<double> column(data.rows());
    std::array<std::size_t, kNumLabels> hits{};
    for (std::size_t i = 0; i < data.rows(); ++i) {
      column[i] = data.row(i).get(g);
      if (column[i] != 0.0) ++hits[index_of(data.label(i))];
    }
    std::size_t owner = 0;
    for (std::size_t c = 1; c < kNumLabels; ++c) {
      if (hits[c] > hits[owner]) owner = c;
    }
    if (hits[owner] == 0 || out[owner].empty()) continue;
    auto permuted = column;
    Rng rng(mix_seed(seed, g));
    rng.shuffle(permuted);
    double delta = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (permuted[i] == column[i]) continue;
      FeatureVector x = data.row(i);
      std::erase_if(x.entries, [&](const Feature& f) { return f.index == g; });
      if (permuted[i] != 0.0) {
        auto pos = std::lower_bound(x.entries.begin(), x.entries.end(), g,
                                    [](const Feature& f, std::uint32_t idx) { return f.index < idx; });
        x.entries.insert(pos, {g, permuted[i]});
      }
      const Label y = data.label(i);
      delta += (base[i] == y ? 1.0 : 0.0) - (forest_predict(x) == y ? 1.0 : 0.0);
    }
    out[owner][g] = delta / static_cast<double>(data.rows());
  }
  return out;
}

// Sort key: score descending, longer phrase first, then phrase text.
inline std::vector<std::uint32_t> rank_features(const std::vector<double>& scores, const NGramDictionary& dict) {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t g = 0; g < scores.size(); ++g) {
    if (!std::isnan(scores[g])) idx.push_back(g);
  }
  std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (dict[a].n() != dict[b].n()) return dict[a].n() > dict[b].n();
    return dict[a].text() < dict[b].text();
  });
  return idx;
}

inline PhraseRanking take_top(const FeatureScores& scores, const NGramDictionary& dict, std::size_t k) {
  PhraseRanking out;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (scores[c].empty() || k == 0) continue;
    for (auto g : rank_features(scores[c], dict)) {
      if (out[c].size() == k) break;
      out[c].push_back({dict[g].text(), scores[c][g]});
    }
  }
  return out;
}

}  // namespace detail

// Discriminativeness of every dictionary phrase for every class the model
// knows. `data` (the training matrix) is required for forests only.
inline FeatureScores feature_scores(const TrainedModel& model, const NGramDictionary& dict,
                                    const FeatureMatrix* data = nullptr, std::uint64_t seed = 0) {
  if (model.dimension != dict.size() || model.fingerprint != dict.fingerprint()) {
    throw Error("model was not trained against this dictionary");
  }
  return std::visit(
      [&](const auto& p) -> FeatureScores {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          return {};
        } else if constexpr (std::is_same_v<P, NaiveBayesParams>) {
          return detail::margin_scores(model.classes, p.log_likelihood, model.dimension);
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          return detail::margin_scores(model.classes, p.weights, model.dimension);
        } else {
          if (!data) throw Error("forest phrase scores need the training matrix");
          return detail::forest_scores(model, p, *data, seed);
        }
      },
      model.params);
}

inline PhraseRanking top_ngrams_per_class(const TrainedModel& model, const NGramDictionary& dict, std::size_t k,
                                          const FeatureMatrix* data = nullptr, std::uint64_t seed = 0) {
  return detail::take_top(feature_scores(model, dict, data, seed), dict, k);
}

// Multiplicity-weighted reciprocal-rank fusion of the members' rankings.
// Tied member scores share a rank.
inline PhraseRanking top_ngrams_per_class(const TrainedEnsemble& ens, const NGramDictionary& dict, std::size_t k,
                                          const FeatureMatrix* data = nullptr, std::uint64_t seed = 0) {
  FeatureScores fused;
  for (const auto& member : ens.members) {
    const auto scores = feature_scores(member.model, dict, data, seed);
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      if (scores[c].empty()) continue;
      if (fused[c].empty()) fused[c].assign(dict.size(), std::numeric_limits<double>::quiet_NaN());
      const auto order = detail::rank_features(scores[c], dict);
      std::size_t rank = 0;
      for (std::size_t pos = 0; pos < order.size(); ++pos) {
        if (pos > 0 && scores[c][order[pos]] != scores[c][order[pos - 1]]) rank = pos;
        auto& slot = fused[c][order[pos]];
        if (std::isnan(slot)) slot = 0.0;
        slot += static_cast<double>(member.multiplicity) / static_cast<double>(rank + 1);
      }
    }
  }
  return detail::take_top(fused, dict, k);
}

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentConfig {
  PreprocessOptions preprocess;
  std::size_t max_n = kMaxNGramLength;
  std::size_t min_freq = 2;
  FeatureScheme scheme = FeatureScheme::count_x_weight;
  bool smote = false;
  std::size_t smote_k = 5;
  std::size_t folds = 5;
  std::optional<double> budget_seconds = 60.0;
  std::optional<std::size_t> max_candidates;
  std::size_t ensemble_size = 10;
  std::size_t rounds = 10;
  double test_fraction = 0.1;
  std::uint64_t seed = 7;
  std::size_t top_k = 10;
  std::size_t threads = 1;
};

inline std::string preprocess_tag(const PreprocessOptions& p) {
  return p.remove_stopwords ? "stopwords:" + p.stop_list.source_tag() : "stopwords:off";
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["remove_stopwords"] = c.preprocess.remove_stopwords;
  j["stop_list"] = c.preprocess.stop_list.source_tag();
  j["max_n"] = c.max_n;
  j["min_freq"] = c.min_freq;
  j["scheme"] = to_string(c.scheme);
  j["smote"] = c.smote;
  j["smote_k"] = c.smote_k;
  j["folds"] = c.folds;
  j["budget_seconds"] = c.budget_seconds ? nlohmann::ordered_json(*c.budget_seconds) : nlohmann::ordered_json(nullptr);
  j["max_candidates"] = c.max_candidates ? nlohmann::ordered_json(*c.max_candidates) : nlohmann::ordered_json(nullptr);
  j["ensemble_size"] = c.ensemble_size;
  j["rounds"] = c.rounds;
  j["test_fraction"] = c.test_fraction;
  j["seed"] = c.seed;
  j["top_k"] = c.top_k;
  return j;
}

struct RoundResult {
  std::size_t round = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t train_rows_after_smote = 0;
  std::string dictionary_fingerprint;
  std::size_t dictionary_size = 0;
  std::vector<std::size_t> dictionary_by_length;
  Leaderboard leaderboard;
  EnsembleSelection selection;
  ConfusionMatrix confusion;
  ClassMetrics metrics;
  double weighted_f1 = 0.0;
  PhraseRanking top_ngrams;
};

struct AveragedScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t rounds_defined = 0;
  std::size_t support = 0;  // summed over rounds' test sets
};

struct EvalReport {
  std::string dataset;
  ClassCounts class_counts{};
  ExperimentConfig config;
  std::vector<std::string> warnings;
  std::vector<RoundResult> rounds;
  std::array<AveragedScore, kNumLabels> averaged{};
  double mean_weighted_f1 = 0.0;
  ConfusionMatrix pooled;
  ClassMetrics pooled_metrics;
  std::size_t correct_total = 0;
  double correct_mean = 0.0;
  PhraseRanking top_ngrams;  // fused across rounds
};

namespace detail {

// Reciprocal-rank fusion of per-round phrase lists.
inline PhraseRanking fuse_rounds(const std::vector<RoundResult>& rounds, std::size_t k) {
  PhraseRanking out;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::map<std::string, double> score;
    for (const auto& r : rounds) {
      const auto& list = r.top_ngrams[c];
      for (std::size_t pos = 0; pos < list.size(); ++pos) score[list[pos].phrase] += 1.0 / static_cast<double>(pos + 1);
    }
    std::vector<RankedPhrase> ranked;
    for (const auto& [phrase, s] : score) ranked.push_back({phrase, s});
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    if (ranked.size() > k) ranked.resize(k);
    out[c] = std::move(ranked);
  }
  return out;
}

}  // namespace detail

// One round: dictionary, vectors, optional SMOTE, search, ensemble and refit
// all see the training partition only; the test partition is only predicted.
inline RoundResult run_round(const std::vector<TokenSequence>& tokens, const std::vector<Label>& labels,
                             const SplitRound& split, const ExperimentConfig& cfg, std::size_t round) {
  RoundResult rr;
  rr.round = round;
  rr.train_size = split.train_ids.size();
  rr.test_size = split.test_ids.size();

  std::vector<TokenSequence> train_docs, test_docs;
  std::vector<Label> train_labels, test_labels;
  for (auto id : split.train_ids) {
    train_docs.push_back(tokens[id]);
    train_labels.push_back(labels[id]);
  }
  for (auto id : split.test_ids) {
    test_docs.push_back(tokens[id]);
    test_labels.push_back(labels[id]);
  }

  const auto dict = build_dictionary(train_docs, {cfg.max_n, cfg.min_freq, preprocess_tag(cfg.preprocess)});
  rr.dictionary_fingerprint = dict.fingerprint();
  rr.dictionary_size = dict.size();
  rr.dictionary_by_length = dict.counts_by_length();

  auto train_m = vectorize_corpus(train_docs, train_labels, dict, cfg.scheme);
  const auto test_m = vectorize_corpus(test_docs, test_labels, dict, cfg.scheme);
  const auto round_seed = detail::mix_seed(cfg.seed, 10'000 + round);
  if (cfg.smote) train_m = smote_oversample(train_m, cfg.smote_k, detail::mix_seed(round_seed, 1));
  rr.train_rows_after_smote = train_m.rows();

  SearchOptions so;
  so.folds = cfg.folds;
  so.budget_seconds = cfg.budget_seconds;
  so.max_candidates = cfg.max_candidates;
  so.seed = detail::mix_seed(round_seed, 2);
  so.threads = cfg.threads;
  rr.leaderboard = search(train_m, so);
  rr.selection = ensemble_select(rr.leaderboard, cfg.ensemble_size);
  const auto ensemble = fit_final(rr.selection, train_m);

  const auto predicted = predict(ensemble, test_m);
  rr.confusion = confusion_matrix(test_labels, predicted);
  rr.metrics = per_class_prf(rr.confusion);
  rr.weighted_f1 = weighted_f1(rr.metrics);
  rr.top_ngrams = top_ngrams_per_class(ensemble, dict, cfg.top_k, &train_m, detail::mix_seed(round_seed, 3));
  return rr;
}

inline EvalReport run_experiment(const LabeledDataset& ds, const ExperimentConfig& cfg) {
  if (ds.size() < 2) throw Error("dataset needs at least 2 documents");
  const auto counts = class_distribution(ds);
  if (std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) < 2) {
    throw Error("dataset needs at least 2 distinct labels");
  }
  EvalReport report;
  report.dataset = ds.name;
  report.class_counts = counts;
  report.config = cfg;

  std::vector<TokenSequence> tokens(ds.size());
  std::vector<Label> labels(ds.size());
  for (const auto& doc : ds.documents) {
    tokens[doc.id] = preprocess(doc.text, cfg.preprocess);
    labels[doc.id] = doc.label;
  }
  const auto plan = stratified_shuffle_splits(ds, cfg.rounds, cfg.test_fraction, cfg.seed);
  report.warnings = plan.warnings;

  for (std::size_t r = 0; r < plan.rounds.size(); ++r) {
    try {
      report.rounds.push_back(run_round(tokens, labels, plan.rounds[r], cfg, r));
    } catch (const Error& e) {
      throw Error("round " + std::to_string(r) + ": " + e.what());
    }
    for (const auto& w : report.rounds.back().leaderboard.warnings) {
      report.warnings.push_back("round " + std::to_string(r) + ": " + w);
    }
  }

  double wf1 = 0.0;
  for (const auto& rr : report.rounds) {
    report.pooled += rr.confusion;
    report.correct_total += rr.confusion.trace();
    wf1 += rr.weighted_f1;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      const auto& s = rr.metrics.classes[c];
      auto& avg = report.averaged[c];
      avg.support += s.support;
      if (!s.defined) continue;
      avg.precision += s.precision;
      avg.recall += s.recall;
      avg.f1 += s.f1;
      ++avg.rounds_defined;
    }
  }
  for (auto& avg : report.averaged) {
    if (avg.rounds_defined == 0) continue;
    const auto n = static_cast<double>(avg.rounds_defined);
    avg.precision /= n;
    avg.recall /= n;
    avg.f1 /= n;
  }
  const auto n_rounds = static_cast<double>(report.rounds.size());
  report.mean_weighted_f1 = wf1 / n_rounds;
  report.correct_mean = static_cast<double>(report.correct_total) / n_rounds;
  report.pooled_metrics = per_class_prf(report.pooled);
  report.top_ngrams = detail::fuse_rounds(report.rounds, cfg.top_k);
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering

namespace detail {

inline nlohmann::ordered_json metrics_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  for (Label l : kAllLabels) {
    const auto& s = m[l];
    j[std::string(to_string(l))] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                                    {"support", s.support},     {"predicted", s.predicted},
                                    {"defined", s.defined}};
  }
  return j;
}

inline nlohmann::ordered_json ranking_json(const PhraseRanking& r) {
  nlohmann::ordered_json j;
  for (Label l : kAllLabels) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& p : r[index_of(l)]) list.push_back({{"phrase", p.phrase}, {"score", p.score}});
    j[std::string(to_string(l))] = list;
  }
  return j;
}

inline nlohmann::ordered_json confusion_json(const ConfusionMatrix& cm) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  return rows;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const EvalReport& r, const nlohmann::ordered_json& run_config = nullptr) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "sentingram-report";
  j["version"] = 1;
  j["dataset"] = r.dataset;
  ordered_json counts;
  std::size_t sum = 0;
  for (Label l : kAllLabels) {
    counts[std::string(to_string(l))] = r.class_counts[index_of(l)];
    sum += r.class_counts[index_of(l)];
  }
  counts["sum"] = sum;
  j["class_counts"] = counts;
  j["config"] = to_json(r.config);
  if (!run_config.is_null()) j["run_config"] = run_config;
  j["warnings"] = r.warnings;

  ordered_json averaged;
  for (Label l : kAllLabels) {
    const auto& a = r.averaged[index_of(l)];
    averaged[std::string(to_string(l))] = {{"precision", a.precision}, {"recall", a.recall},
                                           {"f1", a.f1},               {"rounds_defined", a.rounds_defined},
                                           {"support", a.support}};
  }
  j["averaged"] = averaged;
  j["mean_weighted_f1"] = r.mean_weighted_f1;
  j["correct_predictions"] = {{"pooled_total", r.correct_total}, {"mean_per_round", r.correct_mean}};
  j["pooled"] = {{"confusion", detail::confusion_json(r.pooled)},
                 {"metrics", detail::metrics_json(r.pooled_metrics)},
                 {"weighted_f1", r.pooled.total() ? weighted_f1(r.pooled_metrics) : 0.0}};
  j["top_ngrams"] = detail::ranking_json(r.top_ngrams);

  auto rounds = ordered_json::array();
  for (const auto& rr : r.rounds) {
    ordered_json jr;
    jr["round"] = rr.round;
    jr["train_size"] = rr.train_size;
    jr["test_size"] = rr.test_size;
    jr["train_rows_after_smote"] = rr.train_rows_after_smote;
    jr["dictionary"] = {{"fingerprint", rr.dictionary_fingerprint},
                        {"entries", rr.dictionary_size},
                        {"by_length", rr.dictionary_by_length}};
    auto lb = ordered_json::array();
    for (std::size_t i = 0; i < rr.leaderboard.entries.size(); ++i) {
      const auto& e = rr.leaderboard.entries[i];
      lb.push_back({{"rank", i + 1},
                    {"candidate", e.index},
                    {"kind", to_string(e.config.kind)},
                    {"hyperparameters", e.config.hyperparams},
                    {"score", e.score},
                    {"degenerate", e.degenerate}});
    }
    jr["leaderboard"] = lb;
    auto members = ordered_json::array();
    for (const auto& m : rr.selection.members) {
      members.push_back({{"rank", m.rank + 1},
                         {"kind", to_string(m.config.kind)},
                         {"hyperparameters", m.config.hyperparams},
                         {"multiplicity", m.multiplicity}});
    }
    jr["ensemble"] = {{"members", members}, {"trajectory", rr.selection.trajectory}, {"oof_weighted_f1", rr.selection.score}};
    jr["confusion"] = detail::confusion_json(rr.confusion);
    jr["metrics"] = detail::metrics_json(rr.metrics);
    jr["weighted_f1"] = rr.weighted_f1;
    jr["correct"] = rr.confusion.trace();
    jr["top_ngrams"] = detail::ranking_json(rr.top_ngrams);
    rounds.push_back(jr);
  }
  j["rounds"] = rounds;
  return j;
}

// Human-readable table in the layout: correct predictions, then precision,
// recall and F1 per class. A class with no true instances renders as "-".
inline std::string render_table(const nlohmann::ordered_json& report) {
  std::ostringstream os;
  char buf[256];
  const auto& counts = report.at("class_counts");
  os << "dataset: " << report.at("dataset").get<std::string>() << "  (positive: " << counts.at("positive")
     << ", neutral: " << counts.at("neutral") << ", negative: " << counts.at("negative")
     << ", sum: " << counts.at("sum") << ")\n";
  os << "rounds: " << report.at("rounds").size() << ", seed: " << report.at("config").at("seed") << "\n\n";

  std::snprintf(buf, sizeof buf, "%-22s %10s | %-23s | %-23s | %-23s\n", "", "# correct", "positive", "neutral",
                "negative");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-22s %10s | %7s %7s %7s | %7s %7s %7s | %7s %7s %7s\n", "", "", "prec", "rec",
                "F1", "prec", "rec", "F1", "prec", "rec", "F1");
  os << buf;

  auto cells = [&](const nlohmann::ordered_json& per_class) {
    std::string out;
    for (Label l : kAllLabels) {
      const auto& c = per_class.at(std::string(to_string(l)));
      if (c.at("support").get<std::size_t>() == 0) {
        std::snprintf(buf, sizeof buf, " | %7s %7s %7s", "-", "-", "-");
      } else {
        std::snprintf(buf, sizeof buf, " | %7.3f %7.3f %7.3f", c.at("precision").get<double>(),
                      c.at("recall").get<double>(), c.at("f1").get<double>());
      }
      out += buf;
    }
    return out;
  };
  const auto& correct = report.at("correct_predictions");
  std::snprintf(buf, sizeof buf, "%-22s %10zu", "round average", correct.at("pooled_total").get<std::size_t>());
  os << buf << cells(report.at("averaged")) << '\n';
  std::snprintf(buf, sizeof buf, "%-22s %10s", "pooled (secondary)", "");
  os << buf << cells(report.at("pooled").at("metrics")) << "\n\n";

  std::snprintf(buf, sizeof buf, "mean weighted F1: %.3f   correct per round: %.1f\n",
                report.at("mean_weighted_f1").get<double>(), correct.at("mean_per_round").get<double>());
  os << buf;

  const auto& top = report.at("top_ngrams");
  os << "\ntop n-grams\n";
  for (Label l : kAllLabels) {
    os << "  " << to_string(l) << ":";
    const auto& list = top.at(std::string(to_string(l)));
    if (list.empty()) os << " -";
    bool first = true;
    for (const auto& p : list) {
      os << (first ? " " : ", ") << '\'' << p.at("phrase").get<std::string>() << '\'';
      first = false;
    }
    os << '\n';
  }
  for (const auto& w : report.at("warnings")) os << "warning: " << w.get<std::string>() << '\n';
  return os.str();
}

}  // namespace sentingram
