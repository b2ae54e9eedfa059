#pragma once

// Budget-limited random search over the learner portfolio, scored by
// stratified k-fold weighted F1 on the training matrix, followed by greedy
// forward ensemble selection with replacement over the out-of-fold scores.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sentingram/corpus_io.hpp"
#include "sentingram/detail/random.hpp"
#include "sentingram/error.hpp"
#include "sentingram/features.hpp"
#include "sentingram/learners.hpp"
#include "sentingram/metrics.hpp"

namespace sentingram {

struct CandidateConfig {
  LearnerKind kind = LearnerKind::multinomial_nb;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;

  friend bool operator==(const CandidateConfig&, const CandidateConfig&) = default;
};

inline std::string hyperparams_json(const Hyperparams& hp) { return nlohmann::json(hp).dump(); }

// Per class, rows are shuffled with `seed` and dealt round-robin into folds,
// so assignment depends only on labels, row positions and the seed.
inline std::vector<std::size_t> stratified_folds(const std::vector<Label>& labels, std::size_t folds,
                                                 std::uint64_t seed) {
  if (folds < 2) throw Error("at least 2 folds are required");
  std::vector<std::size_t> fold_of(labels.size(), 0);
  for (Label l : kAllLabels) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == l) rows.push_back(i);
    }
    detail::Rng rng(detail::mix_seed(seed, 100 + index_of(l)));
    rng.shuffle(rows);
    for (std::size_t k = 0; k < rows.size(); ++k) fold_of[rows[k]] = k % folds;
  }
  return fold_of;
}

struct CandidateResult {
  std::size_t index = 0;  // position in the candidate sequence
  CandidateConfig config;
  double score = 0.0;  // pooled out-of-fold weighted F1
  bool degenerate = false;  // training data had a single class
  std::vector<Label> oof_predictions;
  std::vector<ClassProbabilities> oof_probabilities;
};

inline CandidateResult evaluate_candidate(const CandidateConfig& config, const FeatureMatrix& m,
                                          const std::vector<std::size_t>& fold_of, std::size_t folds) {
  if (m.rows() < 2) throw Error("candidate evaluation needs at least 2 training rows");
  CandidateResult result;
  result.config = config;
  result.oof_predictions.resize(m.rows());
  result.oof_probabilities.resize(m.rows());
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, held_rows;
    for (std::size_t i = 0; i < m.rows(); ++i) (fold_of[i] == f ? held_rows : train_rows).push_back(i);
    if (held_rows.empty()) continue;
    if (train_rows.empty()) throw Error("fold " + std::to_string(f) + " leaves no training rows");
    const auto model = train(config.kind, config.hyperparams, m.subset(train_rows),
                             detail::mix_seed(config.seed, f));
    const auto held = m.subset(held_rows);
    const auto labels = predict(model, held);
    const auto proba = predict_proba(model, held);
    for (std::size_t k = 0; k < held_rows.size(); ++k) {
      result.oof_predictions[held_rows[k]] = labels[k];
      result.oof_probabilities[held_rows[k]] = proba[k];
    }
  }
  result.score = weighted_f1(m.labels(), result.oof_predictions);
  result.degenerate = detail::observed_classes(m).size() < 2;
  return result;
}

inline CandidateResult evaluate_candidate(const CandidateConfig& config, const FeatureMatrix& m,
                                          std::size_t folds, std::uint64_t fold_seed) {
  return evaluate_candidate(config, m, stratified_folds(m.labels(), folds, fold_seed), folds);
}

// Candidate i of the search sequence for `seed`. The first four are the
// default configurations of each portfolio kind; later ones are random.
inline CandidateConfig candidate_at(std::uint64_t seed, std::size_t i) {
  CandidateConfig c;
  c.seed = detail::mix_seed(seed, 1000 + i);
  if (i < kAllLearnerKinds.size()) {
    c.kind = kAllLearnerKinds[i];
    c.hyperparams = default_hyperparams(c.kind);
    return c;
  }
  detail::Rng rng(detail::mix_seed(seed, 5000 + i));
  c.kind = kAllLearnerKinds[rng.below(kAllLearnerKinds.size())];
  c.hyperparams = sample_hyperparams(c.kind, rng);
  return c;
}

struct SearchOptions {
  std::size_t folds = 5;
  std::optional<double> budget_seconds = 60.0;
  std::optional<std::size_t> max_candidates;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct Leaderboard {
  std::vector<CandidateResult> entries;  // descending score, ties by candidate index
  std::vector<Label> truth;              // training labels the oof archives align with
  std::vector<std::string> warnings;
};

inline Leaderboard search(const FeatureMatrix& m, const SearchOptions& options) {
  if (options.budget_seconds && !(*options.budget_seconds > 0.0)) throw Error("search budget must be positive");
  if (!options.budget_seconds && !options.max_candidates) {
    throw Error("search needs a time budget or a candidate cap");
  }
  const std::size_t mandatory = kAllLearnerKinds.size();
  Leaderboard lb;
  lb.truth = m.labels();
  std::size_t cap = options.max_candidates.value_or(SIZE_MAX);
  if (cap < mandatory) {
    lb.warnings.push_back("candidate cap raised to " + std::to_string(mandatory) +
                          " so every learner kind is evaluated once");
    cap = mandatory;
  }
  const auto fold_of = stratified_folds(m.labels(), options.folds, options.seed);
  const auto start = std::chrono::steady_clock::now();
  auto out_of_time = [&] {
    if (!options.budget_seconds) return false;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return elapsed.count() >= *options.budget_seconds;
  };

  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  std::size_t next = 0;
  while (next < cap) {
    if (next >= mandatory && out_of_time()) break;
    const std::size_t batch_end = std::min(cap, next + (next < mandatory ? mandatory : threads));
    std::vector<std::future<CandidateResult>> running;
    std::vector<CandidateResult> batch;
    for (std::size_t i = next; i < batch_end; ++i) {
      auto job = [&, i] {
        auto r = evaluate_candidate(candidate_at(options.seed, i), m, fold_of, options.folds);
        r.index = i;
        return r;
      };
      if (threads > 1) {
        running.push_back(std::async(std::launch::async, job));
      } else {
        batch.push_back(job());
      }
    }
    for (auto& f : running) batch.push_back(f.get());
    for (auto& r : batch) lb.entries.push_back(std::move(r));
    next = batch_end;
    if (next == mandatory && out_of_time()) {
      lb.warnings.push_back("time budget exhausted while evaluating the default configuration of "
                            "each learner kind");
    }
  }
  std::stable_sort(lb.entries.begin(), lb.entries.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.index < b.index;
  });
  return lb;
}

// Leaderboard TSV: `rank kind hp-json score`, preceded by '#' provenance lines.
inline void write_leaderboard_tsv(std::ostream& os, const Leaderboard& lb,
                                  const std::vector<std::string>& extra = {}) {
  for (const auto& line : extra) os << "# " << line << '\n';
  os << "rank\tkind\thp-json\tscore\n";
  char score[32];
  for (std::size_t r = 0; r < lb.entries.size(); ++r) {
    const auto& e = lb.entries[r];
    std::snprintf(score, sizeof score, "%.6f", e.score);
    os << r + 1 << '\t' << to_string(e.config.kind) << '\t' << hyperparams_json(e.config.hyperparams) << '\t'
       << score << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleSelection {
  struct Member {
    std::size_t rank = 0;  // position in the leaderboard
    CandidateConfig config;
    std::size_t multiplicity = 0;
  };
  std::vector<Member> members;     // ordered by leaderboard rank
  std::vector<double> trajectory;  // oof weighted F1 after each greedy step
  double score = 0.0;
};

namespace detail {

inline Label argmax_label(const ClassProbabilities& p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumLabels; ++c) {
    if (p[c] > p[best]) best = c;
  }
  return kAllLabels[best];
}

// Weighted F1 of argmax over summed probabilities (the mean has the same
// argmax as the sum).
inline double mixture_score(const std::vector<ClassProbabilities>& sums, const std::vector<Label>& truth) {
  std::vector<Label> pred;
  pred.reserve(sums.size());
  for (const auto& s : sums) pred.push_back(argmax_label(s));
  return weighted_f1(truth, pred);
}

}  // namespace detail

// Greedy forward selection with replacement: start empty; at each of `size`
// steps add the leaderboard entry whose addition maximizes pooled oof
// weighted F1 of the multiplicity-weighted mean probabilities. Ties go to
// the earlier leaderboard rank.
inline EnsembleSelection ensemble_select(const Leaderboard& lb, std::size_t size) {
  if (lb.entries.empty()) throw Error("ensemble selection needs a nonempty leaderboard");
  if (size < 1) throw Error("ensemble size must be at least 1");
  const std::size_t n = lb.truth.size();
  std::vector<ClassProbabilities> sums(n, ClassProbabilities{});
  std::vector<std::size_t> counts(lb.entries.size(), 0);
  EnsembleSelection sel;
  std::vector<ClassProbabilities> trial(n);
  for (std::size_t step = 0; step < size; ++step) {
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t e = 0; e < lb.entries.size(); ++e) {
      const auto& p = lb.entries[e].oof_probabilities;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < kNumLabels; ++c) trial[i][c] = sums[i][c] + p[i][c];
      }
      const double s = detail::mixture_score(trial, lb.truth);
      if (s > best_score) {
        best_score = s;
        best = e;
      }
    }
    const auto& p = lb.entries[best].oof_probabilities;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < kNumLabels; ++c) sums[i][c] += p[i][c];
    }
    ++counts[best];
    sel.trajectory.push_back(best_score);
  }
  for (std::size_t e = 0; e < counts.size(); ++e) {
    if (counts[e]) sel.members.push_back({e, lb.entries[e].config, counts[e]});
  }
  sel.score = sel.trajectory.back();
  return sel;
}

struct TrainedEnsemble {
  struct Member {
    CandidateConfig config;
    std::size_t multiplicity = 0;
    TrainedModel model;
  };
  std::vector<Member> members;
  std::string fingerprint;
};

// Retrains every selected configuration on the full training matrix.
inline TrainedEnsemble fit_final(const EnsembleSelection& selection, const FeatureMatrix& m) {
  if (selection.members.empty()) throw Error("cannot fit an empty ensemble");
  TrainedEnsemble ens;
  ens.fingerprint = m.fingerprint();
  for (const auto& member : selection.members) {
    ens.members.push_back({member.config, member.multiplicity,
                           train(member.config.kind, member.config.hyperparams, m, member.config.seed)});
  }
  return ens;
}

inline std::vector<ClassProbabilities> predict_proba(const TrainedEnsemble& ens, const FeatureMatrix& rows) {
  if (rows.fingerprint() != ens.fingerprint) {
    throw Error("matrix fingerprint " + rows.fingerprint() + " does not match ensemble (" + ens.fingerprint + ")");
  }
  std::vector<ClassProbabilities> sums(rows.rows(), ClassProbabilities{});
  double total = 0.0;
  for (const auto& member : ens.members) {
    const auto p = predict_proba(member.model, rows);
    const auto w = static_cast<double>(member.multiplicity);
    total += w;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      for (std::size_t c = 0; c < kNumLabels; ++c) sums[i][c] += w * p[i][c];
    }
  }
  for (auto& s : sums) {
    for (auto& v : s) v /= total;
  }
  return sums;
}

inline std::vector<Label> predict(const TrainedEnsemble& ens, const FeatureMatrix& rows) {
  std::vector<Label> out;
  for (const auto& p : predict_proba(ens, rows)) out.push_back(detail::argmax_label(p));
  return out;
}

inline nlohmann::json to_json(const TrainedEnsemble& ens) {
  nlohmann::json j;
  j["format"] = "sentingram-ensemble";
  j["version"] = 1;
  j["fingerprint"] = ens.fingerprint;
  auto& members = j["members"] = nlohmann::json::array();
  for (const auto& m : ens.members) {
    members.push_back({{"multiplicity", m.multiplicity}, {"seed", m.config.seed}, {"model", to_json(m.model)}});
  }
  return j;
}

inline TrainedEnsemble ensemble_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "sentingram-ensemble" || j.at("version") != 1) throw Error("not a sentingram ensemble");
    TrainedEnsemble ens;
    ens.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& m : j.at("members")) {
      TrainedEnsemble::Member member;
      member.multiplicity = m.at("multiplicity").get<std::size_t>();
      member.model = model_from_json(m.at("model"));
      member.config = {member.model.kind, member.model.hyperparams, m.at("seed").get<std::uint64_t>()};
      if (member.model.fingerprint != ens.fingerprint) {
        throw Error("ensemble member fingerprint does not match the ensemble");
      }
      ens.members.push_back(std::move(member));
    }
    if (ens.members.empty()) throw Error("ensemble has no members");
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed ensemble: ") + e.what());
  }
}

}  // namespace sentingram
