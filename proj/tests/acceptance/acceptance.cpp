// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any gating criterion fails. Criterion 11 is informational and only
// runs when the three labeled benchmark CSVs are present in
// $SENTINGRAM_BENCHMARK_DIR (stackoverflow.csv, appreviews.csv, jira.csv).

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "oracles.hpp"
#include "sentingram/sentingram.hpp"

namespace fs = std::filesystem;
using namespace sentingram;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, bool gating = true) {
  const char* tag = o.pass ? "PASS" : (gating ? "FAIL" : "INFO");
  std::printf("[%s] %2d. %s: %s\n", tag, id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass && gating) ++failures;
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Corpora for criteria 1-3: <= 50 docs x <= 30 tokens, alphabet <= 8.
std::vector<std::vector<oracle::Doc>> oracle_corpora() {
  std::mt19937_64 gen(20240601);
  std::vector<std::vector<oracle::Doc>> out;
  for (int i = 0; i < 200; ++i) out.push_back(oracle::random_corpus(gen, 50, 30, 8));
  return out;
}

Outcome criterion_1(const std::vector<std::vector<oracle::Doc>>& corpora) {
  const auto start = Clock::now();
  std::size_t compared = 0, mismatches = 0;
  for (const auto& corpus : corpora) {
    const auto expected = oracle::ngram_stats(corpus, kMaxNGramLength);
    const auto dict = build_dictionary(corpus, {kMaxNGramLength, 1, "oracle"});
    if (dict.size() != expected.size()) ++mismatches;
    for (const auto& [phrase, st] : expected) {
      ++compared;
      const auto idx = dict.find(phrase);
      if (!idx) {
        ++mismatches;
        continue;
      }
      const auto& e = dict[*idx];
      if (e.freq != st.freq || e.df_phrase != st.df_phrase || e.df_terms != st.df_terms || e.weight != st.weight) {
        ++mismatches;
      }
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < 60.0, std::to_string(corpora.size()) + " corpora, " + std::to_string(compared) +
                                              " n-grams, " + std::to_string(mismatches) + " mismatches, " +
                                              fmt("%.1f s", secs) + " (limit 60 s)"};
}

Outcome criterion_2(const std::vector<std::vector<oracle::Doc>>& corpora) {
  double worst = 0.0;
  std::size_t unigrams = 0;
  for (const auto& corpus : corpora) {
    const auto dict = build_dictionary(corpus, {kMaxNGramLength, 1, "oracle"});
    const double n = static_cast<double>(corpus.size());
    for (const auto& e : dict.entries()) {
      if (e.n() != 1) continue;
      ++unigrams;
      worst = std::max(worst, std::abs(e.weight - std::log(n / static_cast<double>(e.df_phrase))));
    }
  }
  return {worst < 1e-12, std::to_string(unigrams) + " unigrams, max |w - ln(N/df)| = " + fmt("%.3g", worst) +
                             " (tol 1e-12)"};
}

Outcome criterion_3(const std::vector<std::vector<oracle::Doc>>& corpora) {
  std::size_t low = 0, bad_roundtrip = 0, entries = 0;
  for (const auto& corpus : corpora) {
    const auto dict = build_dictionary(corpus);  // default min_freq 2
    std::ostringstream first;
    write_dictionary_tsv(first, dict);
    std::istringstream in(first.str());
    const auto loaded = read_dictionary_tsv(in).dictionary;
    for (const auto& e : loaded.entries()) low += e.freq < 2;
    entries += loaded.size();
    bool same = loaded.size() == dict.size() && loaded.fingerprint() == dict.fingerprint();
    for (std::size_t i = 0; same && i < dict.size(); ++i) {
      const auto& a = dict[i];
      const auto& b = loaded[i];
      same = a.phrase == b.phrase && a.freq == b.freq && a.df_phrase == b.df_phrase && a.df_terms == b.df_terms &&
             a.weight == b.weight;
    }
    std::ostringstream second;
    write_dictionary_tsv(second, loaded);
    if (!same || second.str() != first.str()) ++bad_roundtrip;
  }
  return {low == 0 && bad_roundtrip == 0, std::to_string(entries) + " exported entries, " + std::to_string(low) +
                                              " with freq < 2, " + std::to_string(bad_roundtrip) +
                                              " inexact round trips"};
}

Outcome criterion_4() {
  const auto fixtures = oracle::metric_fixtures();
  double worst = 0.0;
  for (const auto& f : fixtures) {
    ConfusionMatrix cm;
    cm.counts = f.counts;
    const auto m = per_class_prf(cm);
    for (std::size_t c = 0; c < 3; ++c) {
      worst = std::max({worst, std::abs(m.classes[c].precision - f.precision[c]),
                        std::abs(m.classes[c].recall - f.recall[c]), std::abs(m.classes[c].f1 - f.f1[c])});
    }
    worst = std::max(worst, std::abs(weighted_f1(m) - f.weighted_f1));
  }
  const double table = weighted_f1(std::vector<std::size_t>{178, 1191, 131}, std::vector<double>{0.418, 0.904, 0.514});
  return {fixtures.size() >= 10 && worst < 1e-9 && std::abs(table - 0.812) <= 0.001,
          std::to_string(fixtures.size()) + " fixtures, max error " + fmt("%.2g", worst) +
              " (tol 1e-9); weighted_f1((178,1191,131),(0.418,0.904,0.514)) = " + fmt("%.4f", table) +
              " (0.812 +- 0.001)"};
}

Outcome criterion_5() {
  std::mt19937_64 gen(77);
  std::size_t violations = 0, irreproducible = 0, checked = 0;
  for (int d = 0; d < 1000; ++d) {
    std::vector<DocId> ids;
    std::vector<Label> labels;
    std::array<std::size_t, 3> counts{};
    do {
      for (auto& c : counts) c = gen() % 60;
    } while (std::max({counts[0], counts[1], counts[2]}) < 2);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < counts[c]; ++i) {
        ids.push_back(static_cast<DocId>(ids.size()));
        labels.push_back(kAllLabels[c]);
      }
    }
    const double fraction = 0.05 + 0.9 * static_cast<double>(gen() % 1000) / 1000.0;
    const std::size_t rounds = 1 + gen() % 5;
    const std::uint64_t seed = gen();
    const auto plan = stratified_shuffle_splits(ids, labels, rounds, fraction, seed);
    for (const auto& r : plan.rounds) {
      std::array<std::size_t, 3> test{};
      for (auto id : r.test_ids) ++test[index_of(labels[id])];
      for (std::size_t c = 0; c < 3; ++c) {
        ++checked;
        const double target = std::round(static_cast<double>(counts[c]) * fraction);
        if (std::abs(static_cast<double>(test[c]) - target) > 1.0) ++violations;
      }
    }
    if (!(plan == stratified_shuffle_splits(ids, labels, rounds, fraction, seed))) ++irreproducible;
  }
  return {violations == 0 && irreproducible == 0, "1000 datasets, " + std::to_string(checked) +
                                                      " class/round counts, " + std::to_string(violations) +
                                                      " outside +-1, " + std::to_string(irreproducible) +
                                                      " irreproducible plans"};
}

FeatureMatrix separable_toy() {
  std::mt19937_64 gen(1);
  FeatureMatrix m(8, "toy");
  for (int i = 0; i < 20; ++i) {
    for (std::uint32_t c = 0; c < 3; ++c) {
      FeatureVector v;
      v.entries.push_back({c, 1.0 + static_cast<double>(gen() % 3)});
      for (std::uint32_t j = 3; j < 8; ++j) {
        if (gen() % 2) v.entries.push_back({j, 0.5 + static_cast<double>(gen() % 4) * 0.25});
      }
      m.push_back(v, kAllLabels[c]);
    }
  }
  return m;
}

Outcome criterion_6() {
  const auto m = separable_toy();
  std::string detail;
  bool ok = true;
  for (auto kind : kAllLearnerKinds) {
    const auto pred = predict(train(kind, {}, m, 5), m);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == m.label(i);
    const double acc = static_cast<double>(hit) / static_cast<double>(pred.size());
    ok = ok && acc == 1.0;
    detail += std::string(to_string(kind)) + " " + fmt("%.3f", acc) + ", ";
  }

  // Logistic gradient vs central differences.
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<FeatureVector> rows(m.row_data().begin(), m.row_data().end());
  std::vector<std::size_t> targets;
  for (Label l : m.labels()) targets.push_back(index_of(l));
  std::vector<std::vector<double>> w(3, std::vector<double>(8));
  std::vector<double> b(3);
  for (auto& r : w) {
    for (auto& v : r) v = u(gen);
  }
  for (auto& v : b) v = u(gen);
  std::vector<std::vector<double>> gw;
  std::vector<double> gb;
  linear::softmax_gradient(w, b, rows, targets, 0.01, gw, gb);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 8; ++j) {
      auto wp = w, wm = w;
      wp[c][j] += h;
      wm[c][j] -= h;
      const double fd = (linear::softmax_objective(wp, b, rows, targets, 0.01) -
                         linear::softmax_objective(wm, b, rows, targets, 0.01)) /
                        (2 * h);
      worst = std::max(worst, std::abs(fd - gw[c][j]) / std::max(1e-8, std::max(std::abs(fd), std::abs(gw[c][j]))));
    }
  }
  ok = ok && worst < 1e-5;
  detail += "gradient rel. error " + fmt("%.2g", worst) + " (tol 1e-5), ";

  // Naive Bayes vs hand Laplace estimates.
  FeatureMatrix nbm(3, "nb");
  nbm.push_back(FeatureVector{{{0, 2.0}, {2, 1.0}}}, Label::positive);
  nbm.push_back(FeatureVector{{{0, 1.0}, {1, 1.0}}}, Label::positive);
  nbm.push_back(FeatureVector{{{1, 3.0}}}, Label::negative);
  const auto nb = std::get<NaiveBayesParams>(train(LearnerKind::multinomial_nb, {{"alpha", 0.5}}, nbm, 0).params);
  const std::vector<std::pair<double, double>> pairs = {
      {nb.log_prior[0], std::log(2.0 / 3.0)},        {nb.log_prior[1], std::log(1.0 / 3.0)},
      {nb.log_likelihood[0][0], std::log(3.5 / 6.5)}, {nb.log_likelihood[0][1], std::log(1.5 / 6.5)},
      {nb.log_likelihood[0][2], std::log(1.5 / 6.5)}, {nb.log_likelihood[1][0], std::log(0.5 / 4.5)},
      {nb.log_likelihood[1][1], std::log(3.5 / 4.5)}, {nb.log_likelihood[1][2], std::log(0.5 / 4.5)}};
  double nb_err = 0.0;
  for (const auto& [got, want] : pairs) nb_err = std::max(nb_err, std::abs(got - want));
  ok = ok && nb_err < 1e-9;
  detail += "NB max error " + fmt("%.2g", nb_err) + " (tol 1e-9)";
  return {ok, detail};
}

Outcome criterion_7() {
  std::mt19937_64 gen(4242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t instances = 0, score_mismatch = 0, multiset_mismatch = 0, decreasing = 0;
  double worst_gap = 0.0;
  for (int t = 0; t < 60; ++t) {
    const std::size_t members = 2 + gen() % 3;  // 2..4
    const std::size_t size = 1 + gen() % 5;     // 1..5
    const std::size_t rows = 12 + gen() % 13;
    std::vector<int> truth(rows);
    for (auto& y : truth) y = static_cast<int>(gen() % 3);
    std::vector<std::vector<oracle::Probs>> probs(members, std::vector<oracle::Probs>(rows));
    for (auto& model : probs) {
      for (std::size_t i = 0; i < rows; ++i) {
        oracle::Probs p{u(gen), u(gen), u(gen)};
        p[truth[i]] += 0.6 * u(gen);  // weakly informative
        const double s = p[0] + p[1] + p[2];
        for (auto& v : p) v /= s;
        model[i] = p;
      }
    }
    // Leaderboards are sorted by individual score, descending.
    std::vector<double> alone(members);
    for (std::size_t m = 0; m < members; ++m) {
      std::vector<std::size_t> one(members, 0);
      one[m] = 1;
      alone[m] = oracle::multiset_score(probs, one, truth);
    }
    std::vector<std::size_t> order(members);
    for (std::size_t m = 0; m < members; ++m) order[m] = m;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return alone[a] > alone[b]; });
    std::vector<std::vector<oracle::Probs>> sorted;
    for (auto m : order) sorted.push_back(probs[m]);
    probs = std::move(sorted);
    Leaderboard lb;
    for (int y : truth) lb.truth.push_back(kAllLabels[y]);
    for (std::size_t m = 0; m < members; ++m) {
      CandidateResult r;
      r.index = m;
      r.oof_probabilities.assign(probs[m].begin(), probs[m].end());
      lb.entries.push_back(r);
    }
    const auto sel = ensemble_select(lb, size);
    const auto best = oracle::best_multiset(probs, size, truth);
    ++instances;
    std::vector<std::size_t> counts(members, 0);
    for (const auto& mem : sel.members) counts[mem.rank] = mem.multiplicity;
    if (std::abs(sel.score - best.score) > 1e-12) {
      ++score_mismatch;
      worst_gap = std::max(worst_gap, best.score - sel.score);
    }
    if (std::find(best.argmax.begin(), best.argmax.end(), counts) == best.argmax.end()) ++multiset_mismatch;
    for (std::size_t s = 1; s < sel.trajectory.size(); ++s) {
      if (sel.trajectory[s] < sel.trajectory[s - 1] - 1e-12) {
        ++decreasing;
        break;
      }
    }
  }
  return {multiset_mismatch == 0 && decreasing == 0,
          std::to_string(instances) + " leaderboards; greedy differs from brute-force best multiset on " +
              std::to_string(multiset_mismatch) + " (score gap on " + std::to_string(score_mismatch) + ", max " +
              fmt("%.3f", worst_gap) + "); " + std::to_string(decreasing) + " trajectories decrease"};
}

Outcome criterion_8() {
  std::size_t unbalanced = 0, outside = 0, mutated = 0, synthetic = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 gen(seed);
    const std::size_t dim = 4 + gen() % 12;
    FeatureMatrix m(dim, "s");
    std::array<std::size_t, 3> counts{2 + gen() % 20, 2 + gen() % 20, 2 + gen() % 20};
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t r = 0; r < counts[c]; ++r) {
        FeatureVector v;
        for (std::uint32_t j = 0; j < dim; ++j) {
          if (gen() % 3 == 0) {
            const double x = static_cast<double>(gen() % 2000) / 100.0 - 5.0;
            if (x != 0.0) v.entries.push_back({j, x});
          }
        }
        m.push_back(v, kAllLabels[c]);
      }
    }
    const auto original = m;
    const auto k = 1 + gen() % 6;
    const auto r = smote_oversample_traced(m, k, seed);
    if (!(m == original)) ++mutated;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (!(r.matrix.row(i) == m.row(i)) || r.matrix.label(i) != m.label(i)) ++mutated;
    }
    std::array<std::size_t, 3> after{};
    for (Label l : r.matrix.labels()) ++after[index_of(l)];
    if (after[0] != after[1] || after[1] != after[2]) ++unbalanced;
    for (std::size_t s = 0; s < r.parents.size(); ++s) {
      ++synthetic;
      const auto row = m.rows() + s;
      const auto [a, b] = r.parents[s];
      bool in_box = m.label(a) == r.matrix.label(row) && m.label(b) == r.matrix.label(row);
      for (std::uint32_t j = 0; j < dim; ++j) {
        const double x = r.matrix.row(row).get(j);
        const double lo = std::min(m.row(a).get(j), m.row(b).get(j));
        const double hi = std::max(m.row(a).get(j), m.row(b).get(j));
        in_box = in_box && x >= lo && x <= hi;
      }
      outside += !in_box;
    }
  }
  return {unbalanced == 0 && outside == 0 && mutated == 0,
          "100 seeds, " + std::to_string(synthetic) + " synthetic rows; " + std::to_string(unbalanced) +
              " unbalanced, " + std::to_string(outside) + " outside parent box, " + std::to_string(mutated) +
              " mutated originals"};
}

Outcome criterion_9() {
  const auto start = Clock::now();
  const auto ds = parse_dataset_csv(oracle::planted_csv(600, 9), "planted", "planted");
  ExperimentConfig cfg;
  cfg.budget_seconds.reset();
  cfg.max_candidates = 20;
  cfg.rounds = 10;
  cfg.seed = 7;
  const auto report = run_experiment(ds, cfg);
  std::string ranks;
  bool all_first = true;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& list = report.top_ngrams[c];
    const bool first = !list.empty() && list[0].phrase == oracle::planted_phrases()[c];
    std::size_t rounds_first = 0;
    for (const auto& r : report.rounds) {
      rounds_first += !r.top_ngrams[c].empty() && r.top_ngrams[c][0].phrase == oracle::planted_phrases()[c];
    }
    all_first = all_first && first && rounds_first == report.rounds.size();
    ranks += std::string(to_string(kAllLabels[c])) + " '" + (list.empty() ? "" : list[0].phrase) + "' first in " +
             std::to_string(rounds_first) + "/" + std::to_string(report.rounds.size()) + " rounds; ";
  }
  const double secs = seconds_since(start);
  return {report.mean_weighted_f1 >= 0.90 && all_first && secs < 300.0,
          "mean weighted F1 " + fmt("%.4f", report.mean_weighted_f1) + " (>= 0.90); " + ranks + fmt("%.1f s", secs) +
              " (limit 300 s)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome criterion_10() {
  const auto dir = fs::temp_directory_path() / "sentingram_acceptance_c10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "planted.csv") << oracle::planted_csv(150, 10);
  const std::string cmd = std::string(SENTINGRAM_CLI) + " evaluate --data " + (dir / "planted.csv").string() +
                          " --rounds 3 --seed 7 --max-candidates 6 --out " + (dir / "out").string() + " > /dev/null";
  const int first_status = std::system(cmd.c_str());
  const auto first = slurp(dir / "out" / "report.json");
  const int second_status = std::system(cmd.c_str());
  const auto second = slurp(dir / "out" / "report.json");
  fs::remove_all(dir);
  const bool ok = first_status == 0 && second_status == 0 && !first.empty() && first == second;
  return {ok, "two count-capped evaluate runs: exit " + std::to_string(first_status) + "/" +
                  std::to_string(second_status) + ", report.json " + std::to_string(first.size()) + " bytes, " +
                  (first == second ? "identical" : "different")};
}

Outcome criterion_11() {
  const char* dir = std::getenv("SENTINGRAM_BENCHMARK_DIR");
  if (!dir) return {false, "skipped (set SENTINGRAM_BENCHMARK_DIR to a directory with the three benchmark CSVs)"};
  const fs::path root(dir);
  struct Expect {
    const char* file;
    ClassCounts counts;
  };
  const std::array<Expect, 3> sets = {Expect{"stackoverflow.csv", {178, 1191, 131}},
                                      Expect{"appreviews.csv", {186, 25, 130}},
                                      Expect{"jira.csv", {290, 0, 636}}};
  std::string detail;
  bool ok = true;
  for (const auto& s : sets) {
    if (!fs::exists(root / s.file)) return {false, std::string("skipped (missing ") + s.file + ")"};
    const auto ds = load_dataset(root / s.file);
    const auto counts = class_distribution(ds);
    ok = ok && counts == s.counts;
    detail += std::string(s.file) + " " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
              std::to_string(counts[2]) + "; ";
  }
  const auto jira = load_dataset(root / "jira.csv");
  ExperimentConfig cfg;
  cfg.budget_seconds.reset();
  cfg.max_candidates = 200;
  const auto rep = run_experiment(jira, cfg);
  const auto table = render_table(to_json(rep));
  const double pos = rep.averaged[0].f1, neg = rep.averaged[2].f1;
  ok = ok && rep.averaged[1].support == 0 && std::abs(pos - 0.893) <= 0.10 && std::abs(neg - 0.956) <= 0.10;
  detail += "jira F1 positive " + fmt("%.3f", pos) + " (0.893 +- 0.10), negative " + fmt("%.3f", neg) +
            " (0.956 +- 0.10), neutral " + (rep.averaged[1].support == 0 ? "dashed" : "present");
  return {ok, detail};
}

}  // namespace

int main() {
  std::printf("sentingram acceptance suite\n");
  const auto corpora = oracle_corpora();
  report(1, "n-gram statistics match brute-force oracle", guarded([&] { return criterion_1(corpora); }));
  report(2, "unigram weight reduces to ln(N/df)", guarded([&] { return criterion_2(corpora); }));
  report(3, "pruning and bit-exact TSV round trip", guarded([&] { return criterion_3(corpora); }));
  report(4, "metric fixtures and table-derived weighted F1", guarded(criterion_4));
  report(5, "stratified split counts and reproducibility", guarded(criterion_5));
  report(6, "learner sanity (separable toy, gradient, NB)", guarded(criterion_6));
  report(7, "greedy ensemble equals brute-force best multiset", guarded(criterion_7));
  report(8, "SMOTE balance, convexity, no mutation", guarded(criterion_8));
  report(9, "end-to-end planted-signal run", guarded(criterion_9));
  report(10, "byte-identical count-capped evaluate reports", guarded(criterion_10));
  report(11, "benchmark datasets (informational)", guarded(criterion_11), false);
  std::printf("%d gating criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
