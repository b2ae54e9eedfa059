// sentingram: sentiment classification with n-gram IDF features.
//
//   sentingram stats    --data FILE
//   sentingram extract  --data FILE [options]
//   sentingram train    --data FILE [options]
//   sentingram evaluate --data FILE [options]
//   sentingram report   --in REPORT.json

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sentingram/sentingram.hpp"

namespace fs = std::filesystem;
using namespace sentingram;

namespace {

struct RunConfig {
  std::string data;
  bool no_stopwords = false;
  std::string stopword_list;
  std::size_t max_n = kMaxNGramLength;
  std::size_t min_freq = 2;
  std::string scheme = "count_x_weight";
  bool smote = false;
  std::size_t smote_k = 5;
  std::size_t folds = 5;
  double budget_seconds = 60.0;
  std::size_t max_candidates = 0;  // 0: unset
  std::size_t ensemble_size = 10;
  std::size_t rounds = 10;
  double test_fraction = 0.1;
  std::uint64_t seed = 7;
  std::size_t top_k = 10;
  std::size_t threads = 1;
  std::string out;
  bool budget_given = false;
};

nlohmann::ordered_json to_json(const RunConfig& c, std::string_view command) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["data"] = c.data;
  j["remove_stopwords"] = !c.no_stopwords;
  j["stopword_list"] = c.stopword_list.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(c.stopword_list);
  j["max_n"] = c.max_n;
  j["min_freq"] = c.min_freq;
  j["scheme"] = c.scheme;
  j["smote"] = c.smote;
  j["smote_k"] = c.smote_k;
  j["folds"] = c.folds;
  const bool timed = c.budget_given || c.max_candidates == 0;
  j["budget_seconds"] = timed ? nlohmann::ordered_json(c.budget_seconds) : nlohmann::ordered_json(nullptr);
  j["max_candidates"] = c.max_candidates ? nlohmann::ordered_json(c.max_candidates) : nlohmann::ordered_json(nullptr);
  j["ensemble_size"] = c.ensemble_size;
  j["rounds"] = c.rounds;
  j["test_fraction"] = c.test_fraction;
  j["seed"] = c.seed;
  j["top_k"] = c.top_k;
  j["out"] = c.out;
  return j;
}

ExperimentConfig experiment_config(const RunConfig& c) {
  ExperimentConfig e;
  e.preprocess.remove_stopwords = !c.no_stopwords;
  if (!c.stopword_list.empty()) e.preprocess.stop_list = StopList::load(c.stopword_list);
  e.max_n = c.max_n;
  e.min_freq = c.min_freq;
  e.scheme = parse_feature_scheme(c.scheme);
  e.smote = c.smote;
  e.smote_k = c.smote_k;
  e.folds = c.folds;
  // A candidate cap alone means a count-capped, clock-free search.
  if (c.max_candidates) e.max_candidates = c.max_candidates;
  e.budget_seconds = (c.budget_given || !c.max_candidates) ? std::optional<double>(c.budget_seconds) : std::nullopt;
  e.ensemble_size = c.ensemble_size;
  e.rounds = c.rounds;
  e.test_fraction = c.test_fraction;
  e.seed = c.seed;
  e.top_k = c.top_k;
  e.threads = c.threads;
  return e;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw Error((dir / name).string() + ": cannot write");
  return os;
}

std::vector<TokenSequence> preprocess_all(const LabeledDataset& ds, const PreprocessOptions& p) {
  std::vector<TokenSequence> out;
  out.reserve(ds.size());
  for (const auto& d : ds.documents) out.push_back(preprocess(d.text, p));
  return out;
}

void print_distribution(const LabeledDataset& ds) {
  const auto counts = class_distribution(ds);
  std::cout << "dataset: " << ds.name << '\n';
  for (Label l : kAllLabels) std::cout << "  " << to_string(l) << '\t' << counts[index_of(l)] << '\n';
  std::cout << "  sum\t" << ds.size() << '\n';
}

int cmd_stats(const RunConfig& c) {
  print_distribution(load_dataset(c.data));
  return 0;
}

int cmd_extract(const RunConfig& c) {
  const auto cfg = experiment_config(c);
  const auto ds = load_dataset(c.data);
  const auto dict = build_dictionary(preprocess_all(ds, cfg.preprocess),
                                     {cfg.max_n, cfg.min_freq, preprocess_tag(cfg.preprocess)});
  auto os = open_output(c.out, "dictionary.tsv");
  write_dictionary_tsv(os, dict, {"run_config\t" + to_json(c, "extract").dump()});
  std::cout << "wrote " << dict.size() << " n-grams to " << (fs::path(c.out) / "dictionary.tsv").string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c) {
  const auto cfg = experiment_config(c);
  const auto ds = load_dataset(c.data);
  const auto tokens = preprocess_all(ds, cfg.preprocess);
  const auto dict = build_dictionary(tokens, {cfg.max_n, cfg.min_freq, preprocess_tag(cfg.preprocess)});
  const auto labels = ds.labels();
  auto m = vectorize_corpus(tokens, labels, dict, cfg.scheme);
  if (cfg.smote) m = smote_oversample(m, cfg.smote_k, detail::mix_seed(cfg.seed, 1));

  SearchOptions so;
  so.folds = cfg.folds;
  so.budget_seconds = cfg.budget_seconds;
  so.max_candidates = cfg.max_candidates;
  so.seed = detail::mix_seed(cfg.seed, 2);
  so.threads = cfg.threads;
  const auto lb = search(m, so);
  const auto selection = ensemble_select(lb, cfg.ensemble_size);
  const auto ensemble = fit_final(selection, m);

  const auto run_config = to_json(c, "train");
  {
    auto os = open_output(c.out, "dictionary.tsv");
    write_dictionary_tsv(os, dict, {"run_config\t" + run_config.dump()});
  }
  {
    auto os = open_output(c.out, "leaderboard.tsv");
    write_leaderboard_tsv(os, lb, {"run_config\t" + run_config.dump()});
  }
  {
    nlohmann::ordered_json j;
    j["run_config"] = run_config;
    j["ensemble"] = to_json(ensemble);
    j["ensemble_oof_weighted_f1"] = selection.score;
    j["top_ngrams"] = detail::ranking_json(top_ngrams_per_class(ensemble, dict, cfg.top_k, &m, cfg.seed));
    auto os = open_output(c.out, "model.json");
    os << j.dump(2) << '\n';
  }
  for (const auto& w : lb.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "evaluated " << lb.entries.size() << " candidates; ensemble of " << selection.members.size()
            << " configurations, out-of-fold weighted F1 " << selection.score << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& c) {
  const auto cfg = experiment_config(c);
  const auto ds = load_dataset(c.data);
  const auto report = run_experiment(ds, cfg);
  const auto j = to_json(report, to_json(c, "evaluate"));
  const auto table = render_table(j);
  {
    auto os = open_output(c.out, "report.json");
    os << j.dump(2) << '\n';
  }
  {
    auto os = open_output(c.out, "report.txt");
    os << table;
  }
  std::cout << table;
  return 0;
}

int cmd_report(const std::string& in) {
  std::ifstream is(in, std::ios::binary);
  if (!is) throw Error(in + ": cannot open report");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(is);
    std::cout << render_table(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(in + ": not a sentingram report (" + e.what() + ")");
  }
  return 0;
}

void add_data_option(CLI::App* sub, RunConfig& c) {
  sub->add_option("--data", c.data, "Labeled CSV with header 'text,label'")->required()->check(CLI::ExistingFile);
}

void add_pipeline_options(CLI::App* sub, RunConfig& c) {
  sub->add_flag("--no-stopwords", c.no_stopwords, "Keep stop words");
  sub->add_option("--stopword-list", c.stopword_list, "Stop-word file replacing the built-in English list")
      ->check(CLI::ExistingFile);
  sub->add_option("--max-n", c.max_n, "Longest n-gram")->check(CLI::Range(1, 10))->capture_default_str();
  sub->add_option("--min-freq", c.min_freq, "Drop n-grams with lower corpus frequency")
      ->check(CLI::Range(std::size_t{1}, SIZE_MAX))
      ->capture_default_str();
  sub->add_option("--scheme", c.scheme, "Feature values")
      ->check(CLI::IsMember({"count_x_weight", "binary_x_weight", "count"}))
      ->capture_default_str();
  sub->add_option("--out", c.out, "Output directory (env SENTINGRAM_OUT)")
      ->envname("SENTINGRAM_OUT")
      ->capture_default_str();
}

void add_model_options(CLI::App* sub, RunConfig& c) {
  sub->add_flag("--smote", c.smote, "Oversample minority classes in training data");
  sub->add_option("--smote-k", c.smote_k, "SMOTE neighbours")
      ->check(CLI::Range(std::size_t{1}, SIZE_MAX))
      ->capture_default_str();
  sub->add_option("--folds", c.folds, "Cross-validation folds in the search")
      ->check(CLI::Range(std::size_t{2}, SIZE_MAX))
      ->capture_default_str();
  sub->add_option("--budget-seconds", c.budget_seconds, "Search time budget")
      ->check(CLI::PositiveNumber)
      ->each([&c](const std::string&) { c.budget_given = true; })
      ->capture_default_str();
  sub->add_option("--max-candidates", c.max_candidates,
                  "Candidate cap; without --budget-seconds the search is count-capped and reproducible")
      ->check(CLI::Range(std::size_t{1}, SIZE_MAX));
  sub->add_option("--ensemble-size", c.ensemble_size, "Greedy ensemble selection steps")
      ->check(CLI::Range(std::size_t{1}, SIZE_MAX))
      ->capture_default_str();
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "Parallel candidate evaluations")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  sub->add_option("--top-k", c.top_k, "Phrases listed per class")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig c;
  if (const char* env = std::getenv("SENTINGRAM_OUT"); env && *env) {
    c.out = env;
  } else {
    c.out = "sentingram-out";
  }
  std::string report_in;

  CLI::App app{"Sentiment classification with n-gram IDF features and automated model search"};
  app.require_subcommand(1);

  auto* stats = app.add_subcommand("stats", "Print the class distribution of a dataset");
  add_data_option(stats, c);

  auto* extract = app.add_subcommand("extract", "Write the n-gram IDF dictionary as TSV");
  add_data_option(extract, c);
  add_pipeline_options(extract, c);

  auto* train = app.add_subcommand("train", "Search, ensemble and fit on the whole dataset");
  add_data_option(train, c);
  add_pipeline_options(train, c);
  add_model_options(train, c);

  auto* evaluate = app.add_subcommand("evaluate", "Repeated stratified train/test evaluation");
  add_data_option(evaluate, c);
  add_pipeline_options(evaluate, c);
  add_model_options(evaluate, c);
  evaluate->add_option("--rounds", c.rounds, "Evaluation rounds")
      ->check(CLI::Range(std::size_t{1}, SIZE_MAX))
      ->capture_default_str();
  evaluate->add_option("--test-fraction", c.test_fraction, "Test share per round")
      ->check(CLI::Bound(1e-9, 1.0 - 1e-9))
      ->capture_default_str();

  auto* report = app.add_subcommand("report", "Render a JSON report as a table");
  report->add_option("--in", report_in, "report.json written by 'evaluate'")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "sentingram: " << e.what() << '\n';
    return 2;
  }

  try {
    if (stats->parsed()) return cmd_stats(c);
    if (extract->parsed()) return cmd_extract(c);
    if (train->parsed()) return cmd_train(c);
    if (evaluate->parsed()) return cmd_evaluate(c);
    if (report->parsed()) return cmd_report(report_in);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "sentingram: error: " << msg << '\n';
    return 1;
  }
  return 1;
}
