// Builds an n-gram IDF dictionary from a small labeled CSV, trains an
// ensemble with a count-capped search and classifies a few new sentences.
//
//   sentingram_sample [reviews.csv]

#include <iostream>
#include <string>
#include <vector>

#include "sentingram/sentingram.hpp"

using namespace sentingram;

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : SENTINGRAM_SAMPLE_CSV;
  try {
    const auto ds = load_dataset(path);
    const PreprocessOptions prep;
    std::vector<TokenSequence> docs;
    for (const auto& d : ds.documents) docs.push_back(preprocess(d.text, prep));

    const auto dict = build_dictionary(docs, {.max_n = 4, .min_freq = 2, .preprocess_tag = "sample"});
    std::cout << dict.size() << " n-grams, longest " << dict.longest() << " tokens\n";
    for (std::size_t i = 0; i < dict.size() && i < 5; ++i) {
      std::cout << "  " << format_weight(dict[i].weight) << "  " << dict[i].text() << '\n';
    }

    const auto m = vectorize_corpus(docs, ds.labels(), dict);
    SearchOptions search_opts;
    search_opts.folds = 3;
    search_opts.budget_seconds.reset();
    search_opts.max_candidates = 8;
    search_opts.seed = 1;
    const auto lb = search(m, search_opts);
    const auto ensemble = fit_final(ensemble_select(lb, 5), m);

    const std::vector<std::string> queries = {"thanks, works great", "this still does not work",
                                              "the config option is in the settings page"};
    FeatureMatrix q(dict.size(), dict.fingerprint());
    for (const auto& text : queries) vectorize_into(q, preprocess(text, prep), Label::neutral, dict, FeatureScheme::count_x_weight);
    const auto labels = predict(ensemble, q);
    for (std::size_t i = 0; i < queries.size(); ++i) std::cout << labels[i] << "\t" << queries[i] << '\n';
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
