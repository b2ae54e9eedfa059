#pragma once

#include "sentingram/automl.hpp"
#include "sentingram/corpus_io.hpp"
#include "sentingram/error.hpp"
#include "sentingram/evaluation.hpp"
#include "sentingram/features.hpp"
#include "sentingram/learners.hpp"
#include "sentingram/metrics.hpp"
#include "sentingram/ngram_index.hpp"
#include "sentingram/preprocess.hpp"
