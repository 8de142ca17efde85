#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pbl/datasets.hpp"

namespace pbl {

// Offline stand-ins for the SemEval-style and SST-5-style corpora. Each
// sentence carries exactly one sentiment-bearing adjective from disjoint
// lexicons, so the classes are linearly separable in bag-of-words space.

struct SyntheticTaskOptions {
  DatasetFormat format = DatasetFormat::semeval;
  int train = 3000;
  int validation = 500;
  int test = 500;
  std::uint64_t seed = 0;
};

/// Rows are balanced over classes in round-robin order, then emitted per split.
std::vector<TaskRow> generate_task_rows(const SyntheticTaskOptions& options);

struct SyntheticCorpusOptions {
  int sentences = 4000;
  std::uint64_t seed = 0;
  /// Extra words (e.g. template descriptors) mentioned in neutral contexts so
  /// they receive trained embeddings.
  std::vector<std::string> mention_words;
};

/// Pretraining text: sentiment sentences that name their verbalizer, either in
/// a trailing verdict clause or directly after a "review :" cue, plus neutral
/// mention sentences.
std::vector<std::string> generate_pretraining_corpus(const SyntheticCorpusOptions& options);

const std::vector<std::string>& sentiment_lexicon(Sentiment s);

}  // namespace pbl
