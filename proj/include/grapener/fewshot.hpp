#ifndef GRAPENER_FEWSHOT_HPP
#define GRAPENER_FEWSHOT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "grapener/corpus.hpp"

namespace grapener {

struct SamplePlan {
  uint64_t seed = 1;
  size_t k_train = 25;
  size_t k_dev = 100;
  std::string pool = "pool";  // informational; callers pass the pool explicitly
};

struct Sample {
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> dev;
};

// Seeds a SplitMix64 stream from the seed and the corpus name so the two
// k-shot draws of different corpora under the same seed are independent.
uint64_t sample_stream_seed(const std::string& corpus_name, uint64_t seed);

// Partial Fisher-Yates over the pool order: the first k_train draws are
// the training set, the next k_dev draws the development set. Train and
// dev are therefore disjoint by construction. Deterministic in
// (corpus name, pool order, seed).
Sample draw_sample(const std::vector<LabeledSentence>& pool,
                   const std::string& corpus_name,
                   const SamplePlan& plan);

// Writes train/dev as CoNLL plus a manifest recording seed, sizes,
// sentence ids and content hashes. Returns the manifest as JSON text.
std::string write_sample(const Sample& sample, const SamplePlan& plan,
                         const std::string& corpus_name,
                         const std::string& dir);

}  // namespace grapener

#endif
