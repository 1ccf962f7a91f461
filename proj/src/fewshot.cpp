#include "grapener/fewshot.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "grapener/hash.hpp"
#include "grapener/rng.hpp"

namespace grapener {

uint64_t sample_stream_seed(const std::string& corpus_name, uint64_t seed) {
  return fnv1a64(corpus_name) ^ (seed * 0x9e3779b97f4a7c15ull);
}

Sample draw_sample(const std::vector<LabeledSentence>& pool,
                   const std::string& corpus_name,
                   const SamplePlan& plan) {
  size_t want = plan.k_train + plan.k_dev;
  if (plan.k_train < 1) throw Error("k_train must be >= 1");
  if (want > pool.size())
    throw Error("pool of " + std::to_string(pool.size()) + " sentences is too small for k_train=" +
                std::to_string(plan.k_train) + " + k_dev=" + std::to_string(plan.k_dev));

  Rng rng(sample_stream_seed(corpus_name, plan.seed));
  std::vector<size_t> idx(pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (size_t i = 0; i < want; ++i) {
    size_t j = i + size_t(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }

  Sample s;
  s.train.reserve(plan.k_train);
  s.dev.reserve(plan.k_dev);
  for (size_t i = 0; i < plan.k_train; ++i) s.train.push_back(pool[idx[i]]);
  for (size_t i = 0; i < plan.k_dev; ++i) s.dev.push_back(pool[idx[plan.k_train + i]]);
  return s;
}

std::string write_sample(const Sample& sample, const SamplePlan& plan,
                         const std::string& corpus_name,
                         const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto ids = [](const std::vector<LabeledSentence>& v) {
    std::vector<std::string> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s.id());
    return out;
  };
  std::string train_path = dir + "/train.conll";
  std::string dev_path = dir + "/dev.conll";
  {
    std::ofstream(train_path) << to_conll(sample.train);
    std::ofstream(dev_path) << to_conll(sample.dev);
  }
  nlohmann::json j;
  j["dataset"] = corpus_name;
  j["seed"] = plan.seed;
  j["k_train"] = plan.k_train;
  j["k_dev"] = plan.k_dev;
  j["train_ids"] = ids(sample.train);
  j["dev_ids"] = ids(sample.dev);
  j["files"]["train.conll"] = hash_hex(hash_file(train_path));
  j["files"]["dev.conll"] = hash_hex(hash_file(dev_path));
  std::string text = j.dump(2) + "\n";
  std::ofstream(dir + "/sample.json") << text;
  return text;
}

}  // namespace grapener
