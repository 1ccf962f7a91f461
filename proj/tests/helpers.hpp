#ifndef GRAPENER_TESTS_HELPERS_HPP
#define GRAPENER_TESTS_HELPERS_HPP

// Shared test scaffolding: fixture locations, construction shorthand,
// seeded random corpora and scratch directories. Deliberately free of
// any test-framework macros so the acceptance binary can use it too.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include "grapener/corpus.hpp"
#include "grapener/model.hpp"
#include "grapener/rng.hpp"

namespace helpers {

struct FixtureSpec {
  std::string name;
  std::vector<std::string> types;
};

inline const std::vector<FixtureSpec>& fixture_corpora() {
  static const std::vector<FixtureSpec> specs = {
      {"chem", {"Chemical"}},
      {"disease", {"Disease"}},
      {"multi", {"Chemical", "Disease"}},
      {"cue", {"Chemical"}},
  };
  return specs;
}

inline std::string fixture_path(const std::string& corpus, const std::string& split) {
  return std::string(GRAPENER_FIXTURE_DIR) + "/" + corpus + "/" + split + ".conll";
}

inline grapener::Corpus load_fixture(const FixtureSpec& spec,
                                     std::vector<grapener::RepairRecord>* repairs = nullptr) {
  std::map<std::string, std::string> files;
  for (const std::string split : {"train", "dev", "test"})
    files[split] = fixture_path(spec.name, split);
  return grapener::load_corpus(spec.name, spec.types, files, repairs);
}

inline grapener::LabeledSentence make_sentence(const std::string& id,
                                               const std::vector<std::string>& tokens,
                                               const std::vector<std::string>& tags) {
  grapener::LabeledSentence s;
  s.sentence.id = id;
  s.sentence.tokens = tokens;
  for (const auto& t : tags) s.tags.push_back(grapener::IobTag::parse(t));
  return s;
}

// Well-formed random sentence over a small vocabulary. The word pool is
// deliberately tiny so entity surface forms collide across sentences.
inline grapener::LabeledSentence random_labeled_sentence(
    grapener::Rng& rng, const std::string& id, const std::vector<std::string>& types,
    size_t max_len = 12) {
  static const std::vector<std::string> words = {
      "zinc", "aspirin", "acid", "retinoic", "dose", "of", "the", "was", "given"};
  size_t len = 1 + size_t(rng.below(max_len));
  grapener::LabeledSentence s;
  s.sentence.id = id;
  size_t i = 0;
  while (i < len) {
    bool entity = !types.empty() && rng.below(100) < 35;
    if (entity) {
      size_t elen = std::min(1 + size_t(rng.below(3)), len - i);
      const std::string& type = types[rng.below(types.size())];
      for (size_t k = 0; k < elen; ++k) {
        s.sentence.tokens.push_back(words[rng.below(words.size())]);
        s.tags.push_back({k == 0 ? grapener::TagKind::B : grapener::TagKind::I, type});
      }
      i += elen;
    } else {
      s.sentence.tokens.push_back(words[rng.below(words.size())]);
      s.tags.push_back({grapener::TagKind::O, ""});
      ++i;
    }
  }
  return s;
}

// Fresh empty directory under the system temp root, unique per process
// and tag so parallel ctest runs cannot collide.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("grapener-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Largest elementwise difference across all tensors; throws if the two
// parameter sets are not shape-compatible.
inline double params_max_diff(const grapener::Parameters& a, const grapener::Parameters& b) {
  std::map<std::string, const grapener::Matrix*> bm;
  b.for_each([&](const std::string& n, const grapener::Matrix& m) { bm[n] = &m; });
  double worst = 0.0;
  a.for_each([&](const std::string& n, const grapener::Matrix& m) {
    const grapener::Matrix& other = *bm.at(n);
    if (m.rows != other.rows || m.cols != other.cols)
      throw std::runtime_error("shape mismatch for tensor " + n);
    for (size_t i = 0; i < m.a.size(); ++i)
      worst = std::max(worst, std::abs(m.a[i] - other.a[i]));
  });
  return worst;
}

}  // namespace helpers

#endif
