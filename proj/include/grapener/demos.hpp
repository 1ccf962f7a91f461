#ifndef GRAPENER_DEMOS_HPP
#define GRAPENER_DEMOS_HPP

#include <limits>
#include <string>
#include <vector>

#include "grapener/corpus.hpp"

namespace grapener {

enum class DemoKind { None, Grape, Popular };

const char* demo_kind_name(DemoKind k);
DemoKind demo_kind_from_name(const std::string& s);

// Exponents of the density score count^u / len^v and the word cap on
// density-selected demonstrations.
struct DensityConfig {
  double u = 3.0;
  double v = 1.0;
  size_t max_len = 100;
};

struct Demonstration {
  DemoKind kind = DemoKind::None;
  LabeledSentence sentence;  // meaningful only when kind != None
  double score = 0.0;        // density for grape, surface-form frequency for popular
  std::string entity_type;

  bool present() const { return kind != DemoKind::None; }
};

// count(spans of entity_type)^u / len^v; 0 when the sentence has no
// entities of the type.
double density_score(const LabeledSentence& sentence,
                     const std::string& entity_type,
                     const DensityConfig& cfg);

// Highest-density sentence among those within the word cap. Ties go to
// the higher entity count, then the earlier sentence. Returns kind=None
// when no sentence with entities fits the cap.
Demonstration select_grape(const std::vector<LabeledSentence>& train,
                           const std::string& entity_type,
                           const DensityConfig& cfg);

// Sentence containing the most frequent entity surface form (exact
// case-sensitive token sequence). Frequency ties go to the
// lexicographically smaller form, then the earliest containing sentence.
// When the top form's sentence exceeds max_len, lower-ranked forms are
// tried with their shortest containing sentence instead.
Demonstration select_popular(const std::vector<LabeledSentence>& train,
                             const std::string& entity_type,
                             size_t max_len = std::numeric_limits<size_t>::max());

// One line per (type, kind) choice: type, kind, score, sentence id, text.
std::string demo_audit_line(const Demonstration& d);

}  // namespace grapener

#endif
