#include "grapener/demos.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "grapener/spanconv.hpp"

namespace grapener {

const char* demo_kind_name(DemoKind k) {
  switch (k) {
    case DemoKind::Grape: return "grape";
    case DemoKind::Popular: return "popular";
    default: return "none";
  }
}

DemoKind demo_kind_from_name(const std::string& s) {
  if (s == "grape") return DemoKind::Grape;
  if (s == "popular") return DemoKind::Popular;
  if (s == "none") return DemoKind::None;
  throw Error("bad demonstration kind '" + s + "'");
}

namespace {

size_t count_spans_of_type(const LabeledSentence& s, const std::string& type) {
  size_t n = 0;
  for (const auto& t : s.tags)
    if (t.kind == TagKind::B && t.entity_type == type) ++n;
  return n;
}

}  // namespace

double density_score(const LabeledSentence& sentence,
                     const std::string& entity_type,
                     const DensityConfig& cfg) {
  size_t count = count_spans_of_type(sentence, entity_type);
  if (count == 0) return 0.0;
  return std::pow(double(count), cfg.u) / std::pow(double(sentence.size()), cfg.v);
}

Demonstration select_grape(const std::vector<LabeledSentence>& train,
                           const std::string& entity_type,
                           const DensityConfig& cfg) {
  Demonstration best;
  best.kind = DemoKind::None;
  best.entity_type = entity_type;
  size_t best_count = 0;
  for (const auto& s : train) {
    if (s.size() > cfg.max_len) continue;
    size_t count = count_spans_of_type(s, entity_type);
    if (count == 0) continue;
    double d = density_score(s, entity_type, cfg);
    if (!best.present() || d > best.score ||
        (d == best.score && count > best_count)) {
      best.kind = DemoKind::Grape;
      best.sentence = s;
      best.score = d;
      best_count = count;
    }
  }
  return best;
}

Demonstration select_popular(const std::vector<LabeledSentence>& train,
                             const std::string& entity_type,
                             size_t max_len) {
  // Surface form -> (frequency, indices of containing sentences).
  std::map<std::string, std::pair<size_t, std::vector<size_t>>> forms;
  for (size_t i = 0; i < train.size(); ++i) {
    for (const auto& sp : iob2_to_spans(train[i])) {
      if (sp.entity_type != entity_type) continue;
      std::string surface = train[i].sentence.tokens[sp.start];
      for (size_t t = sp.start + 1; t < sp.end; ++t)
        surface += " " + train[i].sentence.tokens[t];
      auto& entry = forms[surface];
      ++entry.first;
      if (entry.second.empty() || entry.second.back() != i)
        entry.second.push_back(i);
    }
  }

  Demonstration demo;
  demo.kind = DemoKind::None;
  demo.entity_type = entity_type;
  if (forms.empty()) return demo;

  // std::map iteration is already lexicographic; a stable sort by
  // descending frequency keeps that order within equal counts.
  std::vector<std::pair<std::string, std::pair<size_t, std::vector<size_t>>>> ranked(
      forms.begin(), forms.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second.first > b.second.first; });

  constexpr size_t kNone = std::numeric_limits<size_t>::max();
  for (size_t rank = 0; rank < ranked.size(); ++rank) {
    const auto& [surface, entry] = ranked[rank];
    const auto& containing = entry.second;  // ascending sentence indices
    size_t pick = kNone;
    if (rank == 0) {
      // Top form: earliest containing sentence. When it exceeds the cap
      // the whole form is skipped in favor of lower-ranked forms.
      if (train[containing.front()].size() <= max_len) pick = containing.front();
    } else {
      // Fallback forms: shortest containing sentence that fits.
      for (size_t idx : containing) {
        if (train[idx].size() > max_len) continue;
        if (pick == kNone || train[idx].size() < train[pick].size()) pick = idx;
      }
    }
    if (pick != kNone) {
      demo.kind = DemoKind::Popular;
      demo.sentence = train[pick];
      demo.score = double(entry.first);
      return demo;
    }
  }
  return demo;
}

std::string demo_audit_line(const Demonstration& d) {
  std::ostringstream ss;
  ss << "type=" << d.entity_type << "\tkind=" << demo_kind_name(d.kind);
  if (d.present()) {
    ss << "\tscore=" << d.score << "\tid=" << d.sentence.id() << "\ttext=";
    for (size_t i = 0; i < d.sentence.size(); ++i) {
      if (i) ss << ' ';
      ss << d.sentence.sentence.tokens[i];
    }
  }
  return ss.str();
}

}  // namespace grapener
