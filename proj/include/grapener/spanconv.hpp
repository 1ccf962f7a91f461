#ifndef GRAPENER_SPANCONV_HPP
#define GRAPENER_SPANCONV_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grapener/corpus.hpp"

namespace grapener {

// Half-open token interval [start, end), so start < end holds even for
// single-token entities.
struct EntitySpan {
  size_t start = 0;
  size_t end = 0;
  std::string entity_type;

  auto operator<=>(const EntitySpan&) const = default;
};

enum class PositionRole : uint8_t { CLS, SEP, CONTEXT, DEMO };

const char* role_name(PositionRole r);
PositionRole role_from_name(const std::string& s);

struct Demonstration;  // demos.hpp

// Combined sequence [CLS] context [SEP] (demo [SEP])? with binary
// start/end label vectors over its positions.
struct MrcInstance {
  std::string source_id;
  std::string entity_type;
  std::vector<std::string> tokens;
  std::vector<PositionRole> roles;
  std::vector<uint8_t> y_start;
  std::vector<uint8_t> y_end;
  size_t context_offset = 0;  // index of first CONTEXT token, always 1
  size_t context_len = 0;

  size_t size() const { return tokens.size(); }

  // Unique across a run: one instance exists per (sentence, entity type).
  std::string key() const { return source_id + "::" + entity_type; }
};

std::vector<EntitySpan> iob2_to_spans(const LabeledSentence& labeled);

// Inverse of iob2_to_spans; spans must be in-bounds and non-overlapping.
std::vector<IobTag> spans_to_iob2(const std::vector<EntitySpan>& spans, size_t length);

// Builds the combined sequence for one (sentence, entity type) pair.
// Context spans of entity_type set y_start[start] and y_end[end-1]
// (offset by context_offset); demonstration spans are labeled the same
// way iff supervise_demo. Throws Error when the combined length exceeds
// max_seq_len.
MrcInstance assemble_instance(const LabeledSentence& context,
                              const Demonstration* demo,
                              const std::string& entity_type,
                              bool supervise_demo,
                              size_t max_seq_len);

// Line-delimited record format for inspection and fixtures.
std::string instance_to_jsonl(const MrcInstance& inst);
MrcInstance instance_from_jsonl(const std::string& line);

}  // namespace grapener

#endif
