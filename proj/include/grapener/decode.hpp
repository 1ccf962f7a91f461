#ifndef GRAPENER_DECODE_HPP
#define GRAPENER_DECODE_HPP

#include <string>
#include <vector>

#include "grapener/matrix.hpp"
#include "grapener/spanconv.hpp"

namespace grapener {

struct Parameters;   // model.hpp
struct ModelConfig;  // model.hpp
struct SpanHeads;    // model.hpp

// Row-wise class probabilities for start/end over the combined sequence.
struct ProbMatrices {
  Matrix p_start;  // n x 2
  Matrix p_end;    // n x 2
};

// Positions whose argmax is class 1, restricted to CONTEXT (special and
// demonstration positions are dropped at inference). Exact 0.5 ties
// resolve to "not an index".
struct IndexSets {
  std::vector<size_t> starts;
  std::vector<size_t> ends;
};

struct Prediction {
  std::string source_id;
  std::string entity_type;
  std::vector<EntitySpan> spans;  // context-token coordinates
};

struct DecodeOptions {
  // Start-driven sweep by default; the mirrored end-driven sweep exists
  // for ablation.
  bool end_driven = false;
};

IndexSets index_sets(const ProbMatrices& probs, const std::vector<PositionRole>& roles);

// Unidirectional nearest match: sweep positions left to right, pairing
// each start with the closest unconsumed end at or after it; starts
// falling inside an already formed span and leftover ends are discarded.
// Returned spans are half-open (start, end+1) and never overlap.
std::vector<std::pair<size_t, size_t>> nearest_match(const IndexSets& idx,
                                                     bool end_driven = false);

// encode -> heads -> index_sets -> nearest_match, shifted into context
// coordinates.
Prediction predict(const MrcInstance& inst, const Parameters& params,
                   const ModelConfig& cfg, const DecodeOptions& opts = {});

// Same pipeline but driven by an externally produced representation
// matrix instead of the built-in encoder.
Prediction predict_from_representations(const MrcInstance& inst, const Matrix& h,
                                        const SpanHeads& heads,
                                        const DecodeOptions& opts = {});

// Shared tail of both predict paths.
Prediction decode_probs(const MrcInstance& inst, const ProbMatrices& probs,
                        const DecodeOptions& opts = {});

// Line format: id, type, start, end, surface text.
std::string predictions_to_spans_jsonl(const std::vector<Prediction>& preds,
                                       const std::vector<MrcInstance>& instances);

}  // namespace grapener

#endif
