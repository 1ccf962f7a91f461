#include "grapener/decode.hpp"

#include <algorithm>
#include <map>

#include "grapener/error.hpp"
#include "grapener/model.hpp"
#include "json.hpp"

namespace grapener {

IndexSets index_sets(const ProbMatrices& probs, const std::vector<PositionRole>& roles) {
  if (probs.p_start.rows != roles.size() || probs.p_end.rows != roles.size())
    throw Error("probability matrices do not align with position roles");
  IndexSets idx;
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] != PositionRole::CONTEXT) continue;
    if (probs.p_start(i, 1) > probs.p_start(i, 0)) idx.starts.push_back(i);
    if (probs.p_end(i, 1) > probs.p_end(i, 0)) idx.ends.push_back(i);
  }
  return idx;
}

std::vector<std::pair<size_t, size_t>> nearest_match(const IndexSets& idx,
                                                     bool end_driven) {
  std::vector<std::pair<size_t, size_t>> pairs;
  if (!end_driven) {
    size_t ei = 0;
    for (size_t s : idx.starts) {
      // A start inside the span just formed is discarded, not re-paired.
      if (!pairs.empty() && s < pairs.back().second) continue;
      while (ei < idx.ends.size() && idx.ends[ei] < s) ++ei;
      if (ei == idx.ends.size()) break;
      pairs.emplace_back(s, idx.ends[ei] + 1);
      ++ei;
    }
    return pairs;
  }
  // Mirrored sweep: ends right to left, each taking the closest
  // unconsumed start at or before it.
  size_t si = idx.starts.size();
  for (auto it = idx.ends.rbegin(); it != idx.ends.rend(); ++it) {
    size_t e = *it;
    if (!pairs.empty() && e >= pairs.back().first) continue;
    while (si > 0 && idx.starts[si - 1] > e) --si;
    if (si == 0) break;
    pairs.emplace_back(idx.starts[si - 1], e + 1);
    --si;
  }
  std::reverse(pairs.begin(), pairs.end());
  return pairs;
}

Prediction decode_probs(const MrcInstance& inst, const ProbMatrices& probs,
                        const DecodeOptions& opts) {
  IndexSets idx = index_sets(probs, inst.roles);
  auto pairs = nearest_match(idx, opts.end_driven);
  Prediction pred;
  pred.source_id = inst.source_id;
  pred.entity_type = inst.entity_type;
  for (auto [s, e] : pairs)
    pred.spans.push_back(
        EntitySpan{s - inst.context_offset, e - inst.context_offset, inst.entity_type});
  return pred;
}

Prediction predict(const MrcInstance& inst, const Parameters& params,
                   const ModelConfig& cfg, const DecodeOptions& opts) {
  Representations h = encode(inst, params, cfg);
  Matrix ls = start_logits(h, params.heads);
  Matrix le = end_logits(h, ls, params.heads);
  ProbMatrices probs{row_softmax(ls), row_softmax(le)};
  return decode_probs(inst, probs, opts);
}

Prediction predict_from_representations(const MrcInstance& inst, const Matrix& h,
                                        const SpanHeads& heads,
                                        const DecodeOptions& opts) {
  if (h.rows != inst.tokens.size())
    throw Error("representation for " + inst.key() + " has " +
                std::to_string(h.rows) + " rows, instance has " +
                std::to_string(inst.tokens.size()) + " positions");
  Representations r{h};
  Matrix ls = start_logits(r, heads);
  Matrix le = end_logits(r, ls, heads);
  ProbMatrices probs{row_softmax(ls), row_softmax(le)};
  return decode_probs(inst, probs, opts);
}

std::string predictions_to_spans_jsonl(const std::vector<Prediction>& preds,
                                       const std::vector<MrcInstance>& instances) {
  std::map<std::string, const MrcInstance*> by_key;
  for (const auto& inst : instances) by_key[inst.key()] = &inst;
  std::string out;
  for (const auto& pred : preds) {
    auto it = by_key.find(pred.source_id + "::" + pred.entity_type);
    if (it == by_key.end())
      throw Error("no instance for prediction " + pred.source_id);
    const MrcInstance& inst = *it->second;
    for (const auto& span : pred.spans) {
      std::string text;
      for (size_t i = span.start; i < span.end; ++i) {
        if (!text.empty()) text += ' ';
        text += inst.tokens[inst.context_offset + i];
      }
      nlohmann::json j{{"id", pred.source_id},
                       {"type", pred.entity_type},
                       {"start", span.start},
                       {"end", span.end},
                       {"text", text}};
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

}  // namespace grapener
