#include "grapener/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "grapener/error.hpp"

namespace grapener {

GoldSpans gold_spans(const std::vector<LabeledSentence>& sentences,
                     const std::vector<std::string>& entity_types) {
  GoldSpans gold;
  for (const auto& sent : sentences) {
    auto& by_type = gold[sent.id()];
    for (const auto& type : entity_types) by_type[type];
    for (const auto& span : iob2_to_spans(sent)) by_type[span.entity_type].push_back(span);
  }
  return gold;
}

EvalReport score(const GoldSpans& gold, const std::vector<Prediction>& preds) {
  // Group predicted spans by (sentence, type); several Prediction records
  // for the same pair pool their spans, and a gold span can satisfy only
  // one of them.
  std::map<std::string, std::map<std::string, std::vector<EntitySpan>>> pred_by;
  for (const auto& pred : preds) {
    if (!gold.count(pred.source_id))
      throw Error("prediction for unknown sentence id " + pred.source_id);
    auto& spans = pred_by[pred.source_id][pred.entity_type];
    spans.insert(spans.end(), pred.spans.begin(), pred.spans.end());
  }

  EvalReport rep;
  for (const auto& [id, gold_types] : gold) {
    std::set<std::string> types;
    for (const auto& [type, _] : gold_types) types.insert(type);
    auto pit = pred_by.find(id);
    if (pit != pred_by.end())
      for (const auto& [type, _] : pit->second) types.insert(type);

    for (const auto& type : types) {
      PrfCounts& c = rep.per_type[type];
      std::multiset<std::pair<size_t, size_t>> remaining;
      auto git = gold_types.find(type);
      if (git != gold_types.end())
        for (const auto& g : git->second) remaining.insert({g.start, g.end});
      if (pit != pred_by.end()) {
        auto sit = pit->second.find(type);
        if (sit != pit->second.end())
          for (const auto& p : sit->second) {
            auto hit = remaining.find({p.start, p.end});
            if (hit != remaining.end()) {
              ++c.tp;
              remaining.erase(hit);
            } else {
              ++c.fp;
            }
          }
      }
      c.fn += remaining.size();
    }
  }

  for (const auto& [type, c] : rep.per_type) {
    rep.micro.tp += c.tp;
    rep.micro.fp += c.fp;
    rep.micro.fn += c.fn;
    rep.macro_p += c.precision();
    rep.macro_r += c.recall();
    rep.macro_f1 += c.f1();
  }
  if (!rep.per_type.empty()) {
    double n = double(rep.per_type.size());
    rep.macro_p /= n;
    rep.macro_r /= n;
    rep.macro_f1 /= n;
  }
  return rep;
}

AggregateStats mean_std(const std::vector<double>& xs) {
  AggregateStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stdev = std::sqrt(var / double(xs.size()));
  return s;
}

Summary aggregate(const std::vector<EvalReport>& reports, bool use_macro) {
  std::vector<double> ps, rs, f1s;
  for (const auto& rep : reports) {
    ps.push_back(use_macro ? rep.macro_p : rep.micro.precision());
    rs.push_back(use_macro ? rep.macro_r : rep.micro.recall());
    f1s.push_back(use_macro ? rep.macro_f1 : rep.micro.f1());
  }
  Summary s;
  s.runs = reports.size();
  s.precision = mean_std(ps);
  s.recall = mean_std(rs);
  s.f1 = mean_std(f1s);
  return s;
}

std::string format_mean_std_pct(const AggregateStats& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f±%.1f", s.mean * 100.0, s.stdev * 100.0);
  return buf;
}

}  // namespace grapener
