#ifndef GRAPENER_EVAL_HPP
#define GRAPENER_EVAL_HPP

#include <map>
#include <string>
#include <vector>

#include "grapener/decode.hpp"
#include "grapener/spanconv.hpp"

namespace grapener {

// sentence id -> entity type -> gold spans. Sentences without entities
// still get an (empty) entry so prediction ids can be validated.
using GoldSpans = std::map<std::string, std::map<std::string, std::vector<EntitySpan>>>;

GoldSpans gold_spans(const std::vector<LabeledSentence>& sentences,
                     const std::vector<std::string>& entity_types);

struct PrfCounts {
  size_t tp = 0, fp = 0, fn = 0;
  // Zero denominators yield 0 by convention.
  double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
  double f1() const {
    double p = precision(), r = recall();
    return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

struct EvalReport {
  std::map<std::string, PrfCounts> per_type;
  PrfCounts micro;                       // counts pooled over types
  double macro_p = 0, macro_r = 0, macro_f1 = 0;  // unweighted type means
};

// Entity-level exact match: a predicted span is a true positive iff the
// identical (start, end, type) triple is gold for that sentence.
// Predictions for unknown sentence ids are an error.
EvalReport score(const GoldSpans& gold, const std::vector<Prediction>& preds);

struct AggregateStats {
  double mean = 0.0;
  double stdev = 0.0;  // population (divide by N)
};

AggregateStats mean_std(const std::vector<double>& xs);

struct Summary {
  size_t runs = 0;
  AggregateStats precision, recall, f1;
};

// Cross-seed aggregation of one (dataset, method, shot) cell.
Summary aggregate(const std::vector<EvalReport>& reports, bool use_macro = false);

// "61.7±2.1": percent, one decimal.
std::string format_mean_std_pct(const AggregateStats& s);

}  // namespace grapener

#endif
