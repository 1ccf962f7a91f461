#ifndef GRAPENER_TESTS_ORACLES_HPP
#define GRAPENER_TESTS_ORACLES_HPP

// Reference implementations the tests check the library against. Each is
// written as literally as possible from the documented rule, preferring
// exhaustive enumeration over cleverness, so that a disagreement points
// at the production code rather than at a shared shortcut.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "grapener/corpus.hpp"
#include "grapener/demos.hpp"
#include "grapener/matrix.hpp"
#include "grapener/model.hpp"
#include "grapener/spanconv.hpp"

namespace oracles {

// Plain triple loop in i, j, k order; the library kernel iterates i, k, j
// with a zero skip, so agreement is not a tautology.
inline grapener::Matrix naive_matmul(const grapener::Matrix& x, const grapener::Matrix& w) {
  grapener::Matrix out(x.rows, w.cols);
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t j = 0; j < w.cols; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < x.cols; ++k) s += x(i, k) * w(k, j);
      out(i, j) = s;
    }
  return out;
}

// Half-open spans of one type, rescanned from the raw tags.
inline std::vector<std::pair<size_t, size_t>> spans_of_type(
    const grapener::LabeledSentence& s, const std::string& type) {
  std::vector<std::pair<size_t, size_t>> out;
  const auto& tags = s.tags;
  size_t i = 0;
  while (i < tags.size()) {
    if (tags[i].kind == grapener::TagKind::B && tags[i].entity_type == type) {
      size_t e = i + 1;
      while (e < tags.size() && tags[e].kind == grapener::TagKind::I &&
             tags[e].entity_type == type)
        ++e;
      out.emplace_back(i, e);
      i = e;
    } else {
      ++i;
    }
  }
  return out;
}

struct SelectedDemo {
  bool found = false;
  size_t index = 0;   // into the training list
  double score = 0.0;
};

// Exhaustive density argmax. Ties go to the higher entity count, then to
// the earlier sentence, exactly as documented for the selector.
inline SelectedDemo grape_oracle(const std::vector<grapener::LabeledSentence>& train,
                                 const std::string& type, const grapener::DensityConfig& cfg) {
  SelectedDemo best;
  size_t best_count = 0;
  for (size_t i = 0; i < train.size(); ++i) {
    if (train[i].size() > cfg.max_len) continue;
    size_t count = spans_of_type(train[i], type).size();
    if (count == 0) continue;
    double score = std::pow(double(count), cfg.u) / std::pow(double(train[i].size()), cfg.v);
    if (!best.found || score > best.score || (score == best.score && count > best_count)) {
      best = {true, i, score};
      best_count = count;
    }
  }
  return best;
}

// Frequency mode over surface forms (space-joined tokens, case kept).
// Forms are ranked by descending frequency, ties by lexicographic order.
// The top form takes its earliest containing sentence and is abandoned
// outright when that sentence exceeds the cap; every lower-ranked form
// takes its shortest containing sentence within the cap instead.
inline SelectedDemo popular_oracle(const std::vector<grapener::LabeledSentence>& train,
                                   const std::string& type, size_t max_len) {
  std::map<std::string, size_t> freq;
  std::map<std::string, std::set<size_t>> containing;
  for (size_t i = 0; i < train.size(); ++i)
    for (auto [s, e] : spans_of_type(train[i], type)) {
      std::string surface = train[i].sentence.tokens[s];
      for (size_t t = s + 1; t < e; ++t) surface += " " + train[i].sentence.tokens[t];
      ++freq[surface];
      containing[surface].insert(i);
    }

  std::vector<std::string> forms;
  for (const auto& [surface, n] : freq) forms.push_back(surface);
  std::sort(forms.begin(), forms.end(), [&](const std::string& a, const std::string& b) {
    return freq[a] != freq[b] ? freq[a] > freq[b] : a < b;
  });

  constexpr size_t kNone = size_t(-1);
  for (size_t rank = 0; rank < forms.size(); ++rank) {
    const auto& where = containing[forms[rank]];
    size_t pick = kNone;
    if (rank == 0) {
      size_t first = *where.begin();
      if (train[first].size() <= max_len) pick = first;
    } else {
      for (size_t idx : where) {
        if (train[idx].size() > max_len) continue;
        if (pick == kNone || train[idx].size() < train[pick].size()) pick = idx;
      }
    }
    if (pick != kNone) return {true, pick, double(freq[forms[rank]])};
  }
  return {};
}

// Reference span pairing. Every injective assignment of ends to starts
// with e >= s and pairwise non-overlapping closed intervals [s, e] is
// enumerated; the sweep's choice is then isolated by preference: walking
// the driving side in sweep order, keep assignments that pair the current
// position, then those giving it the nearest mate. What survives is the
// unique greedy result.
inline std::vector<std::pair<size_t, size_t>> nearest_match_oracle(
    const std::vector<size_t>& starts, const std::vector<size_t>& ends,
    bool end_driven = false) {
  using Pairing = std::vector<std::pair<size_t, size_t>>;  // (start, end) closed
  std::vector<Pairing> cands;
  Pairing cur;
  std::vector<bool> used(ends.size(), false);
  std::function<void(size_t)> enumerate = [&](size_t si) {
    if (si == starts.size()) {
      cands.push_back(cur);
      return;
    }
    enumerate(si + 1);
    for (size_t ej = 0; ej < ends.size(); ++ej) {
      if (used[ej] || ends[ej] < starts[si]) continue;
      bool overlaps = false;
      for (auto [s, e] : cur)
        if (starts[si] <= e && s <= ends[ej]) {
          overlaps = true;
          break;
        }
      if (overlaps) continue;
      used[ej] = true;
      cur.emplace_back(starts[si], ends[ej]);
      enumerate(si + 1);
      cur.pop_back();
      used[ej] = false;
    }
  };
  enumerate(0);

  auto mate = [&](const Pairing& p, size_t pos) -> std::optional<size_t> {
    for (auto [s, e] : p) {
      if (!end_driven && s == pos) return e;
      if (end_driven && e == pos) return s;
    }
    return std::nullopt;
  };
  auto filter_stage = [&](size_t pos) {
    std::vector<Pairing> paired;
    for (const auto& p : cands)
      if (mate(p, pos)) paired.push_back(p);
    if (paired.empty()) return;
    std::optional<size_t> pick;
    for (const auto& p : paired) {
      size_t m = *mate(p, pos);
      if (!pick || (!end_driven ? m < *pick : m > *pick)) pick = m;
    }
    cands.clear();
    for (const auto& p : paired)
      if (*mate(p, pos) == *pick) cands.push_back(p);
  };
  if (!end_driven) {
    for (size_t s : starts) filter_stage(s);
  } else {
    for (auto it = ends.rbegin(); it != ends.rend(); ++it) filter_stage(*it);
  }

  Pairing result = cands.front();
  std::sort(result.begin(), result.end());
  for (auto& [s, e] : result) e += 1;  // half-open, as the library reports
  return result;
}

// Scalar recomputation of the dual-head loss from a representation
// matrix: start logits, their softmax fused into the end head, and the
// averaged two-class cross-entropies over supervised positions.
inline double heads_loss_oracle(const grapener::Matrix& h, const grapener::SpanHeads& heads,
                                const grapener::MrcInstance& inst, bool supervise_demo) {
  auto ce2 = [](const double l[2], int y) {
    double m = std::max(l[0], l[1]);
    double lse = m + std::log(std::exp(l[0] - m) + std::exp(l[1] - m));
    return lse - l[y];
  };
  double ls_sum = 0.0, le_sum = 0.0;
  size_t supervised = 0;
  for (size_t i = 0; i < h.rows; ++i) {
    double sl[2], ef[2];
    for (int c = 0; c < 2; ++c) {
      double s = heads.b_start(0, c), e = heads.b_end(0, c);
      for (size_t k = 0; k < h.cols; ++k) {
        s += h(i, k) * heads.w_start(k, c);
        e += h(i, k) * heads.w_end(k, c);
      }
      sl[c] = s;
      ef[c] = e;
    }
    double mx = std::max(sl[0], sl[1]);
    double z0 = std::exp(sl[0] - mx), z1 = std::exp(sl[1] - mx);
    double feat[4] = {ef[0], ef[1], z0 / (z0 + z1), z1 / (z0 + z1)};
    double el[2];
    for (int c = 0; c < 2; ++c) {
      double v = heads.fuse_b(0, c);
      for (int k = 0; k < 4; ++k) v += feat[k] * heads.fuse(k, c);
      el[c] = v;
    }
    auto role = inst.roles[i];
    bool sup = role == grapener::PositionRole::CONTEXT ||
               (supervise_demo && role == grapener::PositionRole::DEMO);
    if (!sup) continue;
    ++supervised;
    ls_sum += ce2(sl, inst.y_start[i] ? 1 : 0);
    le_sum += ce2(el, inst.y_end[i] ? 1 : 0);
  }
  return 0.5 * (ls_sum + le_sum) / double(supervised);
}

// Central finite differences over every parameter of every tensor,
// against the analytic gradients from the evaluation-mode backward pass.
// Returns the worst relative error, with the denominator floored so that
// positions with negligible gradient are held to an absolute 1e-6.
inline double fd_gradient_max_rel_err(const grapener::MrcInstance& inst,
                                      const grapener::Parameters& params,
                                      const grapener::ModelConfig& cfg,
                                      bool supervise_demo, double step = 1e-4) {
  using namespace grapener;
  auto loss_at = [&](const Parameters& p) {
    Representations h = encode(inst, p, cfg);
    Matrix ls = start_logits(h, p.heads);
    Matrix le = end_logits(h, ls, p.heads);
    return loss_from_logits(ls, le, inst, supervise_demo);
  };

  LossGrad lg = loss_and_gradients(inst, params, cfg, supervise_demo,
                                   /*training=*/false, nullptr);
  std::map<std::string, const Matrix*> analytic;
  lg.grads.for_each([&](const std::string& n, const Matrix& m) { analytic[n] = &m; });

  Parameters probe = params;
  double worst = 0.0;
  probe.for_each([&](const std::string& name, Matrix& m) {
    const Matrix& g = *analytic.at(name);
    for (size_t i = 0; i < m.a.size(); ++i) {
      double saved = m.a[i];
      m.a[i] = saved + step;
      double up = loss_at(probe);
      m.a[i] = saved - step;
      double down = loss_at(probe);
      m.a[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      double denom = std::max(std::abs(g.a[i]) + std::abs(numeric), 1e-2);
      worst = std::max(worst, std::abs(g.a[i] - numeric) / denom);
    }
  });
  return worst;
}

}  // namespace oracles

#endif
