// Acquisition strategies. Confidence-based selection solves a threshold so
// that exactly N_sel sequences fall below it, then splits each selected
// grid into expert-query and self-label positions; the BALD, random, and
// diversity baselines share the same result shape.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "camell/confidence.hpp"
#include "camell/rng.hpp"

namespace camell {

using CellPos = std::pair<std::size_t, std::size_t>;  // (t, m)

struct SelectionResult {
  double alpha_sel = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> selected_ids;  // most uncertain first
  // Aligned with selected_ids; positions in row-major (t, m) order. The two
  // sets partition each selected grid and query is never empty.
  std::vector<std::vector<CellPos>> query_positions;
  std::vector<std::vector<CellPos>> self_positions;
};

// Sort ascending by (min-confidence, id), select the first N_sel, and place
// the threshold halfway between the boundary order statistics (or above the
// maximum when everything is selected). With distinct boundary values the
// rule "min_conf < alpha" reproduces the selection exactly.
inline std::pair<double, std::vector<std::string>> solve_threshold(
    const std::vector<std::pair<std::string, double>>& min_conf,
    std::size_t n_sel) {
  if (min_conf.empty())
    throw std::invalid_argument("solve_threshold: empty sequence list");
  if (n_sel == 0) throw std::invalid_argument("solve_threshold: N_sel is 0");
  std::vector<std::pair<std::string, double>> order = min_conf;
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  std::size_t n = std::min(n_sel, order.size());
  double alpha;
  if (n == order.size())
    alpha = order.back().second + 0.5;
  else
    alpha = (order[n - 1].second + order[n].second) / 2.0;
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(order[i].first);
  return {alpha, ids};
}

// A sequence with one priority value per cell; selection treats lower as
// more urgent, so BALD-style scores enter negated.
struct ScoredSequence {
  std::string id;
  ConfidenceGrid conf;
};

inline SelectionResult select_scored(const std::vector<ScoredSequence>& pool,
                                     std::size_t n_sel, bool self_supervise) {
  SelectionResult out;
  if (pool.empty()) return out;
  std::unordered_map<std::string, const ScoredSequence*> by_id;
  std::vector<std::pair<std::string, double>> entries;
  entries.reserve(pool.size());
  for (const auto& s : pool) {
    if (s.conf.p.empty())
      throw std::invalid_argument("select_scored: empty confidence grid");
    if (!by_id.emplace(s.id, &s).second)
      throw std::invalid_argument("select_scored: duplicate id " + s.id);
    entries.emplace_back(s.id,
                         *std::min_element(s.conf.p.begin(), s.conf.p.end()));
  }
  auto [alpha, ids] = solve_threshold(entries, n_sel);
  out.alpha_sel = alpha;
  out.selected_ids = std::move(ids);
  for (const auto& id : out.selected_ids) {
    const ConfidenceGrid& g = by_id.at(id)->conf;
    std::vector<CellPos> query, self;
    if (self_supervise) {
      for (std::size_t t = 0; t < g.length; ++t)
        for (std::size_t m = 0; m < g.n_categories; ++m)
          (g.at(t, m) < alpha ? query : self).emplace_back(t, m);
      if (query.empty()) {
        // Floating-point ties can leave no sub-threshold cell; the argmin
        // cell is queried so every selection asks the expert something.
        std::size_t best =
            std::min_element(g.p.begin(), g.p.end()) - g.p.begin();
        CellPos pos{best / g.n_categories, best % g.n_categories};
        query.push_back(pos);
        self.erase(std::find(self.begin(), self.end(), pos));
      }
    } else {
      for (std::size_t t = 0; t < g.length; ++t)
        for (std::size_t m = 0; m < g.n_categories; ++m)
          query.emplace_back(t, m);
    }
    out.query_positions.push_back(std::move(query));
    out.self_positions.push_back(std::move(self));
  }
  return out;
}

// Confidence-based selection: per-cell confidence of the learner's own
// answer, sequence priority = the grid minimum. With self_supervise off
// every position of a selected sequence is queried (the selection-only
// strategy); validation is the loop's concern either way.
inline SelectionResult select_camell(const std::vector<Sequence>& unlabelled,
                                     const EnsembleModel& model,
                                     const ConfidenceEstimator& est,
                                     const CategorySchema& schema,
                                     std::size_t n_sel,
                                     bool self_supervise = true) {
  std::vector<ScoredSequence> scored;
  scored.reserve(unlabelled.size());
  for (const auto& seq : unlabelled) {
    PredictiveGrid grid = predict(model, seq);
    FeatureBundle fb = assemble_features(grid, predicted_candidates(grid),
                                         nullptr, schema);
    scored.push_back({seq.id, score(est, fb)});
  }
  return select_scored(scored, n_sel, self_supervise);
}

enum class BaldVariant { whole_sequence, with_self_supervision };

// Knowledge-uncertainty acquisition. The whole-sequence variant averages
// (or, behind the flag, sums) cell uncertainty and queries everything; the
// self-supervision variant mirrors the confidence solver on negated
// uncertainty so cells above the solved threshold go to the expert.
inline SelectionResult select_bald(const std::vector<Sequence>& unlabelled,
                                   const EnsembleModel& model,
                                   std::size_t n_sel, BaldVariant variant,
                                   bool use_sum = false) {
  std::vector<ScoredSequence> scored;
  scored.reserve(unlabelled.size());
  std::unordered_map<std::string, std::size_t> len_of;
  std::size_t M = 0;
  for (const auto& seq : unlabelled) {
    PredictiveGrid grid = predict(model, seq);
    M = grid.n_categories;
    len_of[seq.id] = grid.length;
    ConfidenceGrid neg(grid.length, grid.n_categories);
    for (std::size_t t = 0; t < grid.length; ++t)
      for (std::size_t m = 0; m < grid.n_categories; ++m)
        neg.at(t, m) = -grid.at(t, m).knowledge_uncertainty;
    scored.push_back({seq.id, std::move(neg)});
  }
  if (variant == BaldVariant::with_self_supervision) {
    SelectionResult out = select_scored(scored, n_sel, true);
    out.alpha_sel = -out.alpha_sel;  // report in uncertainty units
    return out;
  }
  // Collapse each grid to its negated mean so the shared solver ranks by
  // descending average uncertainty with ties on id.
  for (auto& s : scored) {
    double total = 0;
    for (double v : s.conf.p) total += -v;
    double priority = use_sum ? total : total / s.conf.p.size();
    s.conf = ConfidenceGrid(1, 1);
    s.conf.at(0, 0) = -priority;
  }
  SelectionResult picked = select_scored(scored, n_sel, false);
  SelectionResult out;
  out.selected_ids = std::move(picked.selected_ids);
  for (const auto& id : out.selected_ids) {
    std::vector<CellPos> query;
    for (std::size_t t = 0; t < len_of.at(id); ++t)
      for (std::size_t m = 0; m < M; ++m) query.emplace_back(t, m);
    out.query_positions.push_back(std::move(query));
    out.self_positions.emplace_back();
  }
  return out;
}

inline SelectionResult select_random(const std::vector<Sequence>& unlabelled,
                                     const CategorySchema& schema,
                                     std::size_t n_sel, Rng& rng) {
  SelectionResult out;
  if (unlabelled.empty()) return out;
  std::vector<std::size_t> order(unlabelled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t n = std::min(n_sel, order.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Sequence& seq = unlabelled[order[i]];
    out.selected_ids.push_back(seq.id);
    std::vector<CellPos> query;
    for (std::size_t t = 0; t < seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m)
        query.emplace_back(t, m);
    out.query_positions.push_back(std::move(query));
    out.self_positions.emplace_back();
  }
  return out;
}

// Greedy farthest-point order on embeddings: repeatedly take the candidate
// whose nearest neighbour among labelled-plus-picked is farthest, breaking
// exact distance ties on id. An empty reference set makes the first pick
// the smallest id.
inline std::vector<std::string> diversity_order(
    const std::vector<std::pair<std::string, std::vector<double>>>& candidates,
    const std::vector<std::vector<double>>& labelled, std::size_t n_sel) {
  auto dist2 = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
      throw std::invalid_argument("diversity_order: embedding dims differ");
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
  };
  std::vector<double> best(candidates.size(),
                           std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    for (const auto& ref : labelled)
      best[i] = std::min(best[i], dist2(candidates[i].second, ref));
  std::vector<bool> taken(candidates.size(), false);
  std::vector<std::string> out;
  std::size_t n = std::min(n_sel, candidates.size());
  while (out.size() < n) {
    std::size_t pick = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (taken[i]) continue;
      if (pick == candidates.size() || best[i] > best[pick] ||
          (best[i] == best[pick] &&
           candidates[i].first < candidates[pick].first))
        pick = i;
    }
    taken[pick] = true;
    out.push_back(candidates[pick].first);
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (!taken[i])
        best[i] = std::min(best[i],
                           dist2(candidates[i].second, candidates[pick].second));
  }
  return out;
}

inline SelectionResult select_diversity(
    const std::vector<Sequence>& unlabelled,
    const std::vector<LabelledSequence>& labelled, const EnsembleModel& model,
    const CategorySchema& schema, std::size_t n_sel) {
  SelectionResult out;
  if (unlabelled.empty()) return out;
  std::vector<std::pair<std::string, std::vector<double>>> cand;
  cand.reserve(unlabelled.size());
  std::unordered_map<std::string, const Sequence*> by_id;
  for (const auto& seq : unlabelled) {
    cand.emplace_back(seq.id, mean_hidden(model, seq));
    by_id[seq.id] = &seq;
  }
  std::vector<std::vector<double>> refs;
  refs.reserve(labelled.size());
  for (const auto& ls : labelled) refs.push_back(mean_hidden(model, ls.seq));
  out.selected_ids = diversity_order(cand, refs, n_sel);
  for (const auto& id : out.selected_ids) {
    const Sequence& seq = *by_id.at(id);
    std::vector<CellPos> query;
    for (std::size_t t = 0; t < seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m)
        query.emplace_back(t, m);
    out.query_positions.push_back(std::move(query));
    out.self_positions.emplace_back();
  }
  return out;
}

}  // namespace camell
