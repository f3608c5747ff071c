#pragma once

// Synthetic sequential multi-output task: a first-order Markov chain over S
// hidden states emits noisy observations, and every label category reads a
// deterministic function of the hidden trajectory. States split into three
// blocks: a quiet block where every category holds its null value, a murmur
// pair of two states whose embeddings nearly coincide (so their labels stay
// ambiguous no matter how much data the learner sees), and an event block
// visited in short bursts. An event step's value pattern is a table lookup
// keyed by the event state AND the last quiet state before the burst, and
// its emission is tinted by that quiet state's embedding, so the learner
// must resolve one of n_event x n_quiet composite clusters per burst. Each
// table entry needs its own pile of examples, and bursts draw entries
// independently of the sequence they land in: learning is paced by pooled
// per-entry counts, which accrue per labelled sequence no matter how the
// sequences are chosen. Murmur sets the accuracy ceiling, the table sets the
// learning curve. Also houses the simulated expert annotator with its three
// corruption types.

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "camell/config.hpp"
#include "camell/data.hpp"
#include "camell/rng.hpp"
#include "camell/schema.hpp"

namespace camell {

// Deterministic structure shared by every sequence of a task: transition
// matrix, stationary distribution, state embeddings, and the burst value
// table.
struct TaskModel {
  std::size_t states = 0;
  std::size_t n_quiet = 0;   // states [0, n_quiet) are quiet
  std::size_t n_murmur = 0;  // states [n_quiet, n_quiet + n_murmur) murmur
  std::size_t obs_dim = 0;
  std::size_t signal_dim = 0;  // embeddings live in dims [0, signal_dim)
  std::vector<std::vector<double>> transition;  // states x states, rows sum 1
  std::vector<double> stationary;               // left fixed point
  std::vector<std::vector<double>> embeddings;  // states x signal_dim
  // offsets[e][q]: value rotation for event state first_event()+e entered
  // from quiet state q.
  std::vector<std::vector<int>> offsets;

  std::size_t first_event() const { return n_quiet + n_murmur; }

  // How much of the anchor quiet state's embedding an event emission carries.
  static constexpr double kTint = 0.3;

  // Quiet states are null everywhere; murmur states rotate by their own
  // index but leave category 0 null, so murmur rows mix null and non-null
  // cells; event values come from the (event, anchor quiet) table. The
  // rotation by category index makes the categories carry the same
  // information without being identical.
  int true_value(std::size_t state, std::size_t anchor_quiet, std::size_t m,
                 std::size_t values_per_category) const {
    if (state < n_quiet) return 0;  // null value
    const int fold = static_cast<int>(values_per_category - 1);
    int base;
    if (state < first_event()) {
      if (m == 0) return 0;
      base = static_cast<int>(state - n_quiet);
    } else {
      base = offsets[state - first_event()][anchor_quiet];
    }
    return 1 + (base + static_cast<int>(m)) % fold;
  }
};

namespace detail {

// Row-stochastic transition: quiet rows mostly stay quiet with modest murmur
// and event excursions, murmur rows return to quiet almost surely (singleton
// murmur steps), event rows hold short bursts and only ever fall back to
// quiet, so a burst keeps one event state and one quiet anchor. A jitter
// keeps rows asymmetric; structural zeros stay zero.
inline std::vector<std::vector<double>> make_transition(std::size_t S,
                                                        std::size_t n_quiet,
                                                        std::size_t n_murmur,
                                                        Rng& rng) {
  const std::size_t first_event = n_quiet + n_murmur;
  const std::size_t n_event = S - first_event;
  std::vector<std::vector<double>> P(S, std::vector<double>(S, 0.0));
  auto block = [&](std::size_t s) {
    return s < n_quiet ? 0 : (s < first_event ? 1 : 2);
  };
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t s2 = 0; s2 < S; ++s2) {
      double base = 0.0;
      const int b = block(s), b2 = block(s2);
      if (b == 0 && b2 == 0)
        base = s == s2 ? 0.50 : 0.17 / std::max<std::size_t>(1, n_quiet - 1);
      else if (b == 0 && b2 == 1)
        base = n_murmur ? 0.22 / static_cast<double>(n_murmur) : 0.0;
      else if (b == 0 && b2 == 2)
        base = n_event ? 0.13 / static_cast<double>(n_event) : 0.0;
      else if (b == 1 && b2 == 0)
        base = 0.97 / static_cast<double>(n_quiet);
      else if (b == 1 && b2 == 1)
        base = s == s2 ? 0.02 : 0.01 / std::max<std::size_t>(1, n_murmur - 1);
      else if (b == 2 && b2 == 0)
        base = 0.45 / static_cast<double>(n_quiet);
      else if (b == 2 && b2 == 2)
        base = s == s2 ? 0.55 : 0.0;
      if (base > 0) P[s][s2] = base * (0.9 + 0.2 * rng.uniform());
    }
    double total = 0;
    for (double p : P[s]) total += p;
    for (double& p : P[s]) p /= total;
  }
  return P;
}

inline std::vector<double> stationary_of(
    const std::vector<std::vector<double>>& P) {
  std::size_t S = P.size();
  std::vector<double> pi(S, 1.0 / static_cast<double>(S)), next(S);
  for (int iter = 0; iter < 100000; ++iter) {
    for (std::size_t s2 = 0; s2 < S; ++s2) {
      double acc = 0;
      for (std::size_t s = 0; s < S; ++s) acc += pi[s] * P[s][s2];
      next[s2] = acc;
    }
    double delta = 0;
    for (std::size_t s = 0; s < S; ++s) delta += std::abs(next[s] - pi[s]);
    pi.swap(next);
    if (delta < 1e-14) break;
  }
  return pi;
}

}  // namespace detail

inline TaskModel build_task_model(const TaskConfig& cfg) {
  TaskModel tm;
  tm.states = cfg.hidden_states;
  tm.n_murmur = cfg.hidden_states >= 4 ? 2 : 0;
  tm.n_quiet = (cfg.hidden_states - tm.n_murmur + 1) / 2;
  tm.obs_dim = cfg.obs_dim;
  tm.signal_dim = cfg.obs_dim / 2;

  Rng rng(derive_seed(cfg.seed, Stream::task_structure, 0));
  tm.transition =
      detail::make_transition(tm.states, tm.n_quiet, tm.n_murmur, rng);
  tm.stationary = detail::stationary_of(tm.transition);

  auto unit = [&rng](std::size_t dim) {
    std::vector<double> v(dim);
    double norm2 = 0;
    for (double& x : v) {
      x = rng.normal();
      norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
  };
  auto scaled = [&unit](std::size_t dim, double s) {
    std::vector<double> v = unit(dim);
    for (double& x : v) x *= s;
    return v;
  };

  // Block locations sit at radius 2 so they stay unambiguous under the
  // largest sequence drift. The murmur pair shares one location up to a
  // sliver far below the jitter floor, so its two label patterns are
  // inherently confusable: that pins the accuracy ceiling. Event embeddings
  // huddle around a common centre at a quarter of the location radius;
  // separating events from quiet is cheap, resolving which event and which
  // anchor tint is the fine structure that takes data.
  tm.embeddings.resize(tm.states);
  std::vector<double> murmur_loc = scaled(tm.signal_dim, 2.0);
  std::vector<double> centre = scaled(tm.signal_dim, 2.0);
  for (std::size_t s = 0; s < tm.states; ++s) {
    if (s < tm.n_quiet) {
      tm.embeddings[s] = scaled(tm.signal_dim, 2.0);
    } else if (s < tm.first_event()) {
      std::vector<double> sliver = unit(tm.signal_dim);
      tm.embeddings[s] = murmur_loc;
      for (std::size_t j = 0; j < tm.signal_dim; ++j)
        tm.embeddings[s][j] += 0.05 * sliver[j];
    } else {
      std::vector<double> offset = unit(tm.signal_dim);
      tm.embeddings[s] = centre;
      for (std::size_t j = 0; j < tm.signal_dim; ++j)
        tm.embeddings[s][j] += 0.5 * offset[j];
    }
  }

  // One independent value rotation per (event, anchor) pair: neighbouring
  // composites usually disagree, so no entry can be inferred from another.
  const std::size_t n_event = tm.states - tm.first_event();
  tm.offsets.assign(n_event, std::vector<int>(tm.n_quiet, 0));
  for (auto& row : tm.offsets)
    for (int& o : row)
      o = static_cast<int>(rng.uniform_index(cfg.values_per_category - 1));
  return tm;
}

inline CategorySchema make_schema(const TaskConfig& cfg) {
  std::vector<Category> cats;
  for (std::size_t m = 0; m < cfg.categories; ++m) {
    Category c;
    c.name = "cat" + std::to_string(m);
    c.null_index = 0;
    c.values.push_back("none");
    for (std::size_t v = 1; v < cfg.values_per_category; ++v)
      c.values.push_back("v" + std::to_string(v));
    cats.push_back(std::move(c));
  }
  return CategorySchema(std::move(cats));
}

struct GeneratedTask {
  Pool pool;                             // dev/test carry clean truth grids
  CategorySchema schema;
  std::vector<GroundTruthRecord> truth;  // one record per sequence, all splits
};

inline GeneratedTask generate_dataset(const TaskConfig& cfg) {
  TaskModel tm = build_task_model(cfg);
  GeneratedTask out;
  out.schema = make_schema(cfg);
  const std::size_t M = cfg.categories;

  std::vector<Sequence> seqs(cfg.n_sequences);
  out.truth.resize(cfg.n_sequences);
  for (std::size_t i = 0; i < cfg.n_sequences; ++i) {
    Rng rng(derive_seed(cfg.seed, Stream::sequence, i));
    std::size_t T =
        cfg.min_length + rng.uniform_index(cfg.max_length - cfg.min_length + 1);

    Sequence& seq = seqs[i];
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "seq%06zu", i);
    seq.id = idbuf;
    seq.length = T;
    seq.dim = cfg.obs_dim;
    seq.features.resize(T * cfg.obs_dim);

    // One random drift vector shared by every step plus a per-step jitter.
    // Drift blurs the fine composite structure a little without ever
    // threatening the block anchors, so it adds to every entry's appetite
    // for examples.
    std::vector<double> drift(tm.signal_dim);
    {
      double norm2 = 0;
      for (double& v : drift) {
        v = rng.normal();
        norm2 += v * v;
      }
      double scale =
          cfg.emission_noise * 0.75 * rng.uniform() / std::sqrt(norm2);
      for (double& v : drift) v *= scale;
    }
    const double jitter = 0.375 * cfg.emission_noise;

    GroundTruthRecord& rec = out.truth[i];
    rec.id = seq.id;
    rec.truth.assign(T, std::vector<int>(M));

    // The anchor is the last quiet state seen; a sequence that opens
    // mid-burst draws its anchor from the quiet part of the stationary.
    std::size_t anchor = 0;
    {
      std::vector<double> quiet_mass(tm.stationary.begin(),
                                     tm.stationary.begin() + tm.n_quiet);
      anchor = rng.categorical(quiet_mass);
    }
    std::size_t state = rng.categorical(tm.stationary);
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) state = rng.categorical(tm.transition[state]);
      if (state < tm.n_quiet) anchor = state;
      const bool tinted = state >= tm.first_event();
      for (std::size_t j = 0; j < tm.signal_dim; ++j) {
        double x = tm.embeddings[state][j];
        if (tinted) x += TaskModel::kTint * tm.embeddings[anchor][j];
        seq.features[t * cfg.obs_dim + j] = x + drift[j] + jitter * rng.normal();
      }
      for (std::size_t j = tm.signal_dim; j < cfg.obs_dim; ++j)
        seq.features[t * cfg.obs_dim + j] = rng.normal();  // distractor dims
      for (std::size_t m = 0; m < M; ++m)
        rec.truth[t][m] =
            tm.true_value(state, anchor, m, cfg.values_per_category);
    }
  }

  // Split assignment is a seeded shuffle so it is independent of generation
  // order; dev and test receive their clean truth as expert-provenance grids.
  std::vector<std::size_t> order(cfg.n_sequences);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg.seed, Stream::task_structure, 1));
  split_rng.shuffle(order);
  std::size_t n_dev = static_cast<std::size_t>(
      std::llround(cfg.dev_fraction * static_cast<double>(cfg.n_sequences)));
  std::size_t n_test = static_cast<std::size_t>(
      std::llround(cfg.test_fraction * static_cast<double>(cfg.n_sequences)));

  auto truth_grid = [&](std::size_t i) {
    const auto& rec = out.truth[i];
    LabelGrid g(seqs[i].length, M);
    for (std::size_t t = 0; t < seqs[i].length; ++t)
      for (std::size_t m = 0; m < M; ++m) {
        g.at(t, m).value = rec.truth[t][m];
        g.at(t, m).provenance = Provenance::expert;
      }
    return g;
  };

  for (std::size_t k = 0; k < order.size(); ++k) {
    std::size_t i = order[k];
    if (k < n_dev)
      out.pool.dev.push_back({seqs[i], truth_grid(i)});
    else if (k < n_dev + n_test)
      out.pool.test.push_back({seqs[i], truth_grid(i)});
    else
      out.pool.unlabelled.push_back(seqs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulated expert annotator.

struct LabelRequest {
  std::string id;
  std::size_t t = 0;
  std::size_t m = 0;
};

struct ExpertAnswer {
  std::string id;
  std::size_t t = 0;
  std::size_t m = 0;
  int value = -1;
};

// Answers each request from ground truth, then corrupts it with probability
// `rate`. The corruption type is drawn from the mix restricted to the types
// applicable to the cell: hallucination and duplication need a null-truth
// cell, substitution a non-null one. Duplication without a usable donor falls
// back to substitution behaviour. Every answer that ends up differing from
// truth is appended to that sequence's corruption log.
inline std::vector<ExpertAnswer> expert_labels(
    const std::vector<LabelRequest>& requests,
    std::vector<GroundTruthRecord>& truth, const CategorySchema& schema,
    const NoiseConfig& noise, Rng& rng) {
  std::map<std::string, GroundTruthRecord*> by_id;
  for (auto& rec : truth) by_id[rec.id] = &rec;

  std::vector<ExpertAnswer> answers;
  answers.reserve(requests.size());
  for (const auto& req : requests) {
    auto it = by_id.find(req.id);
    if (it == by_id.end())
      throw std::invalid_argument("expert_labels: unknown sequence '" + req.id +
                                  "'");
    GroundTruthRecord& rec = *it->second;
    if (req.t >= rec.truth.size() || req.m >= schema.size())
      throw std::out_of_range("expert_labels: request outside sequence '" +
                              req.id + "'");
    const Category& cat = schema.category(req.m);
    const int n_values = static_cast<int>(cat.values.size());
    const int null_m = static_cast<int>(cat.null_index);
    const int clean = rec.truth[req.t][req.m];
    int answer = clean;
    ErrorType etype = ErrorType::hallucination;  // overwritten before use
    bool corrupted = false;

    if (rng.uniform() < noise.rate) {
      const bool is_null = clean == null_m;
      double w_hal = is_null ? noise.mix_hallucination : 0.0;
      double w_dup = is_null ? noise.mix_duplication : 0.0;
      double w_sub = is_null ? 0.0 : noise.mix_substitution;
      double w_total = w_hal + w_dup + w_sub;
      if (w_total > 0) {
        double u = rng.uniform() * w_total;
        if (u < w_hal) {
          // Uniform non-null value; guaranteed to differ from the null truth.
          int pick = static_cast<int>(rng.uniform_index(n_values - 1));
          answer = pick < null_m ? pick : pick + 1;
          etype = ErrorType::hallucination;
          corrupted = true;
        } else if (u < w_hal + w_dup) {
          // Copy a non-null value present in another category at the same t,
          // provided its index is valid and non-null in this category.
          std::vector<int> donors;
          for (std::size_t m2 = 0; m2 < schema.size(); ++m2) {
            if (m2 == req.m) continue;
            int v = rec.truth[req.t][m2];
            if (v == static_cast<int>(schema.category(m2).null_index)) continue;
            if (v >= n_values || v == null_m) continue;
            donors.push_back(v);
          }
          if (!donors.empty()) {
            answer = donors[rng.uniform_index(donors.size())];
            etype = ErrorType::duplication;
          } else {
            int pick = static_cast<int>(rng.uniform_index(n_values - 1));
            answer = pick < null_m ? pick : pick + 1;
            etype = ErrorType::substitution;
          }
          corrupted = true;
        } else {
          // Uniform non-null value different from the (non-null) truth.
          std::vector<int> candidates;
          for (int v = 0; v < n_values; ++v)
            if (v != null_m && v != clean) candidates.push_back(v);
          if (!candidates.empty()) {
            answer = candidates[rng.uniform_index(candidates.size())];
            etype = ErrorType::substitution;
            corrupted = true;
          }
        }
      }
    }

    if (corrupted)
      rec.corruption_log.push_back({req.t, req.m, etype, clean, answer});
    answers.push_back({req.id, req.t, req.m, answer});
  }
  return answers;
}

}  // namespace camell
