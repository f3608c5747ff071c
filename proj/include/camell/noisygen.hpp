#pragma once

// Synthetic incorrect-label machinery for the validation estimator: relabel a
// random fraction of the labelled pool by sampling from ensemble members with
// the clean value's probability zeroed out, then train a model that accepts
// those labels as ground truth. The disagreement between that model and the
// learning model is what the label-confidence features feed on.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "camell/config.hpp"
#include "camell/data.hpp"
#include "camell/learner.hpp"
#include "camell/rng.hpp"
#include "camell/schema.hpp"

namespace camell {

struct NoisySequence {
  std::string id;
  std::size_t pool_index = 0;  // position in the labelled pool it shadows
  std::vector<std::vector<int>> values;     // T x M noisy labels
  std::vector<std::vector<bool>> differs;   // vs. the pool label
  std::vector<std::size_t> member_for_category;  // sampling member ids
};

struct NoisyDataset {
  std::size_t cycle = 0;
  std::vector<NoisySequence> sequences;
};

// Samples an incorrect label: the clean value's probability is zeroed, the
// rest renormalised, and one value drawn. A member that put its whole mass on
// the clean value falls back to uniform over the others.
inline int sample_noisy_label(const std::vector<double>& member_dist,
                              int clean_value, Rng& rng) {
  const std::size_t V = member_dist.size();
  if (V < 2)
    throw std::invalid_argument(
        "sample_noisy_label: need at least 2 values for an incorrect label");
  std::vector<double> weights = member_dist;
  weights.at(clean_value) = 0.0;
  double total = 0;
  for (double w : weights) total += w;
  if (total <= 0.0)
    for (std::size_t v = 0; v < V; ++v)
      weights[v] = v == static_cast<std::size_t>(clean_value) ? 0.0 : 1.0;
  std::size_t drawn = rng.categorical(weights);
  if (drawn == static_cast<std::size_t>(clean_value))
    drawn = (drawn + 1) % V;  // accumulation-edge guard; cannot happen in exact arithmetic
  return static_cast<int>(drawn);
}

// Relabels ceil(alpha_noise * N_lab) uniformly chosen pool sequences. One
// member id is drawn per category; by default the draw is repeated for every
// sequence, the global flag keeps one draw for the whole dataset. With the
// random-replacement flag the member distributions are ignored and labels are
// replaced by a uniform different value.
inline NoisyDataset build_noisy_dataset(
    const std::vector<LabelledSequence>& labelled, const EnsembleModel& model,
    const NoisygenConfig& cfg, Rng& rng, std::size_t cycle = 0) {
  if (labelled.empty())
    throw std::invalid_argument("build_noisy_dataset: labelled pool is empty");
  const std::size_t n_sel = static_cast<std::size_t>(std::ceil(
      cfg.alpha_noise * static_cast<double>(labelled.size())));
  std::vector<std::size_t> order(labelled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  order.resize(n_sel);
  std::sort(order.begin(), order.end());

  const std::size_t K = model.members.size();
  const std::size_t M = model.n_values.size();
  std::vector<std::size_t> global_members(M);
  for (std::size_t m = 0; m < M; ++m) global_members[m] = rng.uniform_index(K);

  NoisyDataset out;
  out.cycle = cycle;
  for (std::size_t idx : order) {
    const LabelledSequence& ls = labelled[idx];
    NoisySequence ns;
    ns.id = ls.seq.id;
    ns.pool_index = idx;
    ns.member_for_category = global_members;
    if (!cfg.global_member_draw)
      for (std::size_t m = 0; m < M; ++m)
        ns.member_for_category[m] = rng.uniform_index(K);

    PredictiveGrid grid = predict(model, ls.seq);
    ns.values.assign(ls.seq.length, std::vector<int>(M));
    ns.differs.assign(ls.seq.length, std::vector<bool>(M));
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < M; ++m) {
        const LabelCell& cell = ls.grid.at(t, m);
        if (!cell.assigned())
          throw std::invalid_argument(
              "build_noisy_dataset: unassigned cell in labelled pool at '" +
              ls.seq.id + "'");
        int noisy;
        if (cfg.random_replacement) {
          int pick = static_cast<int>(
              rng.uniform_index(model.n_values[m] - 1));
          noisy = pick < cell.value ? pick : pick + 1;
        } else {
          const auto& dist =
              grid.at(t, m).member_dists[ns.member_for_category[m]];
          noisy = sample_noisy_label(dist, cell.value, rng);
        }
        ns.values[t][m] = noisy;
        ns.differs[t][m] = noisy != cell.value;
      }
    out.sequences.push_back(std::move(ns));
  }
  return out;
}

// Trains a model that treats the noisy labels as ground truth on the selected
// subset and the clean labels on the remainder of the pool. Architecture and
// procedure are the learner's; only the ensemble size differs.
inline EnsembleModel fit_noisy_model(const NoisyDataset& noisy,
                                     const std::vector<LabelledSequence>& labelled,
                                     const CategorySchema& schema,
                                     TrainConfig train_cfg,
                                     const NoisygenConfig& cfg,
                                     std::uint64_t seed) {
  if (noisy.sequences.empty())
    throw std::invalid_argument("fit_noisy_model: noisy dataset is empty");
  std::vector<LabelledSequence> mixed = labelled;
  for (const auto& ns : noisy.sequences) {
    LabelledSequence& ls = mixed.at(ns.pool_index);
    if (ls.seq.id != ns.id)
      throw std::invalid_argument(
          "fit_noisy_model: noisy dataset does not match the pool");
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m) {
        LabelCell& cell = ls.grid.at(t, m);
        cell.value = ns.values[t][m];
        cell.provenance = Provenance::expert;
        cell.confidence.reset();
      }
  }
  train_cfg.ensemble_size = cfg.noisy_ensemble_size;
  return fit(mixed, schema, train_cfg, seed);
}

}  // namespace camell
