#pragma once

// Evaluation metrics: joint and per-label accuracy over label grids, expected
// calibration error over (confidence, correctness) pairs, and percentile
// bootstrap intervals resampled at the sequence level.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "camell/rng.hpp"

namespace camell {

// Integer label grids, one row per time-step. Predictions and truth must
// agree in shape.
using IntGrid = std::vector<std::vector<int>>;

namespace detail {

inline void check_shapes(const std::vector<IntGrid>& pred,
                         const std::vector<IntGrid>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("metrics: sequence count mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size())
      throw std::invalid_argument("metrics: length mismatch at sequence " +
                                  std::to_string(i));
    for (std::size_t t = 0; t < pred[i].size(); ++t)
      if (pred[i][t].size() != truth[i][t].size())
        throw std::invalid_argument("metrics: category mismatch at sequence " +
                                    std::to_string(i));
  }
}

}  // namespace detail

// Fraction of time-steps where every category is simultaneously correct.
inline double joint_accuracy(const std::vector<IntGrid>& pred,
                             const std::vector<IntGrid>& truth) {
  detail::check_shapes(pred, truth);
  std::size_t steps = 0, jointly_correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      ++steps;
      if (pred[i][t] == truth[i][t]) ++jointly_correct;
    }
  if (steps == 0) throw std::invalid_argument("metrics: no time-steps");
  return static_cast<double>(jointly_correct) / static_cast<double>(steps);
}

// Fraction of individual cells that are correct.
inline double per_label_accuracy(const std::vector<IntGrid>& pred,
                                 const std::vector<IntGrid>& truth) {
  detail::check_shapes(pred, truth);
  std::size_t cells = 0, correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t t = 0; t < pred[i].size(); ++t)
      for (std::size_t m = 0; m < pred[i][t].size(); ++m) {
        ++cells;
        if (pred[i][t][m] == truth[i][t][m]) ++correct;
      }
  if (cells == 0) throw std::invalid_argument("metrics: no cells");
  return static_cast<double>(correct) / static_cast<double>(cells);
}

struct ConfidenceItem {
  double p = 0;
  bool correct = false;
};

// Bin index for equal-width bins on [0,1]: bin k covers [k/bins, (k+1)/bins),
// so a boundary value belongs to the upper bin, except p=1 which stays in the
// last. The >= re-check repairs the cases where p*bins lands just below an
// exactly-representable boundary.
inline std::size_t ece_bin(double p, std::size_t bins) {
  std::size_t idx = static_cast<std::size_t>(p * static_cast<double>(bins));
  if (idx < bins &&
      p >= static_cast<double>(idx + 1) / static_cast<double>(bins))
    ++idx;
  return std::min(idx, bins - 1);
}

inline double ece(const std::vector<ConfidenceItem>& items,
                  std::size_t bins = 10) {
  if (items.empty()) throw std::invalid_argument("ece: empty input");
  if (bins == 0) throw std::invalid_argument("ece: need at least one bin");
  for (const auto& it : items)
    if (!(it.p >= 0.0 && it.p <= 1.0))
      throw std::invalid_argument("ece: confidence outside [0,1]");
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const auto& it : items) {
    std::size_t b = ece_bin(it.p, bins);
    conf_sum[b] += it.p;
    acc_sum[b] += it.correct ? 1.0 : 0.0;
    ++count[b];
  }
  double total = 0;
  const double n = static_cast<double>(items.size());
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double c = static_cast<double>(count[b]);
    total += (c / n) * std::abs(acc_sum[b] / c - conf_sum[b] / c);
  }
  return total;
}

struct BootstrapResult {
  double point = 0;
  double lower = 0;
  double upper = 0;
};

// Percentile bootstrap. The metric is evaluated on index multisets so callers
// resample whole sequences (cells within a sequence are dependent). Quantiles
// use the nearest-rank rule on the sorted resample values.
inline BootstrapResult bootstrap_ci(
    const std::function<double(const std::vector<std::size_t>&)>& metric,
    std::size_t n, std::size_t resamples, double level, Rng& rng) {
  if (n == 0) throw std::invalid_argument("bootstrap_ci: empty evaluation set");
  if (level <= 0 || level >= 1)
    throw std::invalid_argument("bootstrap_ci: level must be in (0,1)");
  std::vector<std::size_t> identity(n);
  for (std::size_t i = 0; i < n; ++i) identity[i] = i;
  BootstrapResult out;
  out.point = metric(identity);

  std::vector<double> values(resamples);
  std::vector<std::size_t> draw(n);
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) draw[i] = rng.uniform_index(n);
    values[r] = metric(draw);
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(resamples)));
    rank = std::max<std::size_t>(1, std::min(rank, resamples));
    return values[rank - 1];
  };
  out.lower = quantile((1.0 - level) / 2.0);
  out.upper = quantile(1.0 - (1.0 - level) / 2.0);
  return out;
}

struct MetricReport {
  double joint_accuracy = 0;
  double per_label_accuracy = 0;
  double ece = 0;
  std::size_t n_timesteps = 0;
  std::size_t n_cells = 0;
  std::optional<BootstrapResult> joint_ci;
};

}  // namespace camell
