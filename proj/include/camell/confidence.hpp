// Cell-level confidence estimation. Two variants share one architecture:
// the prediction estimator scores the learner's own answer (acquisition),
// the label estimator scores a stored label against the learning and noisy
// models jointly (validation). Everything is linear up to the sigmoid head.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "camell/config.hpp"
#include "camell/metrics.hpp"
#include "camell/noisygen.hpp"
#include "camell/rng.hpp"

namespace camell {

enum class EstimatorVariant { prediction, label };

inline std::size_t feature_dim_for(EstimatorVariant v) {
  return v == EstimatorVariant::prediction ? 3 : 6;
}

// Per-cell feature rows plus the per-timestep concatenation that feeds the
// inter-category encoder. self has T*M rows of length F; inter has T rows
// of length M*F, laid out in schema order.
struct FeatureBundle {
  std::size_t length = 0;
  std::size_t n_categories = 0;
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> self;
  std::vector<std::vector<double>> inter;

  const std::vector<double>& cell(std::size_t t, std::size_t m) const {
    return self.at(t * n_categories + m);
  }
  const std::vector<double>& row(std::size_t t) const { return inter.at(t); }
};

inline IntGrid predicted_candidates(const PredictiveGrid& grid) {
  IntGrid out(grid.length, std::vector<int>(grid.n_categories, 0));
  for (std::size_t t = 0; t < grid.length; ++t)
    for (std::size_t m = 0; m < grid.n_categories; ++m)
      out[t][m] = grid.at(t, m).predicted;
  return out;
}

inline FeatureBundle assemble_features(const PredictiveGrid& grid,
                                       const IntGrid& candidates,
                                       const PredictiveGrid* noisy_grid,
                                       const CategorySchema& schema) {
  std::size_t T = grid.length, M = grid.n_categories;
  if (M != schema.size())
    throw std::invalid_argument("assemble_features: grid does not match schema");
  if (candidates.size() != T)
    throw std::invalid_argument("assemble_features: candidate grid height");
  if (noisy_grid &&
      (noisy_grid->length != T || noisy_grid->n_categories != M))
    throw std::invalid_argument("assemble_features: noisy grid shape");

  FeatureBundle out;
  out.length = T;
  out.n_categories = M;
  out.feature_dim = noisy_grid ? 6 : 3;
  out.self.resize(T * M);
  out.inter.assign(T, std::vector<double>());

  auto triple = [](const CellPrediction& cell, int v) {
    return std::vector<double>{cell.marginal.at(v), cell.total_uncertainty,
                               cell.knowledge_uncertainty};
  };
  for (std::size_t t = 0; t < T; ++t) {
    if (candidates[t].size() != M)
      throw std::invalid_argument("assemble_features: candidate row width");
    out.inter[t].reserve(M * out.feature_dim);
    for (std::size_t m = 0; m < M; ++m) {
      int v = candidates[t][m];
      if (v < 0 || static_cast<std::size_t>(v) >= schema.n_values(m))
        throw std::invalid_argument(
            "assemble_features: missing or out-of-range candidate at (" +
            std::to_string(t) + ", " + std::to_string(m) + ")");
      std::vector<double> z = triple(grid.at(t, m), v);
      if (noisy_grid) {
        std::vector<double> zn = triple(noisy_grid->at(t, m), v);
        z.insert(z.end(), zn.begin(), zn.end());
      }
      out.inter[t].insert(out.inter[t].end(), z.begin(), z.end());
      out.self[t * M + m] = std::move(z);
    }
  }
  return out;
}

struct ConfidenceEstimator {
  EstimatorVariant variant = EstimatorVariant::prediction;
  std::size_t n_categories = 0;
  std::size_t feature_dim = 0;
  std::size_t latent = 16;
  bool shared_intra = false;
  bool ablate_inter = false;

  // intra_w[c] is latent x F row-major (one entry when shared_intra);
  // inter_w is latent x (M*F); head_w1 is latent x (2*latent).
  std::vector<std::vector<double>> intra_w;
  std::vector<std::vector<double>> intra_b;
  std::vector<double> inter_w;
  std::vector<double> inter_b;
  std::vector<double> head_w1;
  std::vector<double> head_b1;
  std::vector<double> head_w2;
  double head_b2 = 0;
  double temperature = 1.0;
};

namespace detail {

inline ConfidenceEstimator make_estimator_shape(EstimatorVariant variant,
                                                std::size_t M, std::size_t F,
                                                const ConfidenceConfig& cfg) {
  if (M == 0 || F == 0) throw std::invalid_argument("estimator: empty shape");
  ConfidenceEstimator e;
  e.variant = variant;
  e.n_categories = M;
  e.feature_dim = F;
  e.latent = cfg.latent_dim;
  e.shared_intra = cfg.shared_intra;
  e.ablate_inter = cfg.ablate_inter;
  std::size_t L = e.latent;
  std::size_t n_intra = cfg.shared_intra ? 1 : M;
  e.intra_w.assign(n_intra, std::vector<double>(L * F, 0.0));
  e.intra_b.assign(n_intra, std::vector<double>(L, 0.0));
  e.inter_w.assign(L * M * F, 0.0);
  e.inter_b.assign(L, 0.0);
  e.head_w1.assign(L * 2 * L, 0.0);
  e.head_b1.assign(L, 0.0);
  e.head_w2.assign(L, 0.0);
  return e;
}

inline void init_estimator(ConfidenceEstimator& e, Rng& rng) {
  auto fill = [&](std::vector<double>& w, std::size_t fan_in) {
    double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : w) x = rng.normal() * s;
  };
  for (auto& w : e.intra_w) fill(w, e.feature_dim);
  fill(e.inter_w, e.n_categories * e.feature_dim);
  fill(e.head_w1, 2 * e.latent);
  fill(e.head_w2, e.latent);
}

struct ForwardCache {
  std::vector<double> h_m, h_t, u;
  double logit = 0;
};

inline double estimator_logit(const ConfidenceEstimator& e, std::size_t category,
                              const std::vector<double>& z,
                              const std::vector<double>& Z,
                              ForwardCache* cache = nullptr) {
  std::size_t L = e.latent, F = e.feature_dim, M = e.n_categories;
  if (category >= M) throw std::invalid_argument("score: category index");
  if (z.size() != F) throw std::invalid_argument("score: cell feature dim");
  if (Z.size() != M * F) throw std::invalid_argument("score: row feature dim");
  const auto& wi = e.intra_w[e.shared_intra ? 0 : category];
  const auto& bi = e.intra_b[e.shared_intra ? 0 : category];
  std::vector<double> h_m(L), h_t(L), u(L);
  for (std::size_t i = 0; i < L; ++i) {
    double a = bi[i];
    for (std::size_t j = 0; j < F; ++j) a += wi[i * F + j] * z[j];
    h_m[i] = a;
  }
  for (std::size_t i = 0; i < L; ++i) {
    double a = e.inter_b[i];
    if (!e.ablate_inter)
      for (std::size_t j = 0; j < M * F; ++j) a += e.inter_w[i * M * F + j] * Z[j];
    h_t[i] = a;
  }
  double s = e.head_b2;
  for (std::size_t i = 0; i < L; ++i) {
    double a = e.head_b1[i];
    for (std::size_t j = 0; j < L; ++j) {
      a += e.head_w1[i * 2 * L + j] * h_m[j];
      a += e.head_w1[i * 2 * L + L + j] * h_t[j];
    }
    u[i] = a;
    s += e.head_w2[i] * a;
  }
  if (cache) {
    cache->h_m = std::move(h_m);
    cache->h_t = std::move(h_t);
    cache->u = std::move(u);
    cache->logit = s;
  }
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double t = std::exp(x);
  return t / (1.0 + t);
}

}  // namespace detail

inline double score_cell(const ConfidenceEstimator& e, std::size_t category,
                         const std::vector<double>& z,
                         const std::vector<double>& Z) {
  return detail::sigmoid(detail::estimator_logit(e, category, z, Z) /
                         e.temperature);
}

// Per-cell confidences for a whole sequence; rows are independent.
struct ConfidenceGrid {
  std::size_t length = 0;
  std::size_t n_categories = 0;
  std::vector<double> p;

  ConfidenceGrid() = default;
  ConfidenceGrid(std::size_t T, std::size_t M)
      : length(T), n_categories(M), p(T * M, 0.0) {}
  double& at(std::size_t t, std::size_t m) { return p.at(t * n_categories + m); }
  double at(std::size_t t, std::size_t m) const {
    return p.at(t * n_categories + m);
  }
};

inline ConfidenceGrid score(const ConfidenceEstimator& e,
                            const FeatureBundle& features) {
  if (features.n_categories != e.n_categories ||
      features.feature_dim != e.feature_dim)
    throw std::invalid_argument("score: feature bundle does not match estimator");
  ConfidenceGrid out(features.length, features.n_categories);
  for (std::size_t t = 0; t < features.length; ++t)
    for (std::size_t m = 0; m < features.n_categories; ++m)
      out.at(t, m) = score_cell(e, m, features.cell(t, m), features.row(t));
  return out;
}

// One supervised example: a cell's features plus the row context it sits in
// and whether the candidate value it was built from is correct.
struct ConfidencePair {
  std::size_t category = 0;
  std::vector<double> self;
  std::vector<double> inter;
  double target = 0.0;  // 0 or 1
};

// Mean binary NLL under label smoothing epsilon (0 gives the plain loss).
inline double estimator_nll(const ConfidenceEstimator& e,
                            const std::vector<ConfidencePair>& pairs,
                            double epsilon = 0.0) {
  if (pairs.empty()) throw std::invalid_argument("estimator_nll: no pairs");
  double total = 0;
  for (const auto& pr : pairs) {
    double p = score_cell(e, pr.category, pr.self, pr.inter);
    p = std::min(std::max(p, 1e-15), 1.0 - 1e-15);
    double y = pr.target * (1.0 - epsilon) + epsilon / 2.0;
    total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return total / static_cast<double>(pairs.size());
}

namespace detail {

// Golden-section search for the temperature minimizing plain dev NLL.
// Logits are fixed, so they are computed once.
inline double fit_temperature(const ConfidenceEstimator& e,
                              const std::vector<ConfidencePair>& dev) {
  std::vector<double> logits(dev.size());
  for (std::size_t i = 0; i < dev.size(); ++i)
    logits[i] = estimator_logit(e, dev[i].category, dev[i].self, dev[i].inter);
  auto nll = [&](double log_tau) {
    double tau = std::exp(log_tau), total = 0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
      double p = sigmoid(logits[i] / tau);
      p = std::min(std::max(p, 1e-15), 1.0 - 1e-15);
      total += -(dev[i].target * std::log(p) +
                 (1.0 - dev[i].target) * std::log(1.0 - p));
    }
    return total / static_cast<double>(dev.size());
  };
  double a = std::log(0.05), b = std::log(20.0);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = nll(c), fd = nll(d);
  for (int it = 0; it < 80; ++it) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - inv_phi * (b - a);
      fc = nll(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + inv_phi * (b - a);
      fd = nll(d);
    }
  }
  return std::exp((a + b) / 2.0);
}

}  // namespace detail

// Adam on the linear stack. Label smoothing and input noise apply to the
// label variant only; the temperature is fitted afterwards on the dev pairs
// (either variant, skipped when dev is empty) and never trained by gradient.
// trace gets one mean training loss per epoch.
inline ConfidenceEstimator train_estimator(
    EstimatorVariant variant, std::size_t n_categories, std::size_t feature_dim,
    const std::vector<ConfidencePair>& train,
    const std::vector<ConfidencePair>& dev, const ConfidenceConfig& cfg,
    std::uint64_t seed, std::vector<double>* trace = nullptr) {
  if (train.empty()) throw std::invalid_argument("train_estimator: no pairs");
  if (cfg.latent_dim == 0 || cfg.batch_size == 0)
    throw std::invalid_argument("train_estimator: bad config");
  for (const auto& pr : train) {
    if (pr.category >= n_categories || pr.self.size() != feature_dim ||
        pr.inter.size() != n_categories * feature_dim)
      throw std::invalid_argument("train_estimator: pair shape mismatch");
  }
  bool calibrated = variant == EstimatorVariant::label;
  double epsilon = calibrated ? cfg.label_smoothing : 0.0;
  double sigma_g = calibrated ? cfg.feature_noise : 0.0;

  ConfidenceEstimator est =
      detail::make_estimator_shape(variant, n_categories, feature_dim, cfg);
  Rng rng(seed);
  detail::init_estimator(est, rng);
  ConfidenceEstimator grad = est, adam_m = est, adam_v = est;

  auto tensors = [](ConfidenceEstimator& e) {
    std::vector<std::vector<double>*> out;
    for (auto& w : e.intra_w) out.push_back(&w);
    for (auto& b : e.intra_b) out.push_back(&b);
    out.push_back(&e.inter_w);
    out.push_back(&e.inter_b);
    out.push_back(&e.head_w1);
    out.push_back(&e.head_b1);
    out.push_back(&e.head_w2);
    return out;
  };
  auto pt = tensors(est), gt = tensors(grad), mt = tensors(adam_m),
       vt = tensors(adam_v);
  auto zero_grad = [&] {
    for (auto* g : gt) std::fill(g->begin(), g->end(), 0.0);
    grad.head_b2 = 0;
  };
  zero_grad();
  for (auto* m : mt) std::fill(m->begin(), m->end(), 0.0);
  for (auto* v : vt) std::fill(v->begin(), v->end(), 0.0);
  adam_m.head_b2 = adam_v.head_b2 = 0;

  const double b1 = 0.9, b2 = 0.999, ae = 1e-8;
  std::size_t step = 0;
  auto adam_step = [&](std::size_t batch_n) {
    ++step;
    double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
    double scale = 1.0 / static_cast<double>(batch_n);
    auto update = [&](double& p, double& g, double& m, double& v) {
      g *= scale;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      p -= cfg.learning_rate * (m / corr1) / (std::sqrt(v / corr2) + ae);
    };
    for (std::size_t k = 0; k < pt.size(); ++k)
      for (std::size_t i = 0; i < pt[k]->size(); ++i)
        update((*pt[k])[i], (*gt[k])[i], (*mt[k])[i], (*vt[k])[i]);
    update(est.head_b2, grad.head_b2, adam_m.head_b2, adam_v.head_b2);
    zero_grad();
  };

  std::size_t L = est.latent, F = feature_dim, MF = n_categories * feature_dim;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> z(F), Z(MF);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    std::size_t done = 0;
    while (done < order.size()) {
      std::size_t batch_n = std::min(cfg.batch_size, order.size() - done);
      for (std::size_t b = 0; b < batch_n; ++b) {
        const ConfidencePair& pr = train[order[done + b]];
        z = pr.self;
        Z = pr.inter;
        if (sigma_g > 0) {
          for (double& x : z) x += sigma_g * rng.normal();
          for (double& x : Z) x += sigma_g * rng.normal();
        }
        detail::ForwardCache fc;
        double s = detail::estimator_logit(est, pr.category, z, Z, &fc);
        double p = detail::sigmoid(s);
        double pc = std::min(std::max(p, 1e-15), 1.0 - 1e-15);
        double y = pr.target * (1.0 - epsilon) + epsilon / 2.0;
        epoch_loss += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        double ds = p - y;

        std::size_t ci = est.shared_intra ? 0 : pr.category;
        std::vector<double> du(L), dh_m(L, 0.0), dh_t(L, 0.0);
        for (std::size_t i = 0; i < L; ++i) {
          du[i] = ds * est.head_w2[i];
          grad.head_w2[i] += ds * fc.u[i];
        }
        grad.head_b2 += ds;
        for (std::size_t i = 0; i < L; ++i) {
          for (std::size_t j = 0; j < L; ++j) {
            grad.head_w1[i * 2 * L + j] += du[i] * fc.h_m[j];
            grad.head_w1[i * 2 * L + L + j] += du[i] * fc.h_t[j];
            dh_m[j] += du[i] * est.head_w1[i * 2 * L + j];
            dh_t[j] += du[i] * est.head_w1[i * 2 * L + L + j];
          }
          grad.head_b1[i] += du[i];
        }
        for (std::size_t i = 0; i < L; ++i) {
          for (std::size_t j = 0; j < F; ++j)
            grad.intra_w[ci][i * F + j] += dh_m[i] * z[j];
          grad.intra_b[ci][i] += dh_m[i];
          if (!est.ablate_inter)
            for (std::size_t j = 0; j < MF; ++j)
              grad.inter_w[i * MF + j] += dh_t[i] * Z[j];
          grad.inter_b[i] += dh_t[i];
        }
      }
      adam_step(batch_n);
      done += batch_n;
    }
    if (trace) trace->push_back(epoch_loss / static_cast<double>(order.size()));
  }

  if (!dev.empty()) est.temperature = detail::fit_temperature(est, dev);
  return est;
}

namespace detail {

// Pairs for one labelled sequence; only trainable cells become pairs. The
// prediction variant (target_is_match) evaluates features at the learner's
// own answer and asks whether it matches the stored label. The label
// variant evaluates features at the stored label itself (target 1), filling
// non-trainable cells with the learner's answer so the inter row stays
// complete.
inline void clean_pairs(const LabelledSequence& ls, const EnsembleModel& model,
                        const EnsembleModel* noisy_model,
                        const CategorySchema& schema, bool target_is_match,
                        std::vector<ConfidencePair>& out) {
  PredictiveGrid pg = predict(model, ls.seq);
  PredictiveGrid ng;
  if (noisy_model) ng = predict(*noisy_model, ls.seq);
  IntGrid cands = predicted_candidates(pg);
  std::size_t M = schema.size();
  if (!target_is_match)
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < M; ++m)
        if (ls.grid.at(t, m).trainable()) cands[t][m] = ls.grid.at(t, m).value;
  FeatureBundle fb =
      assemble_features(pg, cands, noisy_model ? &ng : nullptr, schema);
  for (std::size_t t = 0; t < ls.seq.length; ++t)
    for (std::size_t m = 0; m < M; ++m) {
      const LabelCell& cell = ls.grid.at(t, m);
      if (!cell.trainable()) continue;
      double target = 1.0;
      if (target_is_match)
        target = pg.at(t, m).predicted == cell.value ? 1.0 : 0.0;
      out.push_back({m, fb.cell(t, m), fb.row(t), target});
    }
}

// Pairs for one noisy relabelling of a labelled sequence: candidates are the
// noisy values everywhere, targets say whether they match the stored labels.
inline std::size_t noisy_pairs(const NoisySequence& ns,
                               const LabelledSequence& ls,
                               const EnsembleModel& model,
                               const EnsembleModel& noisy_model,
                               const CategorySchema& schema,
                               std::vector<ConfidencePair>& out) {
  if (ns.id != ls.seq.id)
    throw std::invalid_argument("confidence: noisy dataset id mismatch");
  PredictiveGrid pg = predict(model, ls.seq);
  PredictiveGrid ng = predict(noisy_model, ls.seq);
  IntGrid cands = ns.values;
  FeatureBundle fb = assemble_features(pg, cands, &ng, schema);
  std::size_t negatives = 0;
  for (std::size_t t = 0; t < ls.seq.length; ++t)
    for (std::size_t m = 0; m < schema.size(); ++m) {
      const LabelCell& cell = ls.grid.at(t, m);
      if (!cell.trainable()) continue;
      double target = ns.values[t][m] == cell.value ? 1.0 : 0.0;
      if (target == 0.0) ++negatives;
      out.push_back({m, fb.cell(t, m), fb.row(t), target});
    }
  return negatives;
}

}  // namespace detail

// Build training pairs from the pool (and for the label variant the noisy
// dataset plus a fully-noised copy of the dev split for temperature fitting)
// and train. gen_cfg only steers the dev-side noise synthesis.
inline ConfidenceEstimator fit_estimator(
    EstimatorVariant variant, const EnsembleModel& model,
    const EnsembleModel* noisy_model, const Pool& pool,
    const NoisyDataset* noisy, const CategorySchema& schema,
    const ConfidenceConfig& cfg, const NoisygenConfig& gen_cfg,
    std::uint64_t seed, std::vector<double>* trace = nullptr) {
  if (pool.labelled.empty())
    throw std::invalid_argument("fit_estimator: labelled pool is empty");
  std::size_t M = schema.size();
  std::size_t F = feature_dim_for(variant);
  std::vector<ConfidencePair> train, dev;

  if (variant == EstimatorVariant::prediction) {
    for (const auto& ls : pool.labelled)
      detail::clean_pairs(ls, model, nullptr, schema, true, train);
    if (train.empty())
      throw std::invalid_argument("fit_estimator: no trainable cells");
    // The learner fits its own pool far better than fresh data, which makes
    // raw train-pair confidences optimistic; the dev-fitted temperature
    // absorbs that gap.
    for (const auto& ls : pool.dev)
      detail::clean_pairs(ls, model, nullptr, schema, true, dev);
  } else {
    if (!noisy_model || !noisy)
      throw std::invalid_argument(
          "fit_estimator: label variant needs the noisy model and dataset");
    for (const auto& ls : pool.labelled)
      detail::clean_pairs(ls, model, noisy_model, schema, false, train);
    std::size_t negatives = 0;
    for (const auto& ns : noisy->sequences) {
      if (ns.pool_index >= pool.labelled.size())
        throw std::invalid_argument("fit_estimator: noisy pool index");
      negatives += detail::noisy_pairs(ns, pool.labelled[ns.pool_index], model,
                                       *noisy_model, schema, train);
    }
    if (negatives == 0)
      throw std::invalid_argument(
          "fit_estimator: no negative examples; raise alpha_noise");
    if (!pool.dev.empty()) {
      NoisygenConfig dev_cfg = gen_cfg;
      dev_cfg.alpha_noise = 1.0;
      Rng dev_rng(derive_seed(seed, Stream::dev_noise, 0));
      NoisyDataset dev_noisy =
          build_noisy_dataset(pool.dev, model, dev_cfg, dev_rng, noisy->cycle);
      for (const auto& ls : pool.dev)
        detail::clean_pairs(ls, model, noisy_model, schema, false, dev);
      for (const auto& ns : dev_noisy.sequences)
        detail::noisy_pairs(ns, pool.dev[ns.pool_index], model, *noisy_model,
                            schema, dev);
    }
  }
  return train_estimator(variant, M, F, train, dev, cfg,
                         derive_seed(seed, Stream::estimator, 0), trace);
}

}  // namespace camell
