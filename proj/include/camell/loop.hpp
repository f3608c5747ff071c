#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "camell/acquisition.hpp"
#include "camell/io.hpp"
#include "camell/metrics.hpp"
#include "camell/synth.hpp"

namespace camell {

// ---------------------------------------------------------------------------
// Test-split evaluation.

// Scores argmax predictions of the ensemble against the stored grids, which
// on dev/test carry clean truth. The calibration items are per cell: the
// marginal mass on the predicted value against cell correctness. With the
// joint flag an item is instead one time-step: the product of the predicted
// cells' masses against whole-step correctness. A CI (over whole sequences,
// joint accuracy only) is attached when a generator is supplied.
inline MetricReport evaluate_model(const EnsembleModel& model,
                                   const std::vector<LabelledSequence>& split,
                                   const EvalConfig& cfg,
                                   Rng* ci_rng = nullptr) {
  if (split.empty())
    throw std::invalid_argument("evaluate_model: empty evaluation split");

  std::vector<IntGrid> pred, truth;
  pred.reserve(split.size());
  truth.reserve(split.size());
  std::vector<ConfidenceItem> items;
  for (const auto& ls : split) {
    PredictiveGrid pg = predict(model, ls.seq);
    IntGrid p(pg.length), g(pg.length);
    for (std::size_t t = 0; t < pg.length; ++t) {
      p[t].resize(pg.n_categories);
      g[t].resize(pg.n_categories);
      double step_mass = 1.0;
      bool step_correct = true;
      for (std::size_t m = 0; m < pg.n_categories; ++m) {
        const CellPrediction& c = pg.at(t, m);
        const LabelCell& cell = ls.grid.at(t, m);
        if (cell.value < 0)
          throw std::invalid_argument("evaluate_model: unlabelled cell in '" +
                                      ls.seq.id + "'");
        p[t][m] = c.predicted;
        g[t][m] = cell.value;
        bool correct = c.predicted == cell.value;
        step_mass *= c.marginal.at(static_cast<std::size_t>(c.predicted));
        step_correct = step_correct && correct;
        if (!cfg.joint_ece)
          items.push_back(
              {c.marginal.at(static_cast<std::size_t>(c.predicted)), correct});
      }
      if (cfg.joint_ece) items.push_back({step_mass, step_correct});
    }
    pred.push_back(std::move(p));
    truth.push_back(std::move(g));
  }

  MetricReport rep;
  rep.joint_accuracy = joint_accuracy(pred, truth);
  rep.per_label_accuracy = per_label_accuracy(pred, truth);
  rep.ece = ece(items, cfg.ece_bins);
  for (const auto& g : truth) {
    rep.n_timesteps += g.size();
    for (const auto& row : g) rep.n_cells += row.size();
  }
  if (ci_rng) {
    std::vector<std::size_t> steps(pred.size());
    std::vector<std::size_t> hits(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      steps[i] = pred[i].size();
      for (std::size_t t = 0; t < pred[i].size(); ++t)
        if (pred[i][t] == truth[i][t]) ++hits[i];
    }
    auto metric = [&](const std::vector<std::size_t>& idx) {
      std::size_t s = 0, h = 0;
      for (std::size_t i : idx) {
        s += steps[i];
        h += hits[i];
      }
      return s == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(s);
    };
    rep.joint_ci = bootstrap_ci(metric, pred.size(), cfg.bootstrap_resamples,
                                cfg.ci_level, *ci_rng);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Label validation.

struct ValidationDecision {
  std::size_t cycle = 0;
  std::string id;
  std::size_t t = 0;
  std::size_t m = 0;
  int value = -1;
  double p_tilde = 0;
  bool masked = false;
};

struct Replacement {
  std::string id;
  std::size_t t = 0;
  std::size_t m = 0;
  int old_value = -1;
  int new_value = -1;
  double p_tilde = 0;  // label-variant score of the stored value
  double p = 0;        // prediction-variant score of the model's candidate
};

struct ValidationReport {
  std::vector<ValidationDecision> decisions;
  std::size_t kept = 0;
  std::size_t masked = 0;
  // Offline correction only: cells whose stored value was replaced, and the
  // count of flagged cells kept because the model offered nothing stronger.
  std::vector<Replacement> replacements;
  std::size_t flagged_kept = 0;
};

// Scores each answer with the label-variant estimator on features assembled
// at the answered values and masks exactly those with p-tilde strictly below
// the threshold. The bundle must cover the answered sequence.
inline ValidationReport validate_labels(const std::vector<ExpertAnswer>& answers,
                                        const ConfidenceEstimator& est,
                                        const FeatureBundle& features,
                                        double alpha_val) {
  if (est.variant != EstimatorVariant::label)
    throw std::invalid_argument(
        "validate_labels: needs the label-variant estimator");
  if (!(alpha_val > 0.0 && alpha_val < 1.0))
    throw std::invalid_argument("validate_labels: threshold outside (0,1)");
  ValidationReport rep;
  rep.decisions.reserve(answers.size());
  for (const auto& a : answers) {
    double p = score_cell(est, a.m, features.cell(a.t, a.m), features.row(a.t));
    bool masked = p < alpha_val;
    rep.decisions.push_back({0, a.id, a.t, a.m, a.value, p, masked});
    if (masked)
      ++rep.masked;
    else
      ++rep.kept;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Validation-threshold tuning.

// Simulates the expert on every dev cell at the configured corruption rate,
// scores the answers with the label-variant estimator, and picks the grid
// threshold i/(n+1) maximising F1 of corruption detection (flag = score
// strictly below threshold, positive = answer recorded in the corruption
// log). Ties resolve to the smallest threshold. A dev simulation with no
// corruptions leaves F1 undefined everywhere and is reported as an error.
inline double tune_alpha_val(const ConfidenceEstimator& est,
                             const EnsembleModel& model,
                             const EnsembleModel& noisy_model,
                             const std::vector<LabelledSequence>& dev,
                             const CategorySchema& schema,
                             const NoiseConfig& noise,
                             std::size_t grid_points, std::uint64_t seed) {
  if (est.variant != EstimatorVariant::label)
    throw std::invalid_argument(
        "tune_alpha_val: needs the label-variant estimator");
  if (dev.empty()) throw std::invalid_argument("tune_alpha_val: empty dev split");
  if (grid_points == 0)
    throw std::invalid_argument("tune_alpha_val: need at least one threshold");

  std::vector<GroundTruthRecord> truth(dev.size());
  std::vector<LabelRequest> requests;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    const LabelledSequence& ls = dev[i];
    truth[i].id = ls.seq.id;
    truth[i].truth.assign(ls.seq.length,
                          std::vector<int>(schema.size(), 0));
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m) {
        truth[i].truth[t][m] = ls.grid.at(t, m).value;
        requests.push_back({ls.seq.id, t, m});
      }
  }
  Rng rng(seed);
  std::vector<ExpertAnswer> answers =
      expert_labels(requests, truth, schema, noise, rng);

  std::set<std::tuple<std::string, std::size_t, std::size_t>> corrupted;
  for (const auto& rec : truth)
    for (const auto& c : rec.corruption_log)
      corrupted.insert({rec.id, c.t, c.m});
  if (corrupted.empty())
    throw std::runtime_error(
        "tune_alpha_val: simulated expert produced no corruptions on dev; "
        "raise noise.rate or enlarge the dev split");

  // Scores follow answer order; positives follow the corruption log.
  std::vector<double> scores;
  std::vector<bool> positive;
  std::size_t next = 0;
  for (const auto& ls : dev) {
    PredictiveGrid pg = predict(model, ls.seq);
    PredictiveGrid ng = predict(noisy_model, ls.seq);
    IntGrid candidates(ls.seq.length,
                       std::vector<int>(schema.size(), -1));
    std::size_t first = next;
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m) {
        const ExpertAnswer& a = answers.at(next++);
        candidates[a.t][a.m] = a.value;
      }
    FeatureBundle fb = assemble_features(pg, candidates, &ng, schema);
    for (std::size_t k = first; k < next; ++k) {
      const ExpertAnswer& a = answers[k];
      scores.push_back(
          score_cell(est, a.m, fb.cell(a.t, a.m), fb.row(a.t)));
      positive.push_back(corrupted.count({a.id, a.t, a.m}) > 0);
    }
  }

  double best_alpha = 0, best_f1 = -1;
  for (std::size_t i = 1; i <= grid_points; ++i) {
    double alpha =
        static_cast<double>(i) / static_cast<double>(grid_points + 1);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      bool flag = scores[k] < alpha;
      if (flag && positive[k]) ++tp;
      if (flag && !positive[k]) ++fp;
      if (!flag && positive[k]) ++fn;
    }
    double f1 = tp == 0 ? 0.0
                        : 2.0 * static_cast<double>(tp) /
                              static_cast<double>(2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

// ---------------------------------------------------------------------------
// The learning loop.

struct CycleMetrics {
  std::size_t cycle = 0;
  std::size_t sequences_labelled = 0;
  std::size_t expert_labels_spent = 0;
  double joint_acc = 0;
  double per_label_acc = 0;
  double ece = 0;
};

struct CycleState {
  std::size_t cycle = 0;
  std::size_t n_sel = 1;  // fixed at seeding time from the initial pool size
  Pool pool;
  CategorySchema schema;
  EnsembleModel model;
  ConfidenceEstimator pred_est;
  ConfidenceEstimator label_est;
  bool has_pred_est = false;
  bool has_label_est = false;
  EnsembleModel noisy_model;
  NoisyDataset noisy;
  bool has_noisy = false;
  double alpha_val = 0.5;
  std::size_t expert_labels_spent = 0;
  std::vector<CycleMetrics> history;
  std::vector<ValidationDecision> validation_log;
  bool terminal = false;
};

// A run owns a private copy of the ground truth: the simulated expert logs
// its corruptions into it as the run spends labels.
struct Experiment {
  std::vector<GroundTruthRecord> truth;
  CycleState state;
};

namespace detail {

// Retrains everything the strategy consumes next cycle, from scratch, then
// appends the metrics row for the just-finished cycle. Strategies that never
// read an estimator skip those fits; the skipped fits have no other effect
// because every fit draws from its own seed stream.
inline void refit_models(CycleState& st, Strategy strategy,
                         const ExperimentConfig& cfg, std::uint64_t run_seed) {
  const std::size_t c = st.cycle;
  st.model = fit(st.pool.labelled, st.schema, cfg.learner,
                 derive_seed(run_seed, Stream::member, c));

  bool wants_pred = strategy == Strategy::camell ||
                    strategy == Strategy::camel || strategy == Strategy::caml;
  st.has_pred_est = false;
  st.has_label_est = false;
  st.has_noisy = false;
  if (wants_pred) {
    st.pred_est = fit_estimator(EstimatorVariant::prediction, st.model,
                                nullptr, st.pool, nullptr, st.schema,
                                cfg.confidence, cfg.noisygen,
                                derive_seed(run_seed, Stream::estimator, 2 * c));
    st.has_pred_est = true;
  }
  if (strategy == Strategy::camell) {
    Rng gen_rng(derive_seed(run_seed, Stream::noisygen, 2 * c));
    st.noisy =
        build_noisy_dataset(st.pool.labelled, st.model, cfg.noisygen, gen_rng, c);
    st.noisy_model =
        fit_noisy_model(st.noisy, st.pool.labelled, st.schema, cfg.learner,
                        cfg.noisygen,
                        derive_seed(run_seed, Stream::noisygen, 2 * c + 1));
    st.has_noisy = true;
    st.label_est = fit_estimator(
        EstimatorVariant::label, st.model, &st.noisy_model, st.pool, &st.noisy,
        st.schema, cfg.confidence, cfg.noisygen,
        derive_seed(run_seed, Stream::estimator, 2 * c + 1));
    st.has_label_est = true;
    st.alpha_val = tune_alpha_val(st.label_est, st.model, st.noisy_model,
                                  st.pool.dev, st.schema, cfg.noise,
                                  cfg.loop.alpha_val_grid_points,
                                  derive_seed(run_seed, Stream::dev_noise, c));
  }

  MetricReport rep = evaluate_model(st.model, st.pool.test, cfg.eval);
  st.history.push_back({c, st.pool.labelled.size(), st.expert_labels_spent,
                        rep.joint_accuracy, rep.per_label_accuracy, rep.ece});
}

}  // namespace detail

// Generates the task, expert-labels a seed pool (whole sequences, every
// cell), trains the first models and writes history row zero. The selection
// size is fixed here as ceil(select_fraction * train size) and never shrinks
// with the pool.
inline Experiment init_experiment(const ExperimentConfig& cfg,
                                  Strategy strategy, std::uint64_t run_seed) {
  validate_config(cfg);
  GeneratedTask task = generate_dataset(cfg.task);
  Experiment exp;
  exp.truth = std::move(task.truth);
  CycleState& st = exp.state;
  st.pool = std::move(task.pool);
  st.schema = std::move(task.schema);

  const std::size_t n_train = st.pool.unlabelled.size();
  if (n_train == 0)
    throw std::invalid_argument("init_experiment: no training sequences");
  st.n_sel = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.acquisition.select_fraction *
                       static_cast<double>(n_train))));
  const std::size_t n_seed = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(
             cfg.loop.seed_fraction * static_cast<double>(n_train))));

  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  Rng pick(derive_seed(run_seed, Stream::seed_selection, 0));
  pick.shuffle(order);
  order.resize(n_seed);
  std::sort(order.begin(), order.end());

  Rng expert_rng(derive_seed(run_seed, Stream::expert, 0));
  std::vector<Sequence> rest;
  rest.reserve(n_train - n_seed);
  std::size_t next_seed = 0;
  for (std::size_t i = 0; i < st.pool.unlabelled.size(); ++i) {
    Sequence& seq = st.pool.unlabelled[i];
    if (next_seed < order.size() && order[next_seed] == i) {
      ++next_seed;
      std::vector<LabelRequest> requests;
      for (std::size_t t = 0; t < seq.length; ++t)
        for (std::size_t m = 0; m < st.schema.size(); ++m)
          requests.push_back({seq.id, t, m});
      std::vector<ExpertAnswer> answers =
          expert_labels(requests, exp.truth, st.schema, cfg.noise, expert_rng);
      LabelGrid grid(seq.length, st.schema.size());
      for (const auto& a : answers) {
        LabelCell& cell = grid.at(a.t, a.m);
        cell.value = a.value;
        cell.provenance = Provenance::expert;
      }
      st.expert_labels_spent += answers.size();
      st.pool.labelled.push_back({std::move(seq), std::move(grid)});
    } else {
      rest.push_back(std::move(seq));
    }
  }
  st.pool.unlabelled = std::move(rest);

  detail::refit_models(st, strategy, cfg, run_seed);
  return exp;
}

// One acquisition cycle: select, query the expert on the queried cells,
// self-label the rest, validate the answers when the strategy does, move the
// sequences into the labelled pool, then retrain and append the metrics row.
// On an already-exhausted pool the state is only marked terminal.
inline void run_cycle(Experiment& exp, Strategy strategy,
                      const ExperimentConfig& cfg, std::uint64_t run_seed) {
  CycleState& st = exp.state;
  if (st.pool.unlabelled.empty()) {
    st.terminal = true;
    return;
  }
  const std::size_t c = st.cycle + 1;

  SelectionResult sel;
  switch (strategy) {
    case Strategy::camell:
    case Strategy::camel:
      if (!st.has_pred_est)
        throw std::logic_error("run_cycle: estimator not fitted");
      sel = select_camell(st.pool.unlabelled, st.model, st.pred_est, st.schema,
                          st.n_sel, true);
      break;
    case Strategy::caml:
      if (!st.has_pred_est)
        throw std::logic_error("run_cycle: estimator not fitted");
      sel = select_camell(st.pool.unlabelled, st.model, st.pred_est, st.schema,
                          st.n_sel, false);
      break;
    case Strategy::bald:
      sel = select_bald(st.pool.unlabelled, st.model, st.n_sel,
                        BaldVariant::whole_sequence, cfg.acquisition.bald_sum);
      break;
    case Strategy::bald_ss:
      sel = select_bald(st.pool.unlabelled, st.model, st.n_sel,
                        BaldVariant::with_self_supervision,
                        cfg.acquisition.bald_sum);
      break;
    case Strategy::random_sel: {
      Rng rng(derive_seed(run_seed, Stream::selection, c));
      sel = select_random(st.pool.unlabelled, st.schema, st.n_sel, rng);
      break;
    }
    case Strategy::diversity:
      sel = select_diversity(st.pool.unlabelled, st.pool.labelled, st.model,
                             st.schema, st.n_sel);
      break;
  }

  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < st.pool.unlabelled.size(); ++i)
    index_of[st.pool.unlabelled[i].id] = i;

  Rng expert_rng(derive_seed(run_seed, Stream::expert, c));
  std::set<std::size_t> taken;
  for (std::size_t k = 0; k < sel.selected_ids.size(); ++k) {
    const std::string& id = sel.selected_ids[k];
    const Sequence& seq = st.pool.unlabelled.at(index_of.at(id));
    taken.insert(index_of.at(id));

    std::vector<LabelRequest> requests;
    requests.reserve(sel.query_positions[k].size());
    for (auto [t, m] : sel.query_positions[k]) requests.push_back({id, t, m});
    std::vector<ExpertAnswer> answers =
        expert_labels(requests, exp.truth, st.schema, cfg.noise, expert_rng);
    std::vector<LabelUpdate> self_updates =
        self_label(st.model, seq, sel.self_positions[k]);

    LabelGrid grid(seq.length, st.schema.size());
    for (const auto& u : self_updates) {
      LabelCell& cell = grid.at(u.t, u.m);
      cell.value = u.value;
      cell.provenance = u.provenance;
    }

    std::size_t kept = 0;
    if (strategy == Strategy::camell) {
      // Candidates for validation features: the answer under test at queried
      // cells, the model's own labels elsewhere.
      PredictiveGrid pg = predict(st.model, seq);
      PredictiveGrid ng = predict(st.noisy_model, seq);
      IntGrid candidates = predicted_candidates(pg);
      for (const auto& a : answers) candidates[a.t][a.m] = a.value;
      FeatureBundle fb = assemble_features(pg, candidates, &ng, st.schema);
      ValidationReport vrep =
          validate_labels(answers, st.label_est, fb, st.alpha_val);
      for (std::size_t j = 0; j < answers.size(); ++j) {
        const ExpertAnswer& a = answers[j];
        LabelCell& cell = grid.at(a.t, a.m);
        cell.value = a.value;
        cell.provenance = vrep.decisions[j].masked ? Provenance::masked
                                                   : Provenance::expert;
        cell.confidence = vrep.decisions[j].p_tilde;
      }
      kept = vrep.kept;
      for (ValidationDecision d : vrep.decisions) {
        d.cycle = c;
        st.validation_log.push_back(std::move(d));
      }
    } else {
      for (const auto& a : answers) {
        LabelCell& cell = grid.at(a.t, a.m);
        cell.value = a.value;
        cell.provenance = Provenance::expert;
      }
      kept = answers.size();
    }
    st.expert_labels_spent +=
        cfg.loop.count_masked_in_budget ? answers.size() : kept;
    st.pool.labelled.push_back({seq, std::move(grid)});
  }

  std::vector<Sequence> rest;
  rest.reserve(st.pool.unlabelled.size() - taken.size());
  for (std::size_t i = 0; i < st.pool.unlabelled.size(); ++i)
    if (!taken.count(i)) rest.push_back(std::move(st.pool.unlabelled[i]));
  st.pool.unlabelled = std::move(rest);

  st.cycle = c;
  detail::refit_models(st, strategy, cfg, run_seed);
  if (st.pool.unlabelled.empty()) st.terminal = true;
}

// ---------------------------------------------------------------------------
// Whole runs and their artifacts.

// Joint accuracy of a model trained on the expert-labelled full train split;
// the stopping target is a fraction of it.
inline double reference_accuracy(const ExperimentConfig& cfg,
                                 std::uint64_t run_seed) {
  GeneratedTask task = generate_dataset(cfg.task);
  Rng expert_rng(derive_seed(run_seed, Stream::reference, 0));
  std::vector<LabelledSequence> labelled;
  labelled.reserve(task.pool.unlabelled.size());
  for (Sequence& seq : task.pool.unlabelled) {
    std::vector<LabelRequest> requests;
    for (std::size_t t = 0; t < seq.length; ++t)
      for (std::size_t m = 0; m < task.schema.size(); ++m)
        requests.push_back({seq.id, t, m});
    std::vector<ExpertAnswer> answers =
        expert_labels(requests, task.truth, task.schema, cfg.noise, expert_rng);
    LabelGrid grid(seq.length, task.schema.size());
    for (const auto& a : answers) {
      LabelCell& cell = grid.at(a.t, a.m);
      cell.value = a.value;
      cell.provenance = Provenance::expert;
    }
    labelled.push_back({std::move(seq), std::move(grid)});
  }
  EnsembleModel model = fit(labelled, task.schema, cfg.learner,
                            derive_seed(run_seed, Stream::reference, 1));
  return evaluate_model(model, task.pool.test, cfg.eval).joint_accuracy;
}

inline void write_cycles_csv(const std::vector<CycleMetrics>& history,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "cycle,sequences_labelled,expert_labels_spent,joint_acc,per_label_"
         "acc,ece\n";
  for (const auto& row : history)
    out << row.cycle << "," << row.sequences_labelled << ","
        << row.expert_labels_spent << "," << fmt_double(row.joint_acc) << ","
        << fmt_double(row.per_label_acc) << "," << fmt_double(row.ece) << "\n";
}

inline void write_validation_log(const std::vector<ValidationDecision>& log,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "cycle,id,t,m,value,p_tilde,decision\n";
  for (const auto& d : log)
    out << d.cycle << "," << d.id << "," << d.t << "," << d.m << ","
        << d.value << "," << fmt_double(d.p_tilde) << ","
        << (d.masked ? "masked" : "kept") << "\n";
}

// Runs one strategy at one seed until the pool is exhausted, the stopping
// target is reached, or the cycle cap hits. Artifacts land in out_dir (kept
// in-memory only when it is empty): the exact config, the run identity, the
// per-cycle curve, the validation log (when the strategy validates) and the
// final dataset. Two runs with the same config and seed write byte-identical
// artifacts.
inline Experiment run_experiment(const ExperimentConfig& cfg, Strategy strategy,
                                 std::uint64_t run_seed,
                                 const std::string& out_dir = "") {
  validate_config(cfg);
  double target = 2.0;  // joint accuracy never reaches it: run to exhaustion
  if (cfg.loop.target_accuracy >= 0.0) {
    target = cfg.loop.target_accuracy;
  } else if (cfg.loop.target_fraction > 0.0) {
    target = cfg.loop.target_fraction * reference_accuracy(cfg, run_seed);
  }

  Experiment exp = init_experiment(cfg, strategy, run_seed);
  while (!exp.state.terminal && exp.state.history.back().joint_acc < target &&
         (cfg.loop.max_cycles == 0 || exp.state.cycle < cfg.loop.max_cycles))
    run_cycle(exp, strategy, cfg, run_seed);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream cfg_out(out_dir + "/config.snapshot");
    cfg_out << format_config(cfg);
    std::ofstream run_out(out_dir + "/run.txt");
    run_out << "strategy = " << strategy_name(strategy) << "\n"
            << "seed = " << run_seed << "\n"
            << "target_joint_acc = " << fmt_double(target) << "\n"
            << "terminal = " << (exp.state.terminal ? 1 : 0) << "\n";
    write_cycles_csv(exp.state.history, out_dir + "/cycles.csv");
    if (strategy == Strategy::camell)
      write_validation_log(exp.state.validation_log,
                           out_dir + "/validation.log");
    save_dataset(exp.state.pool, exp.state.schema, out_dir + "/dataset.final");
  }
  return exp;
}

// ---------------------------------------------------------------------------
// Offline dataset correction.

// Sweeps a labelled dataset once: each cell's stored value is scored by the
// label-variant estimator, and each flagged cell is replaced by the model's
// candidate when the prediction-variant score beats the stored value's, else
// kept untouched. Replaced cells get provenance `corrected`, so a second
// sweep sees the same values and scores and changes nothing.
inline std::pair<std::vector<LabelledSequence>, ValidationReport>
correct_dataset(const std::vector<LabelledSequence>& labelled,
                const EnsembleModel& model, const ConfidenceEstimator& pred_est,
                const ConfidenceEstimator& label_est,
                const EnsembleModel& noisy_model, double alpha_val,
                const CategorySchema& schema) {
  if (pred_est.variant != EstimatorVariant::prediction)
    throw std::invalid_argument(
        "correct_dataset: needs the prediction-variant estimator");
  if (label_est.variant != EstimatorVariant::label)
    throw std::invalid_argument(
        "correct_dataset: needs the label-variant estimator");
  if (!(alpha_val > 0.0 && alpha_val < 1.0))
    throw std::invalid_argument("correct_dataset: threshold outside (0,1)");

  std::vector<LabelledSequence> out = labelled;
  ValidationReport rep;
  for (LabelledSequence& ls : out) {
    PredictiveGrid pg = predict(model, ls.seq);
    PredictiveGrid ng = predict(noisy_model, ls.seq);
    IntGrid stored(ls.seq.length, std::vector<int>(schema.size(), -1));
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m) {
        stored[t][m] = ls.grid.at(t, m).value;
        if (stored[t][m] < 0)
          throw std::invalid_argument("correct_dataset: unlabelled cell in '" +
                                      ls.seq.id + "'");
      }
    IntGrid candidates = predicted_candidates(pg);
    FeatureBundle label_fb = assemble_features(pg, stored, &ng, schema);
    FeatureBundle pred_fb = assemble_features(pg, candidates, nullptr, schema);

    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < schema.size(); ++m) {
        double p_tilde =
            score_cell(label_est, m, label_fb.cell(t, m), label_fb.row(t));
        bool flagged = p_tilde < alpha_val;
        rep.decisions.push_back(
            {0, ls.seq.id, t, m, stored[t][m], p_tilde, flagged});
        if (!flagged) {
          ++rep.kept;
          continue;
        }
        ++rep.masked;
        double p = score_cell(pred_est, m, pred_fb.cell(t, m), pred_fb.row(t));
        if (p > p_tilde) {
          LabelCell& cell = ls.grid.at(t, m);
          rep.replacements.push_back({ls.seq.id, t, m, cell.value,
                                      candidates[t][m], p_tilde, p});
          cell.value = candidates[t][m];
          cell.provenance = Provenance::corrected;
          cell.confidence = p;
        } else {
          ++rep.flagged_kept;
        }
      }
  }
  return {std::move(out), rep};
}

}  // namespace camell
