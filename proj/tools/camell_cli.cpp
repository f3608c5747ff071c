// Command-line front end: dataset generation, active-learning runs over one
// or several seeds, offline label correction, model evaluation and quick
// reports over run directories.
#include <CLI11.hpp>

#include <camell/camell.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

camell::ExperimentConfig load_config(const std::string& path) {
  camell::ExperimentConfig cfg;
  if (!path.empty())
    cfg = camell::parse_config(camell::read_text_file(path));
  camell::validate_config(cfg);
  return cfg;
}

int run_gen(const std::string& config_path, const std::string& out_path,
            const std::string& truth_path) {
  camell::ExperimentConfig cfg = load_config(config_path);
  camell::GeneratedTask task = camell::generate_dataset(cfg.task);
  camell::save_dataset(task.pool, task.schema, out_path);
  std::printf("wrote %s: %zu train / %zu dev / %zu test sequences\n",
              out_path.c_str(), task.pool.unlabelled.size(),
              task.pool.dev.size(), task.pool.test.size());
  if (!truth_path.empty()) {
    camell::save_truth(task.truth, truth_path);
    std::printf("wrote %s: %zu ground-truth records\n", truth_path.c_str(),
                task.truth.size());
  }
  return 0;
}

struct SeedSummary {
  std::uint64_t run_seed = 0;
  std::vector<camell::CycleMetrics> history;
};

void write_aggregate(const std::vector<SeedSummary>& runs,
                     const std::string& path) {
  std::size_t rows = runs.front().history.size();
  for (const auto& r : runs) rows = std::min(rows, r.history.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "cycle,sequences_labelled,expert_labels_spent,joint_acc_mean,"
         "joint_acc_lo,joint_acc_hi,per_label_acc_mean,ece_mean\n";
  const double n = static_cast<double>(runs.size());
  for (std::size_t c = 0; c < rows; ++c) {
    double seq = 0, spent = 0, joint = 0, per_label = 0, e = 0;
    for (const auto& r : runs) {
      seq += static_cast<double>(r.history[c].sequences_labelled);
      spent += static_cast<double>(r.history[c].expert_labels_spent);
      joint += r.history[c].joint_acc;
      per_label += r.history[c].per_label_acc;
      e += r.history[c].ece;
    }
    seq /= n;
    spent /= n;
    joint /= n;
    per_label /= n;
    e /= n;
    double var = 0;
    for (const auto& r : runs) {
      double d = r.history[c].joint_acc - joint;
      var += d * d;
    }
    // Normal-approximation band over seeds; degenerate with one seed.
    double half =
        runs.size() > 1 ? 1.96 * std::sqrt(var / (n - 1.0) / n) : 0.0;
    out << c << "," << camell::fmt_double(seq) << ","
        << camell::fmt_double(spent) << "," << camell::fmt_double(joint) << ","
        << camell::fmt_double(joint - half) << ","
        << camell::fmt_double(joint + half) << ","
        << camell::fmt_double(per_label) << "," << camell::fmt_double(e)
        << "\n";
  }
}

int run_run(const std::string& config_path, const std::string& out_dir,
            const std::string& strategy_name_arg, std::size_t seeds,
            std::uint64_t base_seed) {
  camell::ExperimentConfig cfg = load_config(config_path);
  camell::Strategy strategy = camell::strategy_from_name(strategy_name_arg);
  if (seeds == 0) throw std::invalid_argument("--seeds must be >= 1");
  std::filesystem::create_directories(out_dir);

  std::vector<SeedSummary> runs;
  for (std::size_t k = 0; k < seeds; ++k) {
    std::uint64_t run_seed =
        camell::derive_seed(base_seed, camell::Stream::run, k);
    std::string dir = out_dir + "/seed-" + std::to_string(k);
    camell::Experiment exp =
        camell::run_experiment(cfg, strategy, run_seed, dir);
    camell::save_model(exp.state.model, dir + "/model.final");
    const camell::CycleMetrics& last = exp.state.history.back();
    std::printf(
        "seed %zu: %zu cycles, %zu sequences, %zu expert labels, "
        "joint %.4f, per-label %.4f\n",
        k, last.cycle, last.sequences_labelled, last.expert_labels_spent,
        last.joint_acc, last.per_label_acc);
    runs.push_back({run_seed, exp.state.history});
  }
  write_aggregate(runs, out_dir + "/aggregate.csv");
  std::printf("wrote %s/aggregate.csv over %zu seed(s)\n", out_dir.c_str(),
              seeds);
  return 0;
}

int run_correct(const std::string& config_path, const std::string& dataset_path,
                const std::string& out_path, const std::string& report_path,
                std::uint64_t seed) {
  camell::ExperimentConfig cfg = load_config(config_path);
  camell::Dataset ds = camell::load_dataset(dataset_path);
  if (ds.pool.labelled.empty())
    throw std::invalid_argument("correct: dataset has no labelled sequences");
  if (ds.pool.dev.empty())
    throw std::invalid_argument(
        "correct: dataset has no dev split to tune the threshold on");

  camell::EnsembleModel model =
      camell::fit(ds.pool.labelled, ds.schema, cfg.learner,
                  camell::derive_seed(seed, camell::Stream::member, 0));
  camell::Rng gen_rng(camell::derive_seed(seed, camell::Stream::noisygen, 0));
  camell::NoisyDataset noisy =
      camell::build_noisy_dataset(ds.pool.labelled, model, cfg.noisygen,
                                  gen_rng);
  camell::EnsembleModel noisy_model = camell::fit_noisy_model(
      noisy, ds.pool.labelled, ds.schema, cfg.learner, cfg.noisygen,
      camell::derive_seed(seed, camell::Stream::noisygen, 1));
  camell::ConfidenceEstimator pred_est = camell::fit_estimator(
      camell::EstimatorVariant::prediction, model, nullptr, ds.pool, nullptr,
      ds.schema, cfg.confidence, cfg.noisygen,
      camell::derive_seed(seed, camell::Stream::estimator, 0));
  camell::ConfidenceEstimator label_est = camell::fit_estimator(
      camell::EstimatorVariant::label, model, &noisy_model, ds.pool, &noisy,
      ds.schema, cfg.confidence, cfg.noisygen,
      camell::derive_seed(seed, camell::Stream::estimator, 1));
  double alpha_val = camell::tune_alpha_val(
      label_est, model, noisy_model, ds.pool.dev, ds.schema, cfg.noise,
      cfg.loop.alpha_val_grid_points,
      camell::derive_seed(seed, camell::Stream::dev_noise, 0));

  auto [fixed, rep] =
      camell::correct_dataset(ds.pool.labelled, model, pred_est, label_est,
                              noisy_model, alpha_val, ds.schema);
  camell::Pool out_pool = ds.pool;
  out_pool.labelled = fixed;
  camell::save_dataset(out_pool, ds.schema, out_path);

  std::ostringstream report;
  report << "alpha_val = " << camell::fmt_double(alpha_val) << "\n"
         << "cells = " << rep.decisions.size() << "\n"
         << "kept = " << rep.kept << "\n"
         << "flagged = " << rep.masked << "\n"
         << "replaced = " << rep.replacements.size() << "\n"
         << "flagged_kept = " << rep.flagged_kept << "\n";
  for (const auto& r : rep.replacements)
    report << "replace id=" << r.id << " t=" << r.t << " m=" << r.m
           << " old=" << r.old_value << " new=" << r.new_value
           << " p_tilde=" << camell::fmt_double(r.p_tilde)
           << " p=" << camell::fmt_double(r.p) << "\n";
  if (!report_path.empty())
    camell::write_text_file(report_path, report.str());
  std::printf("%s", report.str().c_str());
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int run_eval(const std::string& config_path, const std::string& dataset_path,
             const std::string& model_path, bool with_ci, std::uint64_t seed) {
  camell::ExperimentConfig cfg = load_config(config_path);
  camell::Dataset ds = camell::load_dataset(dataset_path);
  if (ds.pool.test.empty())
    throw std::invalid_argument("eval: dataset has no test split");

  camell::EnsembleModel model;
  if (!model_path.empty()) {
    model = camell::load_model(model_path);
  } else {
    if (ds.pool.labelled.empty())
      throw std::invalid_argument(
          "eval: no model given and no labelled sequences to train on");
    model = camell::fit(ds.pool.labelled, ds.schema, cfg.learner,
                        camell::derive_seed(seed, camell::Stream::member, 0));
  }

  camell::MetricReport rep;
  if (with_ci) {
    camell::Rng rng(camell::derive_seed(seed, camell::Stream::bootstrap, 0));
    rep = camell::evaluate_model(model, ds.pool.test, cfg.eval, &rng);
  } else {
    rep = camell::evaluate_model(model, ds.pool.test, cfg.eval);
  }
  std::printf("joint_acc = %.6f\n", rep.joint_accuracy);
  std::printf("per_label_acc = %.6f\n", rep.per_label_accuracy);
  std::printf("ece = %.6f\n", rep.ece);
  std::printf("timesteps = %zu, cells = %zu\n", rep.n_timesteps, rep.n_cells);
  if (rep.joint_ci)
    std::printf("joint_acc_ci = [%.6f, %.6f]\n", rep.joint_ci->lower,
                rep.joint_ci->upper);
  return 0;
}

std::vector<std::map<std::string, std::string>> read_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("'" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    std::map<std::string, std::string> row;
    for (const auto& h : header) {
      if (!std::getline(ss, f, ','))
        throw std::runtime_error("'" + path + "': short row");
      row[h] = f;
    }
    rows.push_back(row);
  }
  return rows;
}

int run_report(const std::string& dir, double target) {
  namespace fs = std::filesystem;
  std::vector<std::string> curves;
  if (fs::exists(fs::path(dir) / "cycles.csv"))
    curves.push_back((fs::path(dir) / "cycles.csv").string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() &&
        fs::exists(entry.path() / "cycles.csv"))
      curves.push_back((entry.path() / "cycles.csv").string());
  }
  std::sort(curves.begin(), curves.end());
  if (curves.empty())
    throw std::runtime_error("no cycles.csv found under '" + dir + "'");

  for (const auto& path : curves) {
    auto rows = read_csv(path);
    if (rows.empty()) continue;
    const auto& last = rows.back();
    std::printf("%s: %zu cycles, final joint %.4f with %s expert labels",
                path.c_str(), rows.size() - 1,
                std::stod(last.at("joint_acc")),
                last.at("expert_labels_spent").c_str());
    if (target > 0) {
      bool hit = false;
      for (const auto& row : rows)
        if (std::stod(row.at("joint_acc")) >= target) {
          std::printf("; target %.3f at %s labels (cycle %s)", target,
                      row.at("expert_labels_spent").c_str(),
                      row.at("cycle").c_str());
          hit = true;
          break;
        }
      if (!hit) std::printf("; target %.3f not reached", target);
    }
    std::printf("\n");
  }
  std::string agg = (fs::path(dir) / "aggregate.csv").string();
  if (fs::exists(agg)) {
    auto rows = read_csv(agg);
    if (!rows.empty()) {
      const auto& last = rows.back();
      std::printf("aggregate: final joint %.4f [%.4f, %.4f] over seeds\n",
                  std::stod(last.at("joint_acc_mean")),
                  std::stod(last.at("joint_acc_lo")),
                  std::stod(last.at("joint_acc_hi")));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "confidence-driven active labelling on synthetic sequence tasks"};
  app.require_subcommand(0, 1);

  std::string config_path;
  app.add_option("-c,--config", config_path,
                 "configuration file (INI), defaults apply when omitted");

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out = "dataset.txt", gen_truth;
  gen->add_option("-o,--out", gen_out, "dataset file to write");
  gen->add_option("--truth", gen_truth, "also write the ground-truth records");

  auto* run = app.add_subcommand("run", "run active learning over seeds");
  std::string run_out = "runs", run_strategy = "camell";
  std::size_t run_seeds = 1;
  std::uint64_t run_base_seed = 1;
  run->add_option("-o,--out", run_out, "output directory");
  run->add_option("-s,--strategy", run_strategy,
                  "camell|camel|caml|bald|bald-ss|random|diversity");
  run->add_option("--seeds", run_seeds, "number of independent runs");
  run->add_option("--seed", run_base_seed, "base seed for the runs");

  auto* correct = app.add_subcommand("correct", "correct a labelled dataset");
  std::string cor_dataset, cor_out = "corrected.txt", cor_report;
  std::uint64_t cor_seed = 1;
  correct->add_option("-d,--dataset", cor_dataset, "dataset to correct")
      ->required();
  correct->add_option("-o,--out", cor_out, "corrected dataset to write");
  correct->add_option("--report", cor_report, "also write the decision report");
  correct->add_option("--seed", cor_seed, "seed for the correction models");

  auto* eval = app.add_subcommand("eval", "evaluate on a dataset's test split");
  std::string eval_dataset, eval_model;
  bool eval_ci = false;
  std::uint64_t eval_seed = 1;
  eval->add_option("-d,--dataset", eval_dataset, "dataset file")->required();
  eval->add_option("-m,--model", eval_model,
                   "model checkpoint; trains on the labelled split if omitted");
  eval->add_flag("--ci", eval_ci, "bootstrap a joint-accuracy CI");
  eval->add_option("--seed", eval_seed, "seed for training and the bootstrap");

  auto* report = app.add_subcommand("report", "summarise a run directory");
  std::string rep_dir = "runs";
  double rep_target = 0;
  report->add_option("-d,--dir", rep_dir, "run directory");
  report->add_option("--target", rep_target,
                     "also report labels spent to reach this joint accuracy");

  bool print_config = false;
  app.add_flag("--print-config", print_config,
               "echo the effective configuration and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_config) {
      camell::ExperimentConfig cfg = load_config(config_path);
      std::fputs(camell::format_config(cfg).c_str(), stdout);
      return 0;
    }
    if (gen->parsed()) return run_gen(config_path, gen_out, gen_truth);
    if (run->parsed())
      return run_run(config_path, run_out, run_strategy, run_seeds,
                     run_base_seed);
    if (correct->parsed())
      return run_correct(config_path, cor_dataset, cor_out, cor_report,
                         cor_seed);
    if (eval->parsed())
      return run_eval(config_path, eval_dataset, eval_model, eval_ci,
                      eval_seed);
    if (report->parsed()) return run_report(rep_dir, rep_target);
    std::fputs(app.help().c_str(), stdout);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
