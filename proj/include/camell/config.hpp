#pragma once

// Run configuration: one struct per subsystem, an INI-style reader/writer,
// and validation. print_config() output is itself a loadable config file and
// doubles as the run artifact `config.snapshot`.

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace camell {

struct TaskConfig {
  std::size_t categories = 5;           // M
  std::size_t values_per_category = 5;  // |V^m|, null value included
  std::size_t hidden_states = 10;       // S
  std::size_t obs_dim = 16;             // d, half signal / half distractor
  double emission_noise = 0.40;         // sigma on the signal dimensions
  std::size_t min_length = 4;
  std::size_t max_length = 12;
  std::size_t n_sequences = 2000;
  double dev_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 1;
};

struct NoiseConfig {
  double rate = 0.1;  // per-cell corruption probability of expert answers
  double mix_hallucination = 0.4;
  double mix_duplication = 0.2;
  double mix_substitution = 0.4;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double weight_decay = 0.0;  // decoupled; biases are exempt
  double input_noise = 0.20;  // train-time Gaussian feature augmentation
  std::size_t hidden_dim = 32;
  std::size_t ensemble_size = 10;  // K
  bool bootstrap_resample = false;  // default diversity is distinct inits
};

struct ConfidenceConfig {
  std::size_t latent_dim = 16;
  double label_smoothing = 0.05;  // epsilon, label variant only
  double feature_noise = 0.01;    // sigma_g, label variant only
  std::size_t epochs = 150;
  std::size_t batch_size = 512;
  double learning_rate = 0.02;
  bool ablate_inter = false;  // zero the inter-category encoder input
  bool shared_intra = false;  // one intra encoder shared across categories
};

struct NoisygenConfig {
  double alpha_noise = 0.25;            // fraction of sequences relabelled
  std::size_t noisy_ensemble_size = 1;  // K of the noisy model
  bool global_member_draw = false;      // one member per category for all seqs
  bool random_replacement = false;      // comparison scheme: uniform relabel
};

struct AcquisitionConfig {
  double select_fraction = 0.05;  // N_sel as fraction of the initial pool
  bool bald_sum = false;          // sum instead of mean for whole-seq BALD
};

struct LoopConfig {
  double seed_fraction = 0.05;
  double target_fraction = 0.95;  // of the full-data reference accuracy
  double target_accuracy = -1.0;  // absolute override; < 0 means derive
  std::size_t max_cycles = 0;     // 0 = until exhaustion or target
  bool count_masked_in_budget = true;
  std::size_t alpha_val_grid_points = 19;  // evenly spaced in (0, 1)
};

struct EvalConfig {
  std::size_t ece_bins = 10;
  std::size_t bootstrap_resamples = 1000;
  double ci_level = 0.95;
  bool joint_ece = false;  // product-confidence ECE variant
};

enum class Strategy { camell, camel, caml, bald, bald_ss, random_sel, diversity };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::camell: return "camell";
    case Strategy::camel: return "camel";
    case Strategy::caml: return "caml";
    case Strategy::bald: return "bald";
    case Strategy::bald_ss: return "bald-ss";
    case Strategy::random_sel: return "random";
    case Strategy::diversity: return "diversity";
  }
  return "camell";
}

inline Strategy strategy_from_name(const std::string& s) {
  if (s == "camell") return Strategy::camell;
  if (s == "camel") return Strategy::camel;
  if (s == "caml") return Strategy::caml;
  if (s == "bald") return Strategy::bald;
  if (s == "bald-ss") return Strategy::bald_ss;
  if (s == "random") return Strategy::random_sel;
  if (s == "diversity") return Strategy::diversity;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

struct ExperimentConfig {
  TaskConfig task;
  NoiseConfig noise;
  TrainConfig learner;
  ConfidenceConfig confidence;
  NoisygenConfig noisygen;
  AcquisitionConfig acquisition;
  LoopConfig loop;
  EvalConfig eval;
};

inline void validate_config(const ExperimentConfig& c) {
  const auto& t = c.task;
  if (t.categories < 1) throw std::invalid_argument("task.categories must be >= 1");
  if (t.values_per_category < 2)
    throw std::invalid_argument("task.values_per_category must be >= 2");
  if (t.hidden_states < 2)
    throw std::invalid_argument("task.hidden_states must be >= 2");
  if (t.obs_dim < 2) throw std::invalid_argument("task.obs_dim must be >= 2");
  if (t.emission_noise < 0)
    throw std::invalid_argument("task.emission_noise must be >= 0");
  if (t.min_length < 1 || t.max_length < t.min_length)
    throw std::invalid_argument("task length range invalid");
  if (t.dev_fraction < 0 || t.test_fraction < 0 ||
      t.dev_fraction + t.test_fraction >= 1.0)
    throw std::invalid_argument("task dev/test fractions invalid");

  const auto& n = c.noise;
  if (n.rate < 0 || n.rate > 1)
    throw std::invalid_argument("noise.rate must be in [0,1]");
  if (n.mix_hallucination < 0 || n.mix_duplication < 0 ||
      n.mix_substitution < 0)
    throw std::invalid_argument("noise mix weights must be non-negative");
  double mix_sum = n.mix_hallucination + n.mix_duplication + n.mix_substitution;
  if (std::abs(mix_sum - 1.0) > 1e-9)
    throw std::invalid_argument("noise mix weights must sum to 1");

  const auto& l = c.learner;
  if (l.epochs < 1 || l.batch_size < 1 || l.hidden_dim < 1)
    throw std::invalid_argument("learner config must be positive");
  if (l.learning_rate <= 0)
    throw std::invalid_argument("learner.learning_rate must be > 0");
  if (l.weight_decay < 0)
    throw std::invalid_argument("learner.weight_decay must be >= 0");
  if (l.input_noise < 0)
    throw std::invalid_argument("learner.input_noise must be >= 0");
  if (l.ensemble_size < 2)
    throw std::invalid_argument("learner.ensemble_size must be >= 2");

  if (c.confidence.latent_dim < 1)
    throw std::invalid_argument("confidence.latent_dim must be >= 1");
  if (c.confidence.label_smoothing < 0 || c.confidence.label_smoothing >= 1)
    throw std::invalid_argument("confidence.label_smoothing must be in [0,1)");
  if (c.confidence.feature_noise < 0)
    throw std::invalid_argument("confidence.feature_noise must be >= 0");

  if (c.noisygen.alpha_noise <= 0 || c.noisygen.alpha_noise > 1)
    throw std::invalid_argument("noisygen.alpha_noise must be in (0,1]");
  if (c.noisygen.noisy_ensemble_size < 1)
    throw std::invalid_argument("noisygen.noisy_ensemble_size must be >= 1");

  if (c.acquisition.select_fraction <= 0 || c.acquisition.select_fraction > 1)
    throw std::invalid_argument("acquisition.select_fraction must be in (0,1]");

  if (c.loop.seed_fraction <= 0 || c.loop.seed_fraction > 1)
    throw std::invalid_argument("loop.seed_fraction must be in (0,1]");
  if (c.loop.target_fraction < 0 || c.loop.target_fraction > 1)
    throw std::invalid_argument("loop.target_fraction must be in [0,1]");
  if (c.loop.alpha_val_grid_points < 1)
    throw std::invalid_argument("loop.alpha_val_grid_points must be >= 1");

  if (c.eval.ece_bins < 1) throw std::invalid_argument("eval.ece_bins must be >= 1");
  if (c.eval.ci_level <= 0 || c.eval.ci_level >= 1)
    throw std::invalid_argument("eval.ci_level must be in (0,1)");
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

}  // namespace detail

// Reads key=value pairs grouped under [section] headers. Unknown keys are
// rejected so typos do not silently fall back to defaults.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": unterminated section header");
      section = s.substr(1, s.size() - 2);
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = detail::trim(s.substr(0, eq));
    std::string val = detail::trim(s.substr(eq + 1));
    std::string full = section + "." + key;
    try {
      auto u64 = [&] { return std::stoull(val); };
      auto f64 = [&] { return std::stod(val); };
      auto b = [&] { return detail::parse_bool(val, full); };
      if (full == "task.categories") cfg.task.categories = u64();
      else if (full == "task.values_per_category") cfg.task.values_per_category = u64();
      else if (full == "task.hidden_states") cfg.task.hidden_states = u64();
      else if (full == "task.obs_dim") cfg.task.obs_dim = u64();
      else if (full == "task.emission_noise") cfg.task.emission_noise = f64();
      else if (full == "task.min_length") cfg.task.min_length = u64();
      else if (full == "task.max_length") cfg.task.max_length = u64();
      else if (full == "task.n_sequences") cfg.task.n_sequences = u64();
      else if (full == "task.dev_fraction") cfg.task.dev_fraction = f64();
      else if (full == "task.test_fraction") cfg.task.test_fraction = f64();
      else if (full == "task.seed") cfg.task.seed = u64();
      else if (full == "noise.rate") cfg.noise.rate = f64();
      else if (full == "noise.mix_hallucination") cfg.noise.mix_hallucination = f64();
      else if (full == "noise.mix_duplication") cfg.noise.mix_duplication = f64();
      else if (full == "noise.mix_substitution") cfg.noise.mix_substitution = f64();
      else if (full == "learner.epochs") cfg.learner.epochs = u64();
      else if (full == "learner.batch_size") cfg.learner.batch_size = u64();
      else if (full == "learner.learning_rate") cfg.learner.learning_rate = f64();
      else if (full == "learner.weight_decay") cfg.learner.weight_decay = f64();
      else if (full == "learner.input_noise") cfg.learner.input_noise = f64();
      else if (full == "learner.hidden_dim") cfg.learner.hidden_dim = u64();
      else if (full == "learner.ensemble_size") cfg.learner.ensemble_size = u64();
      else if (full == "learner.bootstrap_resample") cfg.learner.bootstrap_resample = b();
      else if (full == "confidence.latent_dim") cfg.confidence.latent_dim = u64();
      else if (full == "confidence.label_smoothing") cfg.confidence.label_smoothing = f64();
      else if (full == "confidence.feature_noise") cfg.confidence.feature_noise = f64();
      else if (full == "confidence.epochs") cfg.confidence.epochs = u64();
      else if (full == "confidence.batch_size") cfg.confidence.batch_size = u64();
      else if (full == "confidence.learning_rate") cfg.confidence.learning_rate = f64();
      else if (full == "confidence.ablate_inter") cfg.confidence.ablate_inter = b();
      else if (full == "confidence.shared_intra") cfg.confidence.shared_intra = b();
      else if (full == "noisygen.alpha_noise") cfg.noisygen.alpha_noise = f64();
      else if (full == "noisygen.noisy_ensemble_size") cfg.noisygen.noisy_ensemble_size = u64();
      else if (full == "noisygen.global_member_draw") cfg.noisygen.global_member_draw = b();
      else if (full == "noisygen.random_replacement") cfg.noisygen.random_replacement = b();
      else if (full == "acquisition.select_fraction") cfg.acquisition.select_fraction = f64();
      else if (full == "acquisition.bald_sum") cfg.acquisition.bald_sum = b();
      else if (full == "loop.seed_fraction") cfg.loop.seed_fraction = f64();
      else if (full == "loop.target_fraction") cfg.loop.target_fraction = f64();
      else if (full == "loop.target_accuracy") cfg.loop.target_accuracy = f64();
      else if (full == "loop.max_cycles") cfg.loop.max_cycles = u64();
      else if (full == "loop.count_masked_in_budget") cfg.loop.count_masked_in_budget = b();
      else if (full == "loop.alpha_val_grid_points") cfg.loop.alpha_val_grid_points = u64();
      else if (full == "eval.ece_bins") cfg.eval.ece_bins = u64();
      else if (full == "eval.bootstrap_resamples") cfg.eval.bootstrap_resamples = u64();
      else if (full == "eval.ci_level") cfg.eval.ci_level = f64();
      else if (full == "eval.joint_ece") cfg.eval.joint_ece = b();
      else
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": unknown key '" + full + "'");
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": bad value for '" + full + "': '" + val + "'");
    }
  }
  return cfg;
}

inline std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[task]\n";
  o << "categories = " << c.task.categories << "\n";
  o << "values_per_category = " << c.task.values_per_category << "\n";
  o << "hidden_states = " << c.task.hidden_states << "\n";
  o << "obs_dim = " << c.task.obs_dim << "\n";
  o << "emission_noise = " << num(c.task.emission_noise) << "\n";
  o << "min_length = " << c.task.min_length << "\n";
  o << "max_length = " << c.task.max_length << "\n";
  o << "n_sequences = " << c.task.n_sequences << "\n";
  o << "dev_fraction = " << num(c.task.dev_fraction) << "\n";
  o << "test_fraction = " << num(c.task.test_fraction) << "\n";
  o << "seed = " << c.task.seed << "\n";
  o << "\n[noise]\n";
  o << "rate = " << num(c.noise.rate) << "\n";
  o << "mix_hallucination = " << num(c.noise.mix_hallucination) << "\n";
  o << "mix_duplication = " << num(c.noise.mix_duplication) << "\n";
  o << "mix_substitution = " << num(c.noise.mix_substitution) << "\n";
  o << "\n[learner]\n";
  o << "epochs = " << c.learner.epochs << "\n";
  o << "batch_size = " << c.learner.batch_size << "\n";
  o << "learning_rate = " << num(c.learner.learning_rate) << "\n";
  o << "weight_decay = " << num(c.learner.weight_decay) << "\n";
  o << "input_noise = " << num(c.learner.input_noise) << "\n";
  o << "hidden_dim = " << c.learner.hidden_dim << "\n";
  o << "ensemble_size = " << c.learner.ensemble_size << "\n";
  o << "bootstrap_resample = " << b(c.learner.bootstrap_resample) << "\n";
  o << "\n[confidence]\n";
  o << "latent_dim = " << c.confidence.latent_dim << "\n";
  o << "label_smoothing = " << num(c.confidence.label_smoothing) << "\n";
  o << "feature_noise = " << num(c.confidence.feature_noise) << "\n";
  o << "epochs = " << c.confidence.epochs << "\n";
  o << "batch_size = " << c.confidence.batch_size << "\n";
  o << "learning_rate = " << num(c.confidence.learning_rate) << "\n";
  o << "ablate_inter = " << b(c.confidence.ablate_inter) << "\n";
  o << "shared_intra = " << b(c.confidence.shared_intra) << "\n";
  o << "\n[noisygen]\n";
  o << "alpha_noise = " << num(c.noisygen.alpha_noise) << "\n";
  o << "noisy_ensemble_size = " << c.noisygen.noisy_ensemble_size << "\n";
  o << "global_member_draw = " << b(c.noisygen.global_member_draw) << "\n";
  o << "random_replacement = " << b(c.noisygen.random_replacement) << "\n";
  o << "\n[acquisition]\n";
  o << "select_fraction = " << num(c.acquisition.select_fraction) << "\n";
  o << "bald_sum = " << b(c.acquisition.bald_sum) << "\n";
  o << "\n[loop]\n";
  o << "seed_fraction = " << num(c.loop.seed_fraction) << "\n";
  o << "target_fraction = " << num(c.loop.target_fraction) << "\n";
  o << "target_accuracy = " << num(c.loop.target_accuracy) << "\n";
  o << "max_cycles = " << c.loop.max_cycles << "\n";
  o << "count_masked_in_budget = " << b(c.loop.count_masked_in_budget) << "\n";
  o << "alpha_val_grid_points = " << c.loop.alpha_val_grid_points << "\n";
  o << "\n[eval]\n";
  o << "ece_bins = " << c.eval.ece_bins << "\n";
  o << "bootstrap_resamples = " << c.eval.bootstrap_resamples << "\n";
  o << "ci_level = " << num(c.eval.ci_level) << "\n";
  o << "joint_ece = " << b(c.eval.joint_ece) << "\n";
  return o.str();
}

}  // namespace camell
