#include <cmath>
#include <map>
#include <vector>

#include "camell/noisygen.hpp"
#include "camell/synth.hpp"
#include "catch2/catch_amalgamated.hpp"

using namespace camell;

namespace {

// Oracle: exact Binomial(n, p) central interval via the CDF in log space.
std::pair<int, int> binomial_interval(int n, double p, double level) {
  auto log_pmf = [&](int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
           std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
  };
  double tail = (1.0 - level) / 2.0;
  double cdf = 0.0;
  int lo = 0, hi = n;
  bool lo_set = false;
  for (int k = 0; k <= n; ++k) {
    double prev = cdf;
    cdf += std::exp(log_pmf(k));
    if (!lo_set && cdf > tail) {
      lo = k;
      lo_set = true;
    }
    if (prev < 1.0 - tail && cdf >= 1.0 - tail) hi = k;
  }
  return {lo, hi};
}

TaskConfig noisy_task(std::size_t n) {
  TaskConfig cfg;
  cfg.categories = 5;
  cfg.values_per_category = 5;
  cfg.hidden_states = 8;
  cfg.obs_dim = 16;
  cfg.emission_noise = 0.0;
  cfg.min_length = 4;
  cfg.max_length = 12;
  cfg.n_sequences = n;
  cfg.dev_fraction = 0.15;
  cfg.test_fraction = 0.15;
  cfg.seed = 33;
  return cfg;
}

std::vector<LabelledSequence> label_all(const GeneratedTask& task) {
  std::map<std::string, const GroundTruthRecord*> by_id;
  for (const auto& rec : task.truth) by_id[rec.id] = &rec;
  std::vector<LabelledSequence> out;
  for (const auto& seq : task.pool.unlabelled) {
    const GroundTruthRecord& rec = *by_id.at(seq.id);
    LabelGrid grid(seq.length, task.schema.size());
    for (std::size_t t = 0; t < seq.length; ++t)
      for (std::size_t m = 0; m < task.schema.size(); ++m) {
        grid.at(t, m).value = rec.truth[t][m];
        grid.at(t, m).provenance = Provenance::expert;
      }
    out.push_back({seq, grid});
  }
  return out;
}

TrainConfig quick_train(std::size_t members, std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.hidden_dim = 32;
  cfg.ensemble_size = members;
  return cfg;
}

}  // namespace

TEST_CASE("noisy sampling renormalises after zeroing the clean value",
          "[noisygen]") {
  Rng rng(1);
  std::vector<int> counts(3, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    ++counts[sample_noisy_label({0.7, 0.2, 0.1}, 0, rng)];
  CHECK(counts[0] == 0);
  // Sampling distribution is [0, 2/3, 1/3]; per-component exact binomial
  // intervals at 99.5% (Bonferroni over the two free components).
  auto [lo1, hi1] = binomial_interval(n, 2.0 / 3.0, 0.995);
  auto [lo2, hi2] = binomial_interval(n, 1.0 / 3.0, 0.995);
  CHECK(counts[1] >= lo1);
  CHECK(counts[1] <= hi1);
  CHECK(counts[2] >= lo2);
  CHECK(counts[2] <= hi2);
}

TEST_CASE("degenerate member distribution falls back to uniform",
          "[noisygen]") {
  Rng rng(2);
  std::vector<int> counts(3, 0);
  const int n = 4000;
  for (int i = 0; i < n; ++i)
    ++counts[sample_noisy_label({1.0, 0.0, 0.0}, 0, rng)];
  CHECK(counts[0] == 0);
  auto [lo, hi] = binomial_interval(n, 0.5, 0.99);
  CHECK(counts[1] >= lo);
  CHECK(counts[1] <= hi);

  CHECK_THROWS_AS(sample_noisy_label({1.0}, 0, rng), std::invalid_argument);
}

TEST_CASE("sampled labels never collide with the clean value", "[noisygen]") {
  Rng rng(3);
  for (int trial = 0; trial < 100000; ++trial) {
    std::size_t V = 2 + rng.uniform_index(5);
    std::vector<double> row(V);
    double sum = 0;
    for (double& v : row) {
      v = -std::log(1.0 - rng.uniform());
      sum += v;
    }
    for (double& v : row) v /= sum;
    int clean = static_cast<int>(rng.uniform_index(V));
    REQUIRE(sample_noisy_label(row, clean, rng) != clean);
  }
}

TEST_CASE("full-fraction relabelling touches every cell", "[noisygen]") {
  GeneratedTask task = generate_dataset(noisy_task(14));
  auto labelled = label_all(task);
  EnsembleModel model = fit(labelled, task.schema, quick_train(2, 3), 50);

  NoisygenConfig cfg;
  cfg.alpha_noise = 1.0;
  Rng rng(derive_seed(1, Stream::noisygen, 0));
  NoisyDataset nd = build_noisy_dataset(labelled, model, cfg, rng, 2);
  CHECK(nd.cycle == 2);
  REQUIRE(nd.sequences.size() == labelled.size());
  for (const auto& ns : nd.sequences) {
    const LabelledSequence& ls = labelled[ns.pool_index];
    CHECK(ns.id == ls.seq.id);
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < task.schema.size(); ++m) {
        CHECK(ns.values[t][m] != ls.grid.at(t, m).value);
        CHECK(ns.differs[t][m]);
        CHECK(ns.member_for_category[m] < model.members.size());
      }
  }
}

TEST_CASE("tiny fractions still relabel one sequence", "[noisygen]") {
  GeneratedTask task = generate_dataset(noisy_task(14));
  auto labelled = label_all(task);
  EnsembleModel model = fit(labelled, task.schema, quick_train(2, 3), 50);
  NoisygenConfig cfg;
  cfg.alpha_noise = 1e-6;
  Rng rng(derive_seed(1, Stream::noisygen, 1));
  NoisyDataset nd = build_noisy_dataset(labelled, model, cfg, rng);
  CHECK(nd.sequences.size() == 1);

  CHECK_THROWS_AS(build_noisy_dataset({}, model, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("regeneration changes values but not the selection size",
          "[noisygen]") {
  GeneratedTask task = generate_dataset(noisy_task(16));
  auto labelled = label_all(task);
  EnsembleModel weak = fit(labelled, task.schema, quick_train(2, 1), 50);
  EnsembleModel strong = fit(labelled, task.schema, quick_train(2, 12), 50);

  NoisygenConfig cfg;
  cfg.alpha_noise = 0.5;
  Rng rng_a(derive_seed(9, Stream::noisygen, 0));
  Rng rng_b(derive_seed(9, Stream::noisygen, 0));
  NoisyDataset a = build_noisy_dataset(labelled, weak, cfg, rng_a, 0);
  NoisyDataset b = build_noisy_dataset(labelled, strong, cfg, rng_b, 1);

  REQUIRE(a.sequences.size() == b.sequences.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].id == b.sequences[i].id);  // same selection stream
    if (a.sequences[i].values != b.sequences[i].values) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("noisy generation is deterministic and honours the flags",
          "[noisygen]") {
  GeneratedTask task = generate_dataset(noisy_task(16));
  auto labelled = label_all(task);
  EnsembleModel model = fit(labelled, task.schema, quick_train(3, 3), 50);

  NoisygenConfig cfg;
  cfg.alpha_noise = 0.5;
  auto build = [&](const NoisygenConfig& c, std::uint64_t s) {
    Rng rng(derive_seed(s, Stream::noisygen, 0));
    return build_noisy_dataset(labelled, model, c, rng);
  };
  NoisyDataset a = build(cfg, 4);
  NoisyDataset b = build(cfg, 4);
  REQUIRE(a.sequences.size() == b.sequences.size());
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].values == b.sequences[i].values);
    CHECK(a.sequences[i].member_for_category ==
          b.sequences[i].member_for_category);
  }

  cfg.global_member_draw = true;
  NoisyDataset g = build(cfg, 5);
  for (const auto& ns : g.sequences)
    CHECK(ns.member_for_category == g.sequences[0].member_for_category);

  cfg.random_replacement = true;
  NoisyDataset r = build(cfg, 6);
  for (const auto& ns : r.sequences)
    for (std::size_t t = 0; t < ns.values.size(); ++t)
      for (std::size_t m = 0; m < ns.values[t].size(); ++m)
        CHECK(ns.values[t][m] !=
              labelled[ns.pool_index].grid.at(t, m).value);
}

TEST_CASE("a model fed wrong labels agrees less with the truth",
          "[noisygen]") {
  GeneratedTask task = generate_dataset(noisy_task(80));
  auto labelled = label_all(task);
  TrainConfig tcfg = quick_train(2, 15);
  EnsembleModel clean_model = fit(labelled, task.schema, tcfg, 60);

  NoisygenConfig cfg;
  cfg.alpha_noise = 1.0;
  Rng rng(derive_seed(7, Stream::noisygen, 0));
  NoisyDataset nd = build_noisy_dataset(labelled, clean_model, cfg, rng);
  EnsembleModel noisy_model =
      fit_noisy_model(nd, labelled, task.schema, tcfg, cfg, 61);
  CHECK(noisy_model.members.size() == cfg.noisy_ensemble_size);

  std::map<std::string, const GroundTruthRecord*> by_id;
  for (const auto& rec : task.truth) by_id[rec.id] = &rec;
  std::size_t clean_ok = 0, noisy_ok = 0, total = 0;
  for (const auto& ls : task.pool.test) {
    const GroundTruthRecord& rec = *by_id.at(ls.seq.id);
    PredictiveGrid gc = predict(clean_model, ls.seq);
    PredictiveGrid gn = predict(noisy_model, ls.seq);
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < task.schema.size(); ++m) {
        ++total;
        if (gc.at(t, m).predicted == rec.truth[t][m]) ++clean_ok;
        if (gn.at(t, m).predicted == rec.truth[t][m]) ++noisy_ok;
      }
  }
  INFO("clean " << clean_ok << " noisy " << noisy_ok << " of " << total);
  CHECK(noisy_ok < clean_ok);

  CHECK_THROWS_AS(
      fit_noisy_model(NoisyDataset{}, labelled, task.schema, tcfg, cfg, 1),
      std::invalid_argument);
}
