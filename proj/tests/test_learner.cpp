#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "camell/learner.hpp"
#include "camell/synth.hpp"
#include "catch2/catch_amalgamated.hpp"

using namespace camell;

namespace {

TaskConfig tiny_task(std::size_t n, double sigma = 0.0) {
  TaskConfig cfg;
  cfg.categories = 5;
  cfg.values_per_category = 5;
  cfg.hidden_states = 8;
  cfg.obs_dim = 16;
  cfg.emission_noise = sigma;
  cfg.min_length = 4;
  cfg.max_length = 12;
  cfg.n_sequences = n;
  cfg.dev_fraction = 0.15;
  cfg.test_fraction = 0.15;
  cfg.seed = 21;
  return cfg;
}

// Labels every training sequence with its clean truth.
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

TrainConfig quick_train(std::size_t members) {
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.hidden_dim = 32;
  cfg.ensemble_size = members;
  return cfg;
}

EnsembleModel random_model(std::uint64_t seed, std::size_t d, std::size_t H,
                           std::vector<std::size_t> n_values) {
  Rng rng(seed);
  EnsembleModel model;
  model.input_dim = d;
  model.hidden_dim = H;
  model.n_values = std::move(n_values);
  model.members.resize(4);
  for (auto& net : model.members) {
    auto fill = [&](std::vector<double>& w, std::size_t n) {
      w.resize(n);
      for (double& v : w) v = rng.normal();
    };
    fill(net.wx, H * d);
    fill(net.wh, H * H);
    fill(net.bh, H);
    net.head_w.resize(model.n_values.size());
    net.head_b.resize(model.n_values.size());
    for (std::size_t m = 0; m < model.n_values.size(); ++m) {
      fill(net.head_w[m], model.n_values[m] * H);
      fill(net.head_b[m], model.n_values[m]);
    }
  }
  return model;
}

Sequence random_sequence(Rng& rng, std::size_t T, std::size_t d) {
  Sequence s;
  s.id = "r";
  s.length = T;
  s.dim = d;
  s.features.resize(T * d);
  for (double& v : s.features) v = rng.normal();
  return s;
}

bool same_params(const EnsembleModel& a, const EnsembleModel& b) {
  if (a.members.size() != b.members.size()) return false;
  for (std::size_t k = 0; k < a.members.size(); ++k) {
    if (a.members[k].wx != b.members[k].wx) return false;
    if (a.members[k].wh != b.members[k].wh) return false;
    if (a.members[k].bh != b.members[k].bh) return false;
    if (a.members[k].head_w != b.members[k].head_w) return false;
    if (a.members[k].head_b != b.members[k].head_b) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("uncertainty decomposition matches closed forms", "[learner]") {
  // Two fully confident, disagreeing members.
  auto [t1, k1] = uncertainties({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(std::abs(t1 - std::log(2.0)) < 1e-12);
  CHECK(std::abs(k1 - std::log(2.0)) < 1e-12);

  // Identical maximally unsure members: all uncertainty is data uncertainty.
  auto [t2, k2] = uncertainties({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  CHECK(std::abs(t2 - std::log(2.0)) < 1e-12);
  CHECK(k2 >= 0.0);
  CHECK(k2 < 1e-12);

  // Frozen three-member fixture, independently computed by direct formula:
  // marginal [0.6, 0.25, 0.15].
  auto [t3, k3] = uncertainties(
      {{0.7, 0.2, 0.1}, {0.6, 0.3, 0.1}, {0.5, 0.25, 0.25}});
  CHECK(std::abs(t3 - 0.937636962272449) < 1e-9);
  CHECK(std::abs(k3 - 0.024475279525771) < 1e-9);
}

TEST_CASE("uncertainty bounds hold over random ensembles", "[learner]") {
  Rng rng(314);
  for (int trial = 0; trial < 100000; ++trial) {
    std::size_t K = 2 + rng.uniform_index(4);
    std::size_t V = 2 + rng.uniform_index(5);
    std::vector<std::vector<double>> rows(K, std::vector<double>(V));
    for (auto& row : rows) {
      double sum = 0;
      for (double& v : row) {
        v = -std::log(1.0 - rng.uniform());
        sum += v;
      }
      for (double& v : row) v /= sum;
    }
    auto [t, k] = uncertainties(rows);
    REQUIRE(k >= 0.0);
    REQUIRE(k <= t + 1e-12);
    REQUIRE(t <= std::log(static_cast<double>(V)) + 1e-9);
  }
}

TEST_CASE("uncertainties rejects malformed rows", "[learner]") {
  CHECK_THROWS_AS(uncertainties({{0.5, 0.6}}), std::invalid_argument);
  CHECK_THROWS_AS(uncertainties({{1.2, -0.2}}), std::invalid_argument);
  CHECK_THROWS_AS(uncertainties({}), std::invalid_argument);
  CHECK_THROWS_AS(uncertainties({{0.5, 0.5}, {0.3, 0.3, 0.4}}),
                  std::invalid_argument);
}

TEST_CASE("training loss decreases on a memorisable pool", "[learner]") {
  GeneratedTask task = generate_dataset(tiny_task(10));
  auto labelled = label_all(task);
  labelled.resize(1);
  TrainConfig cfg = quick_train(2);
  cfg.epochs = 50;
  std::vector<double> trace;
  fit(labelled, task.schema, cfg, 5, &trace);
  REQUIRE(trace.size() == 50);
  for (int e = 1; e < 10; ++e) CHECK(trace[e] < trace[e - 1]);
  CHECK(trace[49] < 0.25 * trace[0]);
}

TEST_CASE("degenerate pools are rejected", "[learner]") {
  GeneratedTask task = generate_dataset(tiny_task(10));
  TrainConfig cfg = quick_train(2);
  CHECK_THROWS_WITH(fit({}, task.schema, cfg, 1),
                    Catch::Matchers::ContainsSubstring("seed dataset"));

  auto labelled = label_all(task);
  for (auto& ls : labelled)
    for (std::size_t t = 0; t < ls.seq.length; ++t)
      for (std::size_t m = 0; m < task.schema.size(); ++m)
        ls.grid.at(t, m).provenance = Provenance::masked;
  CHECK_THROWS_WITH(fit(labelled, task.schema, cfg, 1),
                    Catch::Matchers::ContainsSubstring("masked"));
}

TEST_CASE("training is deterministic given the seed", "[learner]") {
  GeneratedTask task = generate_dataset(tiny_task(12));
  auto labelled = label_all(task);
  TrainConfig cfg = quick_train(3);
  cfg.epochs = 4;
  EnsembleModel a = fit(labelled, task.schema, cfg, 77);
  EnsembleModel b = fit(labelled, task.schema, cfg, 77);
  CHECK(same_params(a, b));
  EnsembleModel c = fit(labelled, task.schema, cfg, 78);
  CHECK(!same_params(a, c));

  cfg.bootstrap_resample = true;
  EnsembleModel d = fit(labelled, task.schema, cfg, 77);
  EnsembleModel e = fit(labelled, task.schema, cfg, 77);
  CHECK(same_params(d, e));
}

TEST_CASE("zeroed heads predict uniform rows with lowest-index argmax",
          "[learner]") {
  EnsembleModel model = random_model(9, 6, 8, {4, 3});
  for (auto& net : model.members) {
    for (auto& w : net.head_w) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : net.head_b) std::fill(b.begin(), b.end(), 0.0);
  }
  Rng rng(10);
  Sequence seq = random_sequence(rng, 5, 6);
  PredictiveGrid grid = predict(model, seq);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t m = 0; m < 2; ++m) {
      const CellPrediction& cell = grid.at(t, m);
      CHECK(cell.predicted == 0);
      for (double v : cell.marginal)
        CHECK(std::abs(v - 1.0 / static_cast<double>(cell.marginal.size())) <
              1e-12);
      CHECK(cell.knowledge_uncertainty < 1e-12);
    }
}

TEST_CASE("identical members collapse the marginal onto any member",
          "[learner]") {
  EnsembleModel model = random_model(11, 6, 8, {4, 3});
  for (auto& net : model.members) net = model.members[0];
  Rng rng(12);
  Sequence seq = random_sequence(rng, 4, 6);
  PredictiveGrid grid = predict(model, seq);
  for (const auto& cell : grid.cells) {
    for (std::size_t v = 0; v < cell.marginal.size(); ++v)
      CHECK(std::abs(cell.marginal[v] - cell.member_dists[0][v]) < 1e-12);
    CHECK(cell.knowledge_uncertainty < 1e-12);
  }
}

TEST_CASE("predictions live on the simplex and satisfy the bounds",
          "[learner]") {
  EnsembleModel model = random_model(13, 7, 10, {5, 3, 4});
  Rng rng(14);
  std::size_t checked = 0;
  while (checked < 1000) {
    Sequence seq = random_sequence(rng, 3 + rng.uniform_index(6), 7);
    PredictiveGrid grid = predict(model, seq);
    for (const auto& cell : grid.cells) {
      ++checked;
      for (const auto& row : cell.member_dists) {
        double sum = 0;
        for (double v : row) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
      CHECK(cell.knowledge_uncertainty >= 0.0);
      CHECK(cell.knowledge_uncertainty <=
            cell.total_uncertainty + 1e-12);
      CHECK(cell.total_uncertainty <=
            std::log(static_cast<double>(cell.marginal.size())) + 1e-9);
    }
  }
  Sequence bad = random_sequence(rng, 3, 9);
  CHECK_THROWS_AS(predict(model, bad), std::invalid_argument);
}

TEST_CASE("marginal argmax ignores member order", "[learner]") {
  EnsembleModel model = random_model(15, 6, 8, {5, 5});
  Rng rng(16);
  Sequence seq = random_sequence(rng, 6, 6);
  PredictiveGrid before = predict(model, seq);
  std::rotate(model.members.begin(), model.members.begin() + 2,
              model.members.end());
  PredictiveGrid after = predict(model, seq);
  for (std::size_t i = 0; i < before.cells.size(); ++i) {
    CHECK(before.cells[i].predicted == after.cells[i].predicted);
    CHECK(std::abs(before.cells[i].total_uncertainty -
                   after.cells[i].total_uncertainty) < 1e-12);
  }
}

TEST_CASE("self labels cover requested positions exactly", "[learner]") {
  EnsembleModel model = random_model(17, 6, 8, {4, 3});
  Rng rng(18);
  Sequence seq = random_sequence(rng, 5, 6);

  CHECK(self_label(model, seq, {}).empty());

  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t m = 0; m < 2; ++m) all.push_back({t, m});
  auto updates = self_label(model, seq, all);
  PredictiveGrid grid = predict(model, seq);
  REQUIRE(updates.size() == all.size());
  for (const auto& u : updates) {
    CHECK(u.value == grid.at(u.t, u.m).predicted);
    CHECK(u.provenance == Provenance::self_label);
  }

  // A query/self split partitions the grid: the union covers each cell once.
  std::vector<std::pair<std::size_t, std::size_t>> query(all.begin(),
                                                         all.begin() + 4);
  std::vector<std::pair<std::size_t, std::size_t>> rest(all.begin() + 4,
                                                        all.end());
  auto self_part = self_label(model, seq, rest);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& p : query) CHECK(seen.insert(p).second);
  for (const auto& u : self_part) CHECK(seen.insert({u.t, u.m}).second);
  CHECK(seen.size() == all.size());
}

TEST_CASE("noise-free task is learned to oracle level", "[learner]") {
  TaskConfig tcfg = tiny_task(260);
  GeneratedTask task = generate_dataset(tcfg);
  TaskModel tm = build_task_model(tcfg);
  auto labelled = label_all(task);
  TrainConfig cfg = quick_train(3);
  cfg.epochs = 30;
  // Augmentation off: it would simulate emission noise and swamp the close
  // murmur pair, which is separable in the noise-free observations.
  cfg.input_noise = 0.0;
  EnsembleModel model = fit(labelled, task.schema, cfg, 41);

  // Oracle: at sigma = 0 every step sits exactly on a prototype, either a
  // plain state embedding or an event embedding tinted by its anchor.
  struct Proto {
    std::size_t state, anchor;
  };
  std::vector<Proto> protos;
  std::vector<std::vector<double>> points;
  for (std::size_t s = 0; s < tm.states; ++s) {
    std::size_t n_anchor = s < tm.first_event() ? 1 : tm.n_quiet;
    for (std::size_t q = 0; q < n_anchor; ++q) {
      std::vector<double> p(tm.signal_dim);
      for (std::size_t j = 0; j < tm.signal_dim; ++j)
        p[j] = tm.embeddings[s][j] +
               (s >= tm.first_event() ? TaskModel::kTint * tm.embeddings[q][j]
                                      : 0.0);
      protos.push_back({s, q});
      points.push_back(std::move(p));
    }
  }

  std::map<std::string, const GroundTruthRecord*> by_id;
  for (const auto& rec : task.truth) by_id[rec.id] = &rec;
  std::size_t correct = 0, total = 0, oracle_correct = 0;
  for (const auto& ls : task.pool.test) {
    const GroundTruthRecord& rec = *by_id.at(ls.seq.id);
    PredictiveGrid grid = predict(model, ls.seq);
    for (std::size_t t = 0; t < ls.seq.length; ++t) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t p = 0; p < protos.size(); ++p) {
        double d2 = 0;
        for (std::size_t j = 0; j < tm.signal_dim; ++j) {
          double diff = ls.seq.at(t, j) - points[p][j];
          d2 += diff * diff;
        }
        if (d2 < best_d) {
          best_d = d2;
          best = p;
        }
      }
      for (std::size_t m = 0; m < task.schema.size(); ++m) {
        ++total;
        if (grid.at(t, m).predicted == rec.truth[t][m]) ++correct;
        if (tm.true_value(protos[best].state, protos[best].anchor, m,
                          tcfg.values_per_category) == rec.truth[t][m])
          ++oracle_correct;
      }
    }
  }
  CHECK(oracle_correct == total);
  INFO("per-label accuracy " << static_cast<double>(correct) /
                                    static_cast<double>(total));
  CHECK(static_cast<double>(correct) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("checkpoints round-trip bit-exactly", "[learner]") {
  EnsembleModel model = random_model(19, 6, 8, {4, 3, 5});
  std::string path = "/tmp/camell_model_rt.txt";
  save_model(model, path);
  EnsembleModel loaded = load_model(path);
  CHECK(same_params(model, loaded));
  CHECK(loaded.input_dim == model.input_dim);
  CHECK(loaded.hidden_dim == model.hidden_dim);
  CHECK(loaded.n_values == model.n_values);

  Rng rng(20);
  Sequence seq = random_sequence(rng, 5, 6);
  PredictiveGrid a = predict(model, seq);
  PredictiveGrid b = predict(loaded, seq);
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    CHECK(a.cells[i].marginal == b.cells[i].marginal);
  std::remove(path.c_str());
}
