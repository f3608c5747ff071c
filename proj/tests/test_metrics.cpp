#include <algorithm>
#include <cmath>
#include <vector>

#include "camell/metrics.hpp"
#include "catch2/catch_amalgamated.hpp"

using namespace camell;

namespace {

std::vector<IntGrid> random_grids(Rng& rng, std::size_t n, std::size_t M,
                                  int values) {
  std::vector<IntGrid> out;
  for (std::size_t i = 0; i < n; ++i) {
    IntGrid g(3 + rng.uniform_index(6), std::vector<int>(M));
    for (auto& row : g)
      for (auto& v : row) v = static_cast<int>(rng.uniform_index(values));
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

TEST_CASE("joint accuracy counts all-correct steps", "[metrics]") {
  std::vector<IntGrid> truth = {{{1, 2}, {0, 1}, {3, 3}}};
  CHECK(joint_accuracy(truth, truth) == 1.0);

  std::vector<IntGrid> pred = truth;
  pred[0][1][0] = 9;  // one category wrong at one step
  CHECK(std::abs(joint_accuracy(pred, truth) - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(per_label_accuracy(pred, truth) - 5.0 / 6.0) < 1e-15);

  std::vector<IntGrid> bad = {{{1}, {0}}};
  CHECK_THROWS_AS(joint_accuracy(bad, truth), std::invalid_argument);
}

TEST_CASE("accuracies match an independent recount on random grids",
          "[metrics]") {
  Rng rng(100);
  for (int trial = 0; trial < 25; ++trial) {
    auto truth = random_grids(rng, 8, 4, 3);
    auto pred = truth;
    for (auto& g : pred)
      for (auto& row : g)
        for (auto& v : row)
          if (rng.uniform() < 0.3) v = static_cast<int>(rng.uniform_index(3));

    // Oracle: flat recount over cell tuples.
    std::size_t steps = 0, joint = 0, cells = 0, correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      for (std::size_t t = 0; t < truth[i].size(); ++t) {
        ++steps;
        bool all = true;
        for (std::size_t m = 0; m < truth[i][t].size(); ++m) {
          ++cells;
          bool ok = pred[i][t][m] == truth[i][t][m];
          correct += ok ? 1 : 0;
          all = all && ok;
        }
        joint += all ? 1 : 0;
      }
    double ja = joint_accuracy(pred, truth);
    double pa = per_label_accuracy(pred, truth);
    CHECK(ja == static_cast<double>(joint) / static_cast<double>(steps));
    CHECK(pa == static_cast<double>(correct) / static_cast<double>(cells));
    CHECK(ja <= pa + 1e-15);
  }
}

TEST_CASE("calibration error on a single bin is the confidence gap",
          "[metrics]") {
  std::vector<ConfidenceItem> items(5, {0.8, true});
  items[3].correct = items[4].correct = false;  // 60% correct
  CHECK(std::abs(ece(items) - 0.2) < 1e-12);
}

TEST_CASE("perfectly calibrated bins give zero error", "[metrics]") {
  std::vector<ConfidenceItem> items;
  for (int i = 0; i < 4; ++i) items.push_back({0.25, i == 0});
  for (int i = 0; i < 2; ++i) items.push_back({0.5, i == 0});
  for (int i = 0; i < 4; ++i) items.push_back({0.75, i != 0});
  CHECK(ece(items) < 1e-12);
}

TEST_CASE("calibration error matches the frozen three-bin fixture",
          "[metrics]") {
  std::vector<ConfidenceItem> items = {{0.15, false}, {0.18, true},
                                       {0.55, true},  {0.52, false},
                                       {0.95, true},  {0.98, true}};
  CHECK(std::abs(ece(items) - 0.135) < 1e-12);
}

TEST_CASE("bin boundaries belong to the upper bin", "[metrics]") {
  CHECK(ece_bin(0.0, 10) == 0);
  CHECK(ece_bin(0.1, 10) == 1);
  CHECK(ece_bin(0.3, 10) == 3);
  CHECK(ece_bin(0.7, 10) == 7);
  CHECK(ece_bin(0.999, 10) == 9);
  CHECK(ece_bin(1.0, 10) == 9);

  // Frozen fixture distinguishing upper-bin assignment of p=0.1.
  std::vector<ConfidenceItem> items = {{0.05, true}, {0.1, false}};
  CHECK(std::abs(ece(items) - 0.525) < 1e-12);

  std::vector<ConfidenceItem> one = {{1.0, true}};
  CHECK(ece(one) == 0.0);
}

TEST_CASE("calibration input validation", "[metrics]") {
  CHECK_THROWS_AS(ece({}), std::invalid_argument);
  CHECK_THROWS_AS(ece({{-0.1, true}}), std::invalid_argument);
  CHECK_THROWS_AS(ece({{1.1, true}}), std::invalid_argument);
}

TEST_CASE("calibration error is permutation invariant", "[metrics]") {
  Rng rng(200);
  std::vector<ConfidenceItem> items;
  for (int i = 0; i < 200; ++i)
    items.push_back({rng.uniform(), rng.uniform() < 0.6});
  double base = ece(items);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<ConfidenceItem> shuffled;
    for (std::size_t i : order) shuffled.push_back(items[i]);
    CHECK(std::abs(ece(shuffled) - base) < 1e-12);
  }
}

TEST_CASE("bootstrap collapses on constant data", "[metrics]") {
  std::vector<double> data(20, 0.7);
  auto metric = [&](const std::vector<std::size_t>& idx) {
    double s = 0;
    for (std::size_t i : idx) s += data[i];
    return s / static_cast<double>(idx.size());
  };
  Rng rng(derive_seed(1, Stream::bootstrap, 0));
  BootstrapResult r = bootstrap_ci(metric, data.size(), 200, 0.95, rng);
  CHECK(std::abs(r.point - 0.7) < 1e-12);
  CHECK(r.lower == r.point);
  CHECK(r.upper == r.point);
}

TEST_CASE("bootstrap point estimate ignores the resample count", "[metrics]") {
  std::vector<double> data = {0.1, 0.5, 0.9, 0.2, 0.8};
  auto metric = [&](const std::vector<std::size_t>& idx) {
    double s = 0;
    for (std::size_t i : idx) s += data[i];
    return s / static_cast<double>(idx.size());
  };
  Rng rng1(derive_seed(2, Stream::bootstrap, 0));
  Rng rng2(derive_seed(2, Stream::bootstrap, 0));
  BootstrapResult a = bootstrap_ci(metric, data.size(), 100, 0.95, rng1);
  BootstrapResult b = bootstrap_ci(metric, data.size(), 200, 0.95, rng2);
  CHECK(a.point == b.point);
  CHECK(a.lower <= a.point);
  CHECK(a.upper >= a.point);
}

TEST_CASE("tiny-set interval matches exhaustive enumeration", "[metrics]") {
  // Data {0, 0, 1}, mean metric: the 27 equally likely resample multisets
  // put 8/27 mass on 0 and 1/27 on 1, so the central 95% nearest-rank
  // interval over the exact distribution is [0, 1].
  std::vector<double> data = {0.0, 0.0, 1.0};
  auto metric = [&](const std::vector<std::size_t>& idx) {
    double s = 0;
    for (std::size_t i : idx) s += data[i];
    return s / static_cast<double>(idx.size());
  };
  Rng rng(derive_seed(3, Stream::bootstrap, 0));
  BootstrapResult r = bootstrap_ci(metric, data.size(), 10000, 0.95, rng);
  CHECK(r.lower == 0.0);
  CHECK(r.upper == 1.0);
  CHECK(std::abs(r.point - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("interval width shrinks as the evaluation set grows", "[metrics]") {
  Rng data_rng(300);
  auto width_for = [&](std::size_t n) {
    std::vector<double> data(n);
    for (double& v : data) v = data_rng.uniform();
    auto metric = [&](const std::vector<std::size_t>& idx) {
      double s = 0;
      for (std::size_t i : idx) s += data[i];
      return s / static_cast<double>(idx.size());
    };
    Rng rng(derive_seed(4, Stream::bootstrap, n));
    BootstrapResult r = bootstrap_ci(metric, n, 2000, 0.95, rng);
    return r.upper - r.lower;
  };
  CHECK(width_for(500) < width_for(50));
}

TEST_CASE("bootstrap rejects degenerate inputs", "[metrics]") {
  auto metric = [](const std::vector<std::size_t>&) { return 0.0; };
  Rng rng(1);
  CHECK_THROWS_AS(bootstrap_ci(metric, 0, 10, 0.95, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_ci(metric, 5, 10, 1.0, rng),
                  std::invalid_argument);
}
