// Core data model: label grids, merge semantics, pool partitioning, and the
// versioned dataset format. The round-trip checks go through the independent
// deep-equality walker below rather than any library comparison.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "camell/data.hpp"
#include "camell/io.hpp"
#include "camell/rng.hpp"
#include "camell/schema.hpp"

using namespace camell;

namespace {

CategorySchema toy_schema(std::size_t M = 3, std::size_t V = 4) {
  std::vector<Category> cats;
  for (std::size_t m = 0; m < M; ++m) {
    Category c;
    c.name = "cat" + std::to_string(m);
    c.null_index = 0;
    c.values.push_back("none");
    for (std::size_t v = 1; v < V; ++v)
      c.values.push_back("v" + std::to_string(v));
    cats.push_back(c);
  }
  return CategorySchema(cats);
}

Sequence random_sequence(Rng& rng, const std::string& id, std::size_t T,
                         std::size_t d) {
  Sequence s;
  s.id = id;
  s.length = T;
  s.dim = d;
  for (std::size_t i = 0; i < T * d; ++i) s.features.push_back(rng.normal());
  return s;
}

LabelGrid random_grid(Rng& rng, std::size_t T, std::size_t M, std::size_t V) {
  LabelGrid g(T, M);
  const Provenance provs[] = {Provenance::expert, Provenance::self_label,
                              Provenance::corrected, Provenance::masked};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t m = 0; m < M; ++m) {
      if (rng.uniform() < 0.2) continue;  // leave some cells unassigned
      LabelCell& c = g.at(t, m);
      c.value = static_cast<int>(rng.uniform_index(V));
      c.provenance = provs[rng.uniform_index(4)];
      if (rng.uniform() < 0.5) c.confidence = rng.uniform();
    }
  return g;
}

// Independent deep-equality walker: compares every field of every record,
// doubles via exact ==. Kept free of any library equality helper.
bool cells_equal(const LabelCell& a, const LabelCell& b) {
  if (a.value != b.value) return false;
  if (a.provenance != b.provenance) return false;
  if (a.confidence.has_value() != b.confidence.has_value()) return false;
  if (a.confidence && *a.confidence != *b.confidence) return false;
  return true;
}

bool sequences_equal(const Sequence& a, const Sequence& b) {
  if (a.id != b.id || a.length != b.length || a.dim != b.dim) return false;
  if (a.features.size() != b.features.size()) return false;
  for (std::size_t i = 0; i < a.features.size(); ++i)
    if (a.features[i] != b.features[i]) return false;
  return true;
}

bool grids_equal(const LabelGrid& a, const LabelGrid& b) {
  if (a.steps() != b.steps() || a.categories() != b.categories()) return false;
  for (std::size_t t = 0; t < a.steps(); ++t)
    for (std::size_t m = 0; m < a.categories(); ++m)
      if (!cells_equal(a.at(t, m), b.at(t, m))) return false;
  return true;
}

bool schemas_equal(const CategorySchema& a, const CategorySchema& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a.category(m).name != b.category(m).name) return false;
    if (a.category(m).null_index != b.category(m).null_index) return false;
    if (a.category(m).values != b.category(m).values) return false;
  }
  return true;
}

bool pools_equal(const Pool& a, const Pool& b) {
  if (a.labelled.size() != b.labelled.size()) return false;
  if (a.unlabelled.size() != b.unlabelled.size()) return false;
  if (a.dev.size() != b.dev.size()) return false;
  if (a.test.size() != b.test.size()) return false;
  for (std::size_t i = 0; i < a.labelled.size(); ++i)
    if (!sequences_equal(a.labelled[i].seq, b.labelled[i].seq) ||
        !grids_equal(a.labelled[i].grid, b.labelled[i].grid))
      return false;
  for (std::size_t i = 0; i < a.unlabelled.size(); ++i)
    if (!sequences_equal(a.unlabelled[i], b.unlabelled[i])) return false;
  for (std::size_t i = 0; i < a.dev.size(); ++i)
    if (!sequences_equal(a.dev[i].seq, b.dev[i].seq) ||
        !grids_equal(a.dev[i].grid, b.dev[i].grid))
      return false;
  for (std::size_t i = 0; i < a.test.size(); ++i)
    if (!sequences_equal(a.test[i].seq, b.test[i].seq) ||
        !grids_equal(a.test[i].grid, b.test[i].grid))
      return false;
  return true;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("merge_labels applies updates without mutating input", "[core]") {
  LabelGrid g(3, 2);
  std::vector<LabelUpdate> ups = {{0, 0, 2, Provenance::expert, {}}};
  LabelGrid merged = merge_labels(g, ups);
  CHECK(merged.at(0, 0).value == 2);
  CHECK(merged.at(0, 0).provenance == Provenance::expert);
  CHECK_FALSE(g.at(0, 0).assigned());
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t m = 0; m < 2; ++m)
      if (!(t == 0 && m == 0))
        CHECK(merged.at(t, m).provenance == Provenance::none);
}

TEST_CASE("merge_labels with empty updates is identity", "[core]") {
  Rng rng(7);
  LabelGrid g = random_grid(rng, 4, 3, 4);
  LabelGrid merged = merge_labels(g, {});
  CHECK(grids_equal(g, merged));
}

TEST_CASE("merge_labels last-writer rule across calls", "[core]") {
  LabelGrid g(2, 2);
  g = merge_labels(g, {{1, 1, 3, Provenance::expert, {}}});
  g = merge_labels(g, {{1, 1, 1, Provenance::corrected, {}}});
  CHECK(g.at(1, 1).value == 1);
  CHECK(g.at(1, 1).provenance == Provenance::corrected);
}

TEST_CASE("merge_labels rejects bad updates", "[core]") {
  LabelGrid g(2, 2);
  CHECK_THROWS_AS(merge_labels(g, {{2, 0, 1, Provenance::expert, {}}}),
                  std::out_of_range);
  CHECK_THROWS_AS(merge_labels(g,
                               {{0, 0, 1, Provenance::expert, {}},
                                {0, 0, 2, Provenance::expert, {}}}),
                  std::invalid_argument);
}

TEST_CASE("merge_labels is associative over disjoint update sets", "[core]") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    LabelGrid g = random_grid(rng, 5, 3, 4);
    std::vector<LabelUpdate> a, b;
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t m = 0; m < 3; ++m) {
        double r = rng.uniform();
        LabelUpdate u{t, m, static_cast<int>(rng.uniform_index(4)),
                      Provenance::self_label, {}};
        if (r < 0.3) a.push_back(u);
        else if (r < 0.6) b.push_back(u);
      }
    std::vector<LabelUpdate> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    LabelGrid lhs = merge_labels(merge_labels(g, a), b);
    LabelGrid rhs = merge_labels(g, ab);
    LabelGrid swapped = merge_labels(merge_labels(g, b), a);
    CHECK(grids_equal(lhs, rhs));
    CHECK(grids_equal(lhs, swapped));
  }
}

TEST_CASE("dataset round-trip: empty labelled pool, 2 unlabelled", "[core]") {
  Rng rng(3);
  Pool pool;
  pool.unlabelled.push_back(random_sequence(rng, "seq-a", 3, 4));
  pool.unlabelled.push_back(random_sequence(rng, "seq-b", 5, 4));
  CategorySchema schema = toy_schema();
  std::string path = temp_path("camell_rt_small.txt");
  save_dataset(pool, schema, path);

  std::string text = read_text_file(path);
  CHECK(text.find("partition=labelled") == std::string::npos);
  CHECK(text.rfind("camell-dataset v1", 0) == 0);

  Dataset loaded = load_dataset(path);
  CHECK(pools_equal(pool, loaded.pool));
  CHECK(schemas_equal(schema, loaded.schema));
  std::remove(path.c_str());
}

TEST_CASE("dataset round-trip preserves masked provenance", "[core]") {
  Rng rng(5);
  Pool pool;
  LabelledSequence ls;
  ls.seq = random_sequence(rng, "seq-m", 2, 3);
  ls.grid = LabelGrid(2, 3);
  ls.grid.at(0, 1).value = 2;
  ls.grid.at(0, 1).provenance = Provenance::masked;
  ls.grid.at(0, 1).confidence = 0.123456789012345;
  pool.labelled.push_back(ls);
  std::string path = temp_path("camell_rt_masked.txt");
  save_dataset(pool, toy_schema(), path);
  Dataset loaded = load_dataset(path);
  REQUIRE(loaded.pool.labelled.size() == 1);
  const LabelCell& c = loaded.pool.labelled[0].grid.at(0, 1);
  CHECK(c.provenance == Provenance::masked);
  CHECK(c.value == 2);
  REQUIRE(c.confidence.has_value());
  CHECK(*c.confidence == 0.123456789012345);
  std::remove(path.c_str());
}

TEST_CASE("dataset round-trip: 100 random sequences, deep-equality walker",
          "[core]") {
  Rng rng(17);
  CategorySchema schema = toy_schema(4, 5);
  Pool pool;
  for (int i = 0; i < 100; ++i) {
    std::string id = "seq-" + std::to_string(i);
    std::size_t T = 1 + rng.uniform_index(8);
    Sequence s = random_sequence(rng, id, T, 6);
    double r = rng.uniform();
    if (r < 0.4) {
      pool.labelled.push_back({s, random_grid(rng, T, 4, 5)});
    } else if (r < 0.7) {
      pool.unlabelled.push_back(s);
    } else if (r < 0.85) {
      pool.dev.push_back({s, random_grid(rng, T, 4, 5)});
    } else {
      pool.test.push_back({s, random_grid(rng, T, 4, 5)});
    }
  }
  std::string path = temp_path("camell_rt_100.txt");
  save_dataset(pool, schema, path);
  Dataset loaded = load_dataset(path);
  CHECK(pools_equal(pool, loaded.pool));
  CHECK(schemas_equal(schema, loaded.schema));

  // Second round trip is byte-stable.
  std::string path2 = temp_path("camell_rt_100b.txt");
  save_dataset(loaded.pool, loaded.schema, path2);
  CHECK(read_text_file(path) == read_text_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("loader reports malformed files with line numbers", "[core]") {
  std::string path = temp_path("camell_bad.txt");

  write_text_file(path,
                  "camell-dataset v1\nschema M=1\ncategory name=c null=0 values=a,b\n"
                  "sequence id=s partition=unlabelled T=1 d=2\nx 0.5\nend\n");
  try {
    load_dataset(path);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find(":5") != std::string::npos);  // the short feature row
  }

  write_text_file(path, "camell-dataset v99\n");
  CHECK_THROWS_WITH(load_dataset(path),
                    Catch::Matchers::ContainsSubstring("version"));

  // value index outside the schema's value set
  write_text_file(path,
                  "camell-dataset v1\nschema M=1\n"
                  "category name=c null=0 values=a,b\n"
                  "sequence id=s partition=labelled T=1 d=1\nx 0.5\n"
                  "label t=0 m=0 value=7 prov=expert\nend\n");
  CHECK_THROWS_WITH(load_dataset(path),
                    Catch::Matchers::ContainsSubstring("out of range"));
  std::remove(path.c_str());
}

TEST_CASE("pool rejects duplicated sequence ids across partitions", "[core]") {
  Rng rng(9);
  Pool pool;
  Sequence s = random_sequence(rng, "dup", 2, 3);
  pool.unlabelled.push_back(s);
  pool.test.push_back({s, LabelGrid(2, 3)});
  CHECK_THROWS_AS(pool.check_disjoint(), std::runtime_error);
}
