#pragma once

// Sequences, label grids with provenance, pools, and ground-truth records.
// Everything here is a value type: operations copy their inputs and return
// new values, so pools and grids can be shared across workers freely.

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "camell/schema.hpp"

namespace camell {

struct Sequence {
  std::string id;
  std::size_t length = 0;  // T
  std::size_t dim = 0;     // d
  std::vector<double> features;  // row-major T x d

  double at(std::size_t t, std::size_t j) const {
    return features[t * dim + j];
  }
};

enum class Provenance { none, expert, self_label, corrected, masked };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::none: return "none";
    case Provenance::expert: return "expert";
    case Provenance::self_label: return "self";
    case Provenance::corrected: return "corrected";
    case Provenance::masked: return "masked";
  }
  return "none";
}

inline Provenance provenance_from_name(const std::string& s) {
  if (s == "none") return Provenance::none;
  if (s == "expert") return Provenance::expert;
  if (s == "self") return Provenance::self_label;
  if (s == "corrected") return Provenance::corrected;
  if (s == "masked") return Provenance::masked;
  throw std::invalid_argument("unknown provenance '" + s + "'");
}

struct LabelCell {
  int value = -1;  // -1 while unassigned
  Provenance provenance = Provenance::none;
  std::optional<double> confidence;

  bool assigned() const { return value >= 0; }
  // Masked cells are excluded from every training loss.
  bool trainable() const {
    return assigned() && provenance != Provenance::masked &&
           provenance != Provenance::none;
  }
};

class LabelGrid {
 public:
  LabelGrid() = default;
  LabelGrid(std::size_t T, std::size_t M) : T_(T), M_(M), cells_(T * M) {}

  std::size_t steps() const { return T_; }
  std::size_t categories() const { return M_; }

  const LabelCell& at(std::size_t t, std::size_t m) const {
    check_bounds(t, m);
    return cells_[t * M_ + m];
  }
  LabelCell& at(std::size_t t, std::size_t m) {
    check_bounds(t, m);
    return cells_[t * M_ + m];
  }

  std::size_t count_provenance(Provenance p) const {
    std::size_t n = 0;
    for (const auto& c : cells_)
      if (c.provenance == p) ++n;
    return n;
  }

  const std::vector<LabelCell>& cells() const { return cells_; }

 private:
  void check_bounds(std::size_t t, std::size_t m) const {
    if (t >= T_ || m >= M_)
      throw std::out_of_range("label grid: cell (" + std::to_string(t) + "," +
                              std::to_string(m) + ") outside " +
                              std::to_string(T_) + "x" + std::to_string(M_));
  }

  std::size_t T_ = 0;
  std::size_t M_ = 0;
  std::vector<LabelCell> cells_;
};

struct LabelledSequence {
  Sequence seq;
  LabelGrid grid;
};

struct Pool {
  std::vector<LabelledSequence> labelled;
  std::vector<Sequence> unlabelled;
  std::vector<LabelledSequence> dev;
  std::vector<LabelledSequence> test;

  std::size_t n_lab() const { return labelled.size(); }
  std::size_t n_unlb() const { return unlabelled.size(); }

  // A sequence id must live in exactly one partition.
  void check_disjoint() const {
    std::set<std::string> seen;
    auto add = [&seen](const std::string& id) {
      if (!seen.insert(id).second)
        throw std::runtime_error("pool: sequence id '" + id +
                                 "' appears in more than one partition");
    };
    for (const auto& s : labelled) add(s.seq.id);
    for (const auto& s : unlabelled) add(s.id);
    for (const auto& s : dev) add(s.seq.id);
    for (const auto& s : test) add(s.seq.id);
  }
};

enum class ErrorType { hallucination, duplication, substitution };

inline const char* error_type_name(ErrorType e) {
  switch (e) {
    case ErrorType::hallucination: return "hallucination";
    case ErrorType::duplication: return "duplication";
    case ErrorType::substitution: return "substitution";
  }
  return "substitution";
}

inline ErrorType error_type_from_name(const std::string& s) {
  if (s == "hallucination") return ErrorType::hallucination;
  if (s == "duplication") return ErrorType::duplication;
  if (s == "substitution") return ErrorType::substitution;
  throw std::invalid_argument("unknown error type '" + s + "'");
}

struct Corruption {
  std::size_t t = 0;
  std::size_t m = 0;
  ErrorType type = ErrorType::substitution;
  int original = -1;
  int corrupted = -1;
};

// Synthetic runs only: the true grid of a sequence plus every corruption the
// simulated expert committed on it.
struct GroundTruthRecord {
  std::string id;
  std::vector<std::vector<int>> truth;  // [t][m] value indices
  std::vector<Corruption> corruption_log;

  int true_value(std::size_t t, std::size_t m) const {
    return truth.at(t).at(m);
  }
};

struct LabelUpdate {
  std::size_t t = 0;
  std::size_t m = 0;
  int value = -1;
  Provenance provenance = Provenance::none;
  std::optional<double> confidence;
};

// Applies updates to a copy of the grid; the input is left untouched. Updates
// must be in-bounds and hit each cell at most once (last-writer semantics are
// reserved for successive calls, not within one update set).
inline LabelGrid merge_labels(const LabelGrid& grid,
                              const std::vector<LabelUpdate>& updates) {
  LabelGrid out = grid;
  std::set<std::pair<std::size_t, std::size_t>> touched;
  for (const auto& u : updates) {
    if (u.t >= grid.steps() || u.m >= grid.categories())
      throw std::out_of_range("merge_labels: cell (" + std::to_string(u.t) +
                              "," + std::to_string(u.m) + ") out of bounds");
    if (!touched.insert({u.t, u.m}).second)
      throw std::invalid_argument("merge_labels: duplicate update for cell (" +
                                  std::to_string(u.t) + "," +
                                  std::to_string(u.m) + ")");
    LabelCell& c = out.at(u.t, u.m);
    c.value = u.value;
    c.provenance = u.provenance;
    c.confidence = u.confidence;
  }
  return out;
}

// Grid values must be legal under the schema; masked/none rules are local to
// the cell so this is the only cross-object check.
inline void validate_grid(const LabelGrid& grid, const CategorySchema& schema,
                          const std::string& id) {
  if (grid.categories() != schema.size())
    throw std::runtime_error("sequence '" + id + "': grid has " +
                             std::to_string(grid.categories()) +
                             " categories, schema has " +
                             std::to_string(schema.size()));
  for (std::size_t t = 0; t < grid.steps(); ++t)
    for (std::size_t m = 0; m < grid.categories(); ++m) {
      const LabelCell& c = grid.at(t, m);
      if (c.assigned() &&
          static_cast<std::size_t>(c.value) >= schema.n_values(m))
        throw std::runtime_error(
            "sequence '" + id + "': value index " + std::to_string(c.value) +
            " out of range for category '" + schema.category(m).name + "'");
      if (!c.assigned() && c.provenance != Provenance::none)
        throw std::runtime_error("sequence '" + id +
                                 "': unassigned cell with provenance");
    }
}

}  // namespace camell
