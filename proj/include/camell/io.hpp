#pragma once

// Versioned, human-readable persistence for datasets and ground-truth
// records. The grammar is documented in docs/formats.md. Floating-point
// fields are written with 17 significant digits so a load(save(x)) round
// trip reproduces every value bit-exactly.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "camell/data.hpp"
#include "camell/schema.hpp"

namespace camell {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

namespace detail {

struct Line {
  int number = 0;
  std::string head;
  std::vector<std::string> tokens;  // tokens after the head
  std::map<std::string, std::string> fields;  // key=value tokens
};

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(Line& out) {
    std::string raw;
    while (std::getline(in_, raw)) {
      ++lineno_;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      if (raw.empty() || raw[0] == '#') continue;
      out = Line{};
      out.number = lineno_;
      std::istringstream ls(raw);
      std::string tok;
      ls >> out.head;
      while (ls >> tok) {
        out.tokens.push_back(tok);
        std::size_t eq = tok.find('=');
        if (eq != std::string::npos)
          out.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      return true;
    }
    return false;
  }

  int lineno() const { return lineno_; }

 private:
  std::istream& in_;
  int lineno_ = 0;
};

[[noreturn]] inline void parse_fail(const std::string& path, int line,
                                    const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline const std::string& need(const Line& l, const std::string& key,
                               const std::string& path) {
  auto it = l.fields.find(key);
  if (it == l.fields.end())
    parse_fail(path, l.number, "'" + l.head + "' record missing field '" + key + "'");
  return it->second;
}

inline std::size_t need_size(const Line& l, const std::string& key,
                             const std::string& path) {
  try {
    return std::stoull(need(l, key, path));
  } catch (const std::exception&) {
    parse_fail(path, l.number, "bad integer in field '" + key + "'");
  }
}

inline double need_double(const Line& l, const std::string& key,
                          const std::string& path) {
  try {
    return std::stod(need(l, key, path));
  } catch (const std::exception&) {
    parse_fail(path, l.number, "bad number in field '" + key + "'");
  }
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline void check_token(const std::string& s, const std::string& what) {
  if (s.empty())
    throw std::invalid_argument("save: empty " + what);
  for (char ch : s)
    if (ch == ' ' || ch == '\t' || ch == ',' || ch == '\n')
      throw std::invalid_argument("save: " + what + " '" + s +
                                  "' contains whitespace or comma");
}

}  // namespace detail

constexpr const char* kDatasetMagic = "camell-dataset";
constexpr const char* kTruthMagic = "camell-truth";
constexpr const char* kFormatVersion = "v1";

inline void write_sequence_block(std::ostream& out, const Sequence& seq,
                                 const char* partition,
                                 const LabelGrid* grid) {
  out << "sequence id=" << seq.id << " partition=" << partition
      << " T=" << seq.length << " d=" << seq.dim << "\n";
  for (std::size_t t = 0; t < seq.length; ++t) {
    out << "x";
    for (std::size_t j = 0; j < seq.dim; ++j)
      out << " " << fmt_double(seq.at(t, j));
    out << "\n";
  }
  if (grid != nullptr) {
    for (std::size_t t = 0; t < grid->steps(); ++t)
      for (std::size_t m = 0; m < grid->categories(); ++m) {
        const LabelCell& c = grid->at(t, m);
        if (!c.assigned()) continue;
        out << "label t=" << t << " m=" << m << " value=" << c.value
            << " prov=" << provenance_name(c.provenance);
        if (c.confidence) out << " conf=" << fmt_double(*c.confidence);
        out << "\n";
      }
  }
  out << "end\n";
}

inline void save_dataset(const Pool& pool, const CategorySchema& schema,
                         const std::string& path) {
  schema.validate();
  for (const auto& s : pool.labelled) validate_grid(s.grid, schema, s.seq.id);
  for (const auto& s : pool.dev) validate_grid(s.grid, schema, s.seq.id);
  for (const auto& s : pool.test) validate_grid(s.grid, schema, s.seq.id);
  pool.check_disjoint();

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << kDatasetMagic << " " << kFormatVersion << "\n";
  out << "schema M=" << schema.size() << "\n";
  for (const auto& c : schema.categories()) {
    detail::check_token(c.name, "category name");
    for (const auto& v : c.values) detail::check_token(v, "value name");
    out << "category name=" << c.name << " null=" << c.null_index
        << " values=";
    for (std::size_t i = 0; i < c.values.size(); ++i)
      out << (i ? "," : "") << c.values[i];
    out << "\n";
  }
  for (const auto& s : pool.labelled)
    write_sequence_block(out, s.seq, "labelled", &s.grid);
  for (const auto& s : pool.unlabelled)
    write_sequence_block(out, s, "unlabelled", nullptr);
  for (const auto& s : pool.dev)
    write_sequence_block(out, s.seq, "dev", &s.grid);
  for (const auto& s : pool.test)
    write_sequence_block(out, s.seq, "test", &s.grid);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

struct Dataset {
  Pool pool;
  CategorySchema schema;
};

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  detail::LineReader reader(in);
  detail::Line line;

  if (!reader.next(line) || line.head != kDatasetMagic)
    detail::parse_fail(path, line.number ? line.number : 1,
                       std::string("expected '") + kDatasetMagic + "' header");
  if (line.tokens.empty() || line.tokens[0] != kFormatVersion)
    detail::parse_fail(path, line.number,
                       "unsupported format version '" +
                           (line.tokens.empty() ? "" : line.tokens[0]) + "'");

  if (!reader.next(line) || line.head != "schema")
    detail::parse_fail(path, line.number, "expected 'schema' record");
  std::size_t M = detail::need_size(line, "M", path);

  std::vector<Category> cats;
  for (std::size_t m = 0; m < M; ++m) {
    if (!reader.next(line) || line.head != "category")
      detail::parse_fail(path, line.number, "expected 'category' record");
    Category c;
    c.name = detail::need(line, "name", path);
    c.null_index = detail::need_size(line, "null", path);
    c.values = detail::split_csv(detail::need(line, "values", path));
    cats.push_back(std::move(c));
  }
  CategorySchema schema(std::move(cats));

  Pool pool;
  while (reader.next(line)) {
    if (line.head != "sequence")
      detail::parse_fail(path, line.number,
                         "expected 'sequence' record, got '" + line.head + "'");
    Sequence seq;
    seq.id = detail::need(line, "id", path);
    seq.length = detail::need_size(line, "T", path);
    seq.dim = detail::need_size(line, "d", path);
    std::string partition = detail::need(line, "partition", path);
    seq.features.reserve(seq.length * seq.dim);
    for (std::size_t t = 0; t < seq.length; ++t) {
      if (!reader.next(line) || line.head != "x")
        detail::parse_fail(path, line.number,
                           "sequence '" + seq.id + "': expected feature row");
      if (line.tokens.size() != seq.dim)
        detail::parse_fail(path, line.number,
                           "sequence '" + seq.id + "': feature row has " +
                               std::to_string(line.tokens.size()) +
                               " values, expected " + std::to_string(seq.dim));
      for (const auto& tok : line.tokens) {
        try {
          seq.features.push_back(std::stod(tok));
        } catch (const std::exception&) {
          detail::parse_fail(path, line.number, "bad feature value '" + tok + "'");
        }
      }
    }
    LabelGrid grid(seq.length, M);
    bool saw_label = false;
    while (reader.next(line)) {
      if (line.head == "end") break;
      if (line.head != "label")
        detail::parse_fail(path, line.number,
                           "expected 'label' or 'end', got '" + line.head + "'");
      saw_label = true;
      std::size_t t = detail::need_size(line, "t", path);
      std::size_t m = detail::need_size(line, "m", path);
      if (t >= seq.length || m >= M)
        detail::parse_fail(path, line.number, "label cell out of range");
      LabelCell& cell = grid.at(t, m);
      cell.value = static_cast<int>(detail::need_size(line, "value", path));
      cell.provenance = provenance_from_name(detail::need(line, "prov", path));
      if (line.fields.count("conf"))
        cell.confidence = detail::need_double(line, "conf", path);
    }
    if (line.head != "end")
      detail::parse_fail(path, reader.lineno(),
                         "sequence '" + seq.id + "': missing 'end'");

    if (partition == "labelled") {
      validate_grid(grid, schema, seq.id);
      pool.labelled.push_back({std::move(seq), std::move(grid)});
    } else if (partition == "unlabelled") {
      if (saw_label)
        detail::parse_fail(path, line.number,
                           "unlabelled sequence '" + seq.id + "' carries labels");
      pool.unlabelled.push_back(std::move(seq));
    } else if (partition == "dev") {
      validate_grid(grid, schema, seq.id);
      pool.dev.push_back({std::move(seq), std::move(grid)});
    } else if (partition == "test") {
      validate_grid(grid, schema, seq.id);
      pool.test.push_back({std::move(seq), std::move(grid)});
    } else {
      detail::parse_fail(path, line.number, "unknown partition '" + partition + "'");
    }
  }
  pool.check_disjoint();
  return {std::move(pool), std::move(schema)};
}

inline void save_truth(const std::vector<GroundTruthRecord>& records,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << kTruthMagic << " " << kFormatVersion << "\n";
  for (const auto& r : records) {
    std::size_t T = r.truth.size();
    std::size_t M = T ? r.truth[0].size() : 0;
    out << "sequence id=" << r.id << " T=" << T << " M=" << M << "\n";
    for (std::size_t t = 0; t < T; ++t) {
      out << "truth";
      for (std::size_t m = 0; m < M; ++m) out << " " << r.truth[t][m];
      out << "\n";
    }
    for (const auto& c : r.corruption_log)
      out << "corruption t=" << c.t << " m=" << c.m
          << " type=" << error_type_name(c.type) << " original=" << c.original
          << " corrupted=" << c.corrupted << "\n";
    out << "end\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<GroundTruthRecord> load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  detail::LineReader reader(in);
  detail::Line line;
  if (!reader.next(line) || line.head != kTruthMagic)
    detail::parse_fail(path, line.number ? line.number : 1,
                       std::string("expected '") + kTruthMagic + "' header");
  if (line.tokens.empty() || line.tokens[0] != kFormatVersion)
    detail::parse_fail(path, line.number, "unsupported format version");

  std::vector<GroundTruthRecord> records;
  while (reader.next(line)) {
    if (line.head != "sequence")
      detail::parse_fail(path, line.number, "expected 'sequence' record");
    GroundTruthRecord r;
    r.id = detail::need(line, "id", path);
    std::size_t T = detail::need_size(line, "T", path);
    std::size_t M = detail::need_size(line, "M", path);
    for (std::size_t t = 0; t < T; ++t) {
      if (!reader.next(line) || line.head != "truth")
        detail::parse_fail(path, line.number, "expected 'truth' row");
      if (line.tokens.size() != M)
        detail::parse_fail(path, line.number, "truth row has wrong arity");
      std::vector<int> row;
      for (const auto& tok : line.tokens) {
        try {
          row.push_back(std::stoi(tok));
        } catch (const std::exception&) {
          detail::parse_fail(path, line.number, "bad truth value '" + tok + "'");
        }
      }
      r.truth.push_back(std::move(row));
    }
    while (reader.next(line)) {
      if (line.head == "end") break;
      if (line.head != "corruption")
        detail::parse_fail(path, line.number, "expected 'corruption' or 'end'");
      Corruption c;
      c.t = detail::need_size(line, "t", path);
      c.m = detail::need_size(line, "m", path);
      c.type = error_type_from_name(detail::need(line, "type", path));
      c.original = static_cast<int>(detail::need_size(line, "original", path));
      c.corrupted = static_cast<int>(detail::need_size(line, "corrupted", path));
      if (c.t >= T || c.m >= M)
        detail::parse_fail(path, line.number, "corruption cell out of range");
      r.corruption_log.push_back(c);
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace camell
