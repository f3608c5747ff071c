#pragma once

// The supervised model: an ensemble of K recurrent classifiers. Each member
// is a single-layer tanh RNN over the observation sequence with one linear
// softmax head per category. Members differ by init seed and data shuffling
// (optionally bootstrap resampling); the ensemble's marginal is the plain
// mean of member distributions, and its spread yields the total/knowledge
// uncertainty split used everywhere downstream.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "camell/config.hpp"
#include "camell/data.hpp"
#include "camell/io.hpp"
#include "camell/rng.hpp"
#include "camell/schema.hpp"

namespace camell {

// Entropy in nats with the 0 ln 0 := 0 convention.
inline double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

// Total uncertainty = entropy of the ensemble marginal; knowledge uncertainty
// = that entropy minus the mean member entropy (the mutual information
// between prediction and member identity). Jensen gives 0 <= K <= T exactly;
// the tiny negative K that floating point can produce is clamped away.
inline std::pair<double, double> uncertainties(
    const std::vector<std::vector<double>>& member_dists) {
  if (member_dists.empty())
    throw std::invalid_argument("uncertainties: no member distributions");
  const std::size_t V = member_dists[0].size();
  std::vector<double> marginal(V, 0.0);
  double mean_h = 0;
  for (const auto& row : member_dists) {
    if (row.size() != V)
      throw std::invalid_argument("uncertainties: ragged member rows");
    double sum = 0;
    for (double v : row) {
      if (v < 0) throw std::invalid_argument("uncertainties: negative mass");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("uncertainties: row does not sum to 1");
    for (std::size_t i = 0; i < V; ++i) marginal[i] += row[i];
    mean_h += entropy(row);
  }
  const double k_inv = 1.0 / static_cast<double>(member_dists.size());
  for (double& v : marginal) v *= k_inv;
  mean_h *= k_inv;
  double total = entropy(marginal);
  double knowledge = total - mean_h;
  if (knowledge < 0) knowledge = 0;
  return {total, knowledge};
}

struct CellPrediction {
  std::vector<std::vector<double>> member_dists;  // K rows on the simplex
  std::vector<double> marginal;
  int predicted = 0;                // argmax of marginal, ties to lowest index
  double total_uncertainty = 0;     // nats
  double knowledge_uncertainty = 0; // nats
};

struct PredictiveGrid {
  std::size_t length = 0;
  std::size_t n_categories = 0;
  std::vector<CellPrediction> cells;  // row-major (t, m)

  PredictiveGrid() = default;
  PredictiveGrid(std::size_t T, std::size_t M)
      : length(T), n_categories(M), cells(T * M) {}

  CellPrediction& at(std::size_t t, std::size_t m) {
    return cells.at(t * n_categories + m);
  }
  const CellPrediction& at(std::size_t t, std::size_t m) const {
    return cells.at(t * n_categories + m);
  }
};

// One ensemble member: h_t = tanh(Wx x_t + Wh h_{t-1} + bh), then per
// category logits = Hw h_t + Hb. All matrices row-major.
struct MemberNet {
  std::vector<double> wx;                  // hidden x input
  std::vector<double> wh;                  // hidden x hidden
  std::vector<double> bh;                  // hidden
  std::vector<std::vector<double>> head_w; // per category: values x hidden
  std::vector<std::vector<double>> head_b; // per category: values
};

struct EnsembleModel {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::vector<std::size_t> n_values;  // per category
  std::vector<MemberNet> members;
};

namespace detail {

inline void softmax_row(const double* logits, double* out, std::size_t n) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

// Runs one member over a sequence, filling hidden states (T x H) and, per
// category, softmax rows (T x V_m).
inline void member_forward(const MemberNet& net, const Sequence& seq,
                           std::size_t H,
                           std::vector<double>& hidden,
                           std::vector<std::vector<double>>& probs) {
  const std::size_t T = seq.length;
  const std::size_t d = seq.dim;
  hidden.assign(T * H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = &seq.features[t * d];
    const double* hprev = t > 0 ? &hidden[(t - 1) * H] : nullptr;
    double* h = &hidden[t * H];
    for (std::size_t i = 0; i < H; ++i) {
      double a = net.bh[i];
      const double* wxr = &net.wx[i * d];
      for (std::size_t j = 0; j < d; ++j) a += wxr[j] * x[j];
      if (hprev != nullptr) {
        const double* whr = &net.wh[i * H];
        for (std::size_t j = 0; j < H; ++j) a += whr[j] * hprev[j];
      }
      h[i] = std::tanh(a);
    }
  }
  for (std::size_t m = 0; m < net.head_w.size(); ++m) {
    const std::size_t V = net.head_b[m].size();
    probs[m].assign(T * V, 0.0);
    std::vector<double> logits(V);
    for (std::size_t t = 0; t < T; ++t) {
      const double* h = &hidden[t * H];
      for (std::size_t v = 0; v < V; ++v) {
        double a = net.head_b[m][v];
        const double* wr = &net.head_w[m][v * H];
        for (std::size_t j = 0; j < H; ++j) a += wr[j] * h[j];
        logits[v] = a;
      }
      softmax_row(logits.data(), &probs[m][t * V], V);
    }
  }
}

// Adam moments mirroring a parameter block.
struct Moments {
  std::vector<double> m, v;
  explicit Moments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_update(std::vector<double>& w, const std::vector<double>& g,
                        Moments& mo, double lr, int step, double decay) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, step);
  const double c2 = 1.0 - std::pow(b2, step);
  const double shrink = 1.0 - lr * decay;  // decoupled weight decay
  for (std::size_t i = 0; i < w.size(); ++i) {
    mo.m[i] = b1 * mo.m[i] + (1 - b1) * g[i];
    mo.v[i] = b2 * mo.v[i] + (1 - b2) * g[i] * g[i];
    w[i] = shrink * w[i] -
           lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + eps);
  }
}

}  // namespace detail

// Trains the ensemble on every trainable cell of the labelled pool (masked
// and unassigned cells contribute zero loss). Deterministic given (pool,
// cfg, seed). Each member derives its own stream from `seed` for init,
// epoch shuffling, and the optional bootstrap resample. When `loss_trace`
// is given it receives the ensemble-mean training cross-entropy per epoch.
inline EnsembleModel fit(const std::vector<LabelledSequence>& labelled,
                         const CategorySchema& schema, const TrainConfig& cfg,
                         std::uint64_t seed,
                         std::vector<double>* loss_trace = nullptr) {
  if (labelled.empty())
    throw std::invalid_argument(
        "fit: labelled pool is empty; provide a seed dataset first");
  std::size_t trainable = 0;
  for (const auto& ls : labelled)
    for (const auto& cell : ls.grid.cells())
      if (cell.trainable()) ++trainable;
  if (trainable == 0)
    throw std::invalid_argument(
        "fit: every labelled cell is masked; no supervised signal");

  const std::size_t H = cfg.hidden_dim;
  const std::size_t d = labelled.front().seq.dim;
  const std::size_t M = schema.size();

  EnsembleModel model;
  model.input_dim = d;
  model.hidden_dim = H;
  for (std::size_t m = 0; m < M; ++m)
    model.n_values.push_back(schema.n_values(m));
  model.members.resize(cfg.ensemble_size);

  if (loss_trace != nullptr) loss_trace->assign(cfg.epochs, 0.0);

  for (std::size_t k = 0; k < cfg.ensemble_size; ++k) {
    Rng rng(derive_seed(seed, Stream::member, k));
    MemberNet& net = model.members[k];
    auto init = [&](std::vector<double>& w, std::size_t n, double scale) {
      w.resize(n);
      for (double& v : w) v = scale * rng.normal();
    };
    init(net.wx, H * d, 1.0 / std::sqrt(static_cast<double>(d)));
    init(net.wh, H * H, 1.0 / std::sqrt(static_cast<double>(H)));
    net.bh.assign(H, 0.0);
    net.head_w.resize(M);
    net.head_b.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      init(net.head_w[m], model.n_values[m] * H,
           1.0 / std::sqrt(static_cast<double>(H)));
      net.head_b[m].assign(model.n_values[m], 0.0);
    }

    std::vector<std::size_t> order(labelled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.bootstrap_resample)
      for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = rng.uniform_index(labelled.size());

    // Gradient blocks and Adam moments, same shapes as the parameters.
    std::vector<double> g_wx(net.wx.size()), g_wh(net.wh.size()),
        g_bh(net.bh.size());
    std::vector<std::vector<double>> g_hw(M), g_hb(M);
    detail::Moments mo_wx(net.wx.size()), mo_wh(net.wh.size()),
        mo_bh(net.bh.size());
    std::vector<detail::Moments> mo_hw, mo_hb;
    for (std::size_t m = 0; m < M; ++m) {
      g_hw[m].resize(net.head_w[m].size());
      g_hb[m].resize(net.head_b[m].size());
      mo_hw.emplace_back(net.head_w[m].size());
      mo_hb.emplace_back(net.head_b[m].size());
    }

    std::vector<double> hidden;
    std::vector<std::vector<double>> probs(M);
    std::vector<double> dh, da;
    int adam_step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      double epoch_loss = 0;
      std::size_t epoch_cells = 0;
      for (std::size_t start = 0; start < order.size();
           start += cfg.batch_size) {
        std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        std::fill(g_wx.begin(), g_wx.end(), 0.0);
        std::fill(g_wh.begin(), g_wh.end(), 0.0);
        std::fill(g_bh.begin(), g_bh.end(), 0.0);
        for (std::size_t m = 0; m < M; ++m) {
          std::fill(g_hw[m].begin(), g_hw[m].end(), 0.0);
          std::fill(g_hb[m].begin(), g_hb[m].end(), 0.0);
        }
        std::size_t batch_cells = 0;
        double batch_loss = 0;

        for (std::size_t bi = start; bi < stop; ++bi) {
          const LabelledSequence& ls = labelled[order[bi]];
          Sequence seq = ls.seq;
          if (cfg.input_noise > 0)  // augmentation: blurs away memorization
            for (double& x : seq.features) x += cfg.input_noise * rng.normal();
          const std::size_t T = seq.length;
          detail::member_forward(net, seq, H, hidden, probs);

          dh.assign(T * H, 0.0);
          for (std::size_t t = T; t-- > 0;) {
            double* dht = &dh[t * H];
            for (std::size_t m = 0; m < M; ++m) {
              const LabelCell& cell = ls.grid.at(t, m);
              if (!cell.trainable()) continue;
              const std::size_t V = model.n_values[m];
              const double* p = &probs[m][t * V];
              ++batch_cells;
              batch_loss -= std::log(std::max(p[cell.value], 1e-300));
              for (std::size_t v = 0; v < V; ++v) {
                double dlogit =
                    p[v] - (static_cast<int>(v) == cell.value ? 1.0 : 0.0);
                const double* wr = &net.head_w[m][v * H];
                double* gw = &g_hw[m][v * H];
                const double* h = &hidden[t * H];
                for (std::size_t j = 0; j < H; ++j) {
                  gw[j] += dlogit * h[j];
                  dht[j] += dlogit * wr[j];
                }
                g_hb[m][v] += dlogit;
              }
            }
            // Through the tanh, into the recurrent and input weights.
            da.assign(H, 0.0);
            const double* h = &hidden[t * H];
            for (std::size_t i = 0; i < H; ++i)
              da[i] = dht[i] * (1.0 - h[i] * h[i]);
            const double* x = &seq.features[t * seq.dim];
            for (std::size_t i = 0; i < H; ++i) {
              double* gx = &g_wx[i * seq.dim];
              const double dai = da[i];
              for (std::size_t j = 0; j < seq.dim; ++j) gx[j] += dai * x[j];
              g_bh[i] += dai;
            }
            if (t > 0) {
              const double* hprev = &hidden[(t - 1) * H];
              double* dhprev = &dh[(t - 1) * H];
              for (std::size_t i = 0; i < H; ++i) {
                double* gh = &g_wh[i * H];
                const double dai = da[i];
                const double* whr = &net.wh[i * H];
                for (std::size_t j = 0; j < H; ++j) {
                  gh[j] += dai * hprev[j];
                  dhprev[j] += dai * whr[j];
                }
              }
            }
          }
        }
        if (batch_cells == 0) continue;
        const double scale = 1.0 / static_cast<double>(batch_cells);
        for (double& g : g_wx) g *= scale;
        for (double& g : g_wh) g *= scale;
        for (double& g : g_bh) g *= scale;
        for (std::size_t m = 0; m < M; ++m) {
          for (double& g : g_hw[m]) g *= scale;
          for (double& g : g_hb[m]) g *= scale;
        }
        ++adam_step;
        const double lr = cfg.learning_rate, wd = cfg.weight_decay;
        detail::adam_update(net.wx, g_wx, mo_wx, lr, adam_step, wd);
        detail::adam_update(net.wh, g_wh, mo_wh, lr, adam_step, wd);
        detail::adam_update(net.bh, g_bh, mo_bh, lr, adam_step, 0.0);
        for (std::size_t m = 0; m < M; ++m) {
          detail::adam_update(net.head_w[m], g_hw[m], mo_hw[m], lr, adam_step,
                              wd);
          detail::adam_update(net.head_b[m], g_hb[m], mo_hb[m], lr, adam_step,
                              0.0);
        }
        epoch_loss += batch_loss;
        epoch_cells += batch_cells;
      }
      if (loss_trace != nullptr && epoch_cells > 0)
        (*loss_trace)[epoch] +=
            epoch_loss / static_cast<double>(epoch_cells) /
            static_cast<double>(cfg.ensemble_size);
    }
  }
  return model;
}

inline PredictiveGrid predict(const EnsembleModel& model, const Sequence& seq) {
  if (seq.dim != model.input_dim)
    throw std::invalid_argument("predict: sequence dimension " +
                                std::to_string(seq.dim) + " != model input " +
                                std::to_string(model.input_dim));
  const std::size_t T = seq.length;
  const std::size_t M = model.n_values.size();
  const std::size_t K = model.members.size();
  PredictiveGrid grid(T, M);

  std::vector<double> hidden;
  std::vector<std::vector<double>> probs(M);
  for (std::size_t k = 0; k < K; ++k) {
    detail::member_forward(model.members[k], seq, model.hidden_dim, hidden,
                           probs);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t V = model.n_values[m];
        CellPrediction& cell = grid.at(t, m);
        if (cell.member_dists.empty()) cell.member_dists.resize(K);
        cell.member_dists[k].assign(&probs[m][t * V], &probs[m][(t + 1) * V]);
      }
  }
  for (auto& cell : grid.cells) {
    const std::size_t V = cell.member_dists[0].size();
    cell.marginal.assign(V, 0.0);
    for (const auto& row : cell.member_dists)
      for (std::size_t v = 0; v < V; ++v) cell.marginal[v] += row[v];
    for (double& v : cell.marginal) v /= static_cast<double>(K);
    cell.predicted = 0;
    for (std::size_t v = 1; v < V; ++v)
      if (cell.marginal[v] > cell.marginal[cell.predicted])
        cell.predicted = static_cast<int>(v);
    auto [total, knowledge] = uncertainties(cell.member_dists);
    cell.total_uncertainty = total;
    cell.knowledge_uncertainty = knowledge;
  }
  return grid;
}

// Mean over time of one member's hidden states; the sequence embedding used
// by the diversity strategy.
inline std::vector<double> mean_hidden(const EnsembleModel& model,
                                       const Sequence& seq,
                                       std::size_t member = 0) {
  if (seq.dim != model.input_dim)
    throw std::invalid_argument("mean_hidden: sequence dimension mismatch");
  std::vector<double> hidden;
  std::vector<std::vector<double>> probs(model.n_values.size());
  detail::member_forward(model.members.at(member), seq, model.hidden_dim,
                         hidden, probs);
  std::vector<double> mean(model.hidden_dim, 0.0);
  for (std::size_t t = 0; t < seq.length; ++t)
    for (std::size_t i = 0; i < model.hidden_dim; ++i)
      mean[i] += hidden[t * model.hidden_dim + i];
  for (double& v : mean) v /= static_cast<double>(std::max<std::size_t>(1, seq.length));
  return mean;
}

// Argmax labels for exactly the requested positions.
inline std::vector<LabelUpdate> self_label(
    const EnsembleModel& model, const Sequence& seq,
    const std::vector<std::pair<std::size_t, std::size_t>>& positions) {
  std::vector<LabelUpdate> out;
  if (positions.empty()) return out;
  PredictiveGrid grid = predict(model, seq);
  out.reserve(positions.size());
  for (auto [t, m] : positions)
    out.push_back({t, m, grid.at(t, m).predicted, Provenance::self_label});
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: same text-format family as datasets.

constexpr const char* kModelMagic = "camell-model";

inline void save_model(const EnsembleModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << kModelMagic << " " << kFormatVersion << "\n";
  out << "dims input=" << model.input_dim << " hidden=" << model.hidden_dim
      << " members=" << model.members.size()
      << " categories=" << model.n_values.size() << "\n";
  out << "values";
  for (std::size_t v : model.n_values) out << " " << v;
  out << "\n";
  auto block = [&](const char* name, const std::vector<double>& w) {
    out << name;
    for (double v : w) out << " " << fmt_double(v);
    out << "\n";
  };
  for (std::size_t k = 0; k < model.members.size(); ++k) {
    out << "member k=" << k << "\n";
    block("wx", model.members[k].wx);
    block("wh", model.members[k].wh);
    block("bh", model.members[k].bh);
    for (std::size_t m = 0; m < model.n_values.size(); ++m) {
      block("hw", model.members[k].head_w[m]);
      block("hb", model.members[k].head_b[m]);
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline EnsembleModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  detail::LineReader reader(in);
  detail::Line line;
  if (!reader.next(line) || line.head != kModelMagic)
    detail::parse_fail(path, line.number ? line.number : 1,
                       std::string("expected '") + kModelMagic + "' header");
  if (line.tokens.empty() || line.tokens[0] != kFormatVersion)
    detail::parse_fail(path, line.number, "unsupported format version");

  if (!reader.next(line) || line.head != "dims")
    detail::parse_fail(path, line.number, "expected 'dims' record");
  EnsembleModel model;
  model.input_dim = detail::need_size(line, "input", path);
  model.hidden_dim = detail::need_size(line, "hidden", path);
  std::size_t K = detail::need_size(line, "members", path);
  std::size_t M = detail::need_size(line, "categories", path);

  if (!reader.next(line) || line.head != "values" || line.tokens.size() != M)
    detail::parse_fail(path, line.number, "expected 'values' record with " +
                                              std::to_string(M) + " entries");
  for (const auto& tok : line.tokens)
    model.n_values.push_back(std::stoull(tok));

  auto read_block = [&](const char* name, std::vector<double>& w,
                        std::size_t n) {
    if (!reader.next(line) || line.head != name || line.tokens.size() != n)
      detail::parse_fail(path, line.number,
                         std::string("expected '") + name + "' block of " +
                             std::to_string(n) + " values");
    w.resize(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::stod(line.tokens[i]);
  };
  model.members.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (!reader.next(line) || line.head != "member" ||
        detail::need_size(line, "k", path) != k)
      detail::parse_fail(path, line.number, "expected member " +
                                                std::to_string(k));
    MemberNet& net = model.members[k];
    read_block("wx", net.wx, model.hidden_dim * model.input_dim);
    read_block("wh", net.wh, model.hidden_dim * model.hidden_dim);
    read_block("bh", net.bh, model.hidden_dim);
    net.head_w.resize(M);
    net.head_b.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      read_block("hw", net.head_w[m], model.n_values[m] * model.hidden_dim);
      read_block("hb", net.head_b[m], model.n_values[m]);
    }
  }
  if (!reader.next(line) || line.head != "end")
    detail::parse_fail(path, reader.lineno(), "missing 'end'");
  return model;
}

}  // namespace camell
