#pragma once

// Relation-graph generation core: a GRU cell wrapped around a dynamic
// adjacency tensor memory (DATM). For each ordered object pair the model
// retrieves a context state as the adjacency-weighted sum of hidden states
// already written against the pair's endpoints, runs one GRU step on the
// pair feature, emits an edge probability, and writes both back into the
// memory cell for that pair. Baseline modes (plain sequential GRU, pairwise
// feedforward) share the same parameter set.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dggn/data.hpp"
#include "dggn/mask_encoder.hpp"
#include "dggn/rng.hpp"
#include "dggn/tensor.hpp"

namespace dggn {

enum class Mode : int { dggn = 0, vanilla_gru = 1, fully_connected = 2 };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::dggn: return "dggn";
    case Mode::vanilla_gru: return "vanilla_gru";
    case Mode::fully_connected: return "fully_connected";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "dggn") return Mode::dggn;
  if (s == "vanilla_gru") return Mode::vanilla_gru;
  if (s == "fully_connected") return Mode::fully_connected;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

struct ModelConfig {
  Mode mode = Mode::dggn;
  bool use_global = true;     // feed the mask-encoder feature into every retrieve
  bool weighted_pool = true;  // adjacency-weighted sum vs plain mean over written neighbours
  // Retrieved memory values are treated as constants unless this is set;
  // enabling it backpropagates through the steps that wrote them.
  bool through_memory = false;
  std::size_t hidden_dim = 32;  // desk-scale default; flag up to 128 for full scale
  std::uint64_t seed = 0;
};

// All learned weights of the gate equations plus the edge readout.
struct GruParams {
  Tensor w_xr, w_xz, w_xh;  // [m, 26]
  Tensor w_hr, w_hz, w_hh;  // [m, m]
  Tensor b_r, b_z, b_h;     // [m]
  Tensor w_l;               // [1, m]
  Tensor b_l;               // [1]

  std::size_t hidden_dim() const { return b_r.shape()[0]; }

  static GruParams init(std::size_t m, Rng& rng) {
    GruParams p;
    auto uniform = [&](Shape shape, std::size_t fan_in) {
      std::vector<double> v(numel(shape));
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : v) x = rng.uniform(-bound, bound);
      return make_tensor(std::move(shape), std::move(v), true);
    };
    p.w_xr = uniform({m, kPairFeatureDim}, kPairFeatureDim);
    p.w_xz = uniform({m, kPairFeatureDim}, kPairFeatureDim);
    p.w_xh = uniform({m, kPairFeatureDim}, kPairFeatureDim);
    p.w_hr = uniform({m, m}, m);
    p.w_hz = uniform({m, m}, m);
    p.w_hh = uniform({m, m}, m);
    p.b_r = make_zeros({m}, true);
    p.b_z = make_zeros({m}, true);
    p.b_h = make_zeros({m}, true);
    p.w_l = uniform({1, m}, m);
    p.b_l = make_zeros({1}, true);
    return p;
  }

  std::vector<Tensor> tensors() const {
    return {w_xr, w_xz, w_xh, w_hr, w_hz, w_hh, b_r, b_z, b_h, w_l, b_l};
  }
};

// n x n x (m+1) memory: edge-probability slice A plus hidden-state slice H.
// Numeric copies back every written cell so retrieval stays cheap when the
// graph is not differentiated through; live handles are kept alongside for
// the through-memory mode.
class Datm {
 public:
  Datm(std::size_t n, std::size_t m)
      : n_(n), m_(m), a_(n * n, 0.0), h_(n * n * m, 0.0), a_handle_(n * n), h_handle_(n * n) {}

  std::size_t node_count() const { return n_; }
  std::size_t hidden_dim() const { return m_; }

  double edge_prob(std::size_t i, std::size_t j) const { return a_[cell(i, j)]; }
  std::span<const double> hidden(std::size_t i, std::size_t j) const {
    return {h_.data() + cell(i, j) * m_, m_};
  }
  bool written(std::size_t i, std::size_t j) const { return a_handle_[cell(i, j)].defined(); }
  const Tensor& prob_handle(std::size_t i, std::size_t j) const { return a_handle_[cell(i, j)]; }
  const Tensor& hidden_handle(std::size_t i, std::size_t j) const { return h_handle_[cell(i, j)]; }

  // The update step: cell (i, j) takes the readout probability and hidden
  // state of the step that just processed pair (i, j). Later writes to the
  // same cell replace earlier ones.
  void write(std::size_t i, std::size_t j, const Tensor& a, const Tensor& h) {
    const std::size_t c = cell(i, j);
    a_[c] = a.value()[0];
    const auto hv = h.value();
    std::copy(hv.begin(), hv.end(), h_.begin() + static_cast<std::ptrdiff_t>(c * m_));
    a_handle_[c] = a;
    h_handle_[c] = h;
  }

 private:
  std::size_t cell(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_)
      throw std::out_of_range("DATM cell (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                              std::to_string(n_) + " nodes");
    return i * n_ + j;
  }

  std::size_t n_, m_;
  std::vector<double> a_;
  std::vector<double> h_;
  std::vector<Tensor> a_handle_;
  std::vector<Tensor> h_handle_;
};

// Context state for the pair (i, j): the adjacency-weighted sum of all
// hidden states stored against columns i and j, plus the global feature.
// With weighted = false the weights are dropped and the written neighbour
// states are averaged instead.
inline Tensor retrieve(Tape& tape, const Datm& datm, std::size_t i, std::size_t j, const Tensor& global,
                       bool weighted = true, bool through_memory = false) {
  const std::size_t n = datm.node_count(), m = datm.hidden_dim();
  if (i >= n || j >= n)
    throw std::out_of_range("retrieve: pair (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                            std::to_string(n) + " nodes");
  if (global.size() != m)
    throw std::invalid_argument("retrieve: global feature has " + std::to_string(global.size()) +
                                " entries, hidden dimension is " + std::to_string(m));

  if (!through_memory) {
    std::vector<double> acc(m, 0.0);
    std::size_t written = 0;
    for (std::size_t col : {i, j}) {
      for (std::size_t k = 0; k < n; ++k) {
        const double a = datm.edge_prob(k, col);
        if (!weighted && !datm.written(k, col)) continue;
        const auto h = datm.hidden(k, col);
        if (weighted) {
          if (a == 0.0) continue;
          for (std::size_t d = 0; d < m; ++d) acc[d] += a * h[d];
        } else {
          for (std::size_t d = 0; d < m; ++d) acc[d] += h[d];
          ++written;
        }
      }
    }
    if (!weighted && written > 0)
      for (double& v : acc) v /= static_cast<double>(written);
    return tape.add(make_tensor({m}, std::move(acc), false), global);
  }

  Tensor out = global;
  std::size_t written = 0;
  std::vector<Tensor> parts;
  for (std::size_t col : {i, j}) {
    for (std::size_t k = 0; k < n; ++k) {
      if (!datm.written(k, col)) continue;
      if (weighted) {
        out = tape.add(out, tape.smul(datm.prob_handle(k, col), datm.hidden_handle(k, col)));
      } else {
        parts.push_back(datm.hidden_handle(k, col));
        ++written;
      }
    }
  }
  if (!weighted && written > 0) {
    Tensor mean = parts[0];
    for (std::size_t p = 1; p < parts.size(); ++p) mean = tape.add(mean, parts[p]);
    out = tape.add(out, tape.scale(mean, 1.0 / static_cast<double>(written)));
  }
  return out;
}

struct GruStepOutput {
  Tensor h;  // new hidden state
  Tensor a;  // edge probability (1-element)
  Tensor z;  // update gate activations, kept for diagnostics
};

// One cell update: reset/update gates, candidate state, convex combination
// gated by z, then the sigmoid edge readout.
inline GruStepOutput gru_step(Tape& tape, const Tensor& h_prev, const Tensor& feature, const GruParams& p) {
  Tensor r = tape.sigmoid(tape.add(tape.add(tape.matvec(p.w_xr, feature), tape.matvec(p.w_hr, h_prev)), p.b_r));
  Tensor z = tape.sigmoid(tape.add(tape.add(tape.matvec(p.w_xz, feature), tape.matvec(p.w_hz, h_prev)), p.b_z));
  Tensor h_bar =
      tape.tanh(tape.add(tape.add(tape.matvec(p.w_xh, feature), tape.matvec(p.w_hh, tape.hadamard(r, h_prev))), p.b_h));
  Tensor h = tape.add(tape.hadamard(z, h_prev), tape.hadamard(tape.one_minus(z), h_bar));
  Tensor a = tape.sigmoid(tape.add(tape.matvec(p.w_l, h), p.b_l));
  return {h, a, z};
}

struct Model {
  ModelConfig config;
  GruParams gru;
  MaskEncoderParams encoder;

  static Model init(const ModelConfig& config) {
    Model m;
    m.config = config;
    Rng gru_rng = stream(config.seed, "init-gru");
    m.gru = GruParams::init(config.hidden_dim, gru_rng);
    Rng enc_rng = stream(config.seed, "init-encoder");
    m.encoder = MaskEncoderParams::init(config.hidden_dim, enc_rng);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out = gru.tensors();
    for (Tensor& t : encoder.tensors()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : parameters()) n += t.size();
    return n;
  }

  std::vector<double> flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Tensor& t : parameters()) flat.insert(flat.end(), t.value().begin(), t.value().end());
    return flat;
  }

  void set_flat_parameters(std::span<const double> flat) {
    std::size_t offset = 0;
    for (Tensor t : parameters()) {
      auto v = t.value_mut();
      if (offset + v.size() > flat.size()) throw std::invalid_argument("set_flat_parameters: vector too short");
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                flat.begin() + static_cast<std::ptrdiff_t>(offset + v.size()), v.begin());
      offset += v.size();
    }
    if (offset != flat.size()) throw std::invalid_argument("set_flat_parameters: vector too long");
  }

  std::vector<double> flat_gradients() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Tensor& t : parameters()) flat.insert(flat.end(), t.grad().begin(), t.grad().end());
    return flat;
  }

  void zero_gradients() {
    for (Tensor t : parameters()) t.zero_grad();
  }

  // Deep copy with fresh storage; used for per-diagram gradient workers.
  Model clone() const {
    Model copy;
    copy.config = config;
    auto dup = [](const Tensor& t) {
      return make_tensor(t.shape(), std::vector<double>(t.value().begin(), t.value().end()), t.requires_grad());
    };
    copy.gru.w_xr = dup(gru.w_xr);
    copy.gru.w_xz = dup(gru.w_xz);
    copy.gru.w_xh = dup(gru.w_xh);
    copy.gru.w_hr = dup(gru.w_hr);
    copy.gru.w_hz = dup(gru.w_hz);
    copy.gru.w_hh = dup(gru.w_hh);
    copy.gru.b_r = dup(gru.b_r);
    copy.gru.b_z = dup(gru.b_z);
    copy.gru.b_h = dup(gru.b_h);
    copy.gru.w_l = dup(gru.w_l);
    copy.gru.b_l = dup(gru.b_l);
    for (std::size_t s = 0; s < kEncoderStages; ++s) {
      copy.encoder.kernels[s] = dup(encoder.kernels[s]);
      copy.encoder.biases[s] = dup(encoder.biases[s]);
    }
    copy.encoder.w_out = dup(encoder.w_out);
    copy.encoder.b_out = dup(encoder.b_out);
    return copy;
  }
};

struct ForwardOutput {
  std::vector<Tensor> prob_handles;             // aligned with the candidate order given
  std::vector<double> probs;                    // plain values of the above
  std::vector<std::vector<double>> gate_trace;  // z_t per step (empty in fully_connected mode)
};

// Runs the configured model over the candidates in the order given.
// Deterministic: two calls with identical inputs produce identical outputs.
inline ForwardOutput forward_diagram(Tape& tape, const std::vector<DiagramObject>& objects,
                                     const std::vector<RelationCandidate>& candidates, const Model& model) {
  const std::size_t m = model.config.hidden_dim;
  ForwardOutput out;
  if (candidates.empty()) return out;

  Tensor global;
  if (model.config.use_global && model.config.mode != Mode::fully_connected) {
    global = encode_global(tape, rasterize(objects), model.encoder);
  } else {
    global = make_zeros({m}, false);
  }

  Datm datm(objects.size(), m);
  Tensor chain = global;  // vanilla mode: h_0 is the global feature

  out.prob_handles.reserve(candidates.size());
  out.probs.reserve(candidates.size());
  for (const RelationCandidate& c : candidates) {
    Tensor feature =
        make_tensor({kPairFeatureDim}, std::vector<double>(c.feature.values.begin(), c.feature.values.end()), false);
    Tensor prob;
    switch (model.config.mode) {
      case Mode::dggn: {
        Tensor h_prev = retrieve(tape, datm, c.src_index, c.dst_index, global, model.config.weighted_pool,
                                 model.config.through_memory);
        GruStepOutput step = gru_step(tape, h_prev, feature, model.gru);
        datm.write(c.src_index, c.dst_index,
                   model.config.through_memory ? step.a : detached(step.a),
                   model.config.through_memory ? step.h : detached(step.h));
        out.gate_trace.emplace_back(step.z.value().begin(), step.z.value().end());
        prob = step.a;
        break;
      }
      case Mode::vanilla_gru: {
        GruStepOutput step = gru_step(tape, chain, feature, model.gru);
        chain = model.config.through_memory ? step.h : detached(step.h);
        out.gate_trace.emplace_back(step.z.value().begin(), step.z.value().end());
        prob = step.a;
        break;
      }
      case Mode::fully_connected: {
        Tensor h = tape.tanh(tape.add(tape.matvec(model.gru.w_xh, feature), model.gru.b_h));
        prob = tape.sigmoid(tape.add(tape.matvec(model.gru.w_l, h), model.gru.b_l));
        break;
      }
    }
    out.prob_handles.push_back(prob);
    out.probs.push_back(prob.value()[0]);
  }
  return out;
}

// Keeps every non-self candidate whose probability clears the threshold.
// Edges come out sorted by confidence descending (ties by pair indices).
inline DiagramGraph assemble_graph(const std::vector<DiagramObject>& objects,
                                   const std::vector<RelationCandidate>& candidates, std::span<const double> probs,
                                   double threshold = 0.1) {
  if (candidates.size() != probs.size())
    throw std::invalid_argument("assemble_graph: " + std::to_string(candidates.size()) + " candidates vs " +
                                std::to_string(probs.size()) + " probabilities");
  DiagramGraph graph;
  graph.nodes = objects;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].self_pair()) continue;
    if (probs[i] > threshold) graph.edges.push_back({candidates[i].src_index, candidates[i].dst_index, probs[i]});
  }
  std::sort(graph.edges.begin(), graph.edges.end(), [](const ScoredEdge& a, const ScoredEdge& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.src != b.src) return a.src < b.src;
    return a.dst < b.dst;
  });
  return graph;
}

}  // namespace dggn
