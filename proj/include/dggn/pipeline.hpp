#pragma once

// Inference and evaluation orchestration: run a trained model over a
// dataset, pool scored relation predictions, and compute the metric suite.
// Candidates are presented in a seeded random order per diagram, matching
// how the model sees them during training; the order-variance study
// re-evaluates under fresh permutations.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "dggn/data.hpp"
#include "dggn/metrics.hpp"
#include "dggn/model.hpp"
#include "dggn/rng.hpp"

namespace dggn {

struct DiagramRun {
  std::vector<DiagramObject> detections;
  std::vector<RelationCandidate> candidates;  // in the order the model saw them
  std::vector<double> probs;                  // aligned with candidates
  std::vector<std::vector<double>> gate_trace;
};

// Forward pass over all n^2 candidates of one diagram, no gradients.
inline DiagramRun run_diagram(const Model& model, const DiagramAnnotation& annotation, Rng order_rng,
                              const EvalConfig& config = {}) {
  DiagramRun run;
  run.detections = filter_detections(annotation.objects, config.detect_score_thresh, config.detect_nms_iou);
  run.candidates = generate_candidates(run.detections);
  order_rng.shuffle(run.candidates);
  Tape tape;
  tape.set_recording(false);
  ForwardOutput fwd = forward_diagram(tape, run.detections, run.candidates, model);
  run.probs = std::move(fwd.probs);
  run.gate_trace = std::move(fwd.gate_trace);
  return run;
}

// Scored non-self predictions of one run, tagged with a diagram id.
inline void collect_predictions(const DiagramRun& run, std::size_t diagram, std::vector<RelationPrediction>& out) {
  for (std::size_t i = 0; i < run.candidates.size(); ++i) {
    const RelationCandidate& c = run.candidates[i];
    if (c.self_pair()) continue;
    out.push_back({run.detections[c.src_index].box, run.detections[c.dst_index].box, run.probs[i], diagram});
  }
}

inline void collect_truths(const DiagramAnnotation& annotation, std::size_t diagram,
                           std::vector<RelationTruth>& out) {
  for (const auto& [s, d] : annotation.gt_relations)
    out.push_back({annotation.objects[s].box, annotation.objects[d].box, diagram});
}

struct DatasetMetrics {
  std::optional<double> map;
  std::vector<std::pair<double, double>> ap_per_tau;  // (tau, AP)
  double iou_node = 0.0;
  double iou_edge = 0.0;
  std::vector<std::pair<std::size_t, double>> recall_at;  // (k, R@k)
  std::size_t diagrams = 0;
};

inline std::vector<DiagramRun> run_dataset(const Model& model, const std::vector<DiagramAnnotation>& dataset,
                                           const EvalConfig& config, std::uint64_t seed, std::size_t threads = 0) {
  std::vector<DiagramRun> runs(dataset.size());
  std::size_t workers = threads == 0 ? std::thread::hardware_concurrency() : threads;
  if (workers == 0) workers = 1;
  workers = std::min(workers, dataset.size());
  if (workers <= 1) {
    for (std::size_t d = 0; d < dataset.size(); ++d)
      runs[d] = run_diagram(model, dataset[d], stream(seed, "eval-order", d), config);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t]() {
        for (std::size_t d = t; d < dataset.size(); d += workers)
          runs[d] = run_diagram(model, dataset[d], stream(seed, "eval-order", d), config);
      });
    }
    for (auto& th : pool) th.join();
  }
  return runs;
}

inline DatasetMetrics evaluate_dataset(const Model& model, const std::vector<DiagramAnnotation>& dataset,
                                       const EvalConfig& config, std::uint64_t seed, std::size_t threads = 0) {
  const std::vector<DiagramRun> runs = run_dataset(model, dataset, config, seed, threads);

  std::vector<RelationPrediction> preds;
  std::vector<RelationTruth> gts;
  double iou_node_sum = 0.0, iou_edge_sum = 0.0;
  for (std::size_t d = 0; d < runs.size(); ++d) {
    collect_predictions(runs[d], d, preds);
    collect_truths(dataset[d], d, gts);
    DiagramGraph graph = assemble_graph(runs[d].detections, runs[d].candidates, runs[d].probs, config.iou_edge_conf);
    GraphIou gi = graph_iou(graph, dataset[d], config.edge_iou_match, config.iou_edge_conf);
    iou_node_sum += gi.node;
    iou_edge_sum += gi.edge;
  }

  DatasetMetrics out;
  out.diagrams = dataset.size();
  for (double tau : config.iou_thresholds) {
    auto ap = edge_ap(preds, gts, tau);
    out.ap_per_tau.emplace_back(tau, ap ? *ap : 0.0);
  }
  out.map = edge_map(preds, gts, config.iou_thresholds);
  if (!dataset.empty()) {
    out.iou_node = iou_node_sum / static_cast<double>(dataset.size());
    out.iou_edge = iou_edge_sum / static_cast<double>(dataset.size());
  }
  for (std::size_t k : config.recall_ks) {
    auto r = recall_at_k(preds, gts, k, config.edge_iou_match);
    out.recall_at.emplace_back(k, r ? *r : 0.0);
  }
  return out;
}

// AP at a single IoU threshold for one fresh candidate ordering of the
// whole dataset.
inline std::optional<double> ap_at_order(const Model& model, const std::vector<DiagramAnnotation>& dataset,
                                         const EvalConfig& config, std::uint64_t seed, std::uint64_t trial,
                                         double tau) {
  std::vector<RelationPrediction> preds;
  std::vector<RelationTruth> gts;
  for (std::size_t d = 0; d < dataset.size(); ++d) {
    DiagramRun run = run_diagram(model, dataset[d], stream(seed, "order-trial", trial, d), config);
    collect_predictions(run, d, preds);
    collect_truths(dataset[d], d, gts);
  }
  return edge_ap(preds, gts, tau);
}

struct OrderVarianceResult {
  std::vector<double> ap50_samples;
  SampleStats stats;
};

// Re-evaluates AP50 under `trials` random candidate orderings.
inline OrderVarianceResult order_variance_study(const Model& model, const std::vector<DiagramAnnotation>& dataset,
                                                const EvalConfig& config, std::size_t trials, std::uint64_t seed,
                                                std::size_t threads = 0) {
  OrderVarianceResult result;
  result.ap50_samples.assign(trials, 0.0);
  std::size_t workers = threads == 0 ? std::thread::hardware_concurrency() : threads;
  if (workers == 0) workers = 1;
  workers = std::min(workers, trials);
  auto run_trial = [&](std::size_t t) {
    auto ap = ap_at_order(model, dataset, config, seed, t, 0.5);
    result.ap50_samples[t] = ap ? *ap : 0.0;
  };
  if (workers <= 1) {
    for (std::size_t t = 0; t < trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t t = w; t < trials; t += workers) run_trial(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  result.stats = sample_stats(result.ap50_samples);
  return result;
}

struct GateStudy {
  GateStats overall;
  std::vector<double> first_diagram_step_means;
};

inline GateStudy gate_study(const Model& model, const std::vector<DiagramAnnotation>& dataset,
                            const EvalConfig& config, std::uint64_t seed, std::size_t threads = 0) {
  const std::vector<DiagramRun> runs = run_dataset(model, dataset, config, seed, threads);
  std::vector<std::vector<std::vector<double>>> traces;
  traces.reserve(runs.size());
  for (const auto& r : runs) traces.push_back(r.gate_trace);
  GateStudy study;
  study.overall = gate_statistics(traces);
  if (!runs.empty()) study.first_diagram_step_means = per_step_gate_means(runs.front().gate_trace);
  return study;
}

}  // namespace dggn
