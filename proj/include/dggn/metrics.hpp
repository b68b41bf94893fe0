#pragma once

// Evaluation machinery: average precision over relation predictions,
// count-based graph-completion IoU, Recall@K, update-gate activation
// statistics and order-variance summaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dggn/data.hpp"
#include "dggn/geometry.hpp"

namespace dggn {

struct EvalConfig {
  std::vector<double> iou_thresholds{0.3, 0.4, 0.5, 0.6, 0.7};
  double edge_iou_match = 0.5;   // relation-matching IoU for Recall@K and graph IoU
  double iou_edge_conf = 0.01;   // confidence cut when scoring graph completion
  double graph_edge_conf = 0.1;  // confidence cut for the final inferred graph
  std::vector<std::size_t> recall_ks{5, 10, 20};
  double detect_score_thresh = 0.01;
  double detect_nms_iou = 0.45;
};

// A scored relation prediction; boxes are the two detected endpoints.
struct RelationPrediction {
  Box src_box;
  Box dst_box;
  double confidence = 0.0;
  std::size_t diagram = 0;
};

struct RelationTruth {
  Box src_box;
  Box dst_box;
  std::size_t diagram = 0;
};

// Mean of the two endpoint IoUs (src against src, dst against dst).
inline double relation_overlap(const RelationPrediction& p, const RelationTruth& t) {
  return 0.5 * (iou(p.src_box, t.src_box) + iou(p.dst_box, t.dst_box));
}

namespace detail {

inline std::vector<std::size_t> confidence_order(std::span<const RelationPrediction> preds) {
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  return order;
}

// Greedy matching in confidence order: each prediction claims the unclaimed
// ground-truth relation of its own diagram with the largest overlap >= tau
// (ties to the lowest truth index). Returns true-positive flags aligned with
// `order`.
inline std::vector<char> match_predictions(std::span<const RelationPrediction> preds,
                                           std::span<const RelationTruth> gts,
                                           std::span<const std::size_t> order, double tau) {
  std::vector<char> claimed(gts.size(), 0);
  std::vector<char> tp(order.size(), 0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const RelationPrediction& p = preds[order[rank]];
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g] || gts[g].diagram != p.diagram) continue;
      const double ov = relation_overlap(p, gts[g]);
      if (ov >= tau && ov > best) {
        best = ov;
        best_gt = g;
      }
    }
    if (best_gt < gts.size()) {
      claimed[best_gt] = 1;
      tp[rank] = 1;
    }
  }
  return tp;
}

}  // namespace detail

// Area under the precision-recall curve (all-point interpolation). Returns
// nothing when there are no ground-truth relations.
inline std::optional<double> edge_ap(std::span<const RelationPrediction> preds, std::span<const RelationTruth> gts,
                                     double tau) {
  if (gts.empty()) return std::nullopt;
  const auto order = detail::confidence_order(preds);
  const auto tp = detail::match_predictions(preds, gts, order, tau);

  const double total = static_cast<double>(gts.size());
  std::vector<double> precision(order.size()), recall(order.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    hits += tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / total;
  }
  // running max of precision from the right, integrated over recall steps
  double ap = 0.0, maxp = 0.0;
  for (std::size_t i = order.size(); i-- > 0;) {
    maxp = std::max(maxp, precision[i]);
    const double prev_recall = i == 0 ? 0.0 : recall[i - 1];
    if (recall[i] != prev_recall) ap += (recall[i] - prev_recall) * maxp;
  }
  return ap;
}

// Mean AP over the configured IoU thresholds; thresholds with undefined AP
// are skipped.
inline std::optional<double> edge_map(std::span<const RelationPrediction> preds, std::span<const RelationTruth> gts,
                                      const std::vector<double>& taus) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double tau : taus) {
    if (auto ap = edge_ap(preds, gts, tau)) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// Fraction of ground-truth relations recovered among each diagram's top-k
// most confident predictions, pooled over diagrams. Matching rule is the AP
// rule at the configured IoU threshold.
inline std::optional<double> recall_at_k(std::span<const RelationPrediction> preds,
                                         std::span<const RelationTruth> gts, std::size_t k, double tau = 0.5) {
  if (gts.empty()) return std::nullopt;
  std::size_t max_diagram = 0;
  for (const auto& g : gts) max_diagram = std::max(max_diagram, g.diagram);
  for (const auto& p : preds) max_diagram = std::max(max_diagram, p.diagram);

  std::size_t matched = 0;
  for (std::size_t d = 0; d <= max_diagram; ++d) {
    std::vector<RelationPrediction> dp;
    std::vector<RelationTruth> dg;
    for (const auto& p : preds)
      if (p.diagram == d) dp.push_back(p);
    for (const auto& g : gts)
      if (g.diagram == d) dg.push_back(g);
    if (dg.empty()) continue;
    auto order = detail::confidence_order(dp);
    if (order.size() > k) order.resize(k);
    const auto tp = detail::match_predictions(dp, dg, order, tau);
    for (char f : tp) matched += f ? 1 : 0;
  }
  return static_cast<double>(matched) / static_cast<double>(gts.size());
}

struct GraphIou {
  double node = 0.0;
  double edge = 0.0;
};

// Count-based graph completion score. Node correspondence is greedy by
// descending box IoU among same-class pairs with IoU >= node_match; edges
// intersect when both endpoints correspond and the mapped pair is a
// ground-truth relation. Empty-vs-empty counts as 1.
inline GraphIou graph_iou(const DiagramGraph& pred, const DiagramAnnotation& gt, double node_match = 0.5,
                          double edge_conf = 0.01) {
  struct Pair {
    double overlap;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < pred.nodes.size(); ++p)
    for (std::size_t g = 0; g < gt.objects.size(); ++g) {
      if (pred.nodes[p].cls != gt.objects[g].cls) continue;
      const double ov = iou(pred.nodes[p].box, gt.objects[g].box);
      if (ov >= node_match) pairs.push_back({ov, p, g});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.p != b.p) return a.p < b.p;
    return a.g < b.g;
  });
  std::vector<std::ptrdiff_t> map_pg(pred.nodes.size(), -1);
  std::vector<char> used_g(gt.objects.size(), 0);
  std::size_t matched = 0;
  for (const Pair& pr : pairs) {
    if (map_pg[pr.p] != -1 || used_g[pr.g]) continue;
    map_pg[pr.p] = static_cast<std::ptrdiff_t>(pr.g);
    used_g[pr.g] = 1;
    ++matched;
  }

  GraphIou out;
  const std::size_t node_union = pred.nodes.size() + gt.objects.size() - matched;
  out.node = node_union == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(node_union);

  std::size_t kept_edges = 0, intersect = 0;
  for (const ScoredEdge& e : pred.edges) {
    if (e.confidence <= edge_conf) continue;
    ++kept_edges;
    const std::ptrdiff_t gs = map_pg[e.src], gd = map_pg[e.dst];
    if (gs < 0 || gd < 0) continue;
    for (const auto& [rs, rd] : gt.gt_relations) {
      if (rs == static_cast<std::size_t>(gs) && rd == static_cast<std::size_t>(gd)) {
        ++intersect;
        break;
      }
    }
  }
  const std::size_t edge_union = kept_edges + gt.gt_relations.size() - intersect;
  out.edge = edge_union == 0 ? 1.0 : static_cast<double>(intersect) / static_cast<double>(edge_union);
  return out;
}

// --- update-gate statistics ---------------------------------------------------

struct GateStats {
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t samples = 0;
};

// Linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Pools every update-gate activation from every step of every trace.
inline GateStats gate_statistics(std::span<const std::vector<std::vector<double>>> traces) {
  std::vector<double> values;
  for (const auto& trace : traces)
    for (const auto& step : trace) values.insert(values.end(), step.begin(), step.end());
  if (values.empty()) throw std::invalid_argument("gate_statistics: no activations");
  GateStats stats;
  stats.samples = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  stats.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  stats.q1 = quantile_sorted(values, 0.25);
  stats.q3 = quantile_sorted(values, 0.75);
  return stats;
}

// Mean activation over hidden units at each time step of one trace.
inline std::vector<double> per_step_gate_means(const std::vector<std::vector<double>>& trace) {
  std::vector<double> means;
  means.reserve(trace.size());
  for (const auto& step : trace) {
    if (step.empty()) throw std::invalid_argument("per_step_gate_means: empty step");
    double sum = 0.0;
    for (double v : step) sum += v;
    means.push_back(sum / static_cast<double>(step.size()));
  }
  return means;
}

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased (n - 1)
  double stddev = 0.0;
};

inline SampleStats sample_stats(std::span<const double> values) {
  SampleStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.variance = acc / static_cast<double>(values.size() - 1);
  }
  s.stddev = std::sqrt(s.variance);
  return s;
}

}  // namespace dggn
