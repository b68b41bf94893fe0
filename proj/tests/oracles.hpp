#pragma once

// Test-only reference implementations, kept deliberately naive and free of
// any code sharing with the library paths they check: matching is done by
// repeated full scans instead of sorting, and every count is recomputed from
// scratch.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "dggn/data.hpp"
#include "dggn/geometry.hpp"
#include "dggn/metrics.hpp"

namespace oracle {

using dggn::RelationPrediction;
using dggn::RelationTruth;

inline std::vector<std::size_t> naive_confidence_order(const std::vector<RelationPrediction>& preds) {
  std::vector<std::size_t> order;
  std::vector<char> used(preds.size(), 0);
  for (std::size_t round = 0; round < preds.size(); ++round) {
    std::size_t best = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (used[i]) continue;
      if (best == preds.size() || preds[i].confidence > preds[best].confidence) best = i;
    }
    used[best] = 1;
    order.push_back(best);
  }
  return order;
}

// Greedy confidence-order matching, rescanning the truth list every time.
inline std::vector<char> naive_match(const std::vector<RelationPrediction>& preds,
                                     const std::vector<RelationTruth>& gts,
                                     const std::vector<std::size_t>& order, double tau) {
  std::vector<char> claimed(gts.size(), 0);
  std::vector<char> tp(order.size(), 0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const RelationPrediction& p = preds[order[rank]];
    double best = -1.0;
    std::size_t pick = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g] || gts[g].diagram != p.diagram) continue;
      const double ov = 0.5 * (dggn::iou(p.src_box, gts[g].src_box) + dggn::iou(p.dst_box, gts[g].dst_box));
      if (ov >= tau && ov > best) {
        best = ov;
        pick = g;
      }
    }
    if (pick < gts.size()) {
      claimed[pick] = 1;
      tp[rank] = 1;
    }
  }
  return tp;
}

inline double naive_ap(const std::vector<RelationPrediction>& preds, const std::vector<RelationTruth>& gts,
                       double tau) {
  const auto order = naive_confidence_order(preds);
  const auto tp = naive_match(preds, gts, order, tau);
  std::vector<double> precision(order.size()), recall(order.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    hits += tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / static_cast<double>(gts.size());
  }
  double ap = 0.0, maxp = 0.0;
  for (std::size_t i = order.size(); i-- > 0;) {
    maxp = std::max(maxp, precision[i]);
    const double prev = i == 0 ? 0.0 : recall[i - 1];
    if (recall[i] != prev) ap += (recall[i] - prev) * maxp;
  }
  return ap;
}

inline double naive_recall_at_k(const std::vector<RelationPrediction>& preds, const std::vector<RelationTruth>& gts,
                                std::size_t k, double tau) {
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
    auto order = naive_confidence_order(dp);
    if (order.size() > k) order.resize(k);
    for (char f : naive_match(dp, dg, order, tau)) matched += f ? 1 : 0;
  }
  return static_cast<double>(matched) / static_cast<double>(gts.size());
}

// Greedy node correspondence by repeated global-maximum scan, then edge set
// intersection by exhaustive lookup.
inline std::pair<double, double> naive_graph_iou(const dggn::DiagramGraph& pred, const dggn::DiagramAnnotation& gt,
                                                 double node_match, double edge_conf) {
  const std::size_t np = pred.nodes.size(), ng = gt.objects.size();
  std::vector<std::ptrdiff_t> map_pg(np, -1);
  std::vector<char> used(ng, 0);
  std::size_t matched = 0;
  while (true) {
    double best = -1.0;
    std::size_t bp = np, bg = ng;
    for (std::size_t p = 0; p < np; ++p) {
      if (map_pg[p] != -1) continue;
      for (std::size_t g = 0; g < ng; ++g) {
        if (used[g] || pred.nodes[p].cls != gt.objects[g].cls) continue;
        const double ov = dggn::iou(pred.nodes[p].box, gt.objects[g].box);
        if (ov < node_match) continue;
        if (ov > best || (ov == best && (p < bp || (p == bp && g < bg)))) {
          best = ov;
          bp = p;
          bg = g;
        }
      }
    }
    if (bp == np) break;
    map_pg[bp] = static_cast<std::ptrdiff_t>(bg);
    used[bg] = 1;
    ++matched;
  }
  const std::size_t node_union = np + ng - matched;
  const double iou_node = node_union == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(node_union);

  std::size_t kept = 0, inter = 0;
  for (const auto& e : pred.edges) {
    if (e.confidence <= edge_conf) continue;
    ++kept;
    if (map_pg[e.src] < 0 || map_pg[e.dst] < 0) continue;
    for (const auto& [rs, rd] : gt.gt_relations)
      if (rs == static_cast<std::size_t>(map_pg[e.src]) && rd == static_cast<std::size_t>(map_pg[e.dst])) {
        ++inter;
        break;
      }
  }
  const std::size_t edge_union = kept + gt.gt_relations.size() - inter;
  const double iou_edge = edge_union == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(edge_union);
  return {iou_node, iou_edge};
}

}  // namespace oracle
