#pragma once

// Domain data model for diagram parsing: detected constituents, relation
// candidates with their 26-dim pair features, detection post-filtering
// (score cut + per-class NMS), ground-truth matching and positive/negative
// sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dggn/geometry.hpp"
#include "dggn/rng.hpp"

namespace dggn {

inline constexpr std::size_t kNumClasses = 4;

enum class ObjectClass : int { blob = 0, text = 1, arrow_head = 2, arrow_tail = 3 };

inline const char* to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::blob: return "blob";
    case ObjectClass::text: return "text";
    case ObjectClass::arrow_head: return "arrow_head";
    case ObjectClass::arrow_tail: return "arrow_tail";
  }
  return "?";
}

inline ObjectClass object_class_from_string(const std::string& s) {
  if (s == "blob") return ObjectClass::blob;
  if (s == "text") return ObjectClass::text;
  if (s == "arrow_head") return ObjectClass::arrow_head;
  if (s == "arrow_tail") return ObjectClass::arrow_tail;
  throw std::invalid_argument("unknown object class '" + s + "'");
}

// One detected constituent. Box coordinates are normalized to [0, 1].
struct DiagramObject {
  Box box;
  ObjectClass cls = ObjectClass::blob;
  std::array<double, kNumClasses> scores{};  // per-class confidences
  std::string text;                          // only meaningful for text objects

  double max_score() const { return *std::max_element(scores.begin(), scores.end()); }

  static std::array<double, kNumClasses> one_hot(ObjectClass c) {
    std::array<double, kNumClasses> s{};
    s[static_cast<std::size_t>(c)] = 1.0;
    return s;
  }
};

inline constexpr std::size_t kObjectFeatureDim = 13;
inline constexpr std::size_t kPairFeatureDim = 2 * kObjectFeatureDim;

// 13 values per object: box corners, center, width/height, the 4 class
// confidences and the top confidence.
inline std::array<double, kObjectFeatureDim> object_feature(const DiagramObject& o) {
  return {o.box.xmin,      o.box.ymin,     o.box.xmax,   o.box.ymax,   o.box.xcenter(),
          o.box.ycenter(), o.box.width(),  o.box.height(), o.scores[0], o.scores[1],
          o.scores[2],     o.scores[3],    o.max_score()};
}

struct LocalFeature {
  std::array<double, kPairFeatureDim> values{};
};

inline LocalFeature pair_feature(const DiagramObject& src, const DiagramObject& dst) {
  LocalFeature f;
  const auto a = object_feature(src);
  const auto b = object_feature(dst);
  std::copy(a.begin(), a.end(), f.values.begin());
  std::copy(b.begin(), b.end(), f.values.begin() + kObjectFeatureDim);
  return f;
}

enum class CandidateLabel : int { unlabeled = -1, negative = 0, positive = 1 };

// One ordered object pair, i.e. one of the n^2 possible directed edges.
struct RelationCandidate {
  std::size_t src_index = 0;
  std::size_t dst_index = 0;
  LocalFeature feature;
  CandidateLabel label = CandidateLabel::unlabeled;

  bool self_pair() const { return src_index == dst_index; }
};

struct DiagramAnnotation {
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::vector<DiagramObject> objects;
  std::vector<std::pair<std::size_t, std::size_t>> gt_relations;  // directed (src, dst)
};

struct ScoredEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double confidence = 0.0;
};

// Final node set plus directed scored edges.
struct DiagramGraph {
  std::vector<DiagramObject> nodes;
  std::vector<ScoredEdge> edges;
};

// Score cut followed by greedy per-class NMS. Survivors come out sorted by
// max score descending, ties by original index, which makes the filter
// idempotent.
inline std::vector<DiagramObject> filter_detections(const std::vector<DiagramObject>& objects,
                                                    double score_thresh = 0.01, double nms_iou = 0.45) {
  std::vector<std::size_t> order;
  order.reserve(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].max_score() > score_thresh) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (objects[a].max_score() != objects[b].max_score()) return objects[a].max_score() > objects[b].max_score();
    return a < b;
  });
  std::vector<DiagramObject> kept;
  kept.reserve(order.size());
  for (std::size_t idx : order) {
    const DiagramObject& cand = objects[idx];
    bool suppressed = false;
    for (const DiagramObject& k : kept) {
      if (k.cls != cand.cls) continue;
      if (iou(k.box, cand.box) > nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

// All n^2 ordered pairs in (src, dst) lexicographic order, self-pairs
// included, each carrying its pair feature.
inline std::vector<RelationCandidate> generate_candidates(const std::vector<DiagramObject>& objects) {
  std::vector<RelationCandidate> candidates;
  candidates.reserve(objects.size() * objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t j = 0; j < objects.size(); ++j)
      candidates.push_back({i, j, pair_feature(objects[i], objects[j]), CandidateLabel::unlabeled});
  return candidates;
}

struct SampleConfig {
  std::size_t count = 160;
  double positive_fraction = 1.0 / 8.0;  // 1:7 positive:negative
};

// Labels every candidate against the ground truth, then draws a fixed-size
// training subset. A ground-truth relation claims the unclaimed candidate
// whose endpoint boxes overlap it best (mean of the two IoUs, src vs src and
// dst vs dst); ties go to the lowest candidate position. Self-pairs are
// always negative. The positive target is count * positive_fraction; any
// shortfall on either side is padded from the other. Candidate order is
// preserved in the returned subset.
inline std::vector<RelationCandidate> match_and_sample(const std::vector<RelationCandidate>& candidates,
                                                       const std::vector<DiagramObject>& detections,
                                                       const DiagramAnnotation& annotation,
                                                       const SampleConfig& config, Rng& rng,
                                                       std::vector<std::string>* warnings = nullptr) {
  std::vector<RelationCandidate> labeled = candidates;
  for (auto& c : labeled) c.label = CandidateLabel::negative;

  for (const auto& [gs, gd] : annotation.gt_relations) {
    if (gs >= annotation.objects.size() || gd >= annotation.objects.size())
      throw std::out_of_range("ground-truth relation references object " + std::to_string(std::max(gs, gd)) +
                              " of " + std::to_string(annotation.objects.size()));
    const Box& gt_src = annotation.objects[gs].box;
    const Box& gt_dst = annotation.objects[gd].box;
    double best = -1.0;
    std::size_t best_idx = labeled.size();
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const auto& c = labeled[i];
      if (c.self_pair() || c.label == CandidateLabel::positive) continue;
      const double score = 0.5 * (iou(detections[c.src_index].box, gt_src) + iou(detections[c.dst_index].box, gt_dst));
      if (score > best) {
        best = score;
        best_idx = i;
      }
    }
    if (best_idx < labeled.size()) labeled[best_idx].label = CandidateLabel::positive;
  }

  if (config.count >= labeled.size()) {
    if (config.count > labeled.size() && warnings)
      warnings->push_back("requested " + std::to_string(config.count) + " samples but only " +
                          std::to_string(labeled.size()) + " candidates exist; returning all");
    return labeled;
  }

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    (labeled[i].label == CandidateLabel::positive ? pos : neg).push_back(i);

  const std::size_t pos_target = static_cast<std::size_t>(std::llround(config.positive_fraction * config.count));
  std::size_t pos_take = std::min(pos_target, pos.size());
  std::size_t neg_take = std::min(config.count - pos_take, neg.size());
  pos_take = std::min(pos.size(), pos_take + (config.count - pos_take - neg_take));

  std::vector<char> chosen(labeled.size(), 0);
  auto draw = [&](const std::vector<std::size_t>& pool, std::size_t take) {
    if (take == pool.size()) {
      for (std::size_t i : pool) chosen[i] = 1;
      return;
    }
    for (std::size_t k : rng.sample_indices(pool.size(), take)) chosen[pool[k]] = 1;
  };
  draw(pos, pos_take);
  draw(neg, neg_take);

  std::vector<RelationCandidate> sampled;
  sampled.reserve(pos_take + neg_take);
  for (std::size_t i = 0; i < labeled.size(); ++i)
    if (chosen[i]) sampled.push_back(labeled[i]);
  return sampled;
}

}  // namespace dggn
