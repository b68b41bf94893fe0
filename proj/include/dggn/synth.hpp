#pragma once

// Deterministic synthetic diagram generator. Blob constituents are placed on
// a family layout (cycle, star, layered DAG), each optionally labeled by a
// text box, and every ground-truth relation drops an arrow-tail box near its
// source and an arrow-head box near its destination, mirroring the four-class
// annotation scheme. Coordinates are produced in pixels on a power-of-two
// canvas so normalization round-trips exactly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dggn/data.hpp"
#include "dggn/rng.hpp"

namespace dggn {

enum class SynthFamily : int { cycle = 0, star = 1, dag = 2 };

inline const char* to_string(SynthFamily f) {
  switch (f) {
    case SynthFamily::cycle: return "cycle";
    case SynthFamily::star: return "star";
    case SynthFamily::dag: return "dag";
  }
  return "?";
}

inline SynthFamily synth_family_from_string(const std::string& s) {
  if (s == "cycle") return SynthFamily::cycle;
  if (s == "star") return SynthFamily::star;
  if (s == "dag") return SynthFamily::dag;
  throw std::invalid_argument("unknown diagram family '" + s + "'");
}

struct SynthSpec {
  SynthFamily family = SynthFamily::cycle;
  std::size_t min_nodes = 3;  // blob count range, inclusive
  std::size_t max_nodes = 6;
  double text_attach = 0.6;  // probability of labeling a blob
  double jitter = 0.015;     // positional noise, normalized units
  std::uint64_t seed = 0;
  std::size_t image_size = 1024;
};

namespace detail {

inline const char* kEntityNames[] = {"Alpha",  "Bravo",  "Charlie", "Delta",  "Echo",   "Foxtrot", "Golf",
                                     "Hotel",  "India",  "Juliett", "Kilo",   "Lima",   "Mike",    "November",
                                     "Oscar",  "Papa",   "Quebec",  "Romeo",  "Sierra", "Tango",   "Uniform",
                                     "Victor", "Whiskey", "Xray",   "Yankee", "Zulu"};
inline constexpr std::size_t kEntityNameCount = sizeof(kEntityNames) / sizeof(kEntityNames[0]);

struct Placement {
  std::vector<std::pair<double, double>> centers;            // blob centers
  std::vector<std::pair<std::size_t, std::size_t>> arcs;     // directed blob->blob
};

inline Placement layout(SynthFamily family, std::size_t blobs, Rng& rng) {
  Placement p;
  p.centers.resize(blobs);
  switch (family) {
    case SynthFamily::cycle: {
      const double start = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double dir = rng.coin() ? 1.0 : -1.0;
      for (std::size_t i = 0; i < blobs; ++i) {
        const double ang = start + dir * 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(blobs);
        p.centers[i] = {0.5 + 0.32 * std::cos(ang), 0.5 + 0.32 * std::sin(ang)};
      }
      for (std::size_t i = 0; i < blobs; ++i) p.arcs.emplace_back(i, (i + 1) % blobs);
      break;
    }
    case SynthFamily::star: {
      p.centers[0] = {0.5, 0.5};
      const double start = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const bool outward = rng.coin();
      for (std::size_t i = 1; i < blobs; ++i) {
        const double ang = start + 2.0 * std::numbers::pi * static_cast<double>(i - 1) / static_cast<double>(blobs - 1);
        p.centers[i] = {0.5 + 0.34 * std::cos(ang), 0.5 + 0.34 * std::sin(ang)};
        if (outward)
          p.arcs.emplace_back(0, i);
        else
          p.arcs.emplace_back(i, 0);
      }
      break;
    }
    case SynthFamily::dag: {
      const std::size_t layers = blobs <= 4 ? 2 : 3;
      std::vector<std::size_t> layer_of(blobs);
      std::vector<std::vector<std::size_t>> members(layers);
      for (std::size_t i = 0; i < blobs; ++i) {
        const std::size_t l = i * layers / blobs;
        layer_of[i] = l;
        members[l].push_back(i);
      }
      for (std::size_t l = 0; l < layers; ++l) {
        const double x = 0.18 + 0.64 * (layers == 1 ? 0.5 : static_cast<double>(l) / static_cast<double>(layers - 1));
        for (std::size_t k = 0; k < members[l].size(); ++k) {
          const double y = (static_cast<double>(k) + 1.0) / (static_cast<double>(members[l].size()) + 1.0);
          p.centers[members[l][k]] = {x, 0.15 + 0.7 * y};
        }
      }
      for (std::size_t i = 0; i < blobs; ++i) {
        if (layer_of[i] == 0) continue;
        const auto& prev = members[layer_of[i] - 1];
        const std::size_t parents = 1 + (prev.size() > 1 ? rng.below(2) : 0);
        auto picks = rng.sample_indices(prev.size(), parents);
        for (std::size_t k : picks) p.arcs.emplace_back(prev[k], i);
      }
      break;
    }
  }
  return p;
}

inline Box jittered_box(double cx, double cy, double hw, double hh, double jitter, Rng& rng) {
  const double dx = rng.uniform(-jitter, jitter);
  const double dy = rng.uniform(-jitter, jitter);
  return {cx + dx - hw, cy + dy - hh, cx + dx + hw, cy + dy + hh};
}

// Same-class overlap would let NMS merge distinct constituents; reject and
// retry the diagram instead.
inline bool same_class_overlap_ok(const std::vector<DiagramObject>& objects, double limit = 0.40) {
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[i].cls != objects[j].cls) continue;
      if (iou(objects[i].box, objects[j].box) > limit) return false;
    }
  return true;
}

}  // namespace detail

inline std::vector<DiagramAnnotation> generate(const SynthSpec& spec, std::size_t count) {
  if (spec.min_nodes < 2 || spec.max_nodes < spec.min_nodes)
    throw std::invalid_argument("synth: need 2 <= min_nodes <= max_nodes");
  if (spec.image_size == 0) throw std::invalid_argument("synth: image_size must be positive");

  std::vector<DiagramAnnotation> out;
  out.reserve(count);
  for (std::size_t d = 0; d < count; ++d) {
    Rng rng = stream(spec.seed, "synth", d);
    const std::size_t blobs = spec.min_nodes + rng.below(spec.max_nodes - spec.min_nodes + 1);

    bool placed = false;
    for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
      detail::Placement plan = detail::layout(spec.family, blobs, rng);

      std::vector<DiagramObject> objects;
      std::vector<std::size_t> blob_index(blobs);
      std::vector<std::size_t> names = rng.sample_indices(detail::kEntityNameCount, blobs);

      for (std::size_t b = 0; b < blobs; ++b) {
        const auto [cx, cy] = plan.centers[b];
        const double hw = rng.uniform(0.055, 0.075);
        const double hh = rng.uniform(0.055, 0.075);
        blob_index[b] = objects.size();
        objects.push_back(
            {detail::jittered_box(cx, cy, hw, hh, spec.jitter, rng), ObjectClass::blob,
             DiagramObject::one_hot(ObjectClass::blob), ""});
        if (rng.coin(spec.text_attach)) {
          const double th = 0.022, tw = rng.uniform(0.05, 0.07);
          objects.push_back({detail::jittered_box(cx, cy + hh + 0.035, tw, th, spec.jitter, rng), ObjectClass::text,
                             DiagramObject::one_hot(ObjectClass::text),
                             detail::kEntityNames[names[b]]});
        }
      }

      std::vector<std::pair<std::size_t, std::size_t>> relations;
      for (const auto& [src, dst] : plan.arcs) {
        const auto [sx, sy] = plan.centers[src];
        const auto [dx, dy] = plan.centers[dst];
        const double half = 0.016;
        // tail sits near the source, head near the destination
        objects.push_back({detail::jittered_box(sx + 0.30 * (dx - sx), sy + 0.30 * (dy - sy), half, half,
                                                spec.jitter * 0.5, rng),
                           ObjectClass::arrow_tail, DiagramObject::one_hot(ObjectClass::arrow_tail), ""});
        objects.push_back({detail::jittered_box(sx + 0.74 * (dx - sx), sy + 0.74 * (dy - sy), half, half,
                                                spec.jitter * 0.5, rng),
                           ObjectClass::arrow_head, DiagramObject::one_hot(ObjectClass::arrow_head), ""});
        relations.emplace_back(blob_index[src], blob_index[dst]);
      }

      // clamp into the unit square, then reject bad layouts
      bool in_bounds = true;
      for (const auto& o : objects)
        if (o.box.xmin < 0.0 || o.box.ymin < 0.0 || o.box.xmax > 1.0 || o.box.ymax > 1.0) in_bounds = false;
      if (!in_bounds || !detail::same_class_overlap_ok(objects)) continue;

      DiagramAnnotation ann;
      ann.image_width = spec.image_size;
      ann.image_height = spec.image_size;
      ann.objects = std::move(objects);
      ann.gt_relations = std::move(relations);
      out.push_back(std::move(ann));
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("synth: could not place diagram " + std::to_string(d) +
                               " without same-class overlap; relax jitter or node count");
  }
  return out;
}

}  // namespace dggn
