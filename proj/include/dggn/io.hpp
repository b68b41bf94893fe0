#pragma once

// File formats. Annotations are one JSON document per dataset:
//
//   [ { "image": {"width": W, "height": H},
//       "objects": [ {"class": "blob", "box": [xmin, ymin, xmax, ymax]},
//                    {"class": "text", "box": [...], "text": "Alpha"},
//                    {"class": "blob", "polygon": [[x, y], ...]},
//                    {"class": "blob", "box": [...], "scores": [4 values]} ],
//       "relations": [[src, dst], ...] }, ... ]
//
// Box and polygon coordinates are pixels; they are normalized by the image
// size on load. Polygons are reduced to their bounding rectangle. Missing
// "scores" default to one-hot on the class. Saving always emits the
// canonical form (boxes, scores only when not one-hot), so load -> save is
// byte-stable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dggn/data.hpp"
#include "dggn/metrics.hpp"
#include "dggn/sentences.hpp"
#include "dggn/trainer.hpp"

namespace dggn {

using json = nlohmann::json;

namespace detail {

[[noreturn]] inline void record_error(std::size_t diagram, const std::string& what) {
  throw std::runtime_error("annotation " + std::to_string(diagram) + ": " + what);
}

inline Box parse_box_or_polygon(const json& obj, std::size_t diagram, std::size_t index, double w, double h) {
  Box box;
  if (obj.contains("box")) {
    const auto& b = obj["box"];
    if (!b.is_array() || b.size() != 4) record_error(diagram, "object " + std::to_string(index) + ": box needs 4 numbers");
    box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  } else if (obj.contains("polygon")) {
    const auto& poly = obj["polygon"];
    if (!poly.is_array() || poly.empty())
      record_error(diagram, "object " + std::to_string(index) + ": polygon needs at least one vertex");
    box = {1e300, 1e300, -1e300, -1e300};
    for (const auto& v : poly) {
      if (!v.is_array() || v.size() != 2)
        record_error(diagram, "object " + std::to_string(index) + ": polygon vertex needs 2 numbers");
      const double x = v[0].get<double>(), y = v[1].get<double>();
      box.xmin = std::min(box.xmin, x);
      box.ymin = std::min(box.ymin, y);
      box.xmax = std::max(box.xmax, x);
      box.ymax = std::max(box.ymax, y);
    }
  } else {
    record_error(diagram, "object " + std::to_string(index) + ": needs box or polygon");
  }
  box = {box.xmin / w, box.ymin / h, box.xmax / w, box.ymax / h};
  if (!(box.xmin >= 0.0 && box.ymin >= 0.0 && box.xmax <= 1.0 && box.ymax <= 1.0))
    record_error(diagram, "object " + std::to_string(index) + ": box outside the image");
  if (!box.valid()) record_error(diagram, "object " + std::to_string(index) + ": degenerate box");
  return box;
}

}  // namespace detail

inline std::vector<DiagramAnnotation> parse_annotations(const json& doc) {
  if (!doc.is_array()) throw std::runtime_error("annotation file: top level must be a list of diagrams");
  std::vector<DiagramAnnotation> out;
  out.reserve(doc.size());
  for (std::size_t di = 0; di < doc.size(); ++di) {
    const json& entry = doc[di];
    DiagramAnnotation ann;
    if (!entry.contains("image") || !entry["image"].contains("width") || !entry["image"].contains("height"))
      detail::record_error(di, "missing image size");
    ann.image_width = entry["image"]["width"].get<std::size_t>();
    ann.image_height = entry["image"]["height"].get<std::size_t>();
    if (ann.image_width == 0 || ann.image_height == 0) detail::record_error(di, "image size must be positive");
    const double w = static_cast<double>(ann.image_width), h = static_cast<double>(ann.image_height);

    if (!entry.contains("objects") || !entry["objects"].is_array()) detail::record_error(di, "missing objects list");
    const json& objs = entry["objects"];
    for (std::size_t oi = 0; oi < objs.size(); ++oi) {
      const json& o = objs[oi];
      DiagramObject obj;
      if (!o.contains("class")) detail::record_error(di, "object " + std::to_string(oi) + ": missing class");
      try {
        obj.cls = object_class_from_string(o["class"].get<std::string>());
      } catch (const std::invalid_argument& e) {
        detail::record_error(di, "object " + std::to_string(oi) + ": " + e.what());
      }
      obj.box = detail::parse_box_or_polygon(o, di, oi, w, h);
      if (o.contains("scores")) {
        const auto& s = o["scores"];
        if (!s.is_array() || s.size() != kNumClasses)
          detail::record_error(di, "object " + std::to_string(oi) + ": scores needs " + std::to_string(kNumClasses) +
                                       " values");
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          obj.scores[c] = s[c].get<double>();
          if (obj.scores[c] < 0.0 || obj.scores[c] > 1.0)
            detail::record_error(di, "object " + std::to_string(oi) + ": scores must lie in [0, 1]");
        }
        std::size_t arg = 0;
        for (std::size_t c = 1; c < kNumClasses; ++c)
          if (obj.scores[c] > obj.scores[arg]) arg = c;
        if (arg != static_cast<std::size_t>(obj.cls))
          detail::record_error(di, "object " + std::to_string(oi) + ": scores argmax disagrees with class");
      } else {
        obj.scores = DiagramObject::one_hot(obj.cls);
      }
      if (o.contains("text")) obj.text = o["text"].get<std::string>();
      ann.objects.push_back(std::move(obj));
    }

    if (entry.contains("relations")) {
      if (!entry["relations"].is_array()) detail::record_error(di, "relations must be a list of [src, dst]");
      for (const auto& r : entry["relations"]) {
        if (!r.is_array() || r.size() != 2) detail::record_error(di, "relations must be [src, dst] pairs");
        const std::size_t s = r[0].get<std::size_t>(), d = r[1].get<std::size_t>();
        if (s >= ann.objects.size() || d >= ann.objects.size())
          detail::record_error(di, "relation [" + std::to_string(s) + ", " + std::to_string(d) +
                                       "] references a missing object");
        for (const auto& [es, ed] : ann.gt_relations)
          if (es == s && ed == d)
            detail::record_error(di, "duplicate relation [" + std::to_string(s) + ", " + std::to_string(d) + "]");
        ann.gt_relations.emplace_back(s, d);
      }
    }
    out.push_back(std::move(ann));
  }
  return out;
}

inline std::vector<DiagramAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("annotation file '" + path.string() + "': " + e.what());
  }
  return parse_annotations(doc);
}

inline json annotations_to_json(const std::vector<DiagramAnnotation>& annotations) {
  json doc = json::array();
  for (const DiagramAnnotation& ann : annotations) {
    json entry;
    entry["image"] = {{"width", ann.image_width}, {"height", ann.image_height}};
    const double w = static_cast<double>(ann.image_width), h = static_cast<double>(ann.image_height);
    json objs = json::array();
    for (const DiagramObject& o : ann.objects) {
      json jo;
      jo["class"] = to_string(o.cls);
      jo["box"] = {o.box.xmin * w, o.box.ymin * h, o.box.xmax * w, o.box.ymax * h};
      if (o.scores != DiagramObject::one_hot(o.cls)) jo["scores"] = o.scores;
      if (!o.text.empty()) jo["text"] = o.text;
      objs.push_back(std::move(jo));
    }
    entry["objects"] = std::move(objs);
    json rels = json::array();
    for (const auto& [s, d] : ann.gt_relations) rels.push_back({s, d});
    entry["relations"] = std::move(rels);
    doc.push_back(std::move(entry));
  }
  return doc;
}

inline void save_annotations(const std::filesystem::path& path, const std::vector<DiagramAnnotation>& annotations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write annotation file '" + path.string() + "'");
  out << annotations_to_json(annotations).dump(2) << "\n";
}

// --- inferred graphs -------------------------------------------------------

inline json graphs_to_json(const std::vector<DiagramGraph>& graphs) {
  json doc = json::array();
  for (const DiagramGraph& g : graphs) {
    json entry;
    json nodes = json::array();
    for (const DiagramObject& o : g.nodes) {
      json jo;
      jo["class"] = to_string(o.cls);
      jo["box"] = {o.box.xmin, o.box.ymin, o.box.xmax, o.box.ymax};  // normalized
      jo["scores"] = o.scores;
      if (!o.text.empty()) jo["text"] = o.text;
      nodes.push_back(std::move(jo));
    }
    entry["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const ScoredEdge& e : g.edges)
      edges.push_back({{"src", e.src}, {"dst", e.dst}, {"confidence", e.confidence}});
    entry["edges"] = std::move(edges);
    doc.push_back(std::move(entry));
  }
  return doc;
}

inline void save_graphs(const std::filesystem::path& path, const std::vector<DiagramGraph>& graphs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write graph file '" + path.string() + "'");
  out << graphs_to_json(graphs).dump(2) << "\n";
}

inline std::vector<DiagramGraph> load_graphs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("graph file '" + path.string() + "': " + e.what());
  }
  if (!doc.is_array()) throw std::runtime_error("graph file: top level must be a list");
  std::vector<DiagramGraph> graphs;
  for (std::size_t gi = 0; gi < doc.size(); ++gi) {
    const json& entry = doc[gi];
    DiagramGraph g;
    for (const auto& jo : entry.value("nodes", json::array())) {
      DiagramObject o;
      o.cls = object_class_from_string(jo.at("class").get<std::string>());
      const auto& b = jo.at("box");
      o.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      if (jo.contains("scores"))
        for (std::size_t c = 0; c < kNumClasses; ++c) o.scores[c] = jo["scores"][c].get<double>();
      else
        o.scores = DiagramObject::one_hot(o.cls);
      if (jo.contains("text")) o.text = jo["text"].get<std::string>();
      g.nodes.push_back(std::move(o));
    }
    for (const auto& je : entry.value("edges", json::array())) {
      ScoredEdge e{je.at("src").get<std::size_t>(), je.at("dst").get<std::size_t>(),
                   je.at("confidence").get<double>()};
      if (e.src >= g.nodes.size() || e.dst >= g.nodes.size())
        throw std::runtime_error("graph " + std::to_string(gi) + ": edge references a missing node");
      g.edges.push_back(e);
    }
    graphs.push_back(std::move(g));
  }
  return graphs;
}

// --- sentences ----------------------------------------------------------------

inline void save_sentences_text(const std::filesystem::path& path,
                                const std::vector<std::vector<KnowledgeSentence>>& per_graph) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write sentence file '" + path.string() + "'");
  for (std::size_t g = 0; g < per_graph.size(); ++g) {
    out << "# graph " << g << "\n";
    for (const KnowledgeSentence& s : per_graph[g]) out << s.text << "\n";
  }
}

inline void save_sentences_records(const std::filesystem::path& path,
                                   const std::vector<std::vector<KnowledgeSentence>>& per_graph) {
  json doc = json::array();
  for (std::size_t g = 0; g < per_graph.size(); ++g) {
    for (const KnowledgeSentence& s : per_graph[g]) {
      json r;
      r["graph"] = g;
      r["text"] = s.text;
      r["category"] = to_string(s.category);
      r["provenance"] = s.provenance;
      doc.push_back(std::move(r));
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write sentence records '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

// --- CSV reports ----------------------------------------------------------------

// %.17g keeps doubles byte-stable and lossless across writes.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void save_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write loss curve '" + path.string() + "'");
  out << "iteration,loss,lr\n";
  for (const LossPoint& p : curve)
    out << p.iteration << "," << format_double(p.loss) << "," << format_double(p.lr) << "\n";
}

inline std::uint64_t config_hash(const json& config) { return fnv1a(config.dump()); }

inline std::string hash_string(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct MetricRow {
  std::string name;
  double value;
};

inline void save_metric_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows,
                            const std::string& config_hash_hex) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metric report '" + path.string() + "'");
  out << "metric,value,config\n";
  for (const MetricRow& r : rows) out << r.name << "," << format_double(r.value) << "," << config_hash_hex << "\n";
}

inline std::string metric_table(const std::vector<MetricRow>& rows, const std::string& config_hash_hex) {
  std::ostringstream out;
  out << "metric                      value  (config " << config_hash_hex << ")\n";
  for (const MetricRow& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-24s %9.4f\n", r.name.c_str(), r.value);
    out << buf;
  }
  return out.str();
}

}  // namespace dggn
