#pragma once

// Turns a generated relation graph into knowledge sentences. Relation
// sentences connect two text labels through shared blob nodes ("A links to
// B"), either directly (both texts attached to one blob) or across one
// blob-blob relation. Fact sentences add entity names and per-class counts,
// plus a stage count when the blobs form a directed cycle.

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "dggn/data.hpp"

namespace dggn {

enum class SentenceCategory : int { relation = 0, entity = 1, count = 2 };

inline const char* to_string(SentenceCategory c) {
  switch (c) {
    case SentenceCategory::relation: return "relation";
    case SentenceCategory::entity: return "entity";
    case SentenceCategory::count: return "count";
  }
  return "?";
}

struct KnowledgeSentence {
  std::string text;
  SentenceCategory category = SentenceCategory::relation;
  std::vector<std::size_t> provenance;  // contributing node indices
};

namespace detail {

// Relations as unordered node pairs; arc direction does not matter for the
// sentence rules.
struct RelationSet {
  std::size_t a, b;
  bool contains(std::size_t n) const { return a == n || b == n; }
  std::size_t other(std::size_t n) const { return a == n ? b : a; }
};

inline std::vector<RelationSet> relation_sets(const DiagramGraph& graph) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<RelationSet> rels;
  for (const ScoredEdge& e : graph.edges) {
    if (e.src == e.dst) continue;
    const auto key = std::minmax(e.src, e.dst);
    if (seen.insert({key.first, key.second}).second) rels.push_back({key.first, key.second});
  }
  return rels;
}

// The single shared node of two relations, if there is exactly one.
inline bool shared_node(const RelationSet& x, const RelationSet& y, std::size_t& out) {
  std::size_t count = 0;
  if (y.contains(x.a)) {
    out = x.a;
    ++count;
  }
  if (y.contains(x.b)) {
    out = x.b;
    ++count;
  }
  return count == 1;
}

inline void sort_and_dedupe(std::vector<KnowledgeSentence>& sentences) {
  auto key_less = [](const KnowledgeSentence& a, const KnowledgeSentence& b) {
    if (a.category != b.category) return static_cast<int>(a.category) < static_cast<int>(b.category);
    if (a.text != b.text) return a.text < b.text;
    return a.provenance < b.provenance;
  };
  std::sort(sentences.begin(), sentences.end(), key_less);
  sentences.erase(std::unique(sentences.begin(), sentences.end(),
                              [](const KnowledgeSentence& a, const KnowledgeSentence& b) {
                                return a.category == b.category && a.text == b.text;
                              }),
                  sentences.end());
  std::sort(sentences.begin(), sentences.end(), [](const KnowledgeSentence& a, const KnowledgeSentence& b) {
    if (a.category != b.category) return static_cast<int>(a.category) < static_cast<int>(b.category);
    if (a.provenance != b.provenance) return a.provenance < b.provenance;
    return a.text < b.text;
  });
}

}  // namespace detail

// Relation sentences. For every ordered pair of relations sharing exactly
// one node: a shared text node yields nothing; a shared blob with two text
// remainders yields "<text_a> links to <text_b>"; a shared blob whose second
// remainder is another blob is chased one relation further to a text node.
inline std::vector<KnowledgeSentence> generate_sentences(const DiagramGraph& graph,
                                                         std::vector<std::string>* warnings = nullptr) {
  const auto rels = detail::relation_sets(graph);
  const auto& nodes = graph.nodes;
  auto cls = [&](std::size_t n) { return nodes[n].cls; };

  auto text_of = [&](std::size_t n) -> const std::string* {
    if (!nodes[n].text.empty()) return &nodes[n].text;
    if (warnings) warnings->push_back("text node " + std::to_string(n) + " has no string; skipped");
    return nullptr;
  };

  std::vector<KnowledgeSentence> sentences;
  auto emit = [&](std::size_t text_a, std::size_t text_b, std::vector<std::size_t> provenance) {
    const std::string* ta = text_of(text_a);
    const std::string* tb = text_of(text_b);
    if (!ta || !tb) return;
    sentences.push_back({*ta + " links to " + *tb, SentenceCategory::relation, std::move(provenance)});
  };

  for (std::size_t ai = 0; ai < rels.size(); ++ai) {
    for (std::size_t bi = 0; bi < rels.size(); ++bi) {
      if (ai == bi) continue;
      std::size_t shared;
      if (!detail::shared_node(rels[ai], rels[bi], shared)) continue;
      if (cls(shared) == ObjectClass::text) continue;
      if (cls(shared) != ObjectClass::blob) continue;
      const std::size_t ra = rels[ai].other(shared);
      const std::size_t rb = rels[bi].other(shared);
      if (cls(ra) != ObjectClass::text) continue;
      if (cls(rb) == ObjectClass::text) {
        emit(ra, rb, {ra, shared, rb});
      } else if (cls(rb) == ObjectClass::blob) {
        // chase one relation further: some R_c sharing a blob with R_b and
        // ending in a text node
        for (std::size_t ci = 0; ci < rels.size(); ++ci) {
          if (ci == ai || ci == bi) continue;
          std::size_t shared2;
          if (!detail::shared_node(rels[ci], rels[bi], shared2)) continue;
          if (cls(shared2) != ObjectClass::blob) continue;
          const std::size_t rc = rels[ci].other(shared2);
          if (cls(rc) != ObjectClass::text) continue;
          emit(ra, rc, {ra, shared, rb, rc});
        }
      }
    }
  }
  detail::sort_and_dedupe(sentences);
  return sentences;
}

// Entity and count facts: one sentence per named text node, one count per
// populated class, and a stage count when blob-to-blob arcs form a directed
// cycle.
inline std::vector<KnowledgeSentence> generate_facts(const DiagramGraph& graph) {
  std::vector<KnowledgeSentence> facts;
  const auto& nodes = graph.nodes;

  for (std::size_t n = 0; n < nodes.size(); ++n)
    if (nodes[n].cls == ObjectClass::text && !nodes[n].text.empty())
      facts.push_back({nodes[n].text + " is an entity", SentenceCategory::entity, {n}});

  static const char* kPlural[kNumClasses] = {"blobs", "texts", "arrow heads", "arrow tails"};
  std::size_t counts[kNumClasses] = {0, 0, 0, 0};
  for (const auto& node : nodes) ++counts[static_cast<std::size_t>(node.cls)];
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (counts[c] > 0)
      facts.push_back({"There are " + std::to_string(counts[c]) + " " + kPlural[c], SentenceCategory::count, {}});

  // stages: blobs that can reach themselves through blob-to-blob arcs
  std::vector<std::vector<std::size_t>> adj(nodes.size());
  for (const ScoredEdge& e : graph.edges)
    if (e.src != e.dst && nodes[e.src].cls == ObjectClass::blob && nodes[e.dst].cls == ObjectClass::blob)
      adj[e.src].push_back(e.dst);
  std::size_t stages = 0;
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (nodes[v].cls != ObjectClass::blob) continue;
    std::vector<char> seen(nodes.size(), 0);
    std::vector<std::size_t> stack(adj[v].begin(), adj[v].end());
    bool cyclic = false;
    while (!stack.empty() && !cyclic) {
      const std::size_t u = stack.back();
      stack.pop_back();
      if (u == v) {
        cyclic = true;
        break;
      }
      if (seen[u]) continue;
      seen[u] = 1;
      stack.insert(stack.end(), adj[u].begin(), adj[u].end());
    }
    if (cyclic) ++stages;
  }
  if (stages > 0)
    facts.push_back({"There are " + std::to_string(stages) + " stages", SentenceCategory::count, {}});

  detail::sort_and_dedupe(facts);
  return facts;
}

}  // namespace dggn
