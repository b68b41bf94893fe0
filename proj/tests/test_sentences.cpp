#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "dggn/sentences.hpp"

using namespace dggn;

namespace {

DiagramObject node(ObjectClass cls, const std::string& text = "") {
  DiagramObject o;
  o.cls = cls;
  o.scores = DiagramObject::one_hot(cls);
  o.box = {0.1, 0.1, 0.2, 0.2};
  o.text = text;
  return o;
}

bool contains(const std::vector<KnowledgeSentence>& s, const std::string& text) {
  return std::any_of(s.begin(), s.end(), [&](const KnowledgeSentence& k) { return k.text == text; });
}

}  // namespace

TEST_CASE("two texts on a shared blob link directly") {
  DiagramGraph g;
  g.nodes = {node(ObjectClass::blob), node(ObjectClass::text, "Egg Mass"), node(ObjectClass::text, "Tadpole")};
  g.edges = {{1, 0, 0.9}, {2, 0, 0.8}};
  auto sentences = generate_sentences(g);
  CHECK(contains(sentences, "Egg Mass links to Tadpole"));
  CHECK(contains(sentences, "Tadpole links to Egg Mass"));
  for (const auto& s : sentences) {
    CHECK(s.category == SentenceCategory::relation);
    CHECK(s.text.find("links to") != std::string::npos);
    for (std::size_t p : s.provenance) CHECK(p < g.nodes.size());
  }
}

TEST_CASE("empty graph yields no sentences") {
  DiagramGraph g;
  CHECK(generate_sentences(g).empty());
  CHECK(generate_facts(g).empty());
}

TEST_CASE("chain text-blob-blob-text links through the intermediate relation") {
  DiagramGraph g;
  g.nodes = {node(ObjectClass::text, "Alpha"), node(ObjectClass::blob), node(ObjectClass::blob),
             node(ObjectClass::text, "Beta")};
  g.edges = {{0, 1, 0.9}, {1, 2, 0.9}, {2, 3, 0.9}};
  auto sentences = generate_sentences(g);
  CHECK(contains(sentences, "Alpha links to Beta"));
  CHECK(contains(sentences, "Beta links to Alpha"));
}

TEST_CASE("shared text node produces nothing") {
  DiagramGraph g;
  g.nodes = {node(ObjectClass::text, "Label"), node(ObjectClass::blob), node(ObjectClass::blob)};
  g.edges = {{0, 1, 0.9}, {0, 2, 0.9}};
  CHECK(generate_sentences(g).empty());
}

TEST_CASE("unnamed text nodes are skipped with a warning") {
  DiagramGraph g;
  g.nodes = {node(ObjectClass::blob), node(ObjectClass::text, ""), node(ObjectClass::text, "Named")};
  g.edges = {{1, 0, 0.9}, {2, 0, 0.8}};
  std::vector<std::string> warnings;
  auto sentences = generate_sentences(g, &warnings);
  CHECK(sentences.empty());
  CHECK(!warnings.empty());
}

TEST_CASE("sentences are deterministic, sorted and deduplicated") {
  DiagramGraph g;
  g.nodes = {node(ObjectClass::blob), node(ObjectClass::text, "A"), node(ObjectClass::text, "B"),
             node(ObjectClass::blob), node(ObjectClass::text, "C")};
  g.edges = {{1, 0, 0.9}, {2, 0, 0.9}, {0, 3, 0.9}, {4, 3, 0.9}};
  auto first = generate_sentences(g);
  auto second = generate_sentences(g);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].text == second[i].text);
    CHECK(first[i].provenance == second[i].provenance);
  }
  for (std::size_t i = 0; i + 1 < first.size(); ++i) {
    const bool ordered = first[i].provenance < first[i + 1].provenance ||
                         (first[i].provenance == first[i + 1].provenance && first[i].text <= first[i + 1].text);
    CHECK(ordered);
  }
  // no duplicate texts within the relation category
  for (std::size_t i = 0; i < first.size(); ++i)
    for (std::size_t j = i + 1; j < first.size(); ++j) CHECK(first[i].text != first[j].text);
}

TEST_CASE("facts count classes and named entities") {
  DiagramGraph g;
  for (int i = 0; i < 4; ++i) g.nodes.push_back(node(ObjectClass::blob));
  for (int i = 0; i < 4; ++i) g.nodes.push_back(node(ObjectClass::text, "T" + std::to_string(i)));
  auto facts = generate_facts(g);
  CHECK(contains(facts, "There are 4 blobs"));
  CHECK(contains(facts, "There are 4 texts"));
  CHECK(contains(facts, "T0 is an entity"));
  // no arrows, no arrow counts
  CHECK(!contains(facts, "There are 0 arrow heads"));
  // no cycle, no stage count
  for (const auto& f : facts) CHECK(f.text.find("stages") == std::string::npos);
}

TEST_CASE("a four-blob cycle yields a stage count") {
  DiagramGraph g;
  for (int i = 0; i < 4; ++i) g.nodes.push_back(node(ObjectClass::blob));
  g.edges = {{0, 1, 0.9}, {1, 2, 0.9}, {2, 3, 0.9}, {3, 0, 0.9}};
  auto facts = generate_facts(g);
  CHECK(contains(facts, "There are 4 stages"));

  // breaking the cycle removes the stage count
  g.edges.pop_back();
  facts = generate_facts(g);
  for (const auto& f : facts) CHECK(f.text.find("stages") == std::string::npos);
}
