#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "dggn/data.hpp"
#include "dggn/rng.hpp"
#include "dggn/synth.hpp"

using namespace dggn;
using Catch::Approx;

namespace {

DiagramObject blob_at(double x0, double y0, double x1, double y1, double score = 1.0,
                      ObjectClass cls = ObjectClass::blob) {
  DiagramObject o;
  o.box = {x0, y0, x1, y1};
  o.cls = cls;
  o.scores = {};
  o.scores[static_cast<std::size_t>(cls)] = score;
  return o;
}

}  // namespace

TEST_CASE("pair feature layout and derived values") {
  DiagramObject a = blob_at(0.1, 0.2, 0.5, 0.6);
  DiagramObject b = blob_at(0.3, 0.3, 0.9, 0.7, 0.8, ObjectClass::text);
  LocalFeature f = pair_feature(a, b);
  REQUIRE(f.values.size() == 26);
  CHECK(f.values[0] == 0.1);
  CHECK(f.values[4] == Approx(0.3));  // xcenter
  CHECK(f.values[6] == Approx(0.4));  // width
  CHECK(f.values[8] == 1.0);          // blob score
  CHECK(f.values[12] == 1.0);         // max score
  CHECK(f.values[13] == 0.3);         // second object's xmin
  CHECK(f.values[13 + 9] == 0.8);     // text score of second object
  CHECK(f.values[25] == 0.8);         // max score of second object
}

TEST_CASE("local feature identities hold for random boxes") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const double x0 = rng.uniform(0.0, 0.8), y0 = rng.uniform(0.0, 0.8);
    DiagramObject o = blob_at(x0, y0, x0 + rng.uniform(0.01, 0.2), y0 + rng.uniform(0.01, 0.2));
    const auto f = object_feature(o);
    CHECK(f[4] == Approx(0.5 * (f[0] + f[2])).margin(1e-12));
    CHECK(f[5] == Approx(0.5 * (f[1] + f[3])).margin(1e-12));
    CHECK(f[6] == Approx(f[2] - f[0]).margin(1e-12));
    CHECK(f[7] == Approx(f[3] - f[1]).margin(1e-12));
  }
}

TEST_CASE("filter_detections suppresses duplicates and keeps distinct classes") {
  // identical boxes, same class: higher score wins
  auto survivors = filter_detections({blob_at(0, 0, 1, 1, 0.9), blob_at(0, 0, 1, 1, 0.8)});
  REQUIRE(survivors.size() == 1);
  CHECK(survivors[0].max_score() == 0.9);

  // disjoint boxes of different classes both survive
  survivors = filter_detections({blob_at(0, 0, 0.4, 0.4, 0.9), blob_at(0.5, 0.5, 0.9, 0.9, 0.8, ObjectClass::text)});
  CHECK(survivors.size() == 2);

  // IoU 0.5 > 0.45 suppresses the weaker box
  survivors = filter_detections({blob_at(0, 0, 1, 1, 0.9), blob_at(0, 0, 0.5, 1, 0.8)});
  REQUIRE(survivors.size() == 1);
  CHECK(survivors[0].box.xmax == 1.0);

  // score threshold drops low-confidence boxes
  survivors = filter_detections({blob_at(0, 0, 1, 1, 0.005)});
  CHECK(survivors.empty());
}

TEST_CASE("filter_detections is idempotent") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DiagramObject> objects;
    const std::size_t n = 1 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = rng.uniform(0.0, 0.7), y0 = rng.uniform(0.0, 0.7);
      objects.push_back(blob_at(x0, y0, x0 + rng.uniform(0.05, 0.3), y0 + rng.uniform(0.05, 0.3),
                                rng.uniform(0.05, 1.0), static_cast<ObjectClass>(rng.below(kNumClasses))));
    }
    auto once = filter_detections(objects);
    auto twice = filter_detections(once);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].box == twice[i].box);
  }
}

TEST_CASE("generate_candidates yields n^2 in lexicographic order") {
  std::vector<DiagramObject> one = {blob_at(0, 0, 0.5, 0.5)};
  auto c1 = generate_candidates(one);
  REQUIRE(c1.size() == 1);
  CHECK(c1[0].self_pair());

  std::vector<DiagramObject> three = {blob_at(0, 0, 0.2, 0.2), blob_at(0.3, 0.3, 0.5, 0.5),
                                      blob_at(0.6, 0.6, 0.8, 0.8)};
  auto c3 = generate_candidates(three);
  REQUIRE(c3.size() == 9);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(c3[i * 3 + j].src_index == i);
      CHECK(c3[i * 3 + j].dst_index == j);
    }
  // feature of candidate (i, j) carries object i's feature first
  const auto fx = object_feature(three[1]);
  for (std::size_t d = 0; d < kObjectFeatureDim; ++d) CHECK(c3[1 * 3 + 2].feature.values[d] == fx[d]);
}

TEST_CASE("candidate count is n^2 for all n up to 20") {
  Rng rng(5);
  for (std::size_t n = 1; n <= 20; ++n) {
    std::vector<DiagramObject> objects;
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = rng.uniform(0.0, 0.8), y0 = rng.uniform(0.0, 0.8);
      objects.push_back(blob_at(x0, y0, x0 + 0.1, y0 + 0.1));
    }
    CHECK(generate_candidates(objects).size() == n * n);
  }
}

TEST_CASE("match_and_sample with perfect detections labels exactly the ground truth") {
  std::vector<DiagramObject> objects = {blob_at(0, 0, 0.2, 0.2), blob_at(0.4, 0.4, 0.6, 0.6)};
  DiagramAnnotation ann;
  ann.image_width = ann.image_height = 100;
  ann.objects = objects;
  ann.gt_relations = {{0, 1}};
  auto candidates = generate_candidates(objects);
  Rng rng(1);
  SampleConfig cfg;
  cfg.count = 160;
  std::vector<std::string> warnings;
  auto sampled = match_and_sample(candidates, objects, ann, cfg, rng, &warnings);
  REQUIRE(sampled.size() == 4);  // clamped to n^2 with a warning
  CHECK(warnings.size() == 1);
  std::size_t positives = 0;
  for (const auto& c : sampled) {
    if (c.label == CandidateLabel::positive) {
      ++positives;
      CHECK(c.src_index == 0);
      CHECK(c.dst_index == 1);
    }
  }
  CHECK(positives == 1);
}

TEST_CASE("two ground truths sharing a best candidate fall back to next best") {
  // detection 1 overlaps GT objects 1 and 2; relations (0,1) and (0,2) both
  // prefer candidate (0,1)
  std::vector<DiagramObject> detections = {blob_at(0.0, 0.0, 0.2, 0.2), blob_at(0.4, 0.4, 0.6, 0.6),
                                           blob_at(0.42, 0.42, 0.62, 0.62)};
  DiagramAnnotation ann;
  ann.image_width = ann.image_height = 100;
  ann.objects = {blob_at(0.0, 0.0, 0.2, 0.2), blob_at(0.4, 0.4, 0.6, 0.6), blob_at(0.41, 0.41, 0.61, 0.61)};
  ann.gt_relations = {{0, 1}, {0, 2}};
  auto candidates = generate_candidates(detections);
  Rng rng(1);
  SampleConfig cfg;
  cfg.count = candidates.size();
  auto sampled = match_and_sample(candidates, detections, ann, cfg, rng);
  std::set<std::pair<std::size_t, std::size_t>> positives;
  for (const auto& c : sampled)
    if (c.label == CandidateLabel::positive) positives.insert({c.src_index, c.dst_index});
  // gt (0,1) takes candidate (0,1) with dst IoU 1.0; gt (0,2) then takes (0,2)
  CHECK(positives == std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {0, 2}});
}

TEST_CASE("sampling respects the positive target and never returns self-positives") {
  // 5 objects -> 25 candidates, 2 positives; ask for 16 at 1:7
  std::vector<DiagramObject> objects;
  for (std::size_t i = 0; i < 5; ++i) {
    const double x = 0.05 + 0.18 * static_cast<double>(i);
    objects.push_back(blob_at(x, x, x + 0.1, x + 0.1));
  }
  DiagramAnnotation ann;
  ann.image_width = ann.image_height = 100;
  ann.objects = objects;
  ann.gt_relations = {{0, 1}, {2, 3}};
  auto candidates = generate_candidates(objects);
  SampleConfig cfg;
  cfg.count = 16;
  Rng rng(7);
  auto sampled = match_and_sample(candidates, objects, ann, cfg, rng);
  REQUIRE(sampled.size() == 16);
  std::size_t pos = 0;
  for (const auto& c : sampled) pos += c.label == CandidateLabel::positive ? 1 : 0;
  CHECK(pos == 2);  // target 16/8 = 2 and both exist
  for (const auto& c : sampled)
    if (c.self_pair()) CHECK(c.label == CandidateLabel::negative);
}

TEST_CASE("perfect-detection matching labels |gt| positives on random synthetic diagrams") {
  std::vector<DiagramAnnotation> diagrams;
  for (auto [family, seed, count] : {std::tuple{SynthFamily::cycle, 99u, 34u},
                                     std::tuple{SynthFamily::star, 100u, 33u},
                                     std::tuple{SynthFamily::dag, 101u, 33u}}) {
    SynthSpec spec;
    spec.family = family;
    spec.seed = seed;
    auto part = generate(spec, count);
    diagrams.insert(diagrams.end(), part.begin(), part.end());
  }
  REQUIRE(diagrams.size() == 100);

  for (const auto& ann : diagrams) {
    auto detections = filter_detections(ann.objects);
    REQUIRE(detections.size() == ann.objects.size());
    auto candidates = generate_candidates(detections);
    SampleConfig cfg;
    cfg.count = candidates.size();
    Rng rng(1);
    auto sampled = match_and_sample(candidates, detections, ann, cfg, rng);
    std::set<std::pair<std::size_t, std::size_t>> positives;
    for (const auto& c : sampled)
      if (c.label == CandidateLabel::positive) positives.insert({c.src_index, c.dst_index});
    // detections preserve annotation order here, so indices line up
    std::set<std::pair<std::size_t, std::size_t>> expected(ann.gt_relations.begin(), ann.gt_relations.end());
    CHECK(positives == expected);
  }
}
