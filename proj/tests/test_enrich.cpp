// Copyright 2026 The Storygen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storygen/enrich.hpp"
#include "storygen/error.hpp"

using namespace storygen;

namespace {

std::vector<TermSet> five_sets() {
  const char* lemmas[5] = {"dog", "park", "ball", "tree", "home"};
  std::vector<TermSet> sets(5);
  for (int i = 0; i < 5; ++i) {
    sets[i].image_index = i;
    sets[i].add(Term{lemmas[i], TermKind::NOUN});
  }
  return sets;
}

KnowledgeGraph graph_from(const std::string& tsv) {
  KnowledgeGraph kg;
  std::istringstream in(tsv);
  kg.ingest(in, TupleSource::OTHER);
  return kg;
}

NGramModel flat_lm() {
  // Uniform over every token that can appear in a flattened path here.
  return NGramModel::uniform({"dog_NOUN", "park_NOUN", "ball_NOUN",
                              "tree_NOUN", "home_NOUN", "Runs_to_FRAME",
                              "Chases_FRAME", "<sep>"});
}

}  // namespace

TEST_CASE("baseline path mirrors the five term sets") {
  EnrichedPath base = baseline_path(five_sets());
  REQUIRE(base.segments.size() == 5);
  CHECK(base.insertion_count == 0);
  for (int i = 0; i < 5; ++i) {
    CHECK(base.segments[i].origin == OriginKind::IMAGE);
    CHECK(base.segments[i].index == i);
    CHECK_FALSE(base.segments[i].link.has_value());
  }
  CHECK(provenance_key(base).empty());

  auto bad = five_sets();
  bad.pop_back();
  CHECK_THROWS_AS(baseline_path(bad), DataError);
  auto swapped = five_sets();
  std::swap(swapped[1], swapped[2]);
  CHECK_THROWS_AS(baseline_path(swapped), DataError);
}

TEST_CASE("flatten joins segments with a separator") {
  EnrichedPath base = baseline_path(five_sets());
  auto flat = flatten(base);
  // Five one-term segments: 5 terms + 4 separators.
  REQUIRE(flat.size() == 9);
  CHECK(flat[0] == "dog_NOUN");
  CHECK(flat[1] == "<sep>");
  CHECK(flat[2] == "park_NOUN");
  CHECK(flat[8] == "home_NOUN");
  int seps = 0;
  for (const auto& tok : flat) seps += tok == "<sep>";
  CHECK(seps == 4);
}

TEST_CASE("candidates: baseline first, then per-gap insertions") {
  KnowledgeGraph kg = graph_from(
      "dog_NOUN\truns to\tpark_NOUN\n"
      "ball_NOUN\tchases\ttree_NOUN\n");
  EnrichConfig cfg;
  cfg.max_insertions = 1;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  REQUIRE(candidates.size() == 3);  // baseline + one link in each of 2 gaps
  CHECK(candidates[0].insertion_count == 0);
  CHECK(candidates[1].insertion_count == 1);
  CHECK(candidates[2].insertion_count == 1);
  // Ordered by gap: dog->park fills gap 0, ball->tree fills gap 2.
  REQUIRE(candidates[1].segments.size() == 6);
  CHECK(candidates[1].segments[1].origin == OriginKind::INSERTED);
  CHECK(candidates[1].segments[1].index == 0);
  CHECK(candidates[2].segments[3].origin == OriginKind::INSERTED);
  CHECK(candidates[2].segments[3].index == 2);

  // The inserted segment expands head, frame, tail between the images.
  auto flat = flatten(candidates[1]);
  CHECK(flat[0] == "dog_NOUN");
  CHECK(flat[1] == "<sep>");
  CHECK(flat[2] == "dog_NOUN");
  CHECK(flat[3] == "Runs_to_FRAME");
  CHECK(flat[4] == "park_NOUN");
  CHECK(flat[5] == "<sep>");
  CHECK(flat[6] == "park_NOUN");
}

TEST_CASE("two insertions combine across distinct gaps") {
  KnowledgeGraph kg = graph_from(
      "dog_NOUN\truns to\tpark_NOUN\n"
      "ball_NOUN\tchases\ttree_NOUN\n");
  EnrichConfig cfg;
  cfg.max_insertions = 2;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  // baseline, two singles, one pair.
  REQUIRE(candidates.size() == 4);
  CHECK(candidates[3].insertion_count == 2);
  REQUIRE(candidates[3].segments.size() == 7);
  CHECK(candidates[3].segments[1].origin == OriginKind::INSERTED);
  CHECK(candidates[3].segments[4].origin == OriginKind::INSERTED);
}

TEST_CASE("empty graph yields only the baseline") {
  KnowledgeGraph kg;
  EnrichConfig cfg;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].insertion_count == 0);
  CHECK(select_path_index(candidates, flat_lm()) == 0);
}

TEST_CASE("selection ranks by perplexity then structure") {
  KnowledgeGraph kg = graph_from("dog_NOUN\truns to\tpark_NOUN\n");
  EnrichConfig cfg;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  REQUIRE(candidates.size() == 2);

  // LM trained on the enriched flattened form prefers the insertion.
  auto enriched_flat = flatten(candidates[1]);
  NGramModel lm = NGramModel::train({enriched_flat, enriched_flat}, 3, 0.75);
  auto ppl = score_candidates(candidates, lm);
  REQUIRE(ppl.size() == 2);
  CHECK(ppl[1] < ppl[0]);
  CHECK(select_path_index(candidates, lm) == 1);

  // A uniform LM scores both equally; fewer insertions wins the tie.
  CHECK(select_path_index(candidates, flat_lm()) == 0);

  CHECK_THROWS_AS(select_path_index({}, lm), DataError);
}

TEST_CASE("selection is invariant to candidate order") {
  KnowledgeGraph kg = graph_from(
      "dog_NOUN\truns to\tpark_NOUN\n"
      "ball_NOUN\tchases\ttree_NOUN\n");
  EnrichConfig cfg;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  auto enriched_flat = flatten(candidates[1]);
  NGramModel lm = NGramModel::train({enriched_flat, enriched_flat}, 3, 0.75);

  EnrichedPath winner = select_path(candidates, lm);
  std::reverse(candidates.begin(), candidates.end());
  EnrichedPath winner2 = select_path(candidates, lm);
  CHECK(flatten(winner) == flatten(winner2));
  CHECK(provenance_key(winner) == provenance_key(winner2));
}

TEST_CASE("dropping the inserted segments recovers the baseline") {
  KnowledgeGraph kg = graph_from(
      "dog_NOUN\truns to\tpark_NOUN\n"
      "park_NOUN\tholds\tball_NOUN\n");
  EnrichConfig cfg;
  cfg.max_insertions = 2;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  EnrichedPath base = baseline_path(five_sets());
  for (const auto& cand : candidates) {
    EnrichedPath stripped;
    for (const auto& seg : cand.segments) {
      if (seg.origin == OriginKind::IMAGE) stripped.segments.push_back(seg);
    }
    CHECK(flatten(stripped) == flatten(base));
  }
}

TEST_CASE("provenance keys identify the insertions") {
  KnowledgeGraph kg = graph_from("dog_NOUN\truns to\tpark_NOUN\n");
  EnrichConfig cfg;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  std::string key = provenance_key(candidates[1]);
  CHECK(key.find("0:") == 0);  // gap number leads
  CHECK(key.find("runs to") != std::string::npos);
  CHECK(key.find("dog_NOUN") != std::string::npos);
}

TEST_CASE("lexicon maps relation labels to frame names") {
  KnowledgeGraph kg = graph_from("dog_NOUN\truns to\tpark_NOUN\n");
  Lexicon lex;
  lex.add_frame("runs to", "Self_motion");
  EnrichConfig cfg;
  auto candidates = build_candidates(five_sets(), kg, cfg, &lex);
  auto flat = flatten(candidates[1]);
  CHECK(flat[3] == "Self_motion_FRAME");
}

TEST_CASE("selection report carries every candidate") {
  KnowledgeGraph kg = graph_from("dog_NOUN\truns to\tpark_NOUN\n");
  EnrichConfig cfg;
  auto candidates = build_candidates(five_sets(), kg, cfg);
  auto ppl = score_candidates(candidates, flat_lm());
  auto report = nlohmann::json::parse(selection_report(candidates, ppl, 0));
  CHECK(report.at("selected").get<int>() == 0);
  REQUIRE(report.at("candidates").size() == 2);
  CHECK(report.at("candidates")[0].contains("flattened"));
  CHECK(report.at("candidates")[0].contains("perplexity"));
  CHECK(report.at("candidates")[1].at("insertions").get<int>() == 1);
}

TEST_CASE("config validation") {
  EnrichConfig cfg;
  cfg.max_insertions = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EnrichConfig{};
  CHECK_NOTHROW(cfg.validate());
}
