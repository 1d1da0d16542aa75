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

#include "storygen/error.hpp"
#include "storygen/kg.hpp"

using namespace storygen;

namespace {

Term noun(const std::string& lemma) { return Term{lemma, TermKind::NOUN}; }

KnowledgeGraph graph_from(const std::string& tsv,
                          TupleSource source = TupleSource::OTHER) {
  KnowledgeGraph kg;
  std::istringstream in(tsv);
  kg.ingest(in, source);
  return kg;
}

}  // namespace

TEST_CASE("source names round-trip") {
  CHECK(source_name(TupleSource::VISUAL_GENOME) == "visual_genome");
  CHECK(source_name(TupleSource::OPENIE) == "openie");
  CHECK(source_name(TupleSource::OTHER) == "other");
  CHECK(parse_source("visual_genome") == TupleSource::VISUAL_GENOME);
  CHECK(parse_source("openie") == TupleSource::OPENIE);
  CHECK_THROWS_AS(parse_source("nope"), ConfigError);
}

TEST_CASE("ingest dedups and counts unique tuples") {
  KnowledgeGraph kg;
  std::istringstream in(
      "dog_NOUN\tchases\tcat_NOUN\n"
      "# comment line\n"
      "\n"
      "dog_NOUN\tchases\tcat_NOUN\n"
      "dog_NOUN\tsees\tcat_NOUN\n");
  CHECK(kg.ingest(in, TupleSource::OTHER) == 2);
  CHECK(kg.tuple_count() == 2);

  // Same triple under a different source is a distinct tuple.
  std::istringstream again("dog_NOUN\tchases\tcat_NOUN\n");
  CHECK(kg.ingest(again, TupleSource::OPENIE) == 1);
  CHECK(kg.tuple_count() == 3);
  CHECK(kg.check_index_consistency());
}

TEST_CASE("ingest reports the offending line") {
  KnowledgeGraph kg;
  std::istringstream in("dog_NOUN\tchases\tcat_NOUN\nonly_one_field\n");
  try {
    kg.ingest(in, TupleSource::OTHER);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("one_hop returns (rela, source)-ordered matches") {
  KnowledgeGraph kg = graph_from(
      "a_NOUN\tzig\tb_NOUN\n"
      "a_NOUN\tact\tb_NOUN\n"
      "a_NOUN\tact\tc_NOUN\n");
  std::istringstream vg("a_NOUN\tact\tb_NOUN\n");
  kg.ingest(vg, TupleSource::VISUAL_GENOME);

  auto hits = kg.one_hop(noun("a"), noun("b"));
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].rela == "act");
  CHECK(hits[0].source == TupleSource::VISUAL_GENOME);
  CHECK(hits[1].rela == "act");
  CHECK(hits[1].source == TupleSource::OTHER);
  CHECK(hits[2].rela == "zig");
  CHECK(kg.one_hop(noun("b"), noun("a")).empty());
  CHECK(kg.one_hop(noun("q"), noun("b")).empty());
}

TEST_CASE("two_hop joins through a middle term") {
  KnowledgeGraph kg = graph_from(
      "a_NOUN\tr1\tm_NOUN\n"
      "m_NOUN\tr2\tb_NOUN\n"
      "a_NOUN\tr3\tn_NOUN\n"
      "n_NOUN\tr4\tb_NOUN\n"
      "a_NOUN\tloop\ta_NOUN\n"
      "a_NOUN\tr5\tb_NOUN\n"    // direct edge, not a two-hop
      "b_NOUN\tr6\tb_NOUN\n");  // middle == tail is excluded
  auto paths = kg.two_hop(noun("a"), noun("b"));
  REQUIRE(paths.size() == 2);
  // Ordered by middle term.
  CHECK(paths[0].middle().lemma == "m");
  CHECK(paths[0].first.rela == "r1");
  CHECK(paths[0].second.rela == "r2");
  CHECK(paths[1].middle().lemma == "n");

  // Middle must differ from both endpoints: a->a->b and a->b->b excluded.
  for (const auto& p : paths) {
    CHECK(p.middle().lemma != "a");
    CHECK(p.middle().lemma != "b");
  }
}

TEST_CASE("reference fixtures: one-hop and two-hop expansion") {
  // One hop: time -> everyone via "cause to experience".
  KnowledgeGraph kg = graph_from(
      "time_NOUN\tcause to experience\teveryone_NOUN\n"
      "friends_NOUN\tposture\tman_NOUN\n"
      "man_NOUN\tposture\tgirls_NOUN\n");

  auto one = kg.one_hop(noun("time"), noun("everyone"));
  REQUIRE(one.size() == 1);
  CHECK(one[0].rela == "cause to experience");
  auto seg = link_to_segment(std::variant<RelationTuple, TwoHopPath>(one[0]),
                             nullptr);
  REQUIRE(seg.size() == 3);
  CHECK(seg[0].render() == "time_NOUN");
  CHECK(seg[1].render() == "Cause_to_experience_FRAME");
  CHECK(seg[2].render() == "everyone_NOUN");

  // Two hops: friends -> man -> girls with "posture" on both edges.
  auto two = kg.two_hop(noun("friends"), noun("girls"));
  REQUIRE(two.size() == 1);
  CHECK(two[0].middle().render() == "man_NOUN");
  auto seg2 = link_to_segment(std::variant<RelationTuple, TwoHopPath>(two[0]),
                              nullptr);
  REQUIRE(seg2.size() == 5);
  CHECK(seg2[0].render() == "friends_NOUN");
  CHECK(seg2[1].render() == "Posture_FRAME");
  CHECK(seg2[2].render() == "man_NOUN");
  CHECK(seg2[3].render() == "Posture_FRAME");
  CHECK(seg2[4].render() == "girls_NOUN");
}

TEST_CASE("lexicon overrides the fallback rela rendering") {
  Lexicon lex;
  lex.add_frame("posture", "Posture");
  lex.add_frame("cause to experience", "Experiencer_obj");
  RelationTuple t{noun("time"), "cause to experience", noun("everyone"),
                  TupleSource::OTHER};
  auto seg = link_to_segment(std::variant<RelationTuple, TwoHopPath>(t), &lex);
  CHECK(seg[1].render() == "Experiencer_obj_FRAME");
}

TEST_CASE("cross_image_links enumerates both hop kinds with the gap") {
  KnowledgeGraph kg = graph_from(
      "dog_NOUN\tchases\tcat_NOUN\n"
      "dog_NOUN\truns to\tpark_NOUN\n"
      "park_NOUN\tcontains\tcat_NOUN\n");
  TermSet left;
  left.image_index = 1;
  left.add(Term{"dog", TermKind::NOUN});
  TermSet right;
  right.image_index = 2;
  right.add(Term{"cat", TermKind::NOUN});

  auto links = kg.cross_image_links(left, right, true);
  REQUIRE(links.size() == 2);
  for (const auto& link : links) {
    CHECK(link.gap == 1);
    CHECK(link.head().render() == "dog_NOUN");
    CHECK(link.tail().render() == "cat_NOUN");
  }
  CHECK(links[0].hop == HopKind::ONE);
  CHECK(links[1].hop == HopKind::TWO);
  REQUIRE(links[1].segment.size() == 5);
  CHECK(links[1].segment[2].render() == "park_NOUN");

  auto one_only = kg.cross_image_links(left, right, false);
  CHECK(one_only.size() == 1);

  TermSet wrong;
  wrong.image_index = 3;
  CHECK_THROWS_AS(kg.cross_image_links(left, wrong, true), DataError);
}

TEST_CASE("graph snapshot round-trips") {
  KnowledgeGraph kg = graph_from(
      "dog_NOUN\tchases\tcat_NOUN\n"
      "Motion_FRAME\tleads to\tpark_NOUN\n");
  std::ostringstream out;
  kg.save(out);
  std::istringstream in(out.str());
  KnowledgeGraph back = KnowledgeGraph::load(in);
  CHECK(back.tuple_count() == 2);
  CHECK(back.check_index_consistency());
  auto hits = back.one_hop(noun("dog"), noun("cat"));
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].rela == "chases");

  std::istringstream bad("{\"format_version\": 99}");
  CHECK_THROWS_AS(KnowledgeGraph::load(bad), DataError);
}
