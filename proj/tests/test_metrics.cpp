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

#include <cmath>
#include <string>
#include <vector>

#include "storygen/error.hpp"
#include "storygen/metrics.hpp"
#include "storygen/terms.hpp"

using namespace storygen;

TEST_CASE("unigram precision fixture: two of three tokens match") {
  CHECK(bleu_n({"a", "b", "c"}, {{"a", "b", "d"}}, 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("modified precision clips repeated candidate tokens") {
  // "a" appears three times but at most once in the reference.
  CHECK(bleu_n({"a", "a", "a"}, {{"a", "b"}}, 1) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Clip rises to the maximum count over references.
  CHECK(bleu_n({"a", "a", "a"}, {{"a", "b"}, {"a", "a", "x"}}, 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("geometric mean over orders") {
  // The candidate needs at least one 4-gram for a perfect BLEU-4.
  CHECK(bleu_n({"a", "b", "c", "d"}, {{"a", "b", "c", "d"}}, 4) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bleu_n({"a", "b", "c"}, {{"a", "b", "c"}}, 4) ==
        doctest::Approx(0.0).epsilon(1e-15));
  // Precisions 2/3 (unigram) and 1/2 (bigram): sqrt(1/3).
  CHECK(bleu_n({"a", "b", "c"}, {{"a", "b", "x"}}, 2) ==
        doctest::Approx(std::sqrt(2.0 / 3.0 * 0.5)).epsilon(1e-12));
}

TEST_CASE("brevity penalty against the closest reference") {
  // Short candidate: BP = exp(1 - 4/2).
  CHECK(bleu_n({"a", "b"}, {{"a", "b", "c", "d"}}, 1) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  // Candidate at least as long as the closest reference: BP = 1.
  CHECK(bleu_n({"a", "b", "c"}, {{"a", "b"}}, 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // Tie between lengths 2 and 4 resolves to the shorter, so BP = 1.
  CHECK(bleu_n({"a", "b", "x"}, {{"a", "b"}, {"a", "b", "c", "d"}}, 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("degenerate bleu inputs") {
  CHECK(bleu_n({}, {{"a"}}, 1) == 0.0);
  CHECK(bleu_n({"x"}, {{"a"}}, 1) == 0.0);       // zero precision
  CHECK(bleu_n({"a"}, {{"a"}}, 2) == 0.0);       // no candidate bigrams
  CHECK_THROWS_AS(bleu_n({"a"}, {{"a"}}, 0), ConfigError);
  CHECK_THROWS_AS(bleu_n({"a"}, {{"a"}}, 5), ConfigError);
  CHECK_THROWS_AS(bleu_n({"a"}, {}, 1), DataError);
  CHECK_THROWS_AS(bleu_n({"a"}, {{}}, 1), DataError);
}

TEST_CASE("distinct-n pools n-grams across stories") {
  CHECK(distinct_n({{"a", "a", "a"}}, 1) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Pool: tokens a,b,a,c -> 3 unique / 4 total.
  CHECK(distinct_n({{"a", "b"}, {"a", "c"}}, 1) ==
        doctest::Approx(3.0 / 4.0).epsilon(1e-15));
  // Bigrams pool within stories only: (a,b) and (a,c).
  CHECK(distinct_n({{"a", "b"}, {"a", "c"}}, 2) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(distinct_n({{"a"}}, 2), DataError);
  CHECK_THROWS_AS(distinct_n({{"a"}}, 0), ConfigError);
}

TEST_CASE("rouge-l is the max LCS F1 over references") {
  // LCS([a,b,c,d], [a,c,d]) = 3: P = 3/4, R = 1, F1 = 6/7.
  CHECK(rouge_l({"a", "b", "c", "d"}, {{"a", "c", "d"}}) ==
        doctest::Approx(6.0 / 7.0).epsilon(1e-12));
  // Second reference matches perfectly; max wins.
  CHECK(rouge_l({"a", "b"}, {{"x", "y"}, {"a", "b"}}) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rouge_l({}, {{"a"}}) == 0.0);
  CHECK(rouge_l({"x"}, {{"a"}}) == 0.0);
  CHECK_THROWS_AS(rouge_l({"a"}, {}), DataError);
}

namespace {

Story make_story(const std::string& id,
                 const std::vector<std::vector<std::string>>& sentences) {
  Story s;
  s.id = id;
  s.sentences = sentences;
  return s;
}

}  // namespace

TEST_CASE("evaluate pairs stories by id and aggregates") {
  std::vector<Story> candidates = {
      make_story("s1", {{"a", "b", "c"}}),
      make_story("s2", {{"a", "a"}, {"a"}}),
  };
  std::vector<Story> references = {
      make_story("s2", {{"a", "b"}}),
      make_story("s1", {{"a", "b", "d"}}),
  };
  MetricReport report = evaluate(candidates, references);
  REQUIRE(report.per_story.size() == 2);
  CHECK(report.per_story[0].id == "s1");
  CHECK(report.per_story[0].bleu_1 ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // s2 tokens concatenate sentences: [a,a,a] vs [a,b] -> clipped 1/3.
  CHECK(report.per_story[1].bleu_1 ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(report.per_story[1].distinct_1 ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(report.bleu_1 ==
        doctest::Approx(0.5 * (2.0 / 3.0 + 1.0 / 3.0)).epsilon(1e-12));
  // Corpus distinct-1 pools all six candidate tokens: {a,b,c} / 6.
  CHECK(report.distinct_1 == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("evaluate supports multiple references per id") {
  std::vector<Story> candidates = {make_story("s", {{"a", "b"}})};
  std::vector<Story> references = {make_story("s", {{"x", "y"}}),
                                   make_story("s", {{"a", "b"}})};
  MetricReport report = evaluate(candidates, references);
  CHECK(report.per_story[0].bleu_1 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(report.per_story[0].rouge_l == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("evaluate rejects unmatched candidates") {
  std::vector<Story> candidates = {make_story("missing", {{"a"}})};
  std::vector<Story> references = {make_story("other", {{"a"}})};
  CHECK_THROWS_AS(evaluate(candidates, references), DataError);
  CHECK_THROWS_AS(evaluate({}, references), DataError);
}
