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

#include "storygen/error.hpp"
#include "storygen/terms.hpp"

using namespace storygen;

TEST_CASE("parse_term canonical forms") {
  Term dog = parse_term("dog_NOUN");
  CHECK(dog.lemma == "dog");
  CHECK(dog.kind == TermKind::NOUN);
  CHECK(dog.render() == "dog_NOUN");

  // Noun lemmas lowercase; frame names keep their case.
  CHECK(parse_term("Dog_NOUN").render() == "dog_NOUN");
  Term motion = parse_term("Motion_FRAME");
  CHECK(motion.lemma == "Motion");
  CHECK(motion.kind == TermKind::FRAME);
  CHECK(motion.render() == "Motion_FRAME");

  // Split happens at the last underscore; suffix match ignores case.
  CHECK(parse_term("ice_cream_NOUN").lemma == "ice_cream");
  CHECK(parse_term("Cause_to_experience_FRAME").lemma == "Cause_to_experience");
  CHECK(parse_term("dog_noun").kind == TermKind::NOUN);

  CHECK_THROWS_AS(parse_term("dog"), DataError);
  CHECK_THROWS_AS(parse_term("dog_VERB"), DataError);
  CHECK_THROWS_AS(parse_term("_NOUN"), DataError);
  CHECK_THROWS_AS(parse_term(""), DataError);
}

TEST_CASE("term ordering is (lemma, kind)") {
  Term a{"apple", TermKind::NOUN};
  Term b{"banana", TermKind::NOUN};
  Term af{"apple", TermKind::FRAME};
  CHECK(a < b);
  CHECK(a < af);   // NOUN sorts before FRAME at equal lemma
  CHECK(!(b < a));
}

TEST_CASE("TermSet keeps first-occurrence order and rejects duplicates") {
  TermSet ts;
  ts.image_index = 2;
  CHECK(ts.add(parse_term("dog_NOUN")));
  CHECK(ts.add(parse_term("park_NOUN")));
  CHECK_FALSE(ts.add(parse_term("dog_NOUN")));
  REQUIRE(ts.terms.size() == 2);
  CHECK(ts.terms[0].lemma == "dog");
  CHECK(ts.terms[1].lemma == "park");
  CHECK(ts.contains(parse_term("park_NOUN")));
  CHECK_FALSE(ts.contains(parse_term("cat_NOUN")));
}

namespace {

Lexicon tiny_lexicon() {
  Lexicon lex;
  lex.add_noun("dog");
  lex.add_noun("park");
  lex.add_noun("ball");
  lex.add_frame("ran", "Motion");
  lex.add_frame("threw", "Cause_motion");
  lex.add_pronoun("it");
  lex.add_pronoun("he");
  return lex;
}

}  // namespace

TEST_CASE("extract_terms: order, dedup, unknown tokens skipped") {
  Lexicon lex = tiny_lexicon();
  auto terms = extract_terms({"the", "dog", "ran", "to", "the", "dog", "park"},
                             lex);
  REQUIRE(terms.size() == 3);
  CHECK(terms[0].render() == "dog_NOUN");
  CHECK(terms[1].render() == "Motion_FRAME");
  CHECK(terms[2].render() == "park_NOUN");

  // Case-insensitive lookup, canonical lowercase noun output.
  auto upper = extract_terms({"Dog", "RAN"}, lex);
  REQUIRE(upper.size() == 2);
  CHECK(upper[0].render() == "dog_NOUN");
  CHECK(upper[1].render() == "Motion_FRAME");

  CHECK(extract_terms({"hello", "world"}, lex).empty());
  // Pronouns are not terms.
  CHECK(extract_terms({"it", "he"}, lex).empty());
}

TEST_CASE("replace_coreferences rewrites pronouns right-to-left") {
  Lexicon lex = tiny_lexicon();
  Story story;
  story.id = "s1";
  story.sentences = {{"he", "threw", "it"}, {"it", "bounced"}};

  std::vector<Mention> mentions;
  mentions.push_back({0, 0, {"the", "dog"}});
  mentions.push_back({0, 2, {"the", "ball"}});
  mentions.push_back({1, 0, {"the", "ball"}});

  Story out = replace_coreferences(story, mentions, lex);
  CHECK(out.sentences[0] ==
        std::vector<std::string>{"the", "dog", "threw", "the", "ball"});
  CHECK(out.sentences[1] == std::vector<std::string>{"the", "ball", "bounced"});
  // Input untouched.
  CHECK(story.sentences[0].size() == 3);
}

TEST_CASE("replace_coreferences skips non-pronouns with a warning") {
  Lexicon lex = tiny_lexicon();
  Story story;
  story.sentences = {{"dog", "ran"}};
  std::vector<std::string> warnings;
  Story out = replace_coreferences(story, {{0, 0, {"x"}}}, lex, &warnings);
  CHECK(out.sentences[0] == std::vector<std::string>{"dog", "ran"});
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("dog") != std::string::npos);
}

TEST_CASE("replace_coreferences validates indices") {
  Lexicon lex = tiny_lexicon();
  Story story;
  story.sentences = {{"it"}};
  CHECK_THROWS_AS(replace_coreferences(story, {{1, 0, {"x"}}}, lex), DataError);
  CHECK_THROWS_AS(replace_coreferences(story, {{0, 3, {"x"}}}, lex), DataError);
  CHECK_THROWS_AS(replace_coreferences(story, {{-1, 0, {"x"}}}, lex),
                  DataError);
}

TEST_CASE("lexicon TSV parsing") {
  std::istringstream in(
      "# comment\n"
      "noun\tdog\n"
      "noun\tPark\n"
      "frame\tran\tMotion\n"
      "pronoun\tit\n"
      "\n");
  Lexicon lex = load_lexicon(in);
  CHECK(lex.is_noun("dog"));
  CHECK(lex.is_noun("park"));
  CHECK(lex.is_noun("PARK"));
  REQUIRE(lex.frame_for("ran") != nullptr);
  CHECK(*lex.frame_for("ran") == "Motion");
  CHECK(lex.is_pronoun("it"));

  std::istringstream bad("verb\tran\n");
  CHECK_THROWS_AS(load_lexicon(bad), DataError);
}

TEST_CASE("story JSONL round-trip") {
  std::vector<Story> stories(2);
  stories[0].id = "a";
  stories[0].sentences = {{"the", "dog", "ran", "."}, {"it", "was", "fun", "."}};
  stories[1].id = "b";
  stories[1].sentences = {{"hello", "."}};

  std::ostringstream out;
  save_stories(stories, out);
  std::istringstream in(out.str());
  auto back = load_stories(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].sentences == stories[0].sentences);
  CHECK(back[1].sentences == stories[1].sentences);

  std::istringstream bad("{\"id\": \"x\"}\n");
  CHECK_THROWS_AS(load_stories(bad), DataError);
}

TEST_CASE("mentions JSONL parsing") {
  std::istringstream in(
      "{\"story_id\": \"s1\", \"mentions\": [[0, 2, [\"the\", \"dog\"]]]}\n");
  auto mentions = load_mentions(in);
  REQUIRE(mentions.count("s1") == 1);
  REQUIRE(mentions["s1"].size() == 1);
  CHECK(mentions["s1"][0].sentence_index == 0);
  CHECK(mentions["s1"][0].token_index == 2);
  CHECK(mentions["s1"][0].replacement ==
        std::vector<std::string>{"the", "dog"});
}
