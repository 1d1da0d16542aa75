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
//
// Canonical term representation, term extraction from annotated sentences,
// and coreference replacement preprocessing.

#ifndef STORYGEN_TERMS_HPP_
#define STORYGEN_TERMS_HPP_

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace storygen {

enum class TermKind { NOUN, FRAME };

// A canonical token naming either a noun object or an event frame.
// Canonical render is "lemma_NOUN" (lemma lowercased) or "Name_FRAME"
// (name case preserved).
struct Term {
  std::string lemma;
  TermKind kind = TermKind::NOUN;

  std::string render() const;

  bool operator==(const Term& o) const {
    return kind == o.kind && lemma == o.lemma;
  }
  bool operator!=(const Term& o) const { return !(*this == o); }
  // Total order on (lemma, kind); used wherever deterministic output
  // ordering is required.
  bool operator<(const Term& o) const {
    if (lemma != o.lemma) return lemma < o.lemma;
    return static_cast<int>(kind) < static_cast<int>(o.kind);
  }
};

struct TermHash {
  std::size_t operator()(const Term& t) const {
    std::size_t h = std::hash<std::string>()(t.lemma);
    return h * 31u + static_cast<std::size_t>(t.kind);
  }
};

// Splits at the last underscore; the suffix is matched case-insensitively.
// Throws DataError on malformed input, naming the offending string.
Term parse_term(const std::string& s);

// Ordered, duplicate-free terms for one of the five images.
struct TermSet {
  int image_index = 0;  // in [0, 4]
  std::vector<Term> terms;

  // Appends t unless already present; preserves first-occurrence order.
  bool add(const Term& t);
  bool contains(const Term& t) const;
};

// A story is an id plus tokenized sentences. Tokens are lowercased words
// and punctuation tokens.
struct Story {
  std::string id;
  std::vector<std::vector<std::string>> sentences;
};

// Noun/verb-frame/pronoun word lists standing in for a POS tagger and a
// frame-semantic parser. Lookups are case-insensitive; keys are stored
// lowercased, frame names keep their stored case.
struct Lexicon {
  std::unordered_set<std::string> nouns;
  std::unordered_map<std::string, std::string> verb_to_frame;
  std::unordered_set<std::string> pronouns;

  void add_noun(const std::string& lemma);
  void add_frame(const std::string& verb, const std::string& frame_name);
  void add_pronoun(const std::string& token);

  bool is_noun(const std::string& token) const;
  // Returns the frame name or nullptr.
  const std::string* frame_for(const std::string& token) const;
  bool is_pronoun(const std::string& token) const;
};

// Tokens found in lexicon.nouns become NOUN terms; tokens in verb_to_frame
// become FRAME terms with the mapped name. Sentence order, first occurrence
// kept, later duplicates dropped. Unknown tokens are skipped.
std::vector<Term> extract_terms(const std::vector<std::string>& sentence,
                                const Lexicon& lexicon);

// One pronoun replacement: the token at (sentence_index, token_index) is
// replaced by the replacement token list.
struct Mention {
  int sentence_index = 0;
  int token_index = 0;
  std::vector<std::string> replacement;
};

// Applies mentions right-to-left within each sentence so indices stay valid.
// Out-of-range indices throw DataError. An addressed token that is not a
// pronoun is skipped; a note is appended to *warnings when given.
Story replace_coreferences(const Story& story,
                           const std::vector<Mention>& mentions,
                           const Lexicon& lexicon,
                           std::vector<std::string>* warnings = nullptr);

// File formats.
// Lexicon: TSV lines "noun\t<lemma>", "frame\t<verb>\t<FrameName>",
//          "pronoun\t<token>"; '#' starts a comment line.
// Stories: JSONL {"id": str, "sentences": [[token, ...], ...]}.
// Mentions: JSONL {"story_id": str, "mentions": [[sent, tok, [token, ...]], ...]}.
Lexicon load_lexicon(std::istream& in);
Lexicon load_lexicon_file(const std::string& path);
std::vector<Story> load_stories(std::istream& in);
std::vector<Story> load_stories_file(const std::string& path);
void save_stories(const std::vector<Story>& stories, std::ostream& out);
std::unordered_map<std::string, std::vector<Mention>> load_mentions(
    std::istream& in);
std::unordered_map<std::string, std::vector<Mention>> load_mentions_file(
    const std::string& path);

}  // namespace storygen

#endif  // STORYGEN_TERMS_HPP_
