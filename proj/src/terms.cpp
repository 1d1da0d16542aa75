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

#include "storygen/terms.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool has_space(const std::string& s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return in;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::string Term::render() const {
  return lemma + (kind == TermKind::NOUN ? "_NOUN" : "_FRAME");
}

Term parse_term(const std::string& s) {
  auto pos = s.rfind('_');
  if (pos == std::string::npos || pos == 0) {
    throw DataError("malformed term (expected <token>_NOUN or <token>_FRAME): \"" +
                    s + "\"");
  }
  std::string lemma = s.substr(0, pos);
  std::string suffix = lower(s.substr(pos + 1));
  if (lemma.empty() || has_space(lemma) || has_space(suffix)) {
    throw DataError("malformed term: \"" + s + "\"");
  }
  if (suffix == "noun") return Term{lower(lemma), TermKind::NOUN};
  if (suffix == "frame") return Term{lemma, TermKind::FRAME};
  throw DataError("malformed term (unknown suffix \"" + suffix + "\"): \"" + s +
                  "\"");
}

bool TermSet::add(const Term& t) {
  if (contains(t)) return false;
  terms.push_back(t);
  return true;
}

bool TermSet::contains(const Term& t) const {
  return std::find(terms.begin(), terms.end(), t) != terms.end();
}

void Lexicon::add_noun(const std::string& lemma) { nouns.insert(lower(lemma)); }

void Lexicon::add_frame(const std::string& verb, const std::string& frame_name) {
  verb_to_frame[lower(verb)] = frame_name;
}

void Lexicon::add_pronoun(const std::string& token) {
  pronouns.insert(lower(token));
}

bool Lexicon::is_noun(const std::string& token) const {
  return nouns.count(lower(token)) > 0;
}

const std::string* Lexicon::frame_for(const std::string& token) const {
  auto it = verb_to_frame.find(lower(token));
  return it == verb_to_frame.end() ? nullptr : &it->second;
}

bool Lexicon::is_pronoun(const std::string& token) const {
  return pronouns.count(lower(token)) > 0;
}

std::vector<Term> extract_terms(const std::vector<std::string>& sentence,
                                const Lexicon& lexicon) {
  std::vector<Term> out;
  auto push_unique = [&out](Term t) {
    if (std::find(out.begin(), out.end(), t) == out.end())
      out.push_back(std::move(t));
  };
  for (const auto& token : sentence) {
    if (lexicon.is_noun(token)) {
      push_unique(Term{lower(token), TermKind::NOUN});
    } else if (const std::string* frame = lexicon.frame_for(token)) {
      push_unique(Term{*frame, TermKind::FRAME});
    }
  }
  return out;
}

Story replace_coreferences(const Story& story,
                           const std::vector<Mention>& mentions,
                           const Lexicon& lexicon,
                           std::vector<std::string>* warnings) {
  for (const auto& m : mentions) {
    if (m.sentence_index < 0 ||
        m.sentence_index >= static_cast<int>(story.sentences.size())) {
      throw DataError("mention sentence index out of range: " +
                      std::to_string(m.sentence_index));
    }
    const auto& sent = story.sentences[m.sentence_index];
    if (m.token_index < 0 || m.token_index >= static_cast<int>(sent.size())) {
      throw DataError("mention token index out of range: sentence " +
                      std::to_string(m.sentence_index) + ", token " +
                      std::to_string(m.token_index));
    }
  }

  // Right-to-left order within a sentence keeps earlier indices valid.
  std::vector<Mention> ordered = mentions;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Mention& a, const Mention& b) {
                     if (a.sentence_index != b.sentence_index)
                       return a.sentence_index < b.sentence_index;
                     return a.token_index > b.token_index;
                   });

  Story out = story;
  for (const auto& m : ordered) {
    auto& sent = out.sentences[m.sentence_index];
    const std::string& target = sent[m.token_index];
    if (!lexicon.is_pronoun(target)) {
      if (warnings) {
        warnings->push_back("skipping non-pronoun token \"" + target +
                            "\" at (" + std::to_string(m.sentence_index) + "," +
                            std::to_string(m.token_index) + ")");
      }
      continue;
    }
    sent.erase(sent.begin() + m.token_index);
    sent.insert(sent.begin() + m.token_index, m.replacement.begin(),
                m.replacement.end());
  }
  return out;
}

Lexicon load_lexicon(std::istream& in) {
  Lexicon lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    const std::string& tag = fields[0];
    if (tag == "noun" && fields.size() == 2 && !fields[1].empty()) {
      lex.add_noun(fields[1]);
    } else if (tag == "frame" && fields.size() == 3 && !fields[1].empty() &&
               !fields[2].empty()) {
      lex.add_frame(fields[1], fields[2]);
    } else if (tag == "pronoun" && fields.size() == 2 && !fields[1].empty()) {
      lex.add_pronoun(fields[1]);
    } else {
      throw DataError("malformed lexicon line " + std::to_string(line_no) +
                      ": \"" + line + "\"");
    }
  }
  return lex;
}

Lexicon load_lexicon_file(const std::string& path) {
  auto in = open_or_throw(path);
  return load_lexicon(in);
}

std::vector<Story> load_stories(std::istream& in) {
  std::vector<Story> stories;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("stories line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("sentences")) {
      throw DataError("stories line " + std::to_string(line_no) +
                      ": expected {\"id\", \"sentences\"}");
    }
    Story s;
    s.id = j["id"].get<std::string>();
    for (const auto& sent : j["sentences"]) {
      std::vector<std::string> tokens;
      for (const auto& tok : sent) tokens.push_back(tok.get<std::string>());
      if (tokens.empty()) {
        throw DataError("stories line " + std::to_string(line_no) +
                        ": empty sentence");
      }
      s.sentences.push_back(std::move(tokens));
    }
    if (s.sentences.empty()) {
      throw DataError("stories line " + std::to_string(line_no) +
                      ": story has no sentences");
    }
    stories.push_back(std::move(s));
  }
  return stories;
}

std::vector<Story> load_stories_file(const std::string& path) {
  auto in = open_or_throw(path);
  return load_stories(in);
}

void save_stories(const std::vector<Story>& stories, std::ostream& out) {
  for (const auto& s : stories) {
    nlohmann::json j;
    j["id"] = s.id;
    j["sentences"] = s.sentences;
    out << j.dump() << "\n";
  }
}

std::unordered_map<std::string, std::vector<Mention>> load_mentions(
    std::istream& in) {
  std::unordered_map<std::string, std::vector<Mention>> by_story;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("mentions line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (!j.is_object() || !j.contains("story_id") || !j.contains("mentions")) {
      throw DataError("mentions line " + std::to_string(line_no) +
                      ": expected {\"story_id\", \"mentions\"}");
    }
    auto& list = by_story[j["story_id"].get<std::string>()];
    for (const auto& m : j["mentions"]) {
      if (!m.is_array() || m.size() != 3) {
        throw DataError("mentions line " + std::to_string(line_no) +
                        ": mention must be [sent, tok, [tokens]]");
      }
      Mention mention;
      mention.sentence_index = m[0].get<int>();
      mention.token_index = m[1].get<int>();
      for (const auto& tok : m[2])
        mention.replacement.push_back(tok.get<std::string>());
      list.push_back(std::move(mention));
    }
  }
  return by_story;
}

std::unordered_map<std::string, std::vector<Mention>> load_mentions_file(
    const std::string& path) {
  auto in = open_or_throw(path);
  return load_mentions(in);
}

}  // namespace storygen
