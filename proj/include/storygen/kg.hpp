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
// Relation-tuple store with one-hop and two-hop queries between terms of
// consecutive images. Edges are directed (subject, verb, object); lookups
// go through head/tail adjacency indexes, never a full scan.

#ifndef STORYGEN_KG_HPP_
#define STORYGEN_KG_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "storygen/terms.hpp"

namespace storygen {

enum class TupleSource { VISUAL_GENOME, OPENIE, OTHER };

std::string source_name(TupleSource s);
TupleSource parse_source(const std::string& name);

struct RelationTuple {
  Term head;
  std::string rela;  // verb phrase, nonempty
  Term tail;
  TupleSource source = TupleSource::OTHER;

  bool operator==(const RelationTuple& o) const {
    return head == o.head && rela == o.rela && tail == o.tail &&
           source == o.source;
  }
  // (head, rela, tail, source) order; gives deterministic query output.
  bool operator<(const RelationTuple& o) const;
};

// first.tail == second.head is the shared middle term; the middle never
// equals the outer head or tail.
struct TwoHopPath {
  RelationTuple first;
  RelationTuple second;

  const Term& middle() const { return first.tail; }
  bool operator==(const TwoHopPath& o) const {
    return first == o.first && second == o.second;
  }
  bool operator<(const TwoHopPath& o) const {
    if (!(first == o.first)) return first < o.first;
    return second < o.second;
  }
};

enum class HopKind { ONE, TWO };

// A KG connection between a term of image `gap` and a term of image
// `gap + 1`, with the term segment it expands to. The segment begins with
// the link head and ends with the link tail.
struct CandidateLink {
  int gap = 0;  // in [0, 3]
  HopKind hop = HopKind::ONE;
  std::variant<RelationTuple, TwoHopPath> tuples;
  std::vector<Term> segment;

  const Term& head() const;
  const Term& tail() const;
};

class KnowledgeGraph {
 public:
  // Reads TSV lines "head\trela\ttail"; head/tail in canonical term form.
  // Lines starting with '#' and blank lines are ignored. Exact duplicates
  // (same head, rela, tail, source) are dropped. Returns the number of
  // unique tuples added. Malformed lines throw DataError with line number.
  std::size_t ingest(std::istream& lines, TupleSource source);
  std::size_t ingest_file(const std::string& path, TupleSource source);

  std::size_t tuple_count() const { return tuples_.size(); }

  // All stored tuples with exactly this (head, tail), ordered by
  // (rela label, source).
  std::vector<RelationTuple> one_hop(const Term& head, const Term& tail) const;

  // All head -> middle -> tail chains with middle not in {head, tail},
  // ordered by (middle, first rela, first source, second rela,
  // second source). Computed via an index join.
  std::vector<TwoHopPath> two_hop(const Term& head, const Term& tail) const;

  // Everything the graph knows between any term of `left` and any term of
  // `right`. Requires left.image_index + 1 == right.image_index; the gap
  // recorded on each link is left.image_index. Segments use the fallback
  // rendering (no lexicon); enrichment re-derives them with a lexicon.
  std::vector<CandidateLink> cross_image_links(const TermSet& left,
                                               const TermSet& right,
                                               bool allow_two_hop) const;

  // Versioned JSON snapshot with an embedded tuple_count integrity check.
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static KnowledgeGraph load(std::istream& in);
  static KnowledgeGraph load_file(const std::string& path);

  // Rebuilds both adjacency indexes from the tuple store and compares; used
  // by consistency tests.
  bool check_index_consistency() const;

 private:
  struct TupleRec {
    int32_t head;
    int32_t rela;
    int32_t tail;
    TupleSource source;
  };

  int32_t intern_term(const Term& t);
  int32_t find_term(const Term& t) const;  // -1 when absent
  int32_t intern_rela(const std::string& r);
  RelationTuple materialize(uint32_t id) const;
  void add_tuple_indexed(const TupleRec& rec);

  std::vector<Term> terms_;
  std::unordered_map<std::string, int32_t> term_ids_;  // key: render()
  std::vector<std::string> relas_;
  std::unordered_map<std::string, int32_t> rela_ids_;
  std::vector<TupleRec> tuples_;
  // Dedup key: (head, rela, tail, source) packed per record.
  std::unordered_map<uint64_t, std::vector<uint32_t>> dedup_;
  std::vector<std::vector<uint32_t>> by_head_;
  std::vector<std::vector<uint32_t>> by_tail_;
};

// Fills CandidateLink::segment. One hop gives [head, rela term, tail]; two
// hops give [head, rela1 term, middle, rela2 term, tail]. A rela verb found
// in lexicon.verb_to_frame maps to that frame; otherwise it becomes a FRAME
// term of its own label, first letter capitalized and spaces turned into
// underscores. Pass nullptr for the fallback rendering only.
std::vector<Term> link_to_segment(
    const std::variant<RelationTuple, TwoHopPath>& tuples,
    const Lexicon* lexicon);
std::vector<Term> link_to_segment(const CandidateLink& link,
                                  const Lexicon& lexicon);

}  // namespace storygen

#endif  // STORYGEN_KG_HPP_
