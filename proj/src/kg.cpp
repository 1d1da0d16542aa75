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

#include "storygen/kg.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

constexpr int kSnapshotVersion = 1;

uint64_t mix64(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

uint64_t tuple_hash(int32_t head, int32_t rela, int32_t tail, int source) {
  uint64_t h = mix64(static_cast<uint64_t>(static_cast<uint32_t>(head)));
  h = mix64(h ^ static_cast<uint64_t>(static_cast<uint32_t>(rela)));
  h = mix64(h ^ static_cast<uint64_t>(static_cast<uint32_t>(tail)));
  h = mix64(h ^ static_cast<uint64_t>(static_cast<uint32_t>(source)));
  return h;
}

}  // namespace

std::string source_name(TupleSource s) {
  switch (s) {
    case TupleSource::VISUAL_GENOME:
      return "visual_genome";
    case TupleSource::OPENIE:
      return "openie";
    default:
      return "other";
  }
}

TupleSource parse_source(const std::string& name) {
  std::string low = name;
  std::transform(low.begin(), low.end(), low.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (low == "visual_genome" || low == "vg") return TupleSource::VISUAL_GENOME;
  if (low == "openie") return TupleSource::OPENIE;
  if (low == "other") return TupleSource::OTHER;
  throw ConfigError("unknown tuple source: \"" + name + "\"");
}

bool RelationTuple::operator<(const RelationTuple& o) const {
  if (!(head == o.head)) return head < o.head;
  if (rela != o.rela) return rela < o.rela;
  if (!(tail == o.tail)) return tail < o.tail;
  return static_cast<int>(source) < static_cast<int>(o.source);
}

const Term& CandidateLink::head() const {
  if (hop == HopKind::ONE) return std::get<RelationTuple>(tuples).head;
  return std::get<TwoHopPath>(tuples).first.head;
}

const Term& CandidateLink::tail() const {
  if (hop == HopKind::ONE) return std::get<RelationTuple>(tuples).tail;
  return std::get<TwoHopPath>(tuples).second.tail;
}

int32_t KnowledgeGraph::intern_term(const Term& t) {
  std::string key = t.render();
  auto it = term_ids_.find(key);
  if (it != term_ids_.end()) return it->second;
  int32_t id = static_cast<int32_t>(terms_.size());
  terms_.push_back(t);
  term_ids_.emplace(std::move(key), id);
  by_head_.emplace_back();
  by_tail_.emplace_back();
  return id;
}

int32_t KnowledgeGraph::find_term(const Term& t) const {
  auto it = term_ids_.find(t.render());
  return it == term_ids_.end() ? -1 : it->second;
}

int32_t KnowledgeGraph::intern_rela(const std::string& r) {
  auto it = rela_ids_.find(r);
  if (it != rela_ids_.end()) return it->second;
  int32_t id = static_cast<int32_t>(relas_.size());
  relas_.push_back(r);
  rela_ids_.emplace(r, id);
  return id;
}

RelationTuple KnowledgeGraph::materialize(uint32_t id) const {
  const TupleRec& rec = tuples_[id];
  return RelationTuple{terms_[rec.head], relas_[rec.rela], terms_[rec.tail],
                       rec.source};
}

void KnowledgeGraph::add_tuple_indexed(const TupleRec& rec) {
  uint32_t id = static_cast<uint32_t>(tuples_.size());
  tuples_.push_back(rec);
  by_head_[rec.head].push_back(id);
  by_tail_[rec.tail].push_back(id);
}

std::size_t KnowledgeGraph::ingest(std::istream& lines, TupleSource source) {
  std::size_t added = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    auto tab1 = line.find('\t');
    auto tab2 = tab1 == std::string::npos ? std::string::npos
                                          : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos) {
      throw DataError("tuple line " + std::to_string(line_no) +
                      ": expected head\\trela\\ttail");
    }
    std::string head_s = line.substr(0, tab1);
    std::string rela = line.substr(tab1 + 1, tab2 - tab1 - 1);
    std::string tail_s = line.substr(tab2 + 1);
    if (head_s.empty() || rela.empty() || tail_s.empty()) {
      throw DataError("tuple line " + std::to_string(line_no) +
                      ": empty field");
    }
    Term head, tail;
    try {
      head = parse_term(head_s);
      tail = parse_term(tail_s);
    } catch (const DataError& e) {
      throw DataError("tuple line " + std::to_string(line_no) + ": " +
                      e.what());
    }

    TupleRec rec{intern_term(head), intern_rela(rela), intern_term(tail),
                 source};
    uint64_t h = tuple_hash(rec.head, rec.rela, rec.tail,
                            static_cast<int>(rec.source));
    auto& bucket = dedup_[h];
    bool dup = false;
    for (uint32_t id : bucket) {
      const TupleRec& other = tuples_[id];
      if (other.head == rec.head && other.rela == rec.rela &&
          other.tail == rec.tail && other.source == rec.source) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    bucket.push_back(static_cast<uint32_t>(tuples_.size()));
    add_tuple_indexed(rec);
    ++added;
  }
  return added;
}

std::size_t KnowledgeGraph::ingest_file(const std::string& path,
                                        TupleSource source) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tuple file: " + path);
  return ingest(in, source);
}

std::vector<RelationTuple> KnowledgeGraph::one_hop(const Term& head,
                                                   const Term& tail) const {
  std::vector<RelationTuple> out;
  int32_t h = find_term(head);
  int32_t t = find_term(tail);
  if (h < 0 || t < 0) return out;
  // Join through the smaller adjacency list.
  const auto& hl = by_head_[h];
  const auto& tl = by_tail_[t];
  if (hl.size() <= tl.size()) {
    for (uint32_t id : hl)
      if (tuples_[id].tail == t) out.push_back(materialize(id));
  } else {
    for (uint32_t id : tl)
      if (tuples_[id].head == h) out.push_back(materialize(id));
  }
  std::sort(out.begin(), out.end(), [](const RelationTuple& a,
                                       const RelationTuple& b) {
    if (a.rela != b.rela) return a.rela < b.rela;
    return static_cast<int>(a.source) < static_cast<int>(b.source);
  });
  return out;
}

std::vector<TwoHopPath> KnowledgeGraph::two_hop(const Term& head,
                                                const Term& tail) const {
  std::vector<TwoHopPath> out;
  int32_t h = find_term(head);
  int32_t t = find_term(tail);
  if (h < 0 || t < 0) return out;
  for (uint32_t first_id : by_head_[h]) {
    int32_t mid = tuples_[first_id].tail;
    if (mid == h || mid == t) continue;
    for (uint32_t second_id : by_head_[mid]) {
      if (tuples_[second_id].tail != t) continue;
      out.push_back(TwoHopPath{materialize(first_id), materialize(second_id)});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const TwoHopPath& a, const TwoHopPath& b) {
              const Term& ma = a.middle();
              const Term& mb = b.middle();
              if (!(ma == mb)) return ma < mb;
              if (a.first.rela != b.first.rela) return a.first.rela < b.first.rela;
              if (a.first.source != b.first.source)
                return static_cast<int>(a.first.source) <
                       static_cast<int>(b.first.source);
              if (a.second.rela != b.second.rela)
                return a.second.rela < b.second.rela;
              return static_cast<int>(a.second.source) <
                     static_cast<int>(b.second.source);
            });
  return out;
}

std::vector<CandidateLink> KnowledgeGraph::cross_image_links(
    const TermSet& left, const TermSet& right, bool allow_two_hop) const {
  if (left.image_index + 1 != right.image_index) {
    throw DataError("cross_image_links requires consecutive images, got " +
                    std::to_string(left.image_index) + " and " +
                    std::to_string(right.image_index));
  }
  std::vector<CandidateLink> out;
  for (const Term& head : left.terms) {
    for (const Term& tail : right.terms) {
      for (auto& tuple : one_hop(head, tail)) {
        CandidateLink link;
        link.gap = left.image_index;
        link.hop = HopKind::ONE;
        link.tuples = std::move(tuple);
        link.segment = link_to_segment(link.tuples, nullptr);
        out.push_back(std::move(link));
      }
      if (!allow_two_hop) continue;
      for (auto& path : two_hop(head, tail)) {
        CandidateLink link;
        link.gap = left.image_index;
        link.hop = HopKind::TWO;
        link.tuples = std::move(path);
        link.segment = link_to_segment(link.tuples, nullptr);
        out.push_back(std::move(link));
      }
    }
  }
  return out;
}

void KnowledgeGraph::save(std::ostream& out) const {
  nlohmann::json j;
  j["format_version"] = kSnapshotVersion;
  j["tuple_count"] = tuples_.size();
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t id = 0; id < tuples_.size(); ++id) {
    const TupleRec& rec = tuples_[id];
    arr.push_back({terms_[rec.head].render(), relas_[rec.rela],
                   terms_[rec.tail].render(), source_name(rec.source)});
  }
  j["tuples"] = std::move(arr);
  out << j.dump() << "\n";
}

void KnowledgeGraph::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write graph snapshot: " + path);
  save(out);
}

KnowledgeGraph KnowledgeGraph::load(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("graph snapshot parse failure: ") + e.what());
  }
  if (!j.is_object() || j.value("format_version", -1) != kSnapshotVersion) {
    throw DataError("graph snapshot: unsupported format_version");
  }
  KnowledgeGraph kg;
  for (const auto& row : j["tuples"]) {
    if (!row.is_array() || row.size() != 4) {
      throw DataError("graph snapshot: malformed tuple row");
    }
    TupleRec rec{kg.intern_term(parse_term(row[0].get<std::string>())),
                 kg.intern_rela(row[1].get<std::string>()),
                 kg.intern_term(parse_term(row[2].get<std::string>())),
                 parse_source(row[3].get<std::string>())};
    uint64_t h = tuple_hash(rec.head, rec.rela, rec.tail,
                            static_cast<int>(rec.source));
    kg.dedup_[h].push_back(static_cast<uint32_t>(kg.tuples_.size()));
    kg.add_tuple_indexed(rec);
  }
  if (kg.tuples_.size() != j.value("tuple_count", std::size_t{0})) {
    throw DataError("graph snapshot: tuple_count mismatch");
  }
  return kg;
}

KnowledgeGraph KnowledgeGraph::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph snapshot: " + path);
  return load(in);
}

bool KnowledgeGraph::check_index_consistency() const {
  std::vector<std::vector<uint32_t>> heads(terms_.size());
  std::vector<std::vector<uint32_t>> tails(terms_.size());
  for (std::size_t id = 0; id < tuples_.size(); ++id) {
    heads[tuples_[id].head].push_back(static_cast<uint32_t>(id));
    tails[tuples_[id].tail].push_back(static_cast<uint32_t>(id));
  }
  return heads == by_head_ && tails == by_tail_;
}

namespace {

// "cause to experience" -> Term("Cause_to_experience", FRAME).
Term rela_to_term(const std::string& rela, const Lexicon* lexicon) {
  if (lexicon) {
    if (const std::string* frame = lexicon->frame_for(rela)) {
      return Term{*frame, TermKind::FRAME};
    }
  }
  std::string label = rela;
  std::replace(label.begin(), label.end(), ' ', '_');
  if (!label.empty())
    label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
  return Term{label, TermKind::FRAME};
}

}  // namespace

std::vector<Term> link_to_segment(
    const std::variant<RelationTuple, TwoHopPath>& tuples,
    const Lexicon* lexicon) {
  std::vector<Term> seg;
  if (std::holds_alternative<RelationTuple>(tuples)) {
    const auto& t = std::get<RelationTuple>(tuples);
    seg = {t.head, rela_to_term(t.rela, lexicon), t.tail};
  } else {
    const auto& p = std::get<TwoHopPath>(tuples);
    seg = {p.first.head, rela_to_term(p.first.rela, lexicon), p.middle(),
           rela_to_term(p.second.rela, lexicon), p.second.tail};
  }
  return seg;
}

std::vector<Term> link_to_segment(const CandidateLink& link,
                                  const Lexicon& lexicon) {
  return link_to_segment(link.tuples, &lexicon);
}

}  // namespace storygen
