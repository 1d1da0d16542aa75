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
// Term-path enrichment: candidate paths are the distilled five-image path
// plus variants with knowledge-graph segments inserted between consecutive
// images; the language model picks the lowest-perplexity candidate.

#ifndef STORYGEN_ENRICH_HPP_
#define STORYGEN_ENRICH_HPP_

#include <optional>
#include <string>
#include <vector>

#include "storygen/kg.hpp"
#include "storygen/lm.hpp"
#include "storygen/terms.hpp"

namespace storygen {

enum class OriginKind { IMAGE, INSERTED };

// One stretch of the path: either the terms distilled for image `index`, or
// a knowledge-graph segment inserted into gap `index` (between images
// `index` and `index + 1`), with the link it came from.
struct PathSegment {
  OriginKind origin = OriginKind::IMAGE;
  int index = 0;
  std::vector<Term> terms;
  std::optional<CandidateLink> link;  // set iff origin == INSERTED
};

// Invariants: exactly five IMAGE segments in order 0..4; an INSERTED(g)
// segment sits between IMAGE(g) and IMAGE(g+1); insertion_count equals the
// number of INSERTED segments.
struct EnrichedPath {
  std::vector<PathSegment> segments;
  int insertion_count = 0;
};

struct EnrichConfig {
  bool allow_two_hop = true;
  int max_insertions = 1;  // at most one insertion per gap regardless

  void validate() const;  // ConfigError on violation
};

// The no-insertion path. Requires exactly five term sets with image_index
// 0..4 in order (DataError otherwise).
EnrichedPath baseline_path(const std::vector<TermSet>& term_sets);

// Baseline first, then candidates ordered by insertion count, gap, and link
// order from cross_image_links. Segments for inserted links are derived
// through the lexicon when one is given. Deterministic for fixed inputs.
std::vector<EnrichedPath> build_candidates(
    const std::vector<TermSet>& term_sets, const KnowledgeGraph& kg,
    const EnrichConfig& config, const Lexicon* lexicon = nullptr);

// Canonical term strings with a <sep> token between consecutive segments;
// an n-segment path flattens to exactly n - 1 separators.
std::vector<std::string> flatten(const EnrichedPath& path);

// Perplexity of every candidate's flattened form, in order.
std::vector<double> score_candidates(const std::vector<EnrichedPath>& candidates,
                                     const NGramModel& lm);

// Argmin of flattened perplexity; ties break toward fewer insertions, then
// lexicographically smaller flattened form, then smaller provenance key.
// The result never depends on candidate order. DataError when empty.
std::size_t select_path_index(const std::vector<EnrichedPath>& candidates,
                              const NGramModel& lm);
EnrichedPath select_path(const std::vector<EnrichedPath>& candidates,
                         const NGramModel& lm);

// Stable text key identifying a candidate's insertions (gap, hop and source
// tuples); empty for the baseline. Final tie-break and audit label.
std::string provenance_key(const EnrichedPath& path);

// Selection audit as a JSON object string: every candidate with its
// flattened form, perplexity and provenance, plus the selected index.
std::string selection_report(const std::vector<EnrichedPath>& candidates,
                             const std::vector<double>& perplexities,
                             std::size_t selected);

}  // namespace storygen

#endif  // STORYGEN_ENRICH_HPP_
