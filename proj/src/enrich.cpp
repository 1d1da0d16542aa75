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

#include "storygen/enrich.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

constexpr int kImageCount = 5;

void check_term_sets(const std::vector<TermSet>& term_sets) {
  if (term_sets.size() != kImageCount) {
    throw DataError("enrichment requires exactly 5 term sets, got " +
                    std::to_string(term_sets.size()));
  }
  for (int i = 0; i < kImageCount; ++i) {
    if (term_sets[static_cast<std::size_t>(i)].image_index != i) {
      throw DataError("term set " + std::to_string(i) +
                      " carries image_index " +
                      std::to_string(
                          term_sets[static_cast<std::size_t>(i)].image_index));
    }
  }
}

std::string tuple_key(const RelationTuple& t) {
  return t.head.render() + "|" + t.rela + "|" + t.tail.render() + "|" +
         source_name(t.source);
}

std::string link_key(const CandidateLink& link) {
  std::string key = std::to_string(link.gap) + ":" +
                    (link.hop == HopKind::ONE ? "one" : "two") + ":";
  if (const auto* one = std::get_if<RelationTuple>(&link.tuples)) {
    key += tuple_key(*one);
  } else {
    const auto& two = std::get<TwoHopPath>(link.tuples);
    key += tuple_key(two.first) + "+" + tuple_key(two.second);
  }
  return key;
}

// Insert the chosen links (at most one per gap) into the baseline.
EnrichedPath assemble(const std::vector<TermSet>& term_sets,
                      const std::vector<CandidateLink>& links) {
  EnrichedPath path;
  for (int i = 0; i < kImageCount; ++i) {
    PathSegment seg;
    seg.origin = OriginKind::IMAGE;
    seg.index = i;
    seg.terms = term_sets[static_cast<std::size_t>(i)].terms;
    path.segments.push_back(std::move(seg));
    for (const auto& link : links) {
      if (link.gap != i) continue;
      PathSegment ins;
      ins.origin = OriginKind::INSERTED;
      ins.index = link.gap;
      ins.terms = link.segment;
      ins.link = link;
      path.segments.push_back(std::move(ins));
      ++path.insertion_count;
    }
  }
  return path;
}

}  // namespace

void EnrichConfig::validate() const {
  if (max_insertions < 0) throw ConfigError("max_insertions must be >= 0");
}

EnrichedPath baseline_path(const std::vector<TermSet>& term_sets) {
  check_term_sets(term_sets);
  return assemble(term_sets, {});
}

std::vector<EnrichedPath> build_candidates(
    const std::vector<TermSet>& term_sets, const KnowledgeGraph& kg,
    const EnrichConfig& config, const Lexicon* lexicon) {
  config.validate();
  check_term_sets(term_sets);

  std::vector<std::vector<CandidateLink>> links_by_gap(kImageCount - 1);
  for (int gap = 0; gap + 1 < kImageCount; ++gap) {
    auto links = kg.cross_image_links(term_sets[static_cast<std::size_t>(gap)],
                                      term_sets[static_cast<std::size_t>(gap) + 1],
                                      config.allow_two_hop);
    for (auto& link : links) {
      if (lexicon) link.segment = link_to_segment(link.tuples, lexicon);
    }
    links_by_gap[static_cast<std::size_t>(gap)] = std::move(links);
  }

  std::vector<EnrichedPath> out;
  // Combinations grouped by insertion count: the baseline, then single
  // insertions in (gap, link) order, then pairs over increasing gaps, ...
  std::vector<CandidateLink> chosen;
  auto emit = [&]() { out.push_back(assemble(term_sets, chosen)); };
  auto expand = [&](auto&& self, int from_gap, int remaining) -> void {
    if (remaining == 0) {
      emit();
      return;
    }
    for (int gap = from_gap; gap + 1 < kImageCount; ++gap) {
      for (const auto& link : links_by_gap[static_cast<std::size_t>(gap)]) {
        chosen.push_back(link);
        self(self, gap + 1, remaining - 1);
        chosen.pop_back();
      }
    }
  };
  int cap = std::min(config.max_insertions, kImageCount - 1);
  for (int count = 0; count <= cap; ++count) {
    expand(expand, 0, count);
  }
  return out;
}

std::vector<std::string> flatten(const EnrichedPath& path) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < path.segments.size(); ++i) {
    if (i > 0) tokens.push_back(lm_tokens::kSep);
    for (const auto& term : path.segments[i].terms) {
      tokens.push_back(term.render());
    }
  }
  return tokens;
}

std::vector<double> score_candidates(const std::vector<EnrichedPath>& candidates,
                                     const NGramModel& lm) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(lm.perplexity(flatten(c)));
  return out;
}

std::string provenance_key(const EnrichedPath& path) {
  std::string key;
  for (const auto& seg : path.segments) {
    if (seg.origin != OriginKind::INSERTED || !seg.link) continue;
    if (!key.empty()) key += ";";
    key += link_key(*seg.link);
  }
  return key;
}

std::size_t select_path_index(const std::vector<EnrichedPath>& candidates,
                              const NGramModel& lm) {
  if (candidates.empty()) throw DataError("no candidate paths to select from");
  // (perplexity, insertions, flattened form, provenance) is a total order
  // over distinct candidates, so the argmin is permutation-invariant.
  std::size_t best = 0;
  double best_ppl = 0.0;
  std::vector<std::string> best_flat;
  std::string best_prov;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double ppl = lm.perplexity(flatten(candidates[i]));
    std::vector<std::string> flat = flatten(candidates[i]);
    std::string prov = provenance_key(candidates[i]);
    auto challenger = std::tie(ppl, candidates[i].insertion_count, flat, prov);
    auto incumbent =
        std::tie(best_ppl, candidates[best].insertion_count, best_flat,
                 best_prov);
    if (i == 0 || challenger < incumbent) {
      best = i;
      best_ppl = ppl;
      best_flat = std::move(flat);
      best_prov = std::move(prov);
    }
  }
  return best;
}

EnrichedPath select_path(const std::vector<EnrichedPath>& candidates,
                         const NGramModel& lm) {
  return candidates[select_path_index(candidates, lm)];
}

std::string selection_report(const std::vector<EnrichedPath>& candidates,
                             const std::vector<double>& perplexities,
                             std::size_t selected) {
  if (candidates.size() != perplexities.size() ||
      selected >= candidates.size()) {
    throw DataError("selection report inputs disagree");
  }
  nlohmann::json j;
  j["format_version"] = 1;
  j["selected"] = selected;
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    nlohmann::json jc;
    jc["flattened"] = flatten(candidates[i]);
    jc["perplexity"] = perplexities[i];
    jc["insertions"] = candidates[i].insertion_count;
    jc["provenance"] = provenance_key(candidates[i]);
    arr.push_back(std::move(jc));
  }
  j["candidates"] = std::move(arr);
  return j.dump();
}

}  // namespace storygen
