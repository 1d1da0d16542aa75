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
// End-to-end orchestration: configuration, corpus loading, the distill /
// enrich / generate stages, and the audited `run` that chains them. All
// stages are deterministic for a fixed config and seed.

#ifndef STORYGEN_PIPELINE_HPP_
#define STORYGEN_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "storygen/decode.hpp"
#include "storygen/enrich.hpp"
#include "storygen/kg.hpp"
#include "storygen/lm.hpp"
#include "storygen/metrics.hpp"
#include "storygen/neural.hpp"
#include "storygen/terms.hpp"

namespace storygen {

// Flat key=value configuration with section prefixes (paths.*, model.*,
// decode.*, enrich.*, pipeline.*). Every key has a default; unknown keys
// are ConfigErrors. The environment overrides any key through
// STORYGEN_<KEY> with '.' and '-' mapped to '_' (for example
// STORYGEN_DECODE_BEAM_WIDTH overrides decode.beam_width).
struct PipelineConfig {
  std::string kg_path;           // paths.kg (empty: no graph, no enrichment)
  std::string lexicon_path;      // paths.lexicon (empty: fallback rendering)
  std::string lm_path;           // paths.lm
  std::string term_model_path;   // paths.term_model
  std::string story_model_path;  // paths.story_model
  std::string features_path;     // paths.features
  ModelConfig model;             // model.*
  DecodeConfig decode;           // decode.* (token ids resolved at runtime)
  EnrichConfig enrich;           // enrich.*
  std::uint64_t seed = 42;       // seed (also applied to model.seed)
  std::string story_id = "generated";  // pipeline.story_id

  void validate() const;  // ConfigError on violation
};

PipelineConfig load_pipeline_config(std::istream& in);
PipelineConfig load_pipeline_config_file(const std::string& path);
// Applies STORYGEN_* environment overrides; load_pipeline_config already
// calls this, so it is only needed when starting from defaults.
void apply_env_overrides(PipelineConfig& config);
// Every known key with its current value, for `--dump-config`.
std::string dump_config(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Corpus and artifact files. All JSONL, one record per line.

// {"images": [[{"confidence": f, "feature": [f,...]}, ...] x5],
//  "terms": [["dog_NOUN", ...] x5]}    term tokens must parse as Terms
std::vector<TermExample> load_term_corpus(std::istream& in);
std::vector<TermExample> load_term_corpus_file(const std::string& path);

// {"path": [token, ...], "story": [token, ...]}
std::vector<StoryExample> load_story_corpus(std::istream& in);
std::vector<StoryExample> load_story_corpus_file(const std::string& path);

// Whitespace-separated token lines for language-model training.
std::vector<std::vector<std::string>> load_token_lines(std::istream& in);
std::vector<std::vector<std::string>> load_token_lines_file(
    const std::string& path);

// {"image_index": i, "terms": [canonical term, ...]}
std::vector<TermSet> load_term_sets(std::istream& in);
std::vector<TermSet> load_term_sets_file(const std::string& path);
void save_term_sets(const std::vector<TermSet>& sets, std::ostream& out);

// {"format_version": 1, "segments": [{"origin": "image"|"inserted",
//  "index": i, "terms": [...]}], "insertion_count": k}. Link provenance is
// audit-only and does not round-trip.
void save_path(const EnrichedPath& path, std::ostream& out);
EnrichedPath load_path(std::istream& in);
EnrichedPath load_path_file(const std::string& path);

// ---------------------------------------------------------------------------
// Stages.

// Resolves the ".", "<sep>" and end-token ids of `base` against a model
// vocabulary (-1 when the vocabulary lacks the token).
DecodeConfig resolve_token_ids(DecodeConfig base, const Vocab& vocab);

// Per-image term decoding; the repetition set resets between images.
// Requires exactly five feature groups covering orders 1..5. When `traces`
// is given it receives one JSONL blob per image, in order.
std::vector<TermSet> distill(TermModel& model,
                             const std::vector<ImageFeatures>& groups,
                             const DecodeConfig& config,
                             std::vector<std::string>* traces = nullptr);

// Story decoding over the flattened path. target_len = round(segment count
// x the model's mean training sentence length). Unknown path tokens map to
// <unk>; an untrained model is a DataError.
Story generate(StoryModel& model, const EnrichedPath& path,
               const DecodeConfig& config, const std::string& story_id,
               std::string* trace = nullptr, DecodeResult* result = nullptr);

struct RunResult {
  Story story;
  std::string bundle_json;  // single JSON object, key-sorted
};

// distill -> build_candidates -> select_path -> generate. The audit bundle
// holds term sets, every candidate with perplexity and provenance, the
// selected index, decode traces and the story; identical config + seed
// gives identical bytes. Stage failures rethrow with a stage tag.
RunResult run(const PipelineConfig& config);

// Metric report serialization for `eval`.
std::string report_json(const MetricReport& report);

}  // namespace storygen

#endif  // STORYGEN_PIPELINE_HPP_
