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

#include "storygen/decode.hpp"

#include <algorithm>
#include <ostream>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

bool is_reserved(int token, const DecodeConfig& c) {
  return token == c.sentence_end_id || token == c.sep_id || token == c.eos_id;
}

// Penalized score descending, then token sequence ascending. The ordering is
// total over distinct hypotheses, so merges are deterministic.
bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.penalized_score != b.penalized_score) {
    return a.penalized_score > b.penalized_score;
  }
  return a.tokens < b.tokens;
}

void prune(std::vector<BeamHypothesis>& pool, int width) {
  std::sort(pool.begin(), pool.end(), better);
  if (static_cast<int>(pool.size()) > width) {
    pool.resize(static_cast<std::size_t>(width));
  }
}

void emit_trace(std::ostream* trace, int step,
                const std::vector<BeamHypothesis>& beams) {
  if (!trace) return;
  nlohmann::json line;
  line["step"] = step;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& h : beams) {
    nlohmann::json jh;
    jh["tokens"] = h.tokens;
    jh["raw"] = h.raw_logprob;
    jh["penalized"] = h.penalized_score;
    jh["finished"] = h.finished;
    jh["s"] = std::vector<int>(h.s.begin(), h.s.end());
    jh["r"] = std::vector<int>(h.r.begin(), h.r.end());
    arr.push_back(std::move(jh));
  }
  line["beam"] = std::move(arr);
  *trace << line.dump() << "\n";
}

DecodeResult to_result(const BeamHypothesis& h, bool truncated) {
  DecodeResult r;
  r.tokens = h.tokens;
  r.raw_logprob = h.raw_logprob;
  r.penalized_score = h.penalized_score;
  r.truncated = truncated;
  return r;
}

// Applies one emitted token to the sentence bookkeeping shared by the story
// search and both replays.
void advance_story_state(BeamHypothesis& h, int token,
                         const DecodeConfig& config) {
  h.tokens.push_back(token);
  if (token == config.sentence_end_id) {
    h.r.insert(h.s.begin(), h.s.end());
    h.s.clear();
  } else if (!is_reserved(token, config)) {
    h.s.insert(token);
  }
  if (token == config.eos_id) h.finished = true;
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (alpha < 0.0 || gamma < 0.0 || term_penalty < 0.0) {
    throw ConfigError("penalties must be nonnegative");
  }
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
}

DecodeResult beam_search_terms(const TermScorer& scorer,
                               const DecodeConfig& config, int steps,
                               std::ostream* trace) {
  config.validate();
  if (steps < 1) throw ConfigError("steps must be >= 1");

  std::vector<BeamHypothesis> beams(1);
  for (int step = 0; step < steps; ++step) {
    bool any_open = false;
    std::vector<BeamHypothesis> pool;
    for (const auto& beam : beams) {
      if (beam.finished) {
        pool.push_back(beam);
        continue;
      }
      any_open = true;
      Eigen::VectorXd logp = scorer(beam.tokens);
      if (logp.size() == 0) throw DataError("scorer reported an empty vocabulary");
      for (int x = 0; x < static_cast<int>(logp.size()); ++x) {
        BeamHypothesis next = beam;
        next.raw_logprob += logp(x);
        next.penalized_score += logp(x);
        if (next.s.count(x)) next.penalized_score -= config.term_penalty;
        next.tokens.push_back(x);
        if (!is_reserved(x, config)) next.s.insert(x);
        if (x == config.eos_id) next.finished = true;
        pool.push_back(std::move(next));
      }
    }
    if (!any_open) break;
    prune(pool, config.beam_width);
    beams = std::move(pool);
    emit_trace(trace, step, beams);
  }
  // prune leaves beams sorted best-first.
  return to_result(beams.front(), false);
}

DecodeResult beam_search_story(const StoryScorer& scorer,
                               const DecodeConfig& config, int target_len,
                               std::ostream* trace) {
  config.validate();

  std::vector<BeamHypothesis> beams(1);
  for (int step = 0; step < config.max_len; ++step) {
    bool any_open = false;
    std::vector<BeamHypothesis> pool;
    for (const auto& beam : beams) {
      if (beam.finished) {
        pool.push_back(beam);
        continue;
      }
      any_open = true;
      Eigen::VectorXd logp = scorer(beam.tokens, target_len);
      if (logp.size() == 0) throw DataError("scorer reported an empty vocabulary");
      double inv_l = 1.0 / static_cast<double>(beam.l());
      for (int x = 0; x < static_cast<int>(logp.size()); ++x) {
        BeamHypothesis next = beam;
        next.raw_logprob += logp(x);
        next.penalized_score += logp(x);
        if (next.s.count(x)) next.penalized_score -= config.alpha;
        if (next.r.count(x)) next.penalized_score -= config.gamma * inv_l;
        advance_story_state(next, x, config);
        pool.push_back(std::move(next));
      }
    }
    if (!any_open) break;
    prune(pool, config.beam_width);
    beams = std::move(pool);
    emit_trace(trace, step, beams);
  }
  // prune leaves beams sorted best-first.
  const BeamHypothesis& best = beams.front();
  return to_result(best, !best.finished);
}

double replay_score(const std::vector<int>& tokens, const StoryScorer& scorer,
                    const DecodeConfig& config, int target_len) {
  config.validate();
  BeamHypothesis h;
  double score = 0.0;
  for (int x : tokens) {
    Eigen::VectorXd logp = scorer(h.tokens, target_len);
    if (x < 0 || x >= static_cast<int>(logp.size())) {
      throw DataError("replay token " + std::to_string(x) +
                      " outside the scorer vocabulary");
    }
    score += logp(x);
    if (h.s.count(x)) score -= config.alpha;
    if (h.r.count(x)) score -= config.gamma / static_cast<double>(h.l());
    advance_story_state(h, x, config);
  }
  return score;
}

double replay_score_terms(const std::vector<int>& tokens,
                          const TermScorer& scorer,
                          const DecodeConfig& config) {
  config.validate();
  BeamHypothesis h;
  double score = 0.0;
  for (int x : tokens) {
    Eigen::VectorXd logp = scorer(h.tokens);
    if (x < 0 || x >= static_cast<int>(logp.size())) {
      throw DataError("replay token " + std::to_string(x) +
                      " outside the scorer vocabulary");
    }
    score += logp(x);
    if (h.s.count(x)) score -= config.term_penalty;
    h.tokens.push_back(x);
    if (!is_reserved(x, config)) h.s.insert(x);
  }
  return score;
}

}  // namespace storygen
