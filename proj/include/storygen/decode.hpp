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
// Beam search with two repetition-penalty regimes:
//   term decoding:  score = log p(x) - term_penalty * 1(x in S)
//                   where S holds every token emitted so far
//   story decoding: score = log p(x) - alpha * 1(x in S) - (gamma/l) * 1(x in R)
//                   where S holds tokens of the current sentence, R tokens of
//                   completed sentences, and l is the story length in tokens
//                   before this step, floored at 1.
// Reserved tokens (sentence end, <sep>, end-of-story) never enter S or R.

#ifndef STORYGEN_DECODE_HPP_
#define STORYGEN_DECODE_HPP_

#include <functional>
#include <iosfwd>
#include <set>
#include <vector>

#include <Eigen/Core>

namespace storygen {

// Normalized log-probabilities over the vocabulary for the token after
// `prefix`. The story variant also receives the requested story length so
// the model can thread it to its positional encoding.
using TermScorer = std::function<Eigen::VectorXd(const std::vector<int>&)>;
using StoryScorer =
    std::function<Eigen::VectorXd(const std::vector<int>&, int)>;

struct DecodeConfig {
  int beam_width = 3;
  double alpha = 20.0;
  double gamma = 5.0;
  double term_penalty = 1e19;
  int max_len = 64;
  int sentence_end_id = -1;  // "." vocab id; -1 when the vocab has none
  int sep_id = -1;           // <sep> vocab id; -1 when the vocab has none
  int eos_id = -1;           // end token; -1 disables early termination

  void validate() const;  // ConfigError on violation
};

struct BeamHypothesis {
  std::vector<int> tokens;
  double raw_logprob = 0.0;
  double penalized_score = 0.0;
  std::set<int> s;  // tokens of the current sentence
  std::set<int> r;  // tokens of completed sentences
  bool finished = false;

  // Story length before the next step, floored at 1.
  int l() const {
    return tokens.empty() ? 1 : static_cast<int>(tokens.size());
  }
};

struct DecodeResult {
  std::vector<int> tokens;  // includes the terminal end token when emitted
  double raw_logprob = 0.0;
  double penalized_score = 0.0;
  bool truncated = false;  // story search hit max_len without the end token
};

// Width-beam_width search over exactly `steps` expansions (fewer for
// hypotheses that emit config.eos_id). Ties break toward lexicographically
// smaller token sequences. Throws ConfigError on steps < 1 and DataError
// when the scorer reports an empty vocabulary. `trace`, when given, receives
// one JSON line per step with the surviving beam.
DecodeResult beam_search_terms(const TermScorer& scorer,
                               const DecodeConfig& config, int steps,
                               std::ostream* trace = nullptr);

// Penalized story search; stops when every surviving hypothesis emitted
// config.eos_id or reached config.max_len tokens (truncated flag). The same
// tie-break applies.
DecodeResult beam_search_story(const StoryScorer& scorer,
                               const DecodeConfig& config, int target_len,
                               std::ostream* trace = nullptr);

// Recompute the penalized score the search assigned to `tokens`, from
// scratch, with the same bookkeeping. Empty input scores 0.0; a token id
// outside the scorer's vocabulary throws DataError.
double replay_score(const std::vector<int>& tokens, const StoryScorer& scorer,
                    const DecodeConfig& config, int target_len);
double replay_score_terms(const std::vector<int>& tokens,
                          const TermScorer& scorer,
                          const DecodeConfig& config);

}  // namespace storygen

#endif  // STORYGEN_DECODE_HPP_
