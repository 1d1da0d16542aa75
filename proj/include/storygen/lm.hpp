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
// Interpolated absolutely-discounted n-gram language model over token
// sequences. Provides the log-probability and perplexity used to rank
// candidate term paths; the scorer interface is three functions over token
// lists, so a different model can be substituted.

#ifndef STORYGEN_LM_HPP_
#define STORYGEN_LM_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace storygen {

namespace lm_tokens {
inline constexpr const char* kUnk = "<unk>";
inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr const char* kSep = "<sep>";
}  // namespace lm_tokens

class NGramModel {
 public:
  // Trains with absolute discounting, interpolating every order down to a
  // uniform base over the predictable support (tokens seen as prediction
  // targets plus </s> and <unk>; <s> is context-only). Each sequence is
  // padded with n-1 <s> and one </s>. Throws DataError on an empty corpus,
  // ConfigError on n < 2 or discount outside (0,1).
  static NGramModel train(const std::vector<std::vector<std::string>>& sequences,
                          int n = 3, double discount = 0.75);

  // A model with no counts: every query backs off to the uniform base over
  // tokens plus {</s>, <unk>}. perplexity == vocab_size() on any sequence
  // made of these tokens.
  static NGramModel uniform(const std::vector<std::string>& tokens);

  // Sum over positions of log P(token | previous n-1 tokens), including the
  // final </s> term. Unseen tokens map to <unk>. Always finite.
  double log_prob(const std::vector<std::string>& tokens) const;

  // log_prob without the </s> term. Appending a token to a prefix never
  // increases this value.
  double prefix_log_prob(const std::vector<std::string>& tokens) const;

  // exp(-log_prob / N) with N = tokens.size() + 1 counting </s>.
  double perplexity(const std::vector<std::string>& tokens) const;

  // P(token | context) with the context truncated to its last n-1 tokens.
  double token_prob(const std::vector<std::string>& context,
                    const std::string& token) const;

  // Training-time count of (context -> token); context length selects the
  // order. Zero when unseen.
  std::uint64_t raw_count(const std::vector<std::string>& context,
                          const std::string& token) const;

  // Size of the predictable support (the denominator of the uniform base).
  int vocab_size() const { return predictable_count_; }
  int order() const { return n_; }
  double discount() const { return discount_; }

  // Every distinct context stored during training (all orders, including
  // the empty context), as token strings. Normalization holds per context.
  std::vector<std::vector<std::string>> seen_contexts() const;
  // Predictable tokens, in id order.
  std::vector<std::string> support() const;

  // Versioned JSON snapshot. Round-trips log_prob bit-exactly.
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static NGramModel load(std::istream& in);
  static NGramModel load_file(const std::string& path);

 private:
  NGramModel() = default;

  using ContextKey = std::vector<int32_t>;
  struct KeyHash {
    std::size_t operator()(const ContextKey& k) const;
  };
  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<int32_t, std::uint64_t> next;
  };

  int32_t intern(const std::string& token);
  int32_t lookup_ctx_token(const std::string& token) const;
  int32_t lookup_pred_token(const std::string& token) const;
  double prob_ids(const ContextKey& context, int32_t token) const;
  double sequence_log_prob(const std::vector<std::string>& tokens,
                           bool with_eos) const;

  int n_ = 3;
  double discount_ = 0.75;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int32_t> token_to_id_;
  std::vector<bool> predictable_;
  int predictable_count_ = 0;
  std::unordered_map<ContextKey, ContextCounts, KeyHash> contexts_;
};

}  // namespace storygen

#endif  // STORYGEN_LM_HPP_
