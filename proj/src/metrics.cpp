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

#include "storygen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <unordered_map>

#include "storygen/error.hpp"

namespace storygen {

namespace {

// n-gram keyed by its joined tokens; '\x1f' cannot occur inside a token.
std::map<std::string, long> ngram_counts(const TokenList& tokens, int n) {
  std::map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

long lcs_length(const TokenList& a, const TokenList& b) {
  std::size_t na = a.size();
  std::size_t nb = b.size();
  std::vector<long> prev(nb + 1, 0);
  std::vector<long> cur(nb + 1, 0);
  for (std::size_t i = 1; i <= na; ++i) {
    for (std::size_t j = 1; j <= nb; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[nb];
}

TokenList story_tokens(const Story& s) {
  TokenList out;
  for (const auto& sentence : s.sentences) {
    out.insert(out.end(), sentence.begin(), sentence.end());
  }
  return out;
}

}  // namespace

double bleu_n(const TokenList& candidate,
              const std::vector<TokenList>& references, int n) {
  if (n < 1 || n > 4) throw ConfigError("bleu order must be in [1,4]");
  if (references.empty()) throw DataError("bleu requires a reference");
  for (const auto& r : references) {
    if (r.empty()) throw DataError("bleu reference must be nonempty");
  }
  if (candidate.empty()) return 0.0;

  double log_precision_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    auto cand_counts = ngram_counts(candidate, k);
    long total = 0;
    for (const auto& [key, cnt] : cand_counts) total += cnt;
    if (total == 0) return 0.0;
    // Clip each candidate n-gram by its max count over the references.
    long clipped = 0;
    std::vector<std::map<std::string, long>> ref_counts;
    ref_counts.reserve(references.size());
    for (const auto& r : references) ref_counts.push_back(ngram_counts(r, k));
    for (const auto& [key, cnt] : cand_counts) {
      long best = 0;
      for (const auto& rc : ref_counts) {
        auto it = rc.find(key);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      clipped += std::min(cnt, best);
    }
    if (clipped == 0) return 0.0;
    log_precision_sum +=
        std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }

  // Closest reference length; ties go to the shorter reference.
  long c = static_cast<long>(candidate.size());
  long r_best = static_cast<long>(references[0].size());
  for (const auto& r : references) {
    long len = static_cast<long>(r.size());
    long d_new = std::labs(len - c);
    long d_old = std::labs(r_best - c);
    if (d_new < d_old || (d_new == d_old && len < r_best)) r_best = len;
  }
  double bp = c >= r_best
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(r_best) /
                                       static_cast<double>(c));
  return bp * std::exp(log_precision_sum / n);
}

double distinct_n(const std::vector<TokenList>& stories, int n) {
  if (n < 1) throw ConfigError("distinct order must be >= 1");
  std::set<std::string> unique;
  long total = 0;
  for (const auto& story : stories) {
    for (const auto& [key, cnt] : ngram_counts(story, n)) {
      unique.insert(key);
      total += cnt;
    }
  }
  if (total == 0) throw DataError("no n-grams of order " + std::to_string(n));
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double rouge_l(const TokenList& candidate,
               const std::vector<TokenList>& references) {
  if (references.empty()) throw DataError("rouge requires a reference");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const auto& ref : references) {
    if (ref.empty()) throw DataError("rouge reference must be nonempty");
    double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    double p = lcs / static_cast<double>(candidate.size());
    double r = lcs / static_cast<double>(ref.size());
    best = std::max(best, 2.0 * p * r / (p + r));
  }
  return best;
}

MetricReport evaluate(const std::vector<Story>& candidates,
                      const std::vector<Story>& references) {
  if (candidates.empty()) throw DataError("no candidate stories");
  std::unordered_map<std::string, std::vector<TokenList>> refs_by_id;
  for (const auto& ref : references) {
    refs_by_id[ref.id].push_back(story_tokens(ref));
  }

  MetricReport report;
  std::vector<TokenList> all_candidate_tokens;
  for (const auto& cand : candidates) {
    auto it = refs_by_id.find(cand.id);
    if (it == refs_by_id.end()) {
      throw DataError("no reference story for id \"" + cand.id + "\"");
    }
    TokenList tokens = story_tokens(cand);
    StoryMetrics m;
    m.id = cand.id;
    m.bleu_1 = bleu_n(tokens, it->second, 1);
    m.bleu_2 = bleu_n(tokens, it->second, 2);
    m.bleu_3 = bleu_n(tokens, it->second, 3);
    m.bleu_4 = bleu_n(tokens, it->second, 4);
    m.rouge_l = rouge_l(tokens, it->second);
    m.distinct_1 = tokens.empty() ? 0.0 : distinct_n({tokens}, 1);
    m.distinct_2 = static_cast<int>(tokens.size()) < 2
                       ? 0.0
                       : distinct_n({tokens}, 2);
    report.bleu_1 += m.bleu_1;
    report.bleu_2 += m.bleu_2;
    report.bleu_3 += m.bleu_3;
    report.bleu_4 += m.bleu_4;
    report.rouge_l += m.rouge_l;
    report.per_story.push_back(std::move(m));
    all_candidate_tokens.push_back(std::move(tokens));
  }
  double n = static_cast<double>(report.per_story.size());
  report.bleu_1 /= n;
  report.bleu_2 /= n;
  report.bleu_3 /= n;
  report.bleu_4 /= n;
  report.rouge_l /= n;
  report.distinct_1 = distinct_n(all_candidate_tokens, 1);
  bool any_bigram = false;
  for (const auto& t : all_candidate_tokens) {
    if (t.size() >= 2) any_bigram = true;
  }
  report.distinct_2 =
      any_bigram ? distinct_n(all_candidate_tokens, 2) : 0.0;
  return report;
}

}  // namespace storygen
