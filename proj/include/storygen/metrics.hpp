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
// Automatic text metrics: modified-precision BLEU with brevity penalty,
// distinct-n lexical diversity, and LCS-based ROUGE-L (F1).

#ifndef STORYGEN_METRICS_HPP_
#define STORYGEN_METRICS_HPP_

#include <string>
#include <vector>

#include "storygen/terms.hpp"

namespace storygen {

using TokenList = std::vector<std::string>;

// Geometric mean of modified k-gram precisions for k = 1..n, times the
// brevity penalty against the closest reference length (ties go to the
// shorter reference). Empty candidate or any zero precision gives 0.
// Throws ConfigError unless 1 <= n <= 4; DataError when references are
// empty or contain an empty token list.
double bleu_n(const TokenList& candidate,
              const std::vector<TokenList>& references, int n);

// Unique n-grams over total n-grams, pooled across all stories. Throws
// ConfigError on n < 1 and DataError when the pool holds no n-grams.
double distinct_n(const std::vector<TokenList>& stories, int n);

// Max over references of the LCS F1 (beta = 1). Empty candidate gives 0.
double rouge_l(const TokenList& candidate,
               const std::vector<TokenList>& references);

struct StoryMetrics {
  std::string id;
  double bleu_1 = 0.0;
  double bleu_2 = 0.0;
  double bleu_3 = 0.0;
  double bleu_4 = 0.0;
  double rouge_l = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
};

// Corpus values: bleu/rouge are means over stories; distinct pools n-grams
// across the whole corpus (it is a set statistic, not an average).
struct MetricReport {
  std::vector<StoryMetrics> per_story;
  double bleu_1 = 0.0;
  double bleu_2 = 0.0;
  double bleu_3 = 0.0;
  double bleu_4 = 0.0;
  double rouge_l = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
};

// Pairs candidates with references by story id; every candidate id must
// have at least one reference story (DataError otherwise). Multiple
// references per id are allowed. Story tokens are the concatenation of its
// sentences.
MetricReport evaluate(const std::vector<Story>& candidates,
                      const std::vector<Story>& references);

}  // namespace storygen

#endif  // STORYGEN_METRICS_HPP_
