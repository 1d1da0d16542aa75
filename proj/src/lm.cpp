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

#include "storygen/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

constexpr int kSnapshotVersion = 1;
constexpr int32_t kUnkId = 0;
constexpr int32_t kBosId = 1;
constexpr int32_t kEosId = 2;
constexpr int32_t kSepId = 3;

}  // namespace

std::size_t NGramModel::KeyHash::operator()(const ContextKey& k) const {
  // FNV-1a over the id bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (int32_t id : k) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>((static_cast<uint32_t>(id) >> (8 * b)) & 0xff);
      h *= 1099511628211ULL;
    }
  }
  return static_cast<std::size_t>(h);
}

int32_t NGramModel::intern(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  int32_t id = static_cast<int32_t>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  predictable_.push_back(false);
  return id;
}

int32_t NGramModel::lookup_ctx_token(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return kUnkId;
  // A known id outside the predictable support behaves like <unk> so seen
  // and unseen out-of-support tokens score identically.
  if (it->second != kBosId && !predictable_[it->second]) return kUnkId;
  return it->second;
}

int32_t NGramModel::lookup_pred_token(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end() || !predictable_[it->second]) return kUnkId;
  return it->second;
}

NGramModel NGramModel::train(
    const std::vector<std::vector<std::string>>& sequences, int n,
    double discount) {
  if (sequences.empty()) throw DataError("empty training corpus");
  if (n < 2) throw ConfigError("n-gram order must be >= 2");
  if (!(discount > 0.0 && discount < 1.0)) {
    throw ConfigError("discount must be in (0,1)");
  }
  NGramModel m;
  m.n_ = n;
  m.discount_ = discount;
  m.intern(lm_tokens::kUnk);
  m.intern(lm_tokens::kBos);
  m.intern(lm_tokens::kEos);
  m.intern(lm_tokens::kSep);
  m.predictable_[kUnkId] = true;
  m.predictable_[kEosId] = true;

  for (const auto& seq : sequences) {
    std::vector<int32_t> padded(static_cast<std::size_t>(n) - 1, kBosId);
    for (const auto& tok : seq) padded.push_back(m.intern(tok));
    padded.push_back(kEosId);
    for (std::size_t i = static_cast<std::size_t>(n) - 1; i < padded.size();
         ++i) {
      int32_t target = padded[i];
      m.predictable_[target] = true;
      for (int k = 0; k < n; ++k) {
        ContextKey ctx(padded.begin() + static_cast<long>(i) - k,
                       padded.begin() + static_cast<long>(i));
        auto& cc = m.contexts_[ctx];
        cc.total += 1;
        cc.next[target] += 1;
      }
    }
  }
  m.predictable_count_ =
      static_cast<int>(std::count(m.predictable_.begin(), m.predictable_.end(),
                                  true));
  return m;
}

NGramModel NGramModel::uniform(const std::vector<std::string>& tokens) {
  NGramModel m;
  m.n_ = 2;
  m.discount_ = 0.75;
  m.intern(lm_tokens::kUnk);
  m.intern(lm_tokens::kBos);
  m.intern(lm_tokens::kEos);
  m.intern(lm_tokens::kSep);
  m.predictable_[kUnkId] = true;
  m.predictable_[kEosId] = true;
  for (const auto& tok : tokens) m.predictable_[m.intern(tok)] = true;
  m.predictable_count_ =
      static_cast<int>(std::count(m.predictable_.begin(), m.predictable_.end(),
                                  true));
  return m;
}

double NGramModel::prob_ids(const ContextKey& context, int32_t token) const {
  double p = 1.0 / static_cast<double>(predictable_count_);
  // Interpolate from the uniform base up through longer context suffixes.
  for (std::size_t k = 0; k <= context.size(); ++k) {
    ContextKey ctx(context.end() - static_cast<long>(k), context.end());
    auto it = contexts_.find(ctx);
    if (it == contexts_.end() || it->second.total == 0) continue;
    const ContextCounts& cc = it->second;
    double total = static_cast<double>(cc.total);
    double cnt = 0.0;
    if (auto jt = cc.next.find(token); jt != cc.next.end()) {
      cnt = static_cast<double>(jt->second);
    }
    double types = static_cast<double>(cc.next.size());
    p = (std::max(cnt - discount_, 0.0) + discount_ * types * p) / total;
  }
  return p;
}

double NGramModel::sequence_log_prob(const std::vector<std::string>& tokens,
                                     bool with_eos) const {
  if (tokens.empty()) throw DataError("log_prob requires a nonempty sequence");
  ContextKey ctx(static_cast<std::size_t>(n_) - 1, kBosId);
  auto shift = [&ctx](int32_t id) {
    std::rotate(ctx.begin(), ctx.begin() + 1, ctx.end());
    ctx.back() = id;
  };
  double lp = 0.0;
  for (const auto& tok : tokens) {
    int32_t id = lookup_pred_token(tok);
    lp += std::log(prob_ids(ctx, id));
    shift(lookup_ctx_token(tok));
  }
  if (with_eos) lp += std::log(prob_ids(ctx, kEosId));
  return lp;
}

double NGramModel::log_prob(const std::vector<std::string>& tokens) const {
  return sequence_log_prob(tokens, true);
}

double NGramModel::prefix_log_prob(
    const std::vector<std::string>& tokens) const {
  return sequence_log_prob(tokens, false);
}

double NGramModel::perplexity(const std::vector<std::string>& tokens) const {
  double n = static_cast<double>(tokens.size()) + 1.0;
  return std::exp(-log_prob(tokens) / n);
}

double NGramModel::token_prob(const std::vector<std::string>& context,
                              const std::string& token) const {
  ContextKey ctx;
  std::size_t start =
      context.size() > static_cast<std::size_t>(n_ - 1)
          ? context.size() - static_cast<std::size_t>(n_ - 1)
          : 0;
  for (std::size_t i = start; i < context.size(); ++i) {
    ctx.push_back(lookup_ctx_token(context[i]));
  }
  return prob_ids(ctx, lookup_pred_token(token));
}

std::uint64_t NGramModel::raw_count(const std::vector<std::string>& context,
                                    const std::string& token) const {
  ContextKey ctx;
  for (const auto& tok : context) {
    auto it = token_to_id_.find(tok);
    if (it == token_to_id_.end()) return 0;
    ctx.push_back(it->second);
  }
  auto it = contexts_.find(ctx);
  if (it == contexts_.end()) return 0;
  auto jt = token_to_id_.find(token);
  if (jt == token_to_id_.end()) return 0;
  auto kt = it->second.next.find(jt->second);
  return kt == it->second.next.end() ? 0 : kt->second;
}

std::vector<std::vector<std::string>> NGramModel::seen_contexts() const {
  std::vector<std::vector<std::string>> out;
  out.reserve(contexts_.size());
  for (const auto& [key, cc] : contexts_) {
    std::vector<std::string> ctx;
    ctx.reserve(key.size());
    for (int32_t id : key) ctx.push_back(id_to_token_[id]);
    out.push_back(std::move(ctx));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> NGramModel::support() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (predictable_[i]) out.push_back(id_to_token_[i]);
  }
  return out;
}

void NGramModel::save(std::ostream& out) const {
  nlohmann::json j;
  j["format_version"] = kSnapshotVersion;
  j["n"] = n_;
  j["discount"] = discount_;
  j["vocab"] = id_to_token_;
  std::vector<int> predictable;
  for (bool b : predictable_) predictable.push_back(b ? 1 : 0);
  j["predictable"] = predictable;
  nlohmann::json ctxs = nlohmann::json::array();
  // Sorted context order keeps snapshots byte-stable across runs.
  std::vector<const ContextKey*> keys;
  keys.reserve(contexts_.size());
  for (const auto& [key, cc] : contexts_) keys.push_back(&key);
  std::sort(keys.begin(), keys.end(),
            [](const ContextKey* a, const ContextKey* b) { return *a < *b; });
  for (const ContextKey* key : keys) {
    const ContextCounts& cc = contexts_.at(*key);
    std::vector<std::pair<int32_t, std::uint64_t>> next(cc.next.begin(),
                                                        cc.next.end());
    std::sort(next.begin(), next.end());
    nlohmann::json row;
    row["ctx"] = *key;
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& [tok, cnt] : next) counts.push_back({tok, cnt});
    row["next"] = std::move(counts);
    ctxs.push_back(std::move(row));
  }
  j["contexts"] = std::move(ctxs);
  out << j.dump() << "\n";
}

void NGramModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write lm snapshot: " + path);
  save(out);
}

NGramModel NGramModel::load(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("lm snapshot parse failure: ") + e.what());
  }
  if (!j.is_object() || j.value("format_version", -1) != kSnapshotVersion) {
    throw DataError("lm snapshot: unsupported format_version");
  }
  NGramModel m;
  m.n_ = j.at("n").get<int>();
  m.discount_ = j.at("discount").get<double>();
  for (const auto& tok : j.at("vocab")) m.intern(tok.get<std::string>());
  const auto& predictable = j.at("predictable");
  if (predictable.size() != m.id_to_token_.size()) {
    throw DataError("lm snapshot: predictable/vocab size mismatch");
  }
  for (std::size_t i = 0; i < m.predictable_.size(); ++i) {
    m.predictable_[i] = predictable[i].get<int>() != 0;
  }
  m.predictable_count_ = static_cast<int>(
      std::count(m.predictable_.begin(), m.predictable_.end(), true));
  for (const auto& row : j.at("contexts")) {
    ContextKey key;
    for (const auto& id : row.at("ctx")) key.push_back(id.get<int32_t>());
    ContextCounts cc;
    for (const auto& pair : row.at("next")) {
      int32_t tok = pair[0].get<int32_t>();
      std::uint64_t cnt = pair[1].get<std::uint64_t>();
      cc.next[tok] = cnt;
      cc.total += cnt;
    }
    m.contexts_.emplace(std::move(key), std::move(cc));
  }
  return m;
}

NGramModel NGramModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lm snapshot: " + path);
  return load(in);
}

}  // namespace storygen
