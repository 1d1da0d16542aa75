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
// Two small differentiable models trained from scratch:
//   TermModel: Transformer encoder over projected object features summed
//     with trainable image-order embeddings, decoded per image by a GRU
//     with additive attention restricted to that image's states.
//   StoryModel: Transformer encoder-decoder; decoder inputs carry
//     length-difference positional encoding so the terminal position looks
//     the same for every requested story length.

#ifndef STORYGEN_NEURAL_HPP_
#define STORYGEN_NEURAL_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "storygen/autodiff.hpp"

namespace storygen {

// Length-difference positional encoding:
//   component 2i   = sin((len - pos) / 10000^(2i/d))
//   component 2i+1 = cos((len - pos) / 10000^(2i/d))
// Depends only on len - pos, so ldpe(len, len, d) is the same vector for
// every len. Throws ConfigError on odd d or pos outside [0, len].
Eigen::VectorXd ldpe(int pos, int len, int d);

// Standard absolute sinusoidal encoding, same frequency ladder.
Eigen::VectorXd sinusoid_encoding(double x, int d);

struct ModelConfig {
  int d_model = 64;
  int heads = 2;
  int layers = 2;
  int d_in = 32;
  int top_k = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
  int max_len = 64;

  void validate() const;  // ConfigError on violation
  static ModelConfig paper_scale();  // 512/2/4, d_in 2048, top_k 25
  bool same_shape(const ModelConfig& o) const;
};

// One detected object: feature vector, detector confidence, image position
// t in [1, 5].
struct ObjectFeature {
  Eigen::VectorXd vector;
  double confidence = 0.0;
  int image_order = 1;
};

struct ImageFeatures {
  std::string image_id;
  int order = 1;  // 1..5
  std::vector<ObjectFeature> objects;
};

// JSONL: {"image_id": str, "order": 1-5,
//         "objects": [{"confidence": f, "feature": [f, ...]}, ...]}.
std::vector<ImageFeatures> load_features(std::istream& in);
std::vector<ImageFeatures> load_features_file(const std::string& path);
void save_features(const std::vector<ImageFeatures>& groups, std::ostream& out);

// Keeps the k highest-confidence objects, ties resolved by input order.
std::vector<ObjectFeature> select_top_k(const std::vector<ObjectFeature>& objs,
                                        int k);

// Token ids with reserved entries. Id 0 is <unk>, 1 is <bos>, 2 is <eos>.
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  Vocab();
  int add(const std::string& token);
  int id(const std::string& token) const;  // 0 (<unk>) when absent
  const std::string& token(int id) const { return id_to_token[id]; }
  int size() const { return static_cast<int>(id_to_token.size()); }

  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
};

namespace layers {

// Per-head projections are stored separately; d_head = d_model / heads.
struct AttentionHead {
  ad::Param wq, bq, wk, bk, wv, bv;
};

struct MultiHeadAttention {
  std::vector<AttentionHead> head;
  ad::Param wo, bo;
};

struct FeedForward {
  ad::Param w1, b1, w2, b2;  // hidden = 4 * d_model, gelu
};

struct EncoderLayer {
  MultiHeadAttention self_attn;
  ad::Param ln1_g, ln1_b;
  FeedForward ffn;
  ad::Param ln2_g, ln2_b;
};

struct DecoderLayer {
  MultiHeadAttention self_attn;  // causal mask
  ad::Param ln1_g, ln1_b;
  MultiHeadAttention cross_attn;
  ad::Param ln2_g, ln2_b;
  FeedForward ffn;
  ad::Param ln3_g, ln3_b;
};

}  // namespace layers

// ---------------------------------------------------------------------------
// Term model (object features in, term tokens out).

// One training example: five images' objects plus the term tokens expected
// for each image (canonical term strings, no <eos>).
struct TermExample {
  std::vector<std::vector<ObjectFeature>> images;       // index = order - 1
  std::vector<std::vector<std::string>> image_terms;    // same indexing
};

class TermModel {
 public:
  // Vocab is built from the corpus targets; parameters are initialized
  // from config.seed.
  static TermModel create(const ModelConfig& config,
                          const std::vector<TermExample>& corpus);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }

  // x_i = W o_i + order_embedding[t-1] per feature, before the encoder
  // stack runs. A zero feature vector gives exactly that image's order
  // embedding row. Throws DataError on dimension or order violations.
  Eigen::MatrixXd embed_objects(const std::vector<ObjectFeature>& features);

  // embed_objects followed by the encoder stack. Output row count equals
  // input count.
  Eigen::MatrixXd encode_objects(const std::vector<ObjectFeature>& features);

  // Normalized next-token log probabilities for the decoder on image
  // `image_index` (0-based), attending only to that image's encoder states.
  // prefix holds vocab ids already emitted for this image.
  Eigen::VectorXd next_token_logprobs(
      const std::vector<std::vector<ObjectFeature>>& images, int image_index,
      const std::vector<int>& prefix);

  // Per-epoch mean loss (nats per target token). Bit-reproducible for a
  // fixed seed; zero epochs returns an empty history and leaves the model
  // unchanged. Throws NumericError when the loss goes non-finite.
  std::vector<double> fit(const std::vector<TermExample>& pairs, int epochs);

  // Max relative error between analytic and central-difference gradients
  // over the highest-magnitude entries of every parameter group.
  double grad_check(const std::vector<TermExample>& batch,
                    double epsilon = 1e-5);

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static TermModel load(std::istream& in,
                        const ModelConfig* expected = nullptr);
  static TermModel load_file(const std::string& path,
                             const ModelConfig* expected = nullptr);

  std::vector<ad::Param*> params();

 private:
  friend struct NeuralTestPeer;
  TermModel() = default;
  void init_params(ad::Rng& rng);
  // Shared forward pieces; builds nodes on t.
  ad::Var encode_on_tape(ad::Tape& t,
                         const std::vector<ObjectFeature>& features,
                         std::vector<int>* image_of_position);
  ad::Var decode_image_logprobs(ad::Tape& t, ad::Var memory,
                                const std::vector<int>& positions,
                                const std::vector<int>& dec_inputs);
  ad::Var example_loss(ad::Tape& t, const TermExample& ex, int* token_count);

  ModelConfig config_;
  Vocab vocab_;
  ad::Param w_proj_;       // d_in x d
  ad::Param order_embed_;  // 5 x d
  std::vector<layers::EncoderLayer> enc_;
  ad::Param dec_embed_;    // V x d
  ad::Param gru_wz_, gru_uz_, gru_bz_;
  ad::Param gru_wr_, gru_ur_, gru_br_;
  ad::Param gru_wh_, gru_uh_, gru_bh_;
  ad::Param attn_w_, attn_u_, attn_v_;  // d x d, d x d, 1 x d
  ad::Param h0_w_, h0_b_;
  ad::Param out_w_, out_b_;  // 2d x V, 1 x V
};

// ---------------------------------------------------------------------------
// Story model (term-path tokens in, story tokens out).

struct StoryExample {
  std::vector<std::string> path_tokens;   // flattened term path with <sep>
  std::vector<std::string> story_tokens;  // words and punctuation tokens
};

class StoryModel {
 public:
  static StoryModel create(const ModelConfig& config,
                           const std::vector<StoryExample>& corpus);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  // Mean tokens per sentence (terminal period included) over the training
  // targets; generation derives target_len from it.
  double mean_sentence_len() const { return mean_sentence_len_; }
  bool trained() const { return trained_; }

  // Normalized log probabilities for the token after `prefix`, with LDPE
  // computed against target_len. Throws ConfigError when the prefix is at
  // max_len already.
  Eigen::VectorXd next_token_logprobs(const std::vector<int>& src_ids,
                                      const std::vector<int>& prefix,
                                      int target_len);

  std::vector<double> fit(const std::vector<StoryExample>& pairs, int epochs);
  double grad_check(const std::vector<StoryExample>& batch,
                    double epsilon = 1e-5);

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static StoryModel load(std::istream& in,
                         const ModelConfig* expected = nullptr);
  static StoryModel load_file(const std::string& path,
                              const ModelConfig* expected = nullptr);

  std::vector<ad::Param*> params();

 private:
  friend struct NeuralTestPeer;
  StoryModel() = default;
  void init_params(ad::Rng& rng);
  ad::Var encode_on_tape(ad::Tape& t, const std::vector<int>& src_ids);
  // Decoder over all positions at once with a causal mask; returns
  // log-probabilities per position.
  ad::Var decode_logprobs(ad::Tape& t, ad::Var memory,
                          const std::vector<int>& dec_inputs, int target_len);
  ad::Var example_loss(ad::Tape& t, const StoryExample& ex, int* token_count);

  ModelConfig config_;
  Vocab vocab_;
  double mean_sentence_len_ = 0.0;
  bool trained_ = false;
  ad::Param enc_embed_;  // V x d
  ad::Param dec_embed_;  // V x d
  std::vector<layers::EncoderLayer> enc_;
  std::vector<layers::DecoderLayer> dec_;
  ad::Param out_w_, out_b_;  // d x V, 1 x V
};

// Analytic vs finite-difference agreement for a one-layer linear softmax
// classifier where the exact gradient is also known in closed form. Returns
// the max relative error across both comparisons.
double grad_check_linear_control(double epsilon = 1e-5);

}  // namespace storygen

#endif  // STORYGEN_NEURAL_HPP_
