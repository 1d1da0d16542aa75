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

#include "storygen/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kMaskNegative = -1e30;
constexpr int kGradCheckSamplesPerGroup = 6;

using ad::Matrix;
using ad::Param;
using ad::Rng;
using ad::Tape;
using ad::Var;

}  // namespace

Eigen::VectorXd sinusoid_encoding(double x, int d) {
  if (d <= 0 || d % 2 != 0) {
    throw ConfigError("encoding dimension must be positive and even, got " +
                      std::to_string(d));
  }
  Eigen::VectorXd out(d);
  for (int i = 0; 2 * i < d; ++i) {
    double freq = std::pow(10000.0, (2.0 * i) / d);
    out(2 * i) = std::sin(x / freq);
    out(2 * i + 1) = std::cos(x / freq);
  }
  return out;
}

Eigen::VectorXd ldpe(int pos, int len, int d) {
  if (pos < 0 || len < pos) {
    throw ConfigError("ldpe requires 0 <= pos <= len, got pos=" +
                      std::to_string(pos) + " len=" + std::to_string(len));
  }
  return sinusoid_encoding(static_cast<double>(len - pos), d);
}

void ModelConfig::validate() const {
  if (d_model <= 0 || heads <= 0 || layers <= 0 || d_in <= 0 || top_k <= 0 ||
      max_len <= 0) {
    throw ConfigError("model config values must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("d_model must be divisible by heads");
  }
  if (d_model % 2 != 0) {
    throw ConfigError("d_model must be even for sinusoidal encodings");
  }
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.d_model = 512;
  c.heads = 2;
  c.layers = 4;
  c.d_in = 2048;
  c.top_k = 25;
  c.learning_rate = 1e-3;
  c.max_len = 256;
  return c;
}

bool ModelConfig::same_shape(const ModelConfig& o) const {
  return d_model == o.d_model && heads == o.heads && layers == o.layers &&
         d_in == o.d_in && top_k == o.top_k && max_len == o.max_len;
}

std::vector<ImageFeatures> load_features(std::istream& in) {
  std::vector<ImageFeatures> groups;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("features line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (!j.is_object() || !j.contains("image_id") || !j.contains("order") ||
        !j.contains("objects")) {
      throw DataError("features line " + std::to_string(line_no) +
                      ": expected {\"image_id\", \"order\", \"objects\"}");
    }
    ImageFeatures group;
    group.image_id = j["image_id"].get<std::string>();
    group.order = j["order"].get<int>();
    if (group.order < 1 || group.order > 5) {
      throw DataError("features line " + std::to_string(line_no) +
                      ": order must be in [1,5]");
    }
    for (const auto& obj : j["objects"]) {
      ObjectFeature f;
      f.confidence = obj.at("confidence").get<double>();
      if (!(f.confidence >= 0.0 && f.confidence <= 1.0)) {
        throw DataError("features line " + std::to_string(line_no) +
                        ": confidence outside [0,1]");
      }
      const auto& vec = obj.at("feature");
      f.vector.resize(static_cast<Eigen::Index>(vec.size()));
      Eigen::Index k = 0;
      for (const auto& v : vec) {
        double x = v.get<double>();
        if (!std::isfinite(x)) {
          throw DataError("features line " + std::to_string(line_no) +
                          ": non-finite feature value");
        }
        f.vector(k++) = x;
      }
      f.image_order = group.order;
      group.objects.push_back(std::move(f));
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<ImageFeatures> load_features_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file: " + path);
  return load_features(in);
}

void save_features(const std::vector<ImageFeatures>& groups,
                   std::ostream& out) {
  for (const auto& g : groups) {
    nlohmann::json j;
    j["image_id"] = g.image_id;
    j["order"] = g.order;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : g.objects) {
      nlohmann::json jo;
      jo["confidence"] = o.confidence;
      std::vector<double> vec(o.vector.data(), o.vector.data() + o.vector.size());
      jo["feature"] = vec;
      objs.push_back(std::move(jo));
    }
    j["objects"] = std::move(objs);
    out << j.dump() << "\n";
  }
}

std::vector<ObjectFeature> select_top_k(const std::vector<ObjectFeature>& objs,
                                        int k) {
  std::vector<ObjectFeature> out = objs;
  std::stable_sort(out.begin(), out.end(),
                   [](const ObjectFeature& a, const ObjectFeature& b) {
                     return a.confidence > b.confidence;
                   });
  if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
  return out;
}

Vocab::Vocab() {
  add("<unk>");
  add("<bos>");
  add("<eos>");
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id.find(token);
  if (it != token_to_id.end()) return it->second;
  int id = static_cast<int>(id_to_token.size());
  id_to_token.push_back(token);
  token_to_id.emplace(token, id);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

// ---------------------------------------------------------------------------
// Layer construction and forward passes.

namespace {

void init_weight(Param& p, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
  p.init_uniform(rng, -bound, bound);
}

void init_embedding(Param& p, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
  p.init_uniform(rng, -bound, bound);
}

void init_attention(layers::MultiHeadAttention& a, int d, int heads, Rng& rng) {
  int dh = d / heads;
  a.head.resize(static_cast<std::size_t>(heads));
  int i = 0;
  for (auto& h : a.head) {
    std::string tag = std::to_string(i++);
    h.wq = Param("wq" + tag, d, dh);
    h.bq = Param("bq" + tag, 1, dh);
    h.wk = Param("wk" + tag, d, dh);
    h.bk = Param("bk" + tag, 1, dh);
    h.wv = Param("wv" + tag, d, dh);
    h.bv = Param("bv" + tag, 1, dh);
    init_weight(h.wq, rng);
    init_weight(h.wk, rng);
    init_weight(h.wv, rng);
  }
  a.wo = Param("wo", d, d);
  a.bo = Param("bo", 1, d);
  init_weight(a.wo, rng);
}

void init_ffn(layers::FeedForward& f, int d, Rng& rng) {
  f.w1 = Param("w1", d, 4 * d);
  f.b1 = Param("b1", 1, 4 * d);
  f.w2 = Param("w2", 4 * d, d);
  f.b2 = Param("b2", 1, d);
  init_weight(f.w1, rng);
  init_weight(f.w2, rng);
}

void init_layer_norm(Param& gain, Param& bias, int d) {
  gain = Param("ln_g", 1, d);
  gain.value.setOnes();
  bias = Param("ln_b", 1, d);
}

void init_encoder_layer(layers::EncoderLayer& l, int d, int heads, Rng& rng) {
  init_attention(l.self_attn, d, heads, rng);
  init_layer_norm(l.ln1_g, l.ln1_b, d);
  init_ffn(l.ffn, d, rng);
  init_layer_norm(l.ln2_g, l.ln2_b, d);
}

void init_decoder_layer(layers::DecoderLayer& l, int d, int heads, Rng& rng) {
  init_attention(l.self_attn, d, heads, rng);
  init_layer_norm(l.ln1_g, l.ln1_b, d);
  init_attention(l.cross_attn, d, heads, rng);
  init_layer_norm(l.ln2_g, l.ln2_b, d);
  init_ffn(l.ffn, d, rng);
  init_layer_norm(l.ln3_g, l.ln3_b, d);
}

void collect_attention(layers::MultiHeadAttention& a,
                       std::vector<Param*>& out) {
  for (auto& h : a.head) {
    out.push_back(&h.wq);
    out.push_back(&h.bq);
    out.push_back(&h.wk);
    out.push_back(&h.bk);
    out.push_back(&h.wv);
    out.push_back(&h.bv);
  }
  out.push_back(&a.wo);
  out.push_back(&a.bo);
}

void collect_encoder_layer(layers::EncoderLayer& l, std::vector<Param*>& out) {
  collect_attention(l.self_attn, out);
  out.push_back(&l.ln1_g);
  out.push_back(&l.ln1_b);
  out.push_back(&l.ffn.w1);
  out.push_back(&l.ffn.b1);
  out.push_back(&l.ffn.w2);
  out.push_back(&l.ffn.b2);
  out.push_back(&l.ln2_g);
  out.push_back(&l.ln2_b);
}

void collect_decoder_layer(layers::DecoderLayer& l, std::vector<Param*>& out) {
  collect_attention(l.self_attn, out);
  out.push_back(&l.ln1_g);
  out.push_back(&l.ln1_b);
  collect_attention(l.cross_attn, out);
  out.push_back(&l.ln2_g);
  out.push_back(&l.ln2_b);
  out.push_back(&l.ffn.w1);
  out.push_back(&l.ffn.b1);
  out.push_back(&l.ffn.w2);
  out.push_back(&l.ffn.b2);
  out.push_back(&l.ln3_g);
  out.push_back(&l.ln3_b);
}

// queries over x_q, keys/values over x_kv; additive mask (rows(x_q) x
// rows(x_kv)) is optional.
Var attention_forward(Tape& t, layers::MultiHeadAttention& p, Var x_q,
                      Var x_kv, const Matrix* additive_mask) {
  int dh = static_cast<int>(p.head[0].wq.value.cols());
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(p.head.size());
  for (auto& h : p.head) {
    Var q = ad::add_rowvec(ad::matmul(x_q, t.leaf(h.wq)), t.leaf(h.bq));
    Var k = ad::add_rowvec(ad::matmul(x_kv, t.leaf(h.wk)), t.leaf(h.bk));
    Var v = ad::add_rowvec(ad::matmul(x_kv, t.leaf(h.wv)), t.leaf(h.bv));
    Var scores = ad::scale(ad::matmul_nt(q, k), inv_sqrt_dh);
    if (additive_mask) scores = ad::add(scores, t.constant(*additive_mask));
    heads.push_back(ad::matmul(ad::softmax_rows(scores), v));
  }
  Var cat = heads[0];
  for (std::size_t i = 1; i < heads.size(); ++i) {
    cat = ad::concat_cols(cat, heads[i]);
  }
  return ad::add_rowvec(ad::matmul(cat, t.leaf(p.wo)), t.leaf(p.bo));
}

Var ffn_forward(Tape& t, layers::FeedForward& f, Var x) {
  Var h = ad::gelu(ad::add_rowvec(ad::matmul(x, t.leaf(f.w1)), t.leaf(f.b1)));
  return ad::add_rowvec(ad::matmul(h, t.leaf(f.w2)), t.leaf(f.b2));
}

// Post-norm residual blocks.
Var encoder_layer_forward(Tape& t, layers::EncoderLayer& l, Var x) {
  Var a = attention_forward(t, l.self_attn, x, x, nullptr);
  x = ad::layer_norm_rows(ad::add(x, a), t.leaf(l.ln1_g), t.leaf(l.ln1_b));
  Var f = ffn_forward(t, l.ffn, x);
  return ad::layer_norm_rows(ad::add(x, f), t.leaf(l.ln2_g), t.leaf(l.ln2_b));
}

Var decoder_layer_forward(Tape& t, layers::DecoderLayer& l, Var x, Var memory,
                          const Matrix& causal_mask) {
  Var a = attention_forward(t, l.self_attn, x, x, &causal_mask);
  x = ad::layer_norm_rows(ad::add(x, a), t.leaf(l.ln1_g), t.leaf(l.ln1_b));
  Var c = attention_forward(t, l.cross_attn, x, memory, nullptr);
  x = ad::layer_norm_rows(ad::add(x, c), t.leaf(l.ln2_g), t.leaf(l.ln2_b));
  Var f = ffn_forward(t, l.ffn, x);
  return ad::layer_norm_rows(ad::add(x, f), t.leaf(l.ln3_g), t.leaf(l.ln3_b));
}

Matrix causal_mask(int n) {
  Matrix m = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) m(i, j) = kMaskNegative;
  }
  return m;
}

// Shared fit loop: per example forward+backward then one Adam step, in
// corpus order. Returns token-weighted mean loss per epoch.
template <typename Example, typename LossFn>
std::vector<double> fit_loop(std::vector<Param*> params, double lr,
                             const std::vector<Example>& pairs, int epochs,
                             LossFn&& loss_fn) {
  if (pairs.empty()) throw DataError("fit requires a nonempty pair list");
  std::vector<double> history;
  if (epochs <= 0) return history;
  ad::AdamConfig acfg;
  acfg.lr = lr;
  ad::Adam opt(std::move(params), acfg);
  opt.zero_grad();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double weighted = 0.0;
    long tokens = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      Tape tape;
      int count = 0;
      Var loss = loss_fn(tape, pairs[i], &count);
      double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " +
                           std::to_string(epoch) + ", example " +
                           std::to_string(i));
      }
      tape.backward(loss);
      opt.step();
      weighted += value * count;
      tokens += count;
    }
    history.push_back(weighted / static_cast<double>(tokens));
  }
  return history;
}

// Max relative error between analytic gradients and central differences at
// the highest-|gradient| entries of each parameter group. loss_fn(true)
// accumulates gradients; loss_fn(false) only evaluates.
template <typename LossFn>
double grad_check_impl(const std::vector<Param*>& params, double epsilon,
                       LossFn&& loss_fn) {
  for (Param* p : params) p->zero_grad();
  loss_fn(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    const Matrix& g = analytic[pi];
    // Indices of the largest-magnitude gradient entries.
    std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      for (Eigen::Index r = 0; r < g.rows(); ++r) idx.push_back({r, c});
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&g](const auto& a, const auto& b) {
                       return std::abs(g(a.first, a.second)) >
                              std::abs(g(b.first, b.second));
                     });
    if (static_cast<int>(idx.size()) > kGradCheckSamplesPerGroup) {
      idx.resize(kGradCheckSamplesPerGroup);
    }
    for (const auto& [r, c] : idx) {
      double saved = p->value(r, c);
      p->value(r, c) = saved + epsilon;
      double lp = loss_fn(false);
      p->value(r, c) = saved - epsilon;
      double lm = loss_fn(false);
      p->value(r, c) = saved;
      double fd = (lp - lm) / (2.0 * epsilon);
      double a = g(r, c);
      double rel = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
  }
  for (Param* p : params) p->zero_grad();
  return max_rel;
}

std::vector<int> map_tokens(const Vocab& vocab,
                            const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(vocab.id(tok));
  return ids;
}

}  // namespace

// ---------------------------------------------------------------------------
// TermModel.

TermModel TermModel::create(const ModelConfig& config,
                            const std::vector<TermExample>& corpus) {
  config.validate();
  TermModel m;
  m.config_ = config;
  for (const auto& ex : corpus) {
    for (const auto& terms : ex.image_terms) {
      for (const auto& tok : terms) m.vocab_.add(tok);
    }
  }
  Rng rng(config.seed);
  m.init_params(rng);
  return m;
}

void TermModel::init_params(Rng& rng) {
  int d = config_.d_model;
  int v = vocab_.size();
  w_proj_ = Param("w_proj", config_.d_in, d);
  init_weight(w_proj_, rng);
  order_embed_ = Param("order_embed", 5, d);
  init_embedding(order_embed_, rng);
  enc_.resize(static_cast<std::size_t>(config_.layers));
  for (auto& l : enc_) init_encoder_layer(l, d, config_.heads, rng);
  dec_embed_ = Param("dec_embed", v, d);
  init_embedding(dec_embed_, rng);
  auto gate = [&](Param& w, Param& u, Param& b, const char* name) {
    w = Param(std::string("gru_w") + name, d, d);
    u = Param(std::string("gru_u") + name, d, d);
    b = Param(std::string("gru_b") + name, 1, d);
    init_weight(w, rng);
    init_weight(u, rng);
  };
  gate(gru_wz_, gru_uz_, gru_bz_, "z");
  gate(gru_wr_, gru_ur_, gru_br_, "r");
  gate(gru_wh_, gru_uh_, gru_bh_, "h");
  attn_w_ = Param("attn_w", d, d);
  attn_u_ = Param("attn_u", d, d);
  attn_v_ = Param("attn_v", 1, d);
  init_weight(attn_w_, rng);
  init_weight(attn_u_, rng);
  init_embedding(attn_v_, rng);
  h0_w_ = Param("h0_w", d, d);
  h0_b_ = Param("h0_b", 1, d);
  init_weight(h0_w_, rng);
  out_w_ = Param("out_w", 2 * d, v);
  out_b_ = Param("out_b", 1, v);
  init_weight(out_w_, rng);
}

std::vector<Param*> TermModel::params() {
  std::vector<Param*> out;
  out.push_back(&w_proj_);
  out.push_back(&order_embed_);
  for (auto& l : enc_) collect_encoder_layer(l, out);
  out.push_back(&dec_embed_);
  out.push_back(&gru_wz_);
  out.push_back(&gru_uz_);
  out.push_back(&gru_bz_);
  out.push_back(&gru_wr_);
  out.push_back(&gru_ur_);
  out.push_back(&gru_br_);
  out.push_back(&gru_wh_);
  out.push_back(&gru_uh_);
  out.push_back(&gru_bh_);
  out.push_back(&attn_w_);
  out.push_back(&attn_u_);
  out.push_back(&attn_v_);
  out.push_back(&h0_w_);
  out.push_back(&h0_b_);
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

Eigen::MatrixXd TermModel::embed_objects(
    const std::vector<ObjectFeature>& features) {
  if (features.empty()) throw DataError("empty feature list");
  Matrix x(static_cast<Eigen::Index>(features.size()), config_.d_model);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ObjectFeature& f = features[i];
    if (f.vector.size() != config_.d_in) {
      throw DataError("feature dimension mismatch: expected " +
                      std::to_string(config_.d_in) + ", got " +
                      std::to_string(f.vector.size()));
    }
    if (f.image_order < 1 || f.image_order > 5) {
      throw DataError("image order must be in [1,5]");
    }
    x.row(static_cast<Eigen::Index>(i)) =
        f.vector.transpose() * w_proj_.value +
        order_embed_.value.row(f.image_order - 1);
  }
  return x;
}

Var TermModel::encode_on_tape(Tape& t,
                              const std::vector<ObjectFeature>& features,
                              std::vector<int>* image_of_position) {
  if (features.empty()) throw DataError("empty feature list");
  Matrix raw(static_cast<Eigen::Index>(features.size()), config_.d_in);
  std::vector<int> orders;
  orders.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ObjectFeature& f = features[i];
    if (f.vector.size() != config_.d_in) {
      throw DataError("feature dimension mismatch: expected " +
                      std::to_string(config_.d_in) + ", got " +
                      std::to_string(f.vector.size()));
    }
    if (f.image_order < 1 || f.image_order > 5) {
      throw DataError("image order must be in [1,5]");
    }
    raw.row(static_cast<Eigen::Index>(i)) = f.vector.transpose();
    orders.push_back(f.image_order - 1);
    if (image_of_position) image_of_position->push_back(f.image_order - 1);
  }
  Var proj = ad::matmul(t.constant(std::move(raw)), t.leaf(w_proj_));
  Var order_rows = ad::gather_rows(t.leaf(order_embed_), orders);
  Var x = ad::add(proj, order_rows);
  for (auto& l : enc_) x = encoder_layer_forward(t, l, x);
  return x;
}

Eigen::MatrixXd TermModel::encode_objects(
    const std::vector<ObjectFeature>& features) {
  if (features.empty()) throw DataError("empty feature list");
  Tape t;
  return encode_on_tape(t, features, nullptr).value();
}

Var TermModel::decode_image_logprobs(Tape& t, Var memory,
                                     const std::vector<int>& positions,
                                     const std::vector<int>& dec_inputs) {
  int d = config_.d_model;
  int n = static_cast<int>(memory.value().rows());

  // Attention is restricted to this image's encoder states.
  Matrix mask = Matrix::Constant(1, n, kMaskNegative);
  for (int p : positions) mask(0, p) = 0.0;
  Var mask_c = t.constant(mask);

  // h0 from the mean of this image's states.
  Matrix sel = Matrix::Zero(1, n);
  for (int p : positions) sel(0, p) = 1.0 / static_cast<double>(positions.size());
  Var mean = ad::matmul(t.constant(std::move(sel)), memory);
  Var h = ad::tanh_v(
      ad::add_rowvec(ad::matmul(mean, t.leaf(h0_w_)), t.leaf(h0_b_)));

  Var mem_proj = ad::matmul(memory, t.leaf(attn_w_));
  Var emb = ad::gather_rows(t.leaf(dec_embed_), dec_inputs);
  Var ones = t.constant(Matrix::Ones(1, d));

  std::vector<Var> logit_rows;
  logit_rows.reserve(dec_inputs.size());
  for (std::size_t step = 0; step < dec_inputs.size(); ++step) {
    Var x = ad::slice_rows(emb, static_cast<int>(step), 1);
    Var z = ad::sigmoid(ad::add_rowvec(
        ad::add(ad::matmul(x, t.leaf(gru_wz_)), ad::matmul(h, t.leaf(gru_uz_))),
        t.leaf(gru_bz_)));
    Var r = ad::sigmoid(ad::add_rowvec(
        ad::add(ad::matmul(x, t.leaf(gru_wr_)), ad::matmul(h, t.leaf(gru_ur_))),
        t.leaf(gru_br_)));
    Var hbar = ad::tanh_v(ad::add_rowvec(
        ad::add(ad::matmul(x, t.leaf(gru_wh_)),
                ad::matmul(ad::mul(r, h), t.leaf(gru_uh_))),
        t.leaf(gru_bh_)));
    h = ad::add(ad::mul(ad::sub(ones, z), h), ad::mul(z, hbar));

    Var scores = ad::matmul_nt(
        t.leaf(attn_v_),
        ad::tanh_v(ad::add_rowvec(mem_proj, ad::matmul(h, t.leaf(attn_u_)))));
    Var attn = ad::softmax_rows(ad::add(scores, mask_c));
    Var context = ad::matmul(attn, memory);
    logit_rows.push_back(ad::add_rowvec(
        ad::matmul(ad::concat_cols(h, context), t.leaf(out_w_)),
        t.leaf(out_b_)));
  }
  return ad::log_softmax_rows(ad::concat_rows(logit_rows));
}

Var TermModel::example_loss(Tape& t, const TermExample& ex, int* token_count) {
  if (ex.images.empty() || ex.images.size() != ex.image_terms.size()) {
    throw DataError("term example must pair every image with a term list");
  }
  if (ex.images.size() > 5) throw DataError("term example has over 5 images");
  std::vector<ObjectFeature> features;
  std::vector<std::vector<int>> positions(ex.images.size());
  for (std::size_t img = 0; img < ex.images.size(); ++img) {
    if (ex.images[img].empty()) {
      throw DataError("empty feature list for image " + std::to_string(img));
    }
    for (const auto& f : select_top_k(ex.images[img], config_.top_k)) {
      ObjectFeature g = f;
      g.image_order = static_cast<int>(img) + 1;
      positions[img].push_back(static_cast<int>(features.size()));
      features.push_back(std::move(g));
    }
  }
  Var memory = encode_on_tape(t, features, nullptr);

  std::vector<Var> all_rows;
  std::vector<int> all_targets;
  for (std::size_t img = 0; img < ex.images.size(); ++img) {
    std::vector<int> target_ids = map_tokens(vocab_, ex.image_terms[img]);
    target_ids.push_back(Vocab::kEos);
    std::vector<int> dec_inputs;
    dec_inputs.push_back(Vocab::kBos);
    for (std::size_t i = 0; i + 1 < target_ids.size(); ++i) {
      dec_inputs.push_back(target_ids[i]);
    }
    all_rows.push_back(
        decode_image_logprobs(t, memory, positions[img], dec_inputs));
    all_targets.insert(all_targets.end(), target_ids.begin(),
                       target_ids.end());
  }
  if (token_count) *token_count = static_cast<int>(all_targets.size());
  return ad::nll_loss(ad::concat_rows(all_rows), std::move(all_targets));
}

Eigen::VectorXd TermModel::next_token_logprobs(
    const std::vector<std::vector<ObjectFeature>>& images, int image_index,
    const std::vector<int>& prefix) {
  if (images.empty()) throw DataError("no images given");
  if (image_index < 0 || image_index >= static_cast<int>(images.size())) {
    throw DataError("image index out of range");
  }
  if (static_cast<int>(prefix.size()) >= config_.max_len) {
    throw ConfigError("prefix length reached max_len");
  }
  std::vector<ObjectFeature> features;
  std::vector<std::vector<int>> positions(images.size());
  for (std::size_t img = 0; img < images.size(); ++img) {
    if (images[img].empty()) {
      throw DataError("empty feature list for image " + std::to_string(img));
    }
    for (const auto& f : select_top_k(images[img], config_.top_k)) {
      ObjectFeature g = f;
      g.image_order = static_cast<int>(img) + 1;
      positions[img].push_back(static_cast<int>(features.size()));
      features.push_back(std::move(g));
    }
  }
  Tape t;
  Var memory = encode_on_tape(t, features, nullptr);
  std::vector<int> dec_inputs;
  dec_inputs.push_back(Vocab::kBos);
  dec_inputs.insert(dec_inputs.end(), prefix.begin(), prefix.end());
  Var logprobs =
      decode_image_logprobs(t, memory, positions[image_index], dec_inputs);
  return logprobs.value().row(logprobs.value().rows() - 1).transpose();
}

std::vector<double> TermModel::fit(const std::vector<TermExample>& pairs,
                                   int epochs) {
  return fit_loop(params(), config_.learning_rate, pairs, epochs,
                  [this](Tape& t, const TermExample& ex, int* count) {
                    return example_loss(t, ex, count);
                  });
}

double TermModel::grad_check(const std::vector<TermExample>& batch,
                             double epsilon) {
  return grad_check_impl(params(), epsilon, [this, &batch](bool do_backward) {
    double total = 0.0;
    for (const auto& ex : batch) {
      Tape t;
      Var loss = example_loss(t, ex, nullptr);
      total += loss.value()(0, 0);
      if (do_backward) t.backward(loss);
    }
    return total;
  });
}

// ---------------------------------------------------------------------------
// StoryModel.

StoryModel StoryModel::create(const ModelConfig& config,
                              const std::vector<StoryExample>& corpus) {
  config.validate();
  StoryModel m;
  m.config_ = config;
  m.vocab_.add("<sep>");
  m.vocab_.add(".");
  long sentence_count = 0;
  long token_count = 0;
  for (const auto& ex : corpus) {
    for (const auto& tok : ex.path_tokens) m.vocab_.add(tok);
    long periods = 0;
    for (const auto& tok : ex.story_tokens) {
      m.vocab_.add(tok);
      if (tok == ".") ++periods;
    }
    token_count += static_cast<long>(ex.story_tokens.size());
    sentence_count += std::max(periods, 1L);
  }
  m.mean_sentence_len_ =
      sentence_count > 0
          ? static_cast<double>(token_count) / static_cast<double>(sentence_count)
          : 0.0;
  Rng rng(config.seed);
  m.init_params(rng);
  return m;
}

void StoryModel::init_params(Rng& rng) {
  int d = config_.d_model;
  int v = vocab_.size();
  enc_embed_ = Param("enc_embed", v, d);
  init_embedding(enc_embed_, rng);
  dec_embed_ = Param("dec_embed", v, d);
  init_embedding(dec_embed_, rng);
  enc_.resize(static_cast<std::size_t>(config_.layers));
  for (auto& l : enc_) init_encoder_layer(l, d, config_.heads, rng);
  dec_.resize(static_cast<std::size_t>(config_.layers));
  for (auto& l : dec_) init_decoder_layer(l, d, config_.heads, rng);
  out_w_ = Param("out_w", d, v);
  out_b_ = Param("out_b", 1, v);
  init_weight(out_w_, rng);
}

std::vector<Param*> StoryModel::params() {
  std::vector<Param*> out;
  out.push_back(&enc_embed_);
  out.push_back(&dec_embed_);
  for (auto& l : enc_) collect_encoder_layer(l, out);
  for (auto& l : dec_) collect_decoder_layer(l, out);
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

Var StoryModel::encode_on_tape(Tape& t, const std::vector<int>& src_ids) {
  if (src_ids.empty()) throw DataError("empty encoder input");
  if (static_cast<int>(src_ids.size()) > config_.max_len) {
    throw DataError("encoder input exceeds max_len");
  }
  int d = config_.d_model;
  Matrix pe(static_cast<Eigen::Index>(src_ids.size()), d);
  for (std::size_t i = 0; i < src_ids.size(); ++i) {
    pe.row(static_cast<Eigen::Index>(i)) =
        sinusoid_encoding(static_cast<double>(i), d).transpose();
  }
  Var x = ad::add(ad::gather_rows(t.leaf(enc_embed_), src_ids),
                  t.constant(std::move(pe)));
  for (auto& l : enc_) x = encoder_layer_forward(t, l, x);
  return x;
}

Var StoryModel::decode_logprobs(Tape& t, Var memory,
                                const std::vector<int>& dec_inputs,
                                int target_len) {
  int d = config_.d_model;
  int n = static_cast<int>(dec_inputs.size());
  Matrix pe(n, d);
  for (int i = 0; i < n; ++i) {
    // len - pos may go negative when decoding runs past the requested
    // length; the encoding extends naturally.
    pe.row(i) =
        sinusoid_encoding(static_cast<double>(target_len - i), d).transpose();
  }
  Var x = ad::add(ad::gather_rows(t.leaf(dec_embed_), dec_inputs),
                  t.constant(std::move(pe)));
  Matrix mask = causal_mask(n);
  for (auto& l : dec_) {
    x = decoder_layer_forward(t, l, x, memory, mask);
  }
  Var logits =
      ad::add_rowvec(ad::matmul(x, t.leaf(out_w_)), t.leaf(out_b_));
  return ad::log_softmax_rows(logits);
}

Var StoryModel::example_loss(Tape& t, const StoryExample& ex,
                             int* token_count) {
  if (ex.path_tokens.empty() || ex.story_tokens.empty()) {
    throw DataError("story example requires nonempty path and story");
  }
  if (static_cast<int>(ex.story_tokens.size()) + 1 > config_.max_len) {
    throw DataError("story exceeds max_len");
  }
  std::vector<int> src_ids = map_tokens(vocab_, ex.path_tokens);
  std::vector<int> story_ids = map_tokens(vocab_, ex.story_tokens);
  int target_len = static_cast<int>(story_ids.size());
  std::vector<int> dec_inputs;
  dec_inputs.push_back(Vocab::kBos);
  dec_inputs.insert(dec_inputs.end(), story_ids.begin(), story_ids.end());
  std::vector<int> targets = story_ids;
  targets.push_back(Vocab::kEos);

  Var memory = encode_on_tape(t, src_ids);
  Var logprobs = decode_logprobs(t, memory, dec_inputs, target_len);
  if (token_count) *token_count = static_cast<int>(targets.size());
  return ad::nll_loss(logprobs, std::move(targets));
}

Eigen::VectorXd StoryModel::next_token_logprobs(const std::vector<int>& src_ids,
                                                const std::vector<int>& prefix,
                                                int target_len) {
  if (static_cast<int>(prefix.size()) >= config_.max_len) {
    throw ConfigError("prefix length reached max_len");
  }
  Tape t;
  Var memory = encode_on_tape(t, src_ids);
  std::vector<int> dec_inputs;
  dec_inputs.push_back(Vocab::kBos);
  dec_inputs.insert(dec_inputs.end(), prefix.begin(), prefix.end());
  Var logprobs = decode_logprobs(t, memory, dec_inputs, target_len);
  return logprobs.value().row(logprobs.value().rows() - 1).transpose();
}

std::vector<double> StoryModel::fit(const std::vector<StoryExample>& pairs,
                                    int epochs) {
  auto history = fit_loop(params(), config_.learning_rate, pairs, epochs,
                          [this](Tape& t, const StoryExample& ex, int* count) {
                            return example_loss(t, ex, count);
                          });
  if (epochs > 0) trained_ = true;
  return history;
}

double StoryModel::grad_check(const std::vector<StoryExample>& batch,
                              double epsilon) {
  return grad_check_impl(params(), epsilon, [this, &batch](bool do_backward) {
    double total = 0.0;
    for (const auto& ex : batch) {
      Tape t;
      Var loss = example_loss(t, ex, nullptr);
      total += loss.value()(0, 0);
      if (do_backward) t.backward(loss);
    }
    return total;
  });
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["d_in"] = c.d_in;
  j["top_k"] = c.top_k;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["max_len"] = c.max_len;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.layers = j.at("layers").get<int>();
  c.d_in = j.at("d_in").get<int>();
  c.top_k = j.at("top_k").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

nlohmann::json params_to_json(const std::vector<Param*>& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Param* p : params) {
    nlohmann::json jp;
    jp["name"] = p->name;
    jp["rows"] = p->value.rows();
    jp["cols"] = p->value.cols();
    // Column-major flattening, matching Eigen's default layout.
    std::vector<double> data(p->value.data(),
                             p->value.data() + p->value.size());
    jp["data"] = std::move(data);
    arr.push_back(std::move(jp));
  }
  return arr;
}

void params_from_json(const nlohmann::json& arr,
                      const std::vector<Param*>& params) {
  if (arr.size() != params.size()) {
    throw DataError("checkpoint: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& jp = arr[i];
    Param* p = params[i];
    if (jp.at("rows").get<Eigen::Index>() != p->value.rows() ||
        jp.at("cols").get<Eigen::Index>() != p->value.cols()) {
      throw DataError("checkpoint: shape mismatch for parameter " +
                      jp.at("name").get<std::string>());
    }
    const auto& data = jp.at("data");
    if (static_cast<Eigen::Index>(data.size()) != p->value.size()) {
      throw DataError("checkpoint: data size mismatch for parameter " +
                      jp.at("name").get<std::string>());
    }
    Eigen::Index k = 0;
    for (const auto& v : data) p->value.data()[k++] = v.get<double>();
  }
}

nlohmann::json read_checkpoint(std::istream& in, const std::string& kind,
                               const ModelConfig* expected) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint parse failure: ") + e.what());
  }
  if (!j.is_object() || j.value("format_version", -1) != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported format_version");
  }
  if (j.value("kind", "") != kind) {
    throw DataError("checkpoint: expected kind \"" + kind + "\", got \"" +
                    j.value("kind", "") + "\"");
  }
  if (expected) {
    ModelConfig embedded = config_from_json(j.at("config"));
    if (!embedded.same_shape(*expected)) {
      throw DataError("checkpoint: config shape mismatch");
    }
  }
  return j;
}

void load_vocab(const nlohmann::json& j, Vocab& vocab) {
  const auto& tokens = j.at("vocab");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string tok = tokens[i].get<std::string>();
    if (static_cast<int>(i) < vocab.size()) {
      if (vocab.token(static_cast<int>(i)) != tok) {
        throw DataError("checkpoint: reserved vocab entry mismatch");
      }
      continue;
    }
    vocab.add(tok);
  }
}

}  // namespace

void TermModel::save(std::ostream& out) const {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "term";
  j["config"] = config_to_json(config_);
  j["vocab"] = vocab_.id_to_token;
  j["params"] = params_to_json(const_cast<TermModel*>(this)->params());
  out << j.dump() << "\n";
}

void TermModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  save(out);
}

TermModel TermModel::load(std::istream& in, const ModelConfig* expected) {
  nlohmann::json j = read_checkpoint(in, "term", expected);
  TermModel m;
  m.config_ = config_from_json(j.at("config"));
  m.config_.validate();
  load_vocab(j, m.vocab_);
  Rng rng(m.config_.seed);
  m.init_params(rng);
  params_from_json(j.at("params"), m.params());
  return m;
}

TermModel TermModel::load_file(const std::string& path,
                               const ModelConfig* expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load(in, expected);
}

void StoryModel::save(std::ostream& out) const {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "story";
  j["config"] = config_to_json(config_);
  j["vocab"] = vocab_.id_to_token;
  j["mean_sentence_len"] = mean_sentence_len_;
  j["trained"] = trained_;
  j["params"] = params_to_json(const_cast<StoryModel*>(this)->params());
  out << j.dump() << "\n";
}

void StoryModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  save(out);
}

StoryModel StoryModel::load(std::istream& in, const ModelConfig* expected) {
  nlohmann::json j = read_checkpoint(in, "story", expected);
  StoryModel m;
  m.config_ = config_from_json(j.at("config"));
  m.config_.validate();
  m.vocab_.add("<sep>");
  m.vocab_.add(".");
  load_vocab(j, m.vocab_);
  m.mean_sentence_len_ = j.at("mean_sentence_len").get<double>();
  m.trained_ = j.at("trained").get<bool>();
  Rng rng(m.config_.seed);
  m.init_params(rng);
  params_from_json(j.at("params"), m.params());
  return m;
}

StoryModel StoryModel::load_file(const std::string& path,
                                 const ModelConfig* expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load(in, expected);
}

// ---------------------------------------------------------------------------
// Linear-softmax control.

double grad_check_linear_control(double epsilon) {
  const int features = 5;
  const int classes = 4;
  const int rows = 3;
  Rng rng(7);
  Matrix x(rows, features);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      x(i, j) = rng.uniform(-1.0, 1.0);
    }
  }
  std::vector<int> targets = {0, 1, 2};
  Param w("w", features, classes);
  Param b("b", 1, classes);
  w.init_uniform(rng, -0.5, 0.5);
  b.init_uniform(rng, -0.5, 0.5);

  auto loss_fn = [&](bool do_backward) {
    Tape t;
    Var logits = ad::add_rowvec(ad::matmul(t.constant(x), t.leaf(w)), t.leaf(b));
    Var loss = ad::nll_loss(ad::log_softmax_rows(logits), targets);
    if (do_backward) t.backward(loss);
    return loss.value()(0, 0);
  };

  // Analytic gradients via the tape.
  w.zero_grad();
  b.zero_grad();
  loss_fn(true);
  Matrix gw = w.grad;
  Matrix gb = b.grad;

  // Closed form: d logits = (softmax - onehot) / rows.
  Matrix logits = x * w.value;
  logits.rowwise() += b.value.row(0);
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double mx = p.row(i).maxCoeff();
    Eigen::RowVectorXd e = (p.row(i).array() - mx).exp().matrix();
    p.row(i) = e / e.sum();
  }
  Matrix dlogits = p;
  for (int i = 0; i < rows; ++i) dlogits(i, targets[i]) -= 1.0;
  dlogits /= static_cast<double>(rows);
  Matrix cw = x.transpose() * dlogits;
  Matrix cb = dlogits.colwise().sum();

  double max_rel = 0.0;
  auto compare = [&max_rel](double a, double bb) {
    double rel = std::abs(a - bb) / (std::abs(a) + std::abs(bb) + 1e-12);
    max_rel = std::max(max_rel, rel);
  };
  for (Eigen::Index j = 0; j < gw.cols(); ++j) {
    for (Eigen::Index i = 0; i < gw.rows(); ++i) compare(gw(i, j), cw(i, j));
  }
  for (Eigen::Index j = 0; j < gb.cols(); ++j) compare(gb(0, j), cb(0, j));

  // Central differences over every entry.
  auto fd_check = [&](Param& param, const Matrix& analytic) {
    for (Eigen::Index j = 0; j < param.value.cols(); ++j) {
      for (Eigen::Index i = 0; i < param.value.rows(); ++i) {
        double saved = param.value(i, j);
        param.value(i, j) = saved + epsilon;
        double lp = loss_fn(false);
        param.value(i, j) = saved - epsilon;
        double lm = loss_fn(false);
        param.value(i, j) = saved;
        compare(analytic(i, j), (lp - lm) / (2.0 * epsilon));
      }
    }
  };
  fd_check(w, gw);
  fd_check(b, gb);
  w.zero_grad();
  b.zero_grad();
  return max_rel;
}

}  // namespace storygen
