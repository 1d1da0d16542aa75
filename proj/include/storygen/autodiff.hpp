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
// Tape-based reverse-mode automatic differentiation over dense double
// matrices. One Tape per forward pass; parameters live outside the tape and
// accumulate gradients across passes until zeroed.

#ifndef STORYGEN_AUTODIFF_HPP_
#define STORYGEN_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace storygen::ad {

using Matrix = Eigen::MatrixXd;

// Deterministic uniform source. The 53-bit construction gives the same
// doubles on every platform with IEEE-754 binary64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;  // [0, 1)
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next_u64() { return eng_(); }
  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 eng_;
};

// A trainable tensor with its gradient accumulator and Adam state.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        adam_m(Matrix::Zero(rows, cols)),
        adam_v(Matrix::Zero(rows, cols)) {}

  void init_uniform(Rng& rng, double lo, double hi) {
    for (Eigen::Index j = 0; j < value.cols(); ++j)
      for (Eigen::Index i = 0; i < value.rows(); ++i)
        value(i, j) = rng.uniform(lo, hi);
  }
  void zero_grad() { grad.setZero(); }
};

class Tape;

// Handle to a tape node. Cheap to copy; valid while its tape is alive.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  // Non-differentiable input.
  Var constant(Matrix value);
  // Differentiable leaf bound to an external parameter; backward() adds the
  // node gradient into p.grad.
  Var leaf(Param& p);

  // Reverse pass from a 1x1 root, seeding d(root) = 1.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct detail_access;
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backprop;  // may be empty
    bool needs_grad = false;
  };

  int push(Matrix value, bool needs_grad);
  Node& node(int id) { return nodes_[id]; }

  std::vector<Node> nodes_;
};

// Elementwise and linear-algebra ops. All return new nodes on the same tape.
Var add(Var a, Var b);                 // same shape
Var add_rowvec(Var a, Var b);          // b is 1 x C, broadcast over rows
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // Hadamard
Var scale(Var a, double s);
Var matmul(Var a, Var b);              // A B
Var matmul_nt(Var a, Var b);           // A B^T
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias);  // gain, bias are 1 x C
Var gelu(Var a);                       // exact erf form
Var sigmoid(Var a);
Var tanh_v(Var a);
Var concat_cols(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, int start, int count);
Var gather_rows(Var table, std::vector<int> ids);
Var sum_all(Var a);                    // 1x1
Var mean_all(Var a);                   // 1x1
// Mean over rows of -log_probs(i, targets[i]); log_probs must already be
// row-normalized log probabilities.
Var nll_loss(Var log_probs, std::vector<int> targets);

// Adam with optional warmup plus inverse-square-root decay:
// lr_t = lr * min(1, t/warmup) * sqrt(warmup / max(t, warmup)).
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup = 100;
  bool schedule = true;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig config)
      : params_(std::move(params)), config_(config) {}

  // Applies accumulated gradients in registration order, then zeroes them.
  void step();
  void zero_grad();
  int steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig config_;
  int t_ = 0;
};

}  // namespace storygen::ad

#endif  // STORYGEN_AUTODIFF_HPP_
