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

#include "storygen/autodiff.hpp"

#include <cmath>
#include <utility>

#include "storygen/error.hpp"

namespace storygen::ad {

// Private access shim for the op free functions; a friend of Tape.
struct detail_access {
  static bool needs_grad(Var v) { return v.tape->nodes_[v.id].needs_grad; }
  static int push(Tape& t, Matrix m, bool ng) {
    return t.push(std::move(m), ng);
  }
  static void set_backprop(Tape& t, int id, std::function<void()> f) {
    t.nodes_[id].backprop = std::move(f);
  }
  static void add_grad(Var v, const Matrix& g) {
    v.tape->nodes_[v.id].grad += g;
  }
  static const Matrix& grad_of(Var v) { return v.tape->nodes_[v.id].grad; }
};

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool ok, const char* msg) {
  if (!ok) throw NumericError(msg);
}

bool needs_grad(Var v) { return detail_access::needs_grad(v); }
void add_grad(Var v, const Matrix& g) { detail_access::add_grad(v, g); }

// bwd receives (d_out, a, out).
Var make_unary(Var a, Matrix value,
               std::function<void(const Matrix&, Var, Var)> bwd) {
  Tape& t = *a.tape;
  bool ng = needs_grad(a);
  Var out{&t, detail_access::push(t, std::move(value), ng)};
  if (ng) {
    detail_access::set_backprop(t, out.id,
                                [out, a, bwd = std::move(bwd)]() {
                                  bwd(detail_access::grad_of(out), a, out);
                                });
  }
  return out;
}

// bwd receives (d_out, a, b).
Var make_binary(Var a, Var b, Matrix value,
                std::function<void(const Matrix&, Var, Var)> bwd) {
  Tape& t = *a.tape;
  require(b.tape == &t, "op: operands from different tapes");
  bool ng = needs_grad(a) || needs_grad(b);
  Var out{&t, detail_access::push(t, std::move(value), ng)};
  if (ng) {
    detail_access::set_backprop(t, out.id,
                                [out, a, b, bwd = std::move(bwd)]() {
                                  bwd(detail_access::grad_of(out), a, b);
                                });
  }
  return out;
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }

int Tape::push(Matrix value, bool needs_grad) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Matrix value) {
  return Var{this, push(std::move(value), false)};
}

Var Tape::leaf(Param& p) {
  int id = push(p.value, true);
  Param* pp = &p;
  nodes_[id].backprop = [this, id, pp]() { pp->grad += nodes_[id].grad; };
  return Var{this, id};
}

void Tape::backward(Var root) {
  require(root.tape == this, "backward: node from a different tape");
  require(nodes_[root.id].value.size() == 1, "backward: root must be 1x1");
  nodes_[root.id].grad(0, 0) = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.backprop) n.backprop();
  }
}

Var add(Var a, Var b) {
  require(a.value().rows() == b.value().rows() &&
              a.value().cols() == b.value().cols(),
          "add: shape mismatch");
  return make_binary(a, b, a.value() + b.value(),
                     [](const Matrix& g, Var a, Var b) {
                       if (needs_grad(a)) add_grad(a, g);
                       if (needs_grad(b)) add_grad(b, g);
                     });
}

Var add_rowvec(Var a, Var b) {
  require(b.value().rows() == 1 && a.value().cols() == b.value().cols(),
          "add_rowvec: b must be 1 x cols(a)");
  Matrix out = a.value();
  out.rowwise() += b.value().row(0);
  return make_binary(a, b, std::move(out), [](const Matrix& g, Var a, Var b) {
    if (needs_grad(a)) add_grad(a, g);
    if (needs_grad(b)) add_grad(b, g.colwise().sum());
  });
}

Var sub(Var a, Var b) {
  require(a.value().rows() == b.value().rows() &&
              a.value().cols() == b.value().cols(),
          "sub: shape mismatch");
  return make_binary(a, b, a.value() - b.value(),
                     [](const Matrix& g, Var a, Var b) {
                       if (needs_grad(a)) add_grad(a, g);
                       if (needs_grad(b)) add_grad(b, -g);
                     });
}

Var mul(Var a, Var b) {
  require(a.value().rows() == b.value().rows() &&
              a.value().cols() == b.value().cols(),
          "mul: shape mismatch");
  return make_binary(a, b, a.value().cwiseProduct(b.value()),
                     [](const Matrix& g, Var a, Var b) {
                       if (needs_grad(a)) add_grad(a, g.cwiseProduct(b.value()));
                       if (needs_grad(b)) add_grad(b, g.cwiseProduct(a.value()));
                     });
}

Var scale(Var a, double s) {
  return make_unary(a, a.value() * s, [s](const Matrix& g, Var a, Var) {
    add_grad(a, g * s);
  });
}

Var matmul(Var a, Var b) {
  require(a.value().cols() == b.value().rows(), "matmul: inner dim mismatch");
  return make_binary(a, b, a.value() * b.value(),
                     [](const Matrix& g, Var a, Var b) {
                       if (needs_grad(a)) add_grad(a, g * b.value().transpose());
                       if (needs_grad(b)) add_grad(b, a.value().transpose() * g);
                     });
}

Var matmul_nt(Var a, Var b) {
  require(a.value().cols() == b.value().cols(), "matmul_nt: dim mismatch");
  return make_binary(a, b, a.value() * b.value().transpose(),
                     [](const Matrix& g, Var a, Var b) {
                       if (needs_grad(a)) add_grad(a, g * b.value());
                       if (needs_grad(b)) add_grad(b, g.transpose() * a.value());
                     });
}

Var softmax_rows(Var a) {
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double mx = y.row(i).maxCoeff();
    Eigen::ArrayXd e = (y.row(i).array() - mx).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var out) {
    const Matrix& y = out.value();
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double dot = g.row(i).dot(y.row(i));
      dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    add_grad(a, dx);
  });
}

Var log_softmax_rows(Var a) {
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double mx = y.row(i).maxCoeff();
    Eigen::ArrayXd shifted = y.row(i).array() - mx;
    double lse = std::log(shifted.exp().sum());
    y.row(i) = (shifted - lse).matrix();
  }
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var out) {
    const Matrix& logy = out.value();
    Matrix dx(logy.rows(), logy.cols());
    for (Eigen::Index i = 0; i < logy.rows(); ++i) {
      double gsum = g.row(i).sum();
      dx.row(i) = g.row(i) - (logy.row(i).array().exp() * gsum).matrix();
    }
    add_grad(a, dx);
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias) {
  require(gain.value().rows() == 1 && bias.value().rows() == 1 &&
              gain.value().cols() == x.value().cols() &&
              bias.value().cols() == x.value().cols(),
          "layer_norm_rows: gain/bias must be 1 x cols(x)");
  const Matrix& xv = x.value();
  Eigen::Index rows = xv.rows(), cols = xv.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_sigma(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mu = xv.row(i).mean();
    double var = (xv.row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_sigma(i) = is;
    xhat.row(i) = ((xv.row(i).array() - mu) * is).matrix();
  }
  Matrix y(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    y.row(i) =
        xhat.row(i).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  }

  Tape& t = *x.tape;
  require(gain.tape == &t && bias.tape == &t,
          "layer_norm_rows: operands from different tapes");
  bool ng = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  Var out{&t, detail_access::push(t, std::move(y), ng)};
  if (ng) {
    // xhat and inv_sigma persist in the closure for the reverse pass.
    detail_access::set_backprop(t, out.id, [out, x, gain, bias,
                                            xhat = std::move(xhat),
                                            inv_sigma = std::move(inv_sigma)]() {
      const Matrix& g = detail_access::grad_of(out);
      if (needs_grad(gain)) add_grad(gain, g.cwiseProduct(xhat).colwise().sum());
      if (needs_grad(bias)) add_grad(bias, g.colwise().sum());
      if (needs_grad(x)) {
        Eigen::Index rows = g.rows(), cols = g.cols();
        Matrix dx(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
          Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(gain.value().row(0));
          double m1 = dxhat.mean();
          double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
          dx.row(i) =
              inv_sigma(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
        }
        add_grad(x, dx);
      }
    });
  }
  return out;
}

Var gelu(Var a) {
  Matrix y = a.value().unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  });
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var) {
    Matrix d = a.value().unaryExpr([](double v) {
      return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
             v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    });
    add_grad(a, g.cwiseProduct(d));
  });
}

Var sigmoid(Var a) {
  Matrix y = a.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
  });
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var out) {
    const Matrix& y = out.value();
    add_grad(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh_v(Var a) {
  Matrix y = a.value().array().tanh().matrix();
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var out) {
    const Matrix& y = out.value();
    add_grad(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var concat_cols(Var a, Var b) {
  require(a.value().rows() == b.value().rows(), "concat_cols: row mismatch");
  Matrix y(a.value().rows(), a.value().cols() + b.value().cols());
  y << a.value(), b.value();
  return make_binary(a, b, std::move(y), [](const Matrix& g, Var a, Var b) {
    Eigen::Index ca = a.value().cols();
    if (needs_grad(a)) add_grad(a, g.leftCols(ca));
    if (needs_grad(b)) add_grad(b, g.rightCols(g.cols() - ca));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty part list");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = 0;
  Eigen::Index cols = parts[0].value().cols();
  bool ng = false;
  for (const Var& p : parts) {
    require(p.tape == &t, "concat_rows: parts from different tapes");
    require(p.value().cols() == cols, "concat_rows: column mismatch");
    rows += p.value().rows();
    ng = ng || needs_grad(p);
  }
  Matrix y(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    y.middleRows(r, p.value().rows()) = p.value();
    r += p.value().rows();
  }
  Var out{&t, detail_access::push(t, std::move(y), ng)};
  if (ng) {
    detail_access::set_backprop(t, out.id, [out, captured = parts]() {
      const Matrix& g = detail_access::grad_of(out);
      Eigen::Index r = 0;
      for (const Var& p : captured) {
        Eigen::Index nr = p.value().rows();
        if (needs_grad(p)) add_grad(p, g.middleRows(r, nr));
        r += nr;
      }
    });
  }
  return out;
}

Var slice_rows(Var a, int start, int count) {
  require(start >= 0 && count >= 1 &&
              start + count <= static_cast<int>(a.value().rows()),
          "slice_rows: out of range");
  Matrix y = a.value().middleRows(start, count);
  return make_unary(a, std::move(y),
                    [start, count](const Matrix& g, Var a, Var) {
                      Matrix dx =
                          Matrix::Zero(a.value().rows(), a.value().cols());
                      dx.middleRows(start, count) = g;
                      add_grad(a, dx);
                    });
}

Var gather_rows(Var table, std::vector<int> ids) {
  for (int id : ids) {
    require(id >= 0 && id < static_cast<int>(table.value().rows()),
            "gather_rows: id out of range");
  }
  Matrix y(static_cast<Eigen::Index>(ids.size()), table.value().cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    y.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  return make_unary(table, std::move(y),
                    [ids = std::move(ids)](const Matrix& g, Var table, Var) {
                      Matrix dt = Matrix::Zero(table.value().rows(),
                                               table.value().cols());
                      for (std::size_t i = 0; i < ids.size(); ++i) {
                        dt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                      }
                      add_grad(table, dt);
                    });
}

Var sum_all(Var a) {
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var) {
    add_grad(a, Matrix::Constant(a.value().rows(), a.value().cols(), g(0, 0)));
  });
}

Var mean_all(Var a) {
  Matrix y(1, 1);
  y(0, 0) = a.value().mean();
  return make_unary(a, std::move(y), [](const Matrix& g, Var a, Var) {
    double s = g(0, 0) / static_cast<double>(a.value().size());
    add_grad(a, Matrix::Constant(a.value().rows(), a.value().cols(), s));
  });
}

Var nll_loss(Var log_probs, std::vector<int> targets) {
  require(static_cast<Eigen::Index>(targets.size()) == log_probs.value().rows(),
          "nll_loss: one target per row required");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require(targets[i] >= 0 &&
                targets[i] < static_cast<int>(log_probs.value().cols()),
            "nll_loss: target out of range");
  }
  Matrix y(1, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    total -= log_probs.value()(static_cast<Eigen::Index>(i), targets[i]);
  }
  y(0, 0) = total / static_cast<double>(targets.size());
  return make_unary(
      log_probs, std::move(y),
      [targets = std::move(targets)](const Matrix& g, Var lp, Var) {
        Matrix dx = Matrix::Zero(lp.value().rows(), lp.value().cols());
        double s = g(0, 0) / static_cast<double>(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) {
          dx(static_cast<Eigen::Index>(i), targets[i]) -= s;
        }
        add_grad(lp, dx);
      });
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  double lr = config_.lr;
  if (config_.schedule && config_.warmup > 0) {
    double t = static_cast<double>(t_);
    double w = static_cast<double>(config_.warmup);
    lr *= std::min(1.0, t / w) * std::sqrt(w / std::max(t, w));
  }
  double bc1 = 1.0 - std::pow(config_.beta1, t_);
  double bc2 = 1.0 - std::pow(config_.beta2, t_);
  for (Param* p : params_) {
    p->adam_m = config_.beta1 * p->adam_m + (1.0 - config_.beta1) * p->grad;
    p->adam_v =
        config_.beta2 * p->adam_v + (1.0 - config_.beta2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr * (p->adam_m / bc1).array() /
                        ((p->adam_v / bc2).array().sqrt() + config_.eps);
    p->zero_grad();
  }
}

}  // namespace storygen::ad
