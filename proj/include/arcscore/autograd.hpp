#pragma once

// Reverse-mode differentiation over whole matrices.
//
// A Tape records every op of one forward pass. Frozen parameters and data enter
// as constants, so backward() only walks the part of the graph that leads to a
// trainable parameter. Each forward pass owns its tape; parameters are read,
// never written, which keeps concurrent forwards over shared weights safe.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "arcscore/tensor.hpp"

namespace arcscore::nn {

struct Var {
  std::int32_t index = -1;
  bool valid() const { return index >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Registering the same parameter twice returns the same node.
  Var parameter(const Parameter& p, bool trainable = true);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.index)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.index)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates to every leaf.
  void backward(Var loss);

  // Gradient of the last backward() w.r.t. p, or nullptr if p received none.
  const Matrix* gradient(const Parameter& p) const;

  // Op-author interface.
  Var record(Matrix value, bool requires_grad, BackwardFn fn);

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[static_cast<std::size_t>(v.index)];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
      node.grad = g;
      node.has_grad = true;
    } else {
      node.grad += g;
    }
  }

  // Adds g into a row block of v's gradient, allocating a zero gradient first if needed.
  template <typename Derived>
  void accumulate_rows(Var v, Eigen::Index first_row, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[static_cast<std::size_t>(v.index)];
    if (!node.requires_grad) return;
    ensure_grad(node);
    node.grad.middleRows(first_row, g.rows()) += g;
  }

  template <typename Derived>
  void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[static_cast<std::size_t>(v.index)];
    if (!node.requires_grad) return;
    ensure_grad(node);
    node.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  template <typename Derived>
  void accumulate_row(Var v, Eigen::Index row, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[static_cast<std::size_t>(v.index)];
    if (!node.requires_grad) return;
    ensure_grad(node);
    node.grad.row(row) += g;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  static void ensure_grad(Node& node) {
    if (!node.has_grad) {
      node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
      node.has_grad = true;
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::int32_t> parameter_nodes_;
};

// ---- ops ------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b);
// x * w + b, with b a 1 x out row broadcast over rows of x.
Var linear(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// s * a where s is a 1x1 node.
Var scale_by(Tape& t, Var a, Var s);

Var gelu(Tape& t, Var x);
Var leaky_relu(Tape& t, Var x, double slope);
Var clip(Tape& t, Var x, double lo, double hi);
Var dropout(Tape& t, Var x, double rate, std::mt19937_64& rng);

// Row-wise layer normalization with gain/bias rows.
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

// Selects rows of a table; repeated ids scatter-add in backward.
Var gather_rows(Tape& t, Var table, std::span<const int> ids);
Var mean_rows(Tape& t, Var x);
Var slice_cols(Tape& t, Var x, Eigen::Index first, Eigen::Index count);

// Multi-head scaled dot-product attention over pre-projected q, k, v.
// With causal = true, query row i attends to key rows <= i (requires equal lengths).
Var attention(Tape& t, Var q, Var k, Var v, int heads, bool causal);

// y[t] = bias + sum_j x[t - j*dilation] * W_j, zero history before t = 0.
// weight stacks the taps: rows [j*Cin, (j+1)*Cin) hold W_j (Cin x Cout); tap 0 is lag 0.
Var causal_conv1d(Tape& t, Var x, Var weight, Var bias, int kernel, int dilation);

// Sum over rows with target >= 0 of -log softmax(logits_row)[target]; negative targets are skipped.
Var cross_entropy_sum(Tape& t, Var logits, std::span<const int> targets);

// (1/T) sum_t ( ||r_t||_2^2 + lambda ||r_t||_1 ),  r = pred - truth.
Var emo_loss(Tape& t, Var pred, const Matrix& truth, double lambda);

// Plain-matrix helpers shared with the non-tape inference paths.
double gelu_value(double x);
Matrix layer_norm_rows(const Matrix& x, const RowVector& gain, const RowVector& bias, double eps = 1e-5);

}  // namespace arcscore::nn
