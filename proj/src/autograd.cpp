#include "arcscore/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "arcscore/errors.hpp"

namespace arcscore::nn {

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(const Parameter& p, bool trainable) {
  if (!trainable) return constant(p.value);
  if (auto it = parameter_nodes_.find(&p); it != parameter_nodes_.end()) return Var{it->second};
  Var v = record(p.value, true, nullptr);
  parameter_nodes_.emplace(&p, v.index);
  return v;
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  Node& root = nodes_[static_cast<std::size_t>(loss.index)];
  if (root.value.size() != 1) throw ShapeError("backward() needs a 1x1 loss");
  if (!root.requires_grad) return;
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  root.grad = Matrix::Ones(1, 1);
  root.has_grad = true;
  for (std::int32_t i = loss.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

const Matrix* Tape::gradient(const Parameter& p) const {
  auto it = parameter_nodes_.find(&p);
  if (it == parameter_nodes_.end()) return nullptr;
  const Node& n = nodes_[static_cast<std::size_t>(it->second)];
  return n.has_grad ? &n.grad : nullptr;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out = av * bv;
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape& tape, const Matrix& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * tape.value(b).transpose());
    if (tape.requires_grad(b)) tape.accumulate(b, tape.value(a).transpose() * g);
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Matrix& xv = t.value(x);
  const Matrix& wv = t.value(w);
  const Matrix& bv = t.value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ShapeError("linear: incompatible shapes");
  }
  Matrix out = xv * wv;
  out.rowwise() += bv.row(0);
  const bool rg = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b);
  return t.record(std::move(out), rg, [x, w, b](Tape& tape, const Matrix& g) {
    if (tape.requires_grad(x)) tape.accumulate(x, g * tape.value(w).transpose());
    if (tape.requires_grad(w)) tape.accumulate(w, tape.value(x).transpose() * g);
    if (tape.requires_grad(b)) tape.accumulate(b, g.colwise().sum());
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a) + t.value(b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape& tape, const Matrix& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = s * t.value(a);
  return t.record(std::move(out), t.requires_grad(a),
                  [a, s](Tape& tape, const Matrix& g) { tape.accumulate(a, s * g); });
}

Var scale_by(Tape& t, Var a, Var s) {
  if (t.value(s).size() != 1) throw ShapeError("scale_by: scale must be 1x1");
  Matrix out = t.value(s)(0, 0) * t.value(a);
  const bool rg = t.requires_grad(a) || t.requires_grad(s);
  return t.record(std::move(out), rg, [a, s](Tape& tape, const Matrix& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, tape.value(s)(0, 0) * g);
    if (tape.requires_grad(s)) {
      Matrix ds(1, 1);
      ds(0, 0) = g.cwiseProduct(tape.value(a)).sum();
      tape.accumulate(s, ds);
    }
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Var gelu(Tape& t, Var x) {
  Matrix out = t.value(x).unaryExpr([](double v) { return gelu_value(v); });
  return t.record(std::move(out), t.requires_grad(x), [x](Tape& tape, const Matrix& g) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = tape.value(x).unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    tape.accumulate(x, g.cwiseProduct(d));
  });
}

Var leaky_relu(Tape& t, Var x, double slope) {
  Matrix out = t.value(x).unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return t.record(std::move(out), t.requires_grad(x), [x, slope](Tape& tape, const Matrix& g) {
    Matrix d = tape.value(x).unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    tape.accumulate(x, g.cwiseProduct(d));
  });
}

Var clip(Tape& t, Var x, double lo, double hi) {
  Matrix out = t.value(x).cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(out), t.requires_grad(x), [x, lo, hi](Tape& tape, const Matrix& g) {
    Matrix d = tape.value(x).unaryExpr([lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
    tape.accumulate(x, g.cwiseProduct(d));
  });
}

Var dropout(Tape& t, Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  const Matrix& xv = t.value(x);
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  Matrix out = xv.cwiseProduct(mask);
  return t.record(std::move(out), t.requires_grad(x), [x, mask = std::move(mask)](Tape& tape, const Matrix& g) {
    tape.accumulate(x, g.cwiseProduct(mask));
  });
}

Matrix layer_norm_rows(const Matrix& x, const RowVector& gain, const RowVector& bias, double eps) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((x.row(r).array() - mean) * inv).matrix().cwiseProduct(gain) + bias;
  }
  return out;
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gain);
  const Matrix& bv = t.value(bias);
  if (gv.rows() != 1 || gv.cols() != xv.cols() || bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("layer_norm: gain/bias must be 1 x cols");
  }
  const Eigen::Index rows = xv.rows();
  Matrix xhat(rows, xv.cols());
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat;
  for (Eigen::Index r = 0; r < rows; ++r) out.row(r) = xhat.row(r).cwiseProduct(gv.row(0)) + bv.row(0);
  const bool rg = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
  return t.record(std::move(out), rg,
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tape, const Matrix& g) {
                    if (tape.requires_grad(gain)) tape.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                    if (tape.requires_grad(bias)) tape.accumulate(bias, g.colwise().sum());
                    if (!tape.requires_grad(x)) return;
                    const RowVector gv = tape.value(gain).row(0);
                    const double n = static_cast<double>(xhat.cols());
                    Matrix dx(xhat.rows(), xhat.cols());
                    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                      const RowVector dxhat = g.row(r).cwiseProduct(gv);
                      const double m1 = dxhat.sum() / n;
                      const double m2 = dxhat.cwiseProduct(xhat.row(r)).sum() / n;
                      dx.row(r) = inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                    }
                    tape.accumulate(x, dx);
                  });
}

Var gather_rows(Tape& t, Var table, std::span<const int> ids) {
  const Matrix& tv = t.value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tv.rows()) throw ShapeError("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(r)) = tv.row(ids[r]);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return t.record(std::move(out), t.requires_grad(table),
                  [table, saved = std::move(saved)](Tape& tape, const Matrix& g) {
                    for (std::size_t r = 0; r < saved.size(); ++r) {
                      tape.accumulate_row(table, saved[r], g.row(static_cast<Eigen::Index>(r)));
                    }
                  });
}

Var mean_rows(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  if (xv.rows() == 0) throw ShapeError("mean_rows: empty input");
  Matrix out = xv.colwise().mean();
  const Eigen::Index rows = xv.rows();
  return t.record(std::move(out), t.requires_grad(x), [x, rows](Tape& tape, const Matrix& g) {
    Matrix d = g.replicate(rows, 1) / static_cast<double>(rows);
    tape.accumulate(x, d);
  });
}

Var slice_cols(Tape& t, Var x, Eigen::Index first, Eigen::Index count) {
  const Matrix& xv = t.value(x);
  if (first < 0 || count < 0 || first + count > xv.cols()) throw ShapeError("slice_cols: out of range");
  Matrix out = xv.middleCols(first, count);
  return t.record(std::move(out), t.requires_grad(x),
                  [x, first](Tape& tape, const Matrix& g) { tape.accumulate_block(x, 0, first, g); });
}

Var attention(Tape& t, Var q, Var k, Var v, int heads, bool causal) {
  const Matrix& qv = t.value(q);
  const Matrix& kv = t.value(k);
  const Matrix& vv = t.value(v);
  const Eigen::Index dim = qv.cols();
  if (heads <= 0 || dim % heads != 0) throw ShapeError("attention: heads must divide the model dim");
  if (kv.cols() != dim || vv.cols() != dim || kv.rows() != vv.rows()) throw ShapeError("attention: k/v shape");
  if (causal && qv.rows() != kv.rows()) throw ShapeError("attention: causal mode needs equal lengths");
  const Eigen::Index head_dim = dim / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Eigen::Index sq = qv.rows();
  const Eigen::Index sk = kv.rows();

  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(sq, dim);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * head_dim;
    Matrix scores = (qv.middleCols(c0, head_dim) * kv.middleCols(c0, head_dim).transpose()) * scale_factor;
    for (Eigen::Index i = 0; i < sq; ++i) {
      const Eigen::Index visible = causal ? i + 1 : sk;
      const double mx = scores.row(i).head(visible).maxCoeff();
      double total = 0.0;
      for (Eigen::Index j = 0; j < visible; ++j) {
        scores(i, j) = std::exp(scores(i, j) - mx);
        total += scores(i, j);
      }
      for (Eigen::Index j = 0; j < visible; ++j) scores(i, j) /= total;
      for (Eigen::Index j = visible; j < sk; ++j) scores(i, j) = 0.0;
    }
    out.middleCols(c0, head_dim).noalias() = scores * vv.middleCols(c0, head_dim);
    probs[static_cast<std::size_t>(h)] = std::move(scores);
  }
  const bool rg = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v);
  return t.record(
      std::move(out), rg,
      [q, k, v, heads, head_dim, scale_factor, probs = std::move(probs)](Tape& tape, const Matrix& g) {
        const Matrix& qv = tape.value(q);
        const Matrix& kv = tape.value(k);
        const Matrix& vv = tape.value(v);
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
        Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
        for (int h = 0; h < heads; ++h) {
          const Eigen::Index c0 = h * head_dim;
          const Matrix& p = probs[static_cast<std::size_t>(h)];
          const Matrix gh = g.middleCols(c0, head_dim);
          dv.middleCols(c0, head_dim).noalias() = p.transpose() * gh;
          Matrix dp = gh * vv.middleCols(c0, head_dim).transpose();
          const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
          Matrix ds = p.cwiseProduct(dp.colwise() - row_dot) * scale_factor;
          dq.middleCols(c0, head_dim).noalias() = ds * kv.middleCols(c0, head_dim);
          dk.middleCols(c0, head_dim).noalias() = ds.transpose() * qv.middleCols(c0, head_dim);
        }
        tape.accumulate(q, dq);
        tape.accumulate(k, dk);
        tape.accumulate(v, dv);
      });
}

Var causal_conv1d(Tape& t, Var x, Var weight, Var bias, int kernel, int dilation) {
  const Matrix& xv = t.value(x);
  const Matrix& wv = t.value(weight);
  const Matrix& bv = t.value(bias);
  const Eigen::Index cin = xv.cols();
  if (kernel < 1 || dilation < 1) throw ConfigError("causal_conv1d: kernel and dilation must be >= 1");
  if (wv.rows() != kernel * cin || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ShapeError("causal_conv1d: weight must be (kernel*Cin) x Cout");
  }
  const Eigen::Index steps = xv.rows();
  Matrix out(steps, wv.cols());
  out.rowwise() = bv.row(0);
  for (int j = 0; j < kernel; ++j) {
    const Eigen::Index lag = static_cast<Eigen::Index>(j) * dilation;
    if (lag >= steps) break;
    out.bottomRows(steps - lag).noalias() += xv.topRows(steps - lag) * wv.middleRows(j * cin, cin);
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(weight) || t.requires_grad(bias);
  return t.record(std::move(out), rg, [x, weight, bias, kernel, dilation](Tape& tape, const Matrix& g) {
    const Matrix& xv = tape.value(x);
    const Matrix& wv = tape.value(weight);
    const Eigen::Index cin = xv.cols();
    const Eigen::Index steps = xv.rows();
    if (tape.requires_grad(bias)) tape.accumulate(bias, g.colwise().sum());
    Matrix dx = Matrix::Zero(steps, cin);
    Matrix dw = Matrix::Zero(wv.rows(), wv.cols());
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index lag = static_cast<Eigen::Index>(j) * dilation;
      if (lag >= steps) break;
      dx.topRows(steps - lag).noalias() += g.bottomRows(steps - lag) * wv.middleRows(j * cin, cin).transpose();
      dw.middleRows(j * cin, cin).noalias() += xv.topRows(steps - lag).transpose() * g.bottomRows(steps - lag);
    }
    tape.accumulate(x, dx);
    tape.accumulate(weight, dw);
  });
}

Var cross_entropy_sum(Tape& t, Var logits, std::span<const int> targets) {
  const Matrix& lv = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows()) throw ShapeError("cross_entropy: one target per row");
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int y = targets[static_cast<std::size_t>(r)];
    if (y < 0) continue;
    if (y >= lv.cols()) throw ShapeError("cross_entropy: target out of range");
    const double mx = lv.row(r).maxCoeff();
    const double lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
    total += lse - lv(r, y);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<int> saved(targets.begin(), targets.end());
  return t.record(std::move(out), t.requires_grad(logits),
                  [logits, saved = std::move(saved)](Tape& tape, const Matrix& g) {
                    const Matrix& lv = tape.value(logits);
                    Matrix d = Matrix::Zero(lv.rows(), lv.cols());
                    const double up = g(0, 0);
                    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
                      const int y = saved[static_cast<std::size_t>(r)];
                      if (y < 0) continue;
                      const double mx = lv.row(r).maxCoeff();
                      RowVector p = (lv.row(r).array() - mx).exp().matrix();
                      p /= p.sum();
                      p(y) -= 1.0;
                      d.row(r) = up * p;
                    }
                    tape.accumulate(logits, d);
                  });
}

Var emo_loss(Tape& t, Var pred, const Matrix& truth, double lambda) {
  const Matrix& pv = t.value(pred);
  if (pv.rows() != truth.rows() || pv.cols() != truth.cols()) throw ShapeError("emo_loss: length mismatch");
  if (pv.rows() == 0) throw ShapeError("emo_loss: empty trajectory");
  const double inv_t = 1.0 / static_cast<double>(pv.rows());
  Matrix residual = pv - truth;
  Matrix out(1, 1);
  out(0, 0) = inv_t * (residual.squaredNorm() + lambda * residual.cwiseAbs().sum());
  return t.record(std::move(out), t.requires_grad(pred),
                  [pred, lambda, inv_t, residual = std::move(residual)](Tape& tape, const Matrix& g) {
                    Matrix sign = residual.unaryExpr([](double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); });
                    tape.accumulate(pred, (g(0, 0) * inv_t) * (2.0 * residual + lambda * sign));
                  });
}

}  // namespace arcscore::nn
