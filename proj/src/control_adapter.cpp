#include "arcscore/control_adapter.hpp"

#include <cmath>
#include <numeric>

#include "arcscore/errors.hpp"

namespace arcscore {

void AdapterConfig::validate() const {
  if (model_dim < 1 || input_dim < 1) throw ConfigError("adapter: dimensions must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("adapter: dropout must be in [0, 1)");
  if (kernel < 1 || dilations.empty()) throw ConfigError("adapter: need kernel >= 1 and at least one dilation");
  for (int d : dilations) {
    if (d < 1) throw ConfigError("adapter: dilations must be >= 1");
  }
}

Matrix interpolate(const AffectTrajectory& trajectory, int target_steps) {
  if (trajectory.empty()) throw ShapeError("interpolate: empty trajectory");
  if (target_steps < 1) throw ShapeError("interpolate: target length must be >= 1");
  const Matrix knots = trajectory.as_matrix();
  const Eigen::Index n = knots.rows();
  Matrix out(target_steps, 2);
  if (n == 1) {
    out.rowwise() = knots.row(0);
    return out;
  }
  const double span = static_cast<double>(n - 1);
  for (int j = 0; j < target_steps; ++j) {
    const double t = target_steps == 1 ? 0.0 : span * j / (target_steps - 1);
    const Eigen::Index i = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t)), n - 2);
    const double w = t - static_cast<double>(i);
    out.row(j) = (1.0 - w) * knots.row(i) + w * knots.row(i + 1);
  }
  return out;
}

Matrix zero_order_hold(const AffectTrajectory& trajectory, int target_steps) {
  if (trajectory.empty()) throw ShapeError("zero_order_hold: empty trajectory");
  const Matrix knots = trajectory.as_matrix();
  Matrix out(target_steps, 2);
  for (int j = 0; j < target_steps; ++j) {
    const auto i = static_cast<Eigen::Index>(static_cast<long long>(j) * knots.rows() / target_steps);
    out.row(j) = knots.row(i);
  }
  return out;
}

ControlAdapter::ControlAdapter(AdapterConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.model_dim;
  std::mt19937_64 rng(config_.seed);
  proj_in_w_ = {"adapter.projector_in_weight", random_normal(config_.input_dim, d, 1.0, rng)};
  proj_in_b_ = {"adapter.projector_in_bias", random_normal(1, d, 0.5, rng)};
  proj_out_w_ = {"adapter.projector_out_weight", random_normal(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng)};
  proj_out_b_ = {"adapter.projector_out_bias", Matrix::Zero(1, d)};
  const double conv_sd = 1.0 / std::sqrt(static_cast<double>(config_.kernel * d));
  for (std::size_t i = 0; i < config_.dilations.size(); ++i) {
    const std::string p = "adapter.conv" + std::to_string(i);
    conv_w_.push_back({p + "_weight", random_normal(config_.kernel * d, d, conv_sd, rng)});
    conv_b_.push_back({p + "_bias", Matrix::Zero(1, d)});
  }
  out_w_ = {"adapter.output_weight", random_normal(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng)};
  out_b_ = {"adapter.output_bias", Matrix::Zero(1, d)};
}

int ControlAdapter::receptive_field() const {
  return (config_.kernel - 1) * std::accumulate(config_.dilations.begin(), config_.dilations.end(), 0) + 1;
}

nn::Var ControlAdapter::forward(nn::Tape& tape, nn::Var dense_va, AdapterMode mode, std::mt19937_64* rng,
                                bool trainable) const {
  if (tape.value(dense_va).cols() != config_.input_dim) throw ShapeError("adapter: input width mismatch");
  auto p = [&tape, trainable](const Parameter& param) { return tape.parameter(param, trainable); };
  nn::Var h = nn::gelu(tape, nn::linear(tape, dense_va, p(proj_in_w_), p(proj_in_b_)));
  if (mode == AdapterMode::kTrain && config_.dropout > 0.0) {
    if (rng == nullptr) throw ConfigError("adapter: training mode needs a dropout rng");
    h = nn::dropout(tape, h, config_.dropout, *rng);
  }
  h = nn::linear(tape, h, p(proj_out_w_), p(proj_out_b_));
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    h = nn::causal_conv1d(tape, h, p(conv_w_[i]), p(conv_b_[i]), config_.kernel, config_.dilations[i]);
    h = nn::leaky_relu(tape, h, config_.leaky_slope);
  }
  return nn::linear(tape, h, p(out_w_), p(out_b_));
}

Matrix ControlAdapter::project(const Matrix& dense_va) const {
  nn::Tape tape;
  auto p = [&tape](const Parameter& param) { return tape.parameter(param, false); };
  nn::Var h = nn::gelu(tape, nn::linear(tape, tape.constant(dense_va), p(proj_in_w_), p(proj_in_b_)));
  return tape.value(nn::linear(tape, h, p(proj_out_w_), p(proj_out_b_)));
}

ParameterRefs ControlAdapter::parameters() {
  ParameterRefs refs{&proj_in_w_, &proj_in_b_, &proj_out_w_, &proj_out_b_};
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    refs.push_back(&conv_w_[i]);
    refs.push_back(&conv_b_[i]);
  }
  refs.push_back(&out_w_);
  refs.push_back(&out_b_);
  return refs;
}

ConstParameterRefs ControlAdapter::parameters() const {
  return arcscore::as_const(const_cast<ControlAdapter*>(this)->parameters());
}

ControlSignal adapter_forward(const Matrix& dense_va, const ControlAdapter& params, AdapterMode mode,
                              std::uint64_t dropout_seed) {
  if (!dense_va.allFinite()) throw ShapeError("adapter_forward: non-finite input");
  nn::Tape tape;
  std::mt19937_64 rng(dropout_seed);
  return {tape.value(params.forward(tape, tape.constant(dense_va), mode, &rng, false))};
}

}  // namespace arcscore
