#include "arcscore/optim.hpp"

#include <cmath>

#include "arcscore/errors.hpp"

namespace arcscore::nn {

GradientBuffer::GradientBuffer(const ParameterRefs& params) : params_(params) { clear(); }

void GradientBuffer::clear() {
  grads_.clear();
  grads_.reserve(params_.size());
  for (const Parameter* p : params_) grads_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
}

void GradientBuffer::add_from(const Tape& tape) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (const Matrix* g = tape.gradient(*params_[i])) grads_[i] += *g;
  }
}

double GradientBuffer::norm() const {
  double sq = 0.0;
  for (const Matrix& g : grads_) sq += g.squaredNorm();
  return std::sqrt(sq);
}

void GradientBuffer::scale(double s) {
  for (Matrix& g : grads_) g *= s;
}

Adam::Adam(ParameterRefs params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    first_moment_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    second_moment_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(const std::vector<Matrix>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("Adam::step: gradient count mismatch");
  double clip_scale = 1.0;
  if (config_.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const Matrix& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > config_.max_grad_norm) clip_scale = config_.max_grad_norm / norm;
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = grads[i] * clip_scale;
    first_moment_[i] = config_.beta1 * first_moment_[i] + (1.0 - config_.beta1) * g;
    second_moment_[i] = config_.beta2 * second_moment_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    Matrix& w = params_[i]->value;
    w.array() -= config_.learning_rate * (first_moment_[i].array() / bc1) /
                 ((second_moment_[i].array() / bc2).sqrt() + config_.epsilon);
    round_to_float(w);
  }
}

}  // namespace arcscore::nn
