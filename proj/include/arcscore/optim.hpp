#pragma once

#include <vector>

#include "arcscore/autograd.hpp"
#include "arcscore/tensor.hpp"

namespace arcscore::nn {

// Sums tape gradients for a fixed, ordered parameter list across a minibatch.
class GradientBuffer {
 public:
  explicit GradientBuffer(const ParameterRefs& params);

  void add_from(const Tape& tape);
  void clear();
  std::vector<Matrix>& grads() { return grads_; }
  const std::vector<Matrix>& grads() const { return grads_; }
  double norm() const;
  void scale(double s);

 private:
  ParameterRefs params_;
  std::vector<Matrix> grads_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

class Adam {
 public:
  Adam(ParameterRefs params, AdamConfig config);

  // Applies one update and rounds every parameter to f32.
  void step(const std::vector<Matrix>& grads);
  long steps() const { return step_count_; }

 private:
  ParameterRefs params_;
  AdamConfig config_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  long step_count_ = 0;
};

}  // namespace arcscore::nn
