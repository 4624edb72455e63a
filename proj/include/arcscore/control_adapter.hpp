#pragma once

// Temporal super-resolution adapter: 1 Hz affect -> dense per-step control rows.
//   interpolate -> projector (2 -> D -> D, GELU, dropout) -> causal dilated convs
//   (each followed by LeakyReLU) -> linear D -> D

#include <cstdint>
#include <random>
#include <vector>

#include "arcscore/autograd.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

// T_a x D conditioning rows, one per acoustic step.
struct ControlSignal {
  Matrix rows;
  int steps() const { return static_cast<int>(rows.rows()); }
};

struct AdapterConfig {
  int model_dim = 128;
  int input_dim = 2;
  double dropout = 0.1;
  int kernel = 3;
  std::vector<int> dilations{1, 2, 4};
  double leaky_slope = 0.1;
  std::uint64_t seed = 0x61646170;

  void validate() const;
};

enum class AdapterMode { kTrain, kEval };

// Piecewise-linear resampling onto target_steps points spanning the trajectory's time range.
Matrix interpolate(const AffectTrajectory& trajectory, int target_steps);
// Step-wise hold: step j takes point floor(j * T / target_steps).
Matrix zero_order_hold(const AffectTrajectory& trajectory, int target_steps);

class ControlAdapter {
 public:
  explicit ControlAdapter(AdapterConfig config = {});

  const AdapterConfig& config() const { return config_; }
  // Number of input rows (t - R + 1 .. t) that output row t depends on.
  int receptive_field() const;

  // rng supplies dropout masks in training mode and may be null in eval mode.
  nn::Var forward(nn::Tape& tape, nn::Var dense_va, AdapterMode mode, std::mt19937_64* rng, bool trainable) const;
  // The projector alone (before the temporal stack), eval mode.
  Matrix project(const Matrix& dense_va) const;

  ParameterRefs parameters();
  ConstParameterRefs parameters() const;

  // Direct access for constructing analytic parameterizations in tests and tools.
  Parameter& projector_in_weight() { return proj_in_w_; }
  Parameter& projector_in_bias() { return proj_in_b_; }
  Parameter& projector_out_weight() { return proj_out_w_; }
  Parameter& projector_out_bias() { return proj_out_b_; }
  Parameter& conv_weight(std::size_t i) { return conv_w_[i]; }
  Parameter& conv_bias(std::size_t i) { return conv_b_[i]; }
  Parameter& output_weight() { return out_w_; }
  Parameter& output_bias() { return out_b_; }

 private:
  AdapterConfig config_;
  Parameter proj_in_w_, proj_in_b_, proj_out_w_, proj_out_b_;
  std::vector<Parameter> conv_w_, conv_b_;
  Parameter out_w_, out_b_;
};

// C_local = F(projector(dense VA)). Eval mode ignores dropout_seed.
ControlSignal adapter_forward(const Matrix& dense_va, const ControlAdapter& params, AdapterMode mode,
                              std::uint64_t dropout_seed = 0);

}  // namespace arcscore
