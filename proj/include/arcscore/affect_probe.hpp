#pragma once

// Latent affective probing: a frozen causal transformer reads an interleaved
// [instruction, time marker, visual block, ...] sequence; a small trainable MLP maps
// each frame's pooled hidden states onto the valence/arousal plane.

#include <cstdint>
#include <vector>

#include "arcscore/autograd.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

struct BackboneConfig {
  int layers = 4;
  int hidden_dim = 64;
  int heads = 4;
  int feature_dim = 32;
  int tokens_per_frame = 4;
  int instruction_count = 8;
  int instruction_length = 4;
  int max_seconds = 1024;
  std::uint64_t seed = 0x766c6d;
};

enum class PositionKind { kInstruction, kTimeMarker, kVisual };

struct SequencePosition {
  PositionKind kind;
  int second = 0;  // 1-based for time markers and visual tokens
  int index = 0;   // instruction token id, or visual token index within the frame
};

struct InterleavedSequence {
  struct Step {
    int time_marker = 0;  // integer second, 1-based
    Matrix visual;        // M x D_f
  };
  std::vector<int> instruction_tokens;
  std::vector<Step> steps;

  int frames() const { return static_cast<int>(steps.size()); }
  // |inst| + T * (1 + M).
  int length() const;
  std::vector<SequencePosition> layout() const;
};

InterleavedSequence build_interleaved_sequence(const PseudoVideo& video, int instruction_id,
                                               const BackboneConfig& config = {});

// Contextualized states of one frame's visual tokens.
struct FrameHidden {
  Matrix states;  // M x D_h
};

class FrozenBackbone {
 public:
  explicit FrozenBackbone(BackboneConfig config = {});

  const BackboneConfig& config() const { return config_; }
  std::vector<FrameHidden> forward(const InterleavedSequence& sequence) const;
  // Spatial average pooling of forward(): T x D_h.
  Matrix pooled_features(const InterleavedSequence& sequence) const;

  ConstParameterRefs parameters() const;
  std::uint64_t checksum() const { return parameter_checksum(parameters()); }

 private:
  struct Layer {
    Parameter ln1_gain, ln1_bias, qkv_weight, qkv_bias, out_weight, out_bias;
    Parameter ln2_gain, ln2_bias, mlp_in_weight, mlp_in_bias, mlp_out_weight, mlp_out_bias;
  };
  BackboneConfig config_;
  Parameter instruction_table_, time_table_, visual_weight_, visual_bias_, spatial_table_;
  std::vector<Layer> layers_;
  Parameter final_gain_, final_bias_;
};

struct ProbeConfig {
  int hidden_dim = 64;
  double lambda = 0.5;
  int epochs = 150;
  double learning_rate = 1e-3;
  int batch_clips = 8;
  int instruction_id = 0;
  std::uint64_t seed = 0x70726f6265;

  void validate() const;
};

class AffectProbe {
 public:
  AffectProbe(int input_dim, int hidden_dim, std::uint64_t seed);

  int input_dim() const { return static_cast<int>(w1_.value.rows()); }
  // Pooled features (T x D_h) -> clipped trajectory (T x 2).
  Matrix predict(const Matrix& pooled) const;
  nn::Var forward(nn::Tape& tape, nn::Var pooled, bool trainable = true) const;

  ParameterRefs parameters();
  ConstParameterRefs parameters() const;

 private:
  Parameter w1_, b1_, w2_, b2_;
};

// e_t = Clip(MLP(mean of the M states)).
AffectPoint probe(const FrameHidden& z, const AffectProbe& weights);

double emo_loss(const AffectTrajectory& pred, const AffectTrajectory& truth, double lambda);

struct ProbeSample {
  PseudoVideo video;
  AffectTrajectory truth;
};

struct ProbeTrainingResult {
  AffectProbe weights;
  double initial_loss = 0.0;
  std::vector<double> loss_history;  // training-set emo_loss after each epoch
};

ProbeTrainingResult train_probe(const FrozenBackbone& backbone, const std::vector<ProbeSample>& dataset,
                                const ProbeConfig& config);

// Runs backbone + probe over a whole video (one sequence).
AffectTrajectory predict_trajectory(const FrozenBackbone& backbone, const AffectProbe& weights,
                                    const PseudoVideo& video, int instruction_id);

}  // namespace arcscore
