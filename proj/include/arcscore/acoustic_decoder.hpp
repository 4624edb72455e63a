#pragma once

// Autoregressive multi-codebook transformer over delay-pattern token grids.
//
// Each position sums the K codebook embeddings of the previous delayed row (row 0 is
// an all-pad BOS) plus a learned position embedding. Every block runs causal
// self-attention, cross-attention to the four anchor rows, and a GELU MLP (pre-LN).
// Blocks l < L_shallow first add gamma_l * C_local[t] to their input. K linear heads
// produce N+1 logits each (the last id is the delay pad).

#include <cstdint>
#include <optional>
#include <vector>

#include "arcscore/anchor.hpp"
#include "arcscore/autograd.hpp"
#include "arcscore/control_adapter.hpp"
#include "arcscore/corpus.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

struct DecoderConfig {
  int layers = 8;
  int model_dim = 128;
  int heads = 4;
  int num_codebooks = 4;
  int vocab_size = 65;  // N + 1, pad included
  int max_context = 512;
  int mlp_ratio = 4;
  double injection_ratio = 0.75;
  bool tie_gates = false;
  std::uint64_t seed = 0x6465636f;

  // ceil(rho * L).
  int shallow_layers() const;
  void validate() const;
};

DecoderConfig decoder_config_for(const CodecSpec& codec, DecoderConfig base = {});

// One learnable scalar per injected block (a single shared scalar when tied); zero-initialized.
class GateParams {
 public:
  GateParams() = default;
  explicit GateParams(const DecoderConfig& config);

  int injected_layers() const { return injected_layers_; }
  bool tied() const { return tied_; }
  const Parameter& for_layer(int layer) const;
  Parameter& for_layer(int layer);
  double value(int layer) const { return for_layer(layer).value(0, 0); }

  ParameterRefs parameters();
  ConstParameterRefs parameters() const;

 private:
  int injected_layers_ = 0;
  bool tied_ = false;
  std::vector<Parameter> gammas_;
};

struct LayerTrace {
  std::vector<Matrix> before_injection;  // block input, per layer
  std::vector<Matrix> after_injection;
};

class AcousticDecoder {
 public:
  explicit AcousticDecoder(DecoderConfig config);

  const DecoderConfig& config() const { return config_; }

  // input_rows: S x K ids, row 0 the BOS row. control (if given) is S x D.
  // Returns one S x vocab logits node per codebook.
  std::vector<nn::Var> forward(nn::Tape& tape, const DelayedGrid& input_rows, nn::Var anchor_memory,
                               std::optional<nn::Var> control, const GateParams* gates, bool train_decoder,
                               bool train_gates, LayerTrace* trace = nullptr) const;

  ParameterRefs parameters();
  ConstParameterRefs parameters() const;
  std::uint64_t checksum() const { return parameter_checksum(parameters()); }

 private:
  friend class DecoderSession;
  struct Block {
    Parameter ln1_gain, ln1_bias, qkv_weight, qkv_bias, attn_out_weight, attn_out_bias;
    Parameter ln2_gain, ln2_bias, cross_q_weight, cross_q_bias, cross_kv_weight, cross_kv_bias, cross_out_weight,
        cross_out_bias;
    Parameter ln3_gain, ln3_bias, mlp_in_weight, mlp_in_bias, mlp_out_weight, mlp_out_bias;
  };
  DecoderConfig config_;
  std::vector<Parameter> token_tables_;
  Parameter position_table_;
  std::vector<Block> blocks_;
  Parameter final_gain_, final_bias_;
  std::vector<Parameter> head_weights_, head_biases_;
};

// The pretrained music backbone: decoder plus its anchor text-encoder stand-in.
struct MusicBackbone {
  AcousticDecoder decoder;
  AnchorEncoder anchor_encoder;

  explicit MusicBackbone(const DecoderConfig& config);
  ParameterRefs parameters();
  ConstParameterRefs parameters() const;
};

// Affect conditioning branch trained on top of a frozen backbone.
struct ControlBranch {
  ControlAdapter adapter;
  GateParams gates;

  ControlBranch(const AdapterConfig& adapter_config, const DecoderConfig& decoder_config);
  ParameterRefs parameters();
  ConstParameterRefs parameters() const;
};

// BOS row followed by every row of `grid` but the last: the inputs that predict `grid`.
DelayedGrid shift_for_prediction(const DelayedGrid& grid);

// Maps per-acoustic-step control rows onto delayed positions: position s uses row min(s, T-1).
Matrix align_control(const Matrix& control, int positions);

// Logits for every delayed position of `prefix` (position s predicts prefix row s).
std::vector<Matrix> decoder_forward(const DelayedGrid& prefix, const AnchorEmbedding& anchor,
                                    const ControlSignal* control, const GateParams& gates,
                                    const AcousticDecoder& decoder, LayerTrace* trace = nullptr);

// Mean cross-entropy over non-pad target positions of all codebooks.
double gen_loss(const std::vector<Matrix>& logits, const DelayedGrid& targets);
nn::Var gen_loss(nn::Tape& tape, const std::vector<nn::Var>& logits, const DelayedGrid& targets);

struct TrainSchedule {
  int epochs = 10;
  double learning_rate = 2e-3;
  int batch_clips = 4;
  std::uint64_t seed = 0x747261696e;
};

struct TrainingHistory {
  std::vector<double> epoch_loss;  // mean per-clip gen_loss seen during each epoch
};

TrainingHistory pretrain_backbone(MusicBackbone& backbone, const std::vector<ClipRecord>& corpus,
                                  const TrainSchedule& schedule);

// Dense control for a clip: interpolate its 1 Hz curve to T_a steps and run the adapter.
ControlSignal clip_control(const ControlBranch& branch, const AffectTrajectory& trajectory, int steps);

// Only adapter and gate parameters change; backbone == nullptr is an error.
TrainingHistory train_adapter(const MusicBackbone* backbone, ControlBranch& branch,
                              const std::vector<ClipRecord>& corpus, const TrainSchedule& schedule);

// Mean gen_loss over clips, with the control branch when branch != nullptr.
double evaluate_gen_loss(const MusicBackbone& backbone, const ControlBranch* branch,
                         const std::vector<ClipRecord>& clips);

struct SamplerConfig {
  double temperature = 1.0;
  int top_k = 16;
  std::uint64_t seed = 0x73616d70;

  void validate(int vocab_size) const;
};

// Incremental (KV-cached) evaluation of the same network as AcousticDecoder::forward.
class DecoderSession {
 public:
  DecoderSession(const AcousticDecoder& decoder, const AnchorEmbedding& anchor, const GateParams* gates);

  // Feeds the input row for the next position; returns K x vocab logits for that position.
  Matrix step(std::span<const int> input_row, const RowVector* control_row);
  int position() const { return position_; }

 private:
  const AcousticDecoder& decoder_;
  const GateParams* gates_;
  std::vector<Matrix> keys_, values_, cross_keys_, cross_values_;
  int position_ = 0;
};

struct SampleStats {
  int peak_context = 0;  // decoder positions held in one call
};

// Continues `prefix` by `length` steps and returns only the new steps.
// control, when given, has prefix.steps() + length rows.
TokenGrid sample(const MusicBackbone& backbone, const AnchorEmbedding& anchor, const ControlSignal* control,
                 const GateParams* gates, const TokenGrid& prefix, const SamplerConfig& sampler, int length,
                 SampleStats* stats = nullptr);

// Draws from the top-k of softmax(logits / temperature); the pad id is dropped from the
// top-k set before renormalizing and is never returned.
int sample_token(const RowVector& logits, int pad_id, const SamplerConfig& sampler, std::mt19937_64& rng);

}  // namespace arcscore
