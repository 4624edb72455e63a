#include "arcscore/affect_probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "arcscore/errors.hpp"
#include "arcscore/optim.hpp"

namespace arcscore {

int InterleavedSequence::length() const {
  int m = steps.empty() ? 0 : static_cast<int>(steps.front().visual.rows());
  return static_cast<int>(instruction_tokens.size()) + frames() * (1 + m);
}

std::vector<SequencePosition> InterleavedSequence::layout() const {
  std::vector<SequencePosition> out;
  for (int id : instruction_tokens) out.push_back({PositionKind::kInstruction, 0, id});
  for (const Step& s : steps) {
    out.push_back({PositionKind::kTimeMarker, s.time_marker, 0});
    for (Eigen::Index m = 0; m < s.visual.rows(); ++m) {
      out.push_back({PositionKind::kVisual, s.time_marker, static_cast<int>(m)});
    }
  }
  return out;
}

InterleavedSequence build_interleaved_sequence(const PseudoVideo& video, int instruction_id,
                                               const BackboneConfig& config) {
  if (video.frames.empty()) throw ShapeError("build_interleaved_sequence: empty video");
  if (instruction_id < 0 || instruction_id >= config.instruction_count) {
    throw ConfigError("instruction id out of range");
  }
  InterleavedSequence seq;
  for (int i = 0; i < config.instruction_length; ++i) {
    seq.instruction_tokens.push_back(instruction_id * config.instruction_length + i);
  }
  for (int t = 0; t < video.duration_s(); ++t) {
    seq.steps.push_back({std::min(t + 1, config.max_seconds - 1), video.frames[static_cast<std::size_t>(t)]});
  }
  return seq;
}

// ---- frozen backbone ------------------------------------------------------------

FrozenBackbone::FrozenBackbone(BackboneConfig config) : config_(config) {
  const int d = config_.hidden_dim;
  if (d % config_.heads != 0) throw ConfigError("backbone: heads must divide hidden_dim");
  std::mt19937_64 rng(config_.seed);
  auto normal = [&rng](int r, int c, double sd) { return random_normal(r, c, sd, rng); };
  const double attn_sd = 0.5 / std::sqrt(static_cast<double>(d));
  instruction_table_ = {"backbone.instruction", normal(config_.instruction_count * config_.instruction_length, d, 1.0)};
  time_table_ = {"backbone.time", normal(config_.max_seconds, d, 0.5)};
  visual_weight_ = {"backbone.visual_weight", normal(config_.feature_dim, d, 1.0 / std::sqrt(config_.feature_dim))};
  visual_bias_ = {"backbone.visual_bias", Matrix::Zero(1, d)};
  spatial_table_ = {"backbone.spatial", normal(config_.tokens_per_frame, d, 0.5)};
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_gain = {p + "ln1_gain", Matrix::Ones(1, d)};
    layer.ln1_bias = {p + "ln1_bias", Matrix::Zero(1, d)};
    layer.qkv_weight = {p + "qkv_weight", normal(d, 3 * d, attn_sd)};
    layer.qkv_bias = {p + "qkv_bias", Matrix::Zero(1, 3 * d)};
    layer.out_weight = {p + "out_weight", normal(d, d, attn_sd)};
    layer.out_bias = {p + "out_bias", Matrix::Zero(1, d)};
    layer.ln2_gain = {p + "ln2_gain", Matrix::Ones(1, d)};
    layer.ln2_bias = {p + "ln2_bias", Matrix::Zero(1, d)};
    layer.mlp_in_weight = {p + "mlp_in_weight", normal(d, 4 * d, attn_sd)};
    layer.mlp_in_bias = {p + "mlp_in_bias", Matrix::Zero(1, 4 * d)};
    layer.mlp_out_weight = {p + "mlp_out_weight", normal(4 * d, d, 0.5 * attn_sd)};
    layer.mlp_out_bias = {p + "mlp_out_bias", Matrix::Zero(1, d)};
    layers_.push_back(std::move(layer));
  }
  final_gain_ = {"backbone.final_gain", Matrix::Ones(1, d)};
  final_bias_ = {"backbone.final_bias", Matrix::Zero(1, d)};
}

std::vector<FrameHidden> FrozenBackbone::forward(const InterleavedSequence& sequence) const {
  const int d = config_.hidden_dim;
  const int m = config_.tokens_per_frame;
  const int inst = static_cast<int>(sequence.instruction_tokens.size());
  Matrix x(sequence.length(), d);
  int pos = 0;
  for (int id : sequence.instruction_tokens) x.row(pos++) = instruction_table_.value.row(id);
  for (const InterleavedSequence::Step& s : sequence.steps) {
    if (s.visual.rows() != m || s.visual.cols() != config_.feature_dim) throw ShapeError("backbone: frame shape");
    x.row(pos++) = time_table_.value.row(s.time_marker);
    Matrix vis = s.visual * visual_weight_.value;
    vis.rowwise() += visual_bias_.value.row(0);
    vis += spatial_table_.value;
    x.middleRows(pos, m) = vis;
    pos += m;
  }

  nn::Tape tape;
  nn::Var h = tape.constant(std::move(x));
  auto c = [&tape](const Parameter& p) { return tape.parameter(p, false); };
  for (const Layer& layer : layers_) {
    nn::Var normed = nn::layer_norm(tape, h, c(layer.ln1_gain), c(layer.ln1_bias));
    nn::Var qkv = nn::linear(tape, normed, c(layer.qkv_weight), c(layer.qkv_bias));
    nn::Var attn = nn::attention(tape, nn::slice_cols(tape, qkv, 0, d), nn::slice_cols(tape, qkv, d, d),
                                 nn::slice_cols(tape, qkv, 2 * d, d), config_.heads, true);
    h = nn::add(tape, h, nn::linear(tape, attn, c(layer.out_weight), c(layer.out_bias)));
    nn::Var normed2 = nn::layer_norm(tape, h, c(layer.ln2_gain), c(layer.ln2_bias));
    nn::Var mlp = nn::gelu(tape, nn::linear(tape, normed2, c(layer.mlp_in_weight), c(layer.mlp_in_bias)));
    h = nn::add(tape, h, nn::linear(tape, mlp, c(layer.mlp_out_weight), c(layer.mlp_out_bias)));
  }
  const Matrix out = nn::layer_norm_rows(tape.value(h), final_gain_.value.row(0), final_bias_.value.row(0));

  std::vector<FrameHidden> frames;
  frames.reserve(sequence.steps.size());
  for (int t = 0; t < sequence.frames(); ++t) {
    frames.push_back({out.middleRows(inst + t * (1 + m) + 1, m)});
  }
  return frames;
}

Matrix FrozenBackbone::pooled_features(const InterleavedSequence& sequence) const {
  const std::vector<FrameHidden> frames = forward(sequence);
  Matrix pooled(static_cast<Eigen::Index>(frames.size()), config_.hidden_dim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    pooled.row(static_cast<Eigen::Index>(t)) = frames[t].states.colwise().mean();
  }
  return pooled;
}

ConstParameterRefs FrozenBackbone::parameters() const {
  ConstParameterRefs refs{&instruction_table_, &time_table_, &visual_weight_, &visual_bias_, &spatial_table_};
  for (const Layer& l : layers_) {
    for (const Parameter* p : {&l.ln1_gain, &l.ln1_bias, &l.qkv_weight, &l.qkv_bias, &l.out_weight, &l.out_bias,
                               &l.ln2_gain, &l.ln2_bias, &l.mlp_in_weight, &l.mlp_in_bias, &l.mlp_out_weight,
                               &l.mlp_out_bias}) {
      refs.push_back(p);
    }
  }
  refs.push_back(&final_gain_);
  refs.push_back(&final_bias_);
  return refs;
}

// ---- probe head ----------------------------------------------------------------

void ProbeConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("probe: lambda must be >= 0");
  if (hidden_dim < 1 || epochs < 0 || batch_clips < 1) throw ConfigError("probe: bad sizes");
  if (!(learning_rate > 0.0)) throw ConfigError("probe: learning rate must be > 0");
}

AffectProbe::AffectProbe(int input_dim, int hidden_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  w1_ = {"probe.w1", random_normal(input_dim, hidden_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng)};
  b1_ = {"probe.b1", Matrix::Zero(1, hidden_dim)};
  w2_ = {"probe.w2", random_normal(hidden_dim, 2, 0.1 / std::sqrt(static_cast<double>(hidden_dim)), rng)};
  b2_ = {"probe.b2", Matrix::Zero(1, 2)};
}

nn::Var AffectProbe::forward(nn::Tape& tape, nn::Var pooled, bool trainable) const {
  if (tape.value(pooled).cols() != w1_.value.rows()) throw ShapeError("probe: hidden dimension mismatch");
  nn::Var h = nn::gelu(tape, nn::linear(tape, pooled, tape.parameter(w1_, trainable), tape.parameter(b1_, trainable)));
  nn::Var raw = nn::linear(tape, h, tape.parameter(w2_, trainable), tape.parameter(b2_, trainable));
  return nn::clip(tape, raw, -1.0, 1.0);
}

Matrix AffectProbe::predict(const Matrix& pooled) const {
  nn::Tape tape;
  return tape.value(forward(tape, tape.constant(pooled), false));
}

ParameterRefs AffectProbe::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
ConstParameterRefs AffectProbe::parameters() const { return {&w1_, &b1_, &w2_, &b2_}; }

AffectPoint probe(const FrameHidden& z, const AffectProbe& weights) {
  if (z.states.rows() == 0 || z.states.cols() != weights.input_dim()) throw ShapeError("probe: dimension mismatch");
  const Matrix e = weights.predict(z.states.colwise().mean());
  return {e(0, 0), e(0, 1)};
}

double emo_loss(const AffectTrajectory& pred, const AffectTrajectory& truth, double lambda) {
  if (pred.duration_s() != truth.duration_s()) throw ShapeError("emo_loss: length mismatch");
  nn::Tape tape;
  return tape.value(nn::emo_loss(tape, tape.constant(pred.as_matrix()), truth.as_matrix(), lambda))(0, 0);
}

namespace {

double mean_loss(const AffectProbe& probe_head, const std::vector<Matrix>& features, const std::vector<Matrix>& truths,
                 double lambda) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    nn::Tape tape;
    total += tape.value(nn::emo_loss(tape, probe_head.forward(tape, tape.constant(features[i]), false), truths[i],
                                     lambda))(0, 0);
  }
  return total / static_cast<double>(features.size());
}

}  // namespace

ProbeTrainingResult train_probe(const FrozenBackbone& backbone, const std::vector<ProbeSample>& dataset,
                                const ProbeConfig& config) {
  config.validate();
  if (dataset.empty()) throw DataError("train_probe: empty dataset");
  std::vector<Matrix> features;
  std::vector<Matrix> truths;
  for (const ProbeSample& s : dataset) {
    if (s.video.duration_s() != s.truth.duration_s()) throw ShapeError("train_probe: video/trajectory length mismatch");
    features.push_back(
        backbone.pooled_features(build_interleaved_sequence(s.video, config.instruction_id, backbone.config())));
    truths.push_back(s.truth.as_matrix());
  }

  ProbeTrainingResult result{AffectProbe(backbone.config().hidden_dim, config.hidden_dim, config.seed), 0.0, {}};
  AffectProbe& head = result.weights;
  nn::Adam adam(head.parameters(), {.learning_rate = config.learning_rate});
  nn::GradientBuffer grads(head.parameters());
  std::mt19937_64 rng(derive_seed(config.seed, "order"));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  result.initial_loss = mean_loss(head, features, truths, config.lambda);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_clips)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_clips));
      grads.clear();
      for (std::size_t i = begin; i < end; ++i) {
        nn::Tape tape;
        nn::Var loss = nn::emo_loss(tape, head.forward(tape, tape.constant(features[order[i]])), truths[order[i]],
                                    config.lambda);
        tape.backward(loss);
        grads.add_from(tape);
      }
      grads.scale(1.0 / static_cast<double>(end - begin));
      adam.step(grads.grads());
    }
    result.loss_history.push_back(mean_loss(head, features, truths, config.lambda));
  }
  return result;
}

AffectTrajectory predict_trajectory(const FrozenBackbone& backbone, const AffectProbe& weights,
                                    const PseudoVideo& video, int instruction_id) {
  const Matrix pooled = backbone.pooled_features(build_interleaved_sequence(video, instruction_id, backbone.config()));
  return AffectTrajectory::from_matrix(weights.predict(pooled));
}

}  // namespace arcscore
