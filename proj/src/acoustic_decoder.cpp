#include "arcscore/acoustic_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "arcscore/errors.hpp"
#include "arcscore/optim.hpp"
#include "arcscore/parallel.hpp"

namespace arcscore {

int DecoderConfig::shallow_layers() const {
  return static_cast<int>(std::ceil(injection_ratio * layers - 1e-9));
}

void DecoderConfig::validate() const {
  if (layers < 1 || model_dim < 1 || heads < 1 || num_codebooks < 1 || vocab_size < 2 || mlp_ratio < 1) {
    throw ConfigError("decoder: sizes must be positive");
  }
  if (model_dim % heads != 0) throw ConfigError("decoder: heads must divide model_dim");
  if (!(injection_ratio > 0.0 && injection_ratio <= 1.0)) throw ConfigError("decoder: injection_ratio must be in (0, 1]");
  if (max_context < num_codebooks + 1) throw ConfigError("decoder: max_context too small");
}

DecoderConfig decoder_config_for(const CodecSpec& codec, DecoderConfig base) {
  base.num_codebooks = codec.num_codebooks;
  base.vocab_size = codec.vocab_size + 1;
  return base;
}

// ---- gates ---------------------------------------------------------------------

GateParams::GateParams(const DecoderConfig& config)
    : injected_layers_(config.shallow_layers()), tied_(config.tie_gates) {
  config.validate();
  if (tied_) {
    gammas_.push_back({"gate.shared", Matrix::Zero(1, 1)});
  } else {
    for (int l = 0; l < injected_layers_; ++l) gammas_.push_back({"gate.layer" + std::to_string(l), Matrix::Zero(1, 1)});
  }
}

const Parameter& GateParams::for_layer(int layer) const {
  if (layer < 0 || layer >= injected_layers_) throw ShapeError("gate: layer is not injected");
  return gammas_[tied_ ? 0 : static_cast<std::size_t>(layer)];
}

Parameter& GateParams::for_layer(int layer) {
  return const_cast<Parameter&>(static_cast<const GateParams&>(*this).for_layer(layer));
}

ParameterRefs GateParams::parameters() {
  ParameterRefs refs;
  for (Parameter& p : gammas_) refs.push_back(&p);
  return refs;
}

ConstParameterRefs GateParams::parameters() const {
  ConstParameterRefs refs;
  for (const Parameter& p : gammas_) refs.push_back(&p);
  return refs;
}

// ---- decoder -------------------------------------------------------------------

AcousticDecoder::AcousticDecoder(DecoderConfig config) : config_(config) {
  config_.validate();
  const int d = config_.model_dim;
  const int hidden = config_.mlp_ratio * d;
  std::mt19937_64 rng(config_.seed);
  auto normal = [&rng](int r, int c, double sd) { return random_normal(r, c, sd, rng); };
  const double in_sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid_sd = in_sd / std::sqrt(2.0 * config_.layers);

  for (int k = 0; k < config_.num_codebooks; ++k) {
    token_tables_.push_back({"decoder.token" + std::to_string(k), normal(config_.vocab_size, d, 0.5)});
  }
  position_table_ = {"decoder.position", normal(config_.max_context, d, 0.1)};
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "decoder.block" + std::to_string(l) + ".";
    Block b;
    b.ln1_gain = {p + "ln1_gain", Matrix::Ones(1, d)};
    b.ln1_bias = {p + "ln1_bias", Matrix::Zero(1, d)};
    b.qkv_weight = {p + "qkv_weight", normal(d, 3 * d, in_sd)};
    b.qkv_bias = {p + "qkv_bias", Matrix::Zero(1, 3 * d)};
    b.attn_out_weight = {p + "attn_out_weight", normal(d, d, resid_sd)};
    b.attn_out_bias = {p + "attn_out_bias", Matrix::Zero(1, d)};
    b.ln2_gain = {p + "ln2_gain", Matrix::Ones(1, d)};
    b.ln2_bias = {p + "ln2_bias", Matrix::Zero(1, d)};
    b.cross_q_weight = {p + "cross_q_weight", normal(d, d, in_sd)};
    b.cross_q_bias = {p + "cross_q_bias", Matrix::Zero(1, d)};
    b.cross_kv_weight = {p + "cross_kv_weight", normal(d, 2 * d, in_sd)};
    b.cross_kv_bias = {p + "cross_kv_bias", Matrix::Zero(1, 2 * d)};
    b.cross_out_weight = {p + "cross_out_weight", normal(d, d, resid_sd)};
    b.cross_out_bias = {p + "cross_out_bias", Matrix::Zero(1, d)};
    b.ln3_gain = {p + "ln3_gain", Matrix::Ones(1, d)};
    b.ln3_bias = {p + "ln3_bias", Matrix::Zero(1, d)};
    b.mlp_in_weight = {p + "mlp_in_weight", normal(d, hidden, in_sd)};
    b.mlp_in_bias = {p + "mlp_in_bias", Matrix::Zero(1, hidden)};
    b.mlp_out_weight = {p + "mlp_out_weight", normal(hidden, d, resid_sd / std::sqrt(config_.mlp_ratio))};
    b.mlp_out_bias = {p + "mlp_out_bias", Matrix::Zero(1, d)};
    blocks_.push_back(std::move(b));
  }
  final_gain_ = {"decoder.final_gain", Matrix::Ones(1, d)};
  final_bias_ = {"decoder.final_bias", Matrix::Zero(1, d)};
  for (int k = 0; k < config_.num_codebooks; ++k) {
    head_weights_.push_back({"decoder.head" + std::to_string(k) + "_weight", normal(d, config_.vocab_size, in_sd)});
    head_biases_.push_back({"decoder.head" + std::to_string(k) + "_bias", Matrix::Zero(1, config_.vocab_size)});
  }
}

std::vector<nn::Var> AcousticDecoder::forward(nn::Tape& tape, const DelayedGrid& input_rows, nn::Var anchor_memory,
                                              std::optional<nn::Var> control, const GateParams* gates,
                                              bool train_decoder, bool train_gates, LayerTrace* trace) const {
  const int d = config_.model_dim;
  const int steps = input_rows.steps;
  if (steps < 1) throw ShapeError("decoder: empty input");
  if (steps > config_.max_context) throw ShapeError("decoder: context overflow");
  if (input_rows.codebooks != config_.num_codebooks) throw ShapeError("decoder: codebook count mismatch");
  if (tape.value(anchor_memory).cols() != d) throw ShapeError("decoder: anchor width mismatch");
  if (control) {
    const Matrix& c = tape.value(*control);
    if (c.rows() != steps || c.cols() != d) throw ShapeError("decoder: control length mismatch");
  }
  for (int id : input_rows.ids) {
    if (id < 0 || id >= config_.vocab_size) throw ShapeError("decoder: token id out of range");
  }
  auto p = [&tape, train_decoder](const Parameter& param) { return tape.parameter(param, train_decoder); };

  std::vector<int> positions(static_cast<std::size_t>(steps));
  std::iota(positions.begin(), positions.end(), 0);
  nn::Var h = nn::gather_rows(tape, p(position_table_), positions);
  std::vector<int> column(static_cast<std::size_t>(steps));
  for (int k = 0; k < config_.num_codebooks; ++k) {
    for (int s = 0; s < steps; ++s) column[static_cast<std::size_t>(s)] = input_rows.at(s, k);
    h = nn::add(tape, h, nn::gather_rows(tape, p(token_tables_[static_cast<std::size_t>(k)]), column));
  }

  const int shallow = gates ? gates->injected_layers() : 0;
  if (shallow > config_.layers) throw ShapeError("decoder: more gates than layers");
  for (int l = 0; l < config_.layers; ++l) {
    const Block& b = blocks_[static_cast<std::size_t>(l)];
    if (trace) trace->before_injection.push_back(tape.value(h));
    if (control && gates && l < shallow) {
      nn::Var gamma = tape.parameter(gates->for_layer(l), train_gates);
      h = nn::add(tape, h, nn::scale_by(tape, *control, gamma));
    }
    if (trace) trace->after_injection.push_back(tape.value(h));

    nn::Var a = nn::layer_norm(tape, h, p(b.ln1_gain), p(b.ln1_bias));
    nn::Var qkv = nn::linear(tape, a, p(b.qkv_weight), p(b.qkv_bias));
    nn::Var attn = nn::attention(tape, nn::slice_cols(tape, qkv, 0, d), nn::slice_cols(tape, qkv, d, d),
                                 nn::slice_cols(tape, qkv, 2 * d, d), config_.heads, true);
    h = nn::add(tape, h, nn::linear(tape, attn, p(b.attn_out_weight), p(b.attn_out_bias)));

    nn::Var a2 = nn::layer_norm(tape, h, p(b.ln2_gain), p(b.ln2_bias));
    nn::Var q = nn::linear(tape, a2, p(b.cross_q_weight), p(b.cross_q_bias));
    nn::Var kv = nn::linear(tape, anchor_memory, p(b.cross_kv_weight), p(b.cross_kv_bias));
    nn::Var cross = nn::attention(tape, q, nn::slice_cols(tape, kv, 0, d), nn::slice_cols(tape, kv, d, d),
                                  config_.heads, false);
    h = nn::add(tape, h, nn::linear(tape, cross, p(b.cross_out_weight), p(b.cross_out_bias)));

    nn::Var a3 = nn::layer_norm(tape, h, p(b.ln3_gain), p(b.ln3_bias));
    nn::Var mlp = nn::gelu(tape, nn::linear(tape, a3, p(b.mlp_in_weight), p(b.mlp_in_bias)));
    h = nn::add(tape, h, nn::linear(tape, mlp, p(b.mlp_out_weight), p(b.mlp_out_bias)));
  }
  nn::Var out = nn::layer_norm(tape, h, p(final_gain_), p(final_bias_));
  std::vector<nn::Var> logits;
  for (int k = 0; k < config_.num_codebooks; ++k) {
    logits.push_back(nn::linear(tape, out, p(head_weights_[static_cast<std::size_t>(k)]),
                                p(head_biases_[static_cast<std::size_t>(k)])));
  }
  return logits;
}

ConstParameterRefs AcousticDecoder::parameters() const {
  ConstParameterRefs refs;
  for (const Parameter& t : token_tables_) refs.push_back(&t);
  refs.push_back(&position_table_);
  for (const Block& b : blocks_) {
    for (const Parameter* q :
         {&b.ln1_gain, &b.ln1_bias, &b.qkv_weight, &b.qkv_bias, &b.attn_out_weight, &b.attn_out_bias, &b.ln2_gain,
          &b.ln2_bias, &b.cross_q_weight, &b.cross_q_bias, &b.cross_kv_weight, &b.cross_kv_bias, &b.cross_out_weight,
          &b.cross_out_bias, &b.ln3_gain, &b.ln3_bias, &b.mlp_in_weight, &b.mlp_in_bias, &b.mlp_out_weight,
          &b.mlp_out_bias}) {
      refs.push_back(q);
    }
  }
  refs.push_back(&final_gain_);
  refs.push_back(&final_bias_);
  for (std::size_t k = 0; k < head_weights_.size(); ++k) {
    refs.push_back(&head_weights_[k]);
    refs.push_back(&head_biases_[k]);
  }
  return refs;
}

ParameterRefs AcousticDecoder::parameters() {
  ParameterRefs refs;
  for (const Parameter* p : static_cast<const AcousticDecoder&>(*this).parameters()) {
    refs.push_back(const_cast<Parameter*>(p));
  }
  return refs;
}

MusicBackbone::MusicBackbone(const DecoderConfig& config)
    : decoder(config), anchor_encoder(config.model_dim, derive_seed(config.seed, "anchor")) {}

ParameterRefs MusicBackbone::parameters() {
  ParameterRefs refs = decoder.parameters();
  for (Parameter* p : anchor_encoder.parameters()) refs.push_back(p);
  return refs;
}

ConstParameterRefs MusicBackbone::parameters() const {
  ConstParameterRefs refs = decoder.parameters();
  for (const Parameter* p : anchor_encoder.parameters()) refs.push_back(p);
  return refs;
}

ControlBranch::ControlBranch(const AdapterConfig& adapter_config, const DecoderConfig& decoder_config)
    : adapter(adapter_config), gates(decoder_config) {
  if (adapter_config.model_dim != decoder_config.model_dim) throw ConfigError("adapter and decoder widths differ");
}

ParameterRefs ControlBranch::parameters() {
  ParameterRefs refs = adapter.parameters();
  for (Parameter* p : gates.parameters()) refs.push_back(p);
  return refs;
}

ConstParameterRefs ControlBranch::parameters() const {
  ConstParameterRefs refs = adapter.parameters();
  for (const Parameter* p : gates.parameters()) refs.push_back(p);
  return refs;
}

// ---- forward helpers -------------------------------------------------------------

DelayedGrid shift_for_prediction(const DelayedGrid& grid) {
  DelayedGrid in{grid.steps, grid.codebooks, grid.pad_token, {}};
  in.ids.assign(grid.ids.size(), grid.pad_token);
  for (int s = 1; s < grid.steps; ++s) {
    for (int k = 0; k < grid.codebooks; ++k) in.set(s, k, grid.at(s - 1, k));
  }
  return in;
}

namespace {

std::vector<int> aligned_rows(int control_rows, int positions) {
  std::vector<int> rows(static_cast<std::size_t>(positions));
  for (int s = 0; s < positions; ++s) rows[static_cast<std::size_t>(s)] = std::min(s, control_rows - 1);
  return rows;
}

}  // namespace

Matrix align_control(const Matrix& control, int positions) {
  if (control.rows() < 1) throw ShapeError("align_control: empty control");
  Matrix out(positions, control.cols());
  const std::vector<int> rows = aligned_rows(static_cast<int>(control.rows()), positions);
  for (int s = 0; s < positions; ++s) out.row(s) = control.row(rows[static_cast<std::size_t>(s)]);
  return out;
}

std::vector<Matrix> decoder_forward(const DelayedGrid& prefix, const AnchorEmbedding& anchor,
                                    const ControlSignal* control, const GateParams& gates,
                                    const AcousticDecoder& decoder, LayerTrace* trace) {
  nn::Tape tape;
  std::optional<nn::Var> c;
  if (control) {
    if (control->steps() != prefix.steps) throw ShapeError("decoder_forward: control length mismatch");
    c = tape.constant(control->rows);
  }
  const std::vector<nn::Var> logits = decoder.forward(tape, shift_for_prediction(prefix), tape.constant(anchor.context),
                                                      c, &gates, false, false, trace);
  std::vector<Matrix> out;
  for (nn::Var v : logits) out.push_back(tape.value(v));
  return out;
}

namespace {

std::vector<int> masked_targets(const DelayedGrid& targets, int k) {
  std::vector<int> col(static_cast<std::size_t>(targets.steps));
  for (int s = 0; s < targets.steps; ++s) {
    col[static_cast<std::size_t>(s)] = targets.is_pad_position(s, k) ? -1 : targets.at(s, k);
  }
  return col;
}

}  // namespace

nn::Var gen_loss(nn::Tape& tape, const std::vector<nn::Var>& logits, const DelayedGrid& targets) {
  if (static_cast<int>(logits.size()) != targets.codebooks) throw ShapeError("gen_loss: codebook count mismatch");
  long counted = 0;
  std::optional<nn::Var> total;
  for (int k = 0; k < targets.codebooks; ++k) {
    const Matrix& l = tape.value(logits[static_cast<std::size_t>(k)]);
    if (l.rows() != targets.steps) throw ShapeError("gen_loss: step count mismatch");
    const std::vector<int> col = masked_targets(targets, k);
    for (int id : col) {
      if (id >= l.cols()) throw ShapeError("gen_loss: target outside logits");
      counted += id >= 0;
    }
    nn::Var term = nn::cross_entropy_sum(tape, logits[static_cast<std::size_t>(k)], col);
    total = total ? nn::add(tape, *total, term) : term;
  }
  if (counted == 0) throw DataError("gen_loss: every target position is padded");
  return nn::scale(tape, *total, 1.0 / static_cast<double>(counted));
}

double gen_loss(const std::vector<Matrix>& logits, const DelayedGrid& targets) {
  nn::Tape tape;
  std::vector<nn::Var> vars;
  for (const Matrix& m : logits) vars.push_back(tape.constant(m));
  return tape.value(gen_loss(tape, vars, targets))(0, 0);
}

// ---- training -------------------------------------------------------------------

namespace {

struct ClipGradient {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

template <typename LossFn>
TrainingHistory run_training(const ParameterRefs& trainable, std::size_t clip_count, const TrainSchedule& schedule,
                             LossFn&& clip_loss, const char* label) {
  if (schedule.epochs < 0 || schedule.batch_clips < 1 || !(schedule.learning_rate > 0.0)) {
    throw ConfigError("training schedule: bad epochs/batch/learning rate");
  }
  nn::Adam adam(trainable, {.learning_rate = schedule.learning_rate});
  std::mt19937_64 order_rng(derive_seed(schedule.seed, "order"));
  std::vector<std::size_t> order(clip_count);
  std::iota(order.begin(), order.end(), 0);
  TrainingHistory history;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(schedule.batch_clips)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(schedule.batch_clips));
      std::vector<ClipGradient> slots(end - begin);
      parallel_for(end - begin, [&](std::size_t i) {
        const std::size_t clip = order[begin + i];
        std::mt19937_64 rng(derive_seed(derive_seed(schedule.seed, static_cast<std::uint64_t>(epoch)), clip));
        nn::Tape tape;
        nn::Var loss = clip_loss(tape, clip, rng);
        tape.backward(loss);
        nn::GradientBuffer g(trainable);
        g.add_from(tape);
        slots[i] = {tape.value(loss)(0, 0), std::move(g.grads())};
      });
      std::vector<Matrix> sum = std::move(slots.front().grads);
      epoch_total += slots.front().loss;
      for (std::size_t i = 1; i < slots.size(); ++i) {
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += slots[i].grads[j];
        epoch_total += slots[i].loss;
      }
      for (Matrix& g : sum) g /= static_cast<double>(slots.size());
      adam.step(sum);
    }
    history.epoch_loss.push_back(epoch_total / static_cast<double>(clip_count));
    spdlog::debug("{} epoch {}: loss {:.4f}", label, epoch + 1, history.epoch_loss.back());
  }
  return history;
}

void check_clip(const ClipRecord& clip, const DecoderConfig& config) {
  if (clip.tokens.codebooks() != config.num_codebooks || clip.tokens.codec().vocab_size + 1 != config.vocab_size) {
    throw ShapeError("training clip does not match the decoder codec");
  }
  if (clip.tokens.steps() + config.num_codebooks - 1 > config.max_context) {
    throw ShapeError("training clip exceeds the decoder context");
  }
}

}  // namespace

TrainingHistory pretrain_backbone(MusicBackbone& backbone, const std::vector<ClipRecord>& corpus,
                                  const TrainSchedule& schedule) {
  if (corpus.empty()) throw DataError("pretrain_backbone: empty corpus");
  const DecoderConfig& config = backbone.decoder.config();
  std::vector<DelayedGrid> targets;
  for (const ClipRecord& clip : corpus) {
    check_clip(clip, config);
    targets.push_back(apply_delay(clip.tokens, clip.tokens.codec().pad_token()));
  }
  const MusicBackbone& frozen_view = backbone;
  return run_training(
      backbone.parameters(), corpus.size(), schedule,
      [&](nn::Tape& tape, std::size_t i, std::mt19937_64&) {
        nn::Var memory = frozen_view.anchor_encoder.encode(tape, corpus[i].anchor, true);
        auto logits = frozen_view.decoder.forward(tape, shift_for_prediction(targets[i]), memory, std::nullopt,
                                                  nullptr, true, false);
        return gen_loss(tape, logits, targets[i]);
      },
      "backbone");
}

ControlSignal clip_control(const ControlBranch& branch, const AffectTrajectory& trajectory, int steps) {
  return adapter_forward(interpolate(trajectory, steps), branch.adapter, AdapterMode::kEval);
}

TrainingHistory train_adapter(const MusicBackbone* backbone, ControlBranch& branch,
                              const std::vector<ClipRecord>& corpus, const TrainSchedule& schedule) {
  if (backbone == nullptr) throw ConfigError("train_adapter: a pretrained backbone is required");
  if (corpus.empty()) throw DataError("train_adapter: empty corpus");
  const DecoderConfig& config = backbone->decoder.config();
  if (branch.gates.injected_layers() > config.layers) throw ConfigError("train_adapter: more gates than decoder layers");
  std::vector<DelayedGrid> targets;
  std::vector<Matrix> dense;
  std::vector<Matrix> memories;
  for (const ClipRecord& clip : corpus) {
    check_clip(clip, config);
    targets.push_back(apply_delay(clip.tokens, clip.tokens.codec().pad_token()));
    dense.push_back(interpolate(clip.va_curve, clip.tokens.steps()));
    memories.push_back(backbone->anchor_encoder.encode(clip.anchor).context);
  }
  const ControlBranch& view = branch;
  return run_training(
      branch.parameters(), corpus.size(), schedule,
      [&](nn::Tape& tape, std::size_t i, std::mt19937_64& rng) {
        nn::Var c = view.adapter.forward(tape, tape.constant(dense[i]), AdapterMode::kTrain, &rng, true);
        nn::Var aligned = nn::gather_rows(tape, c, aligned_rows(static_cast<int>(dense[i].rows()), targets[i].steps));
        auto logits = backbone->decoder.forward(tape, shift_for_prediction(targets[i]), tape.constant(memories[i]),
                                                aligned, &view.gates, false, true);
        return gen_loss(tape, logits, targets[i]);
      },
      "adapter");
}

double evaluate_gen_loss(const MusicBackbone& backbone, const ControlBranch* branch,
                         const std::vector<ClipRecord>& clips) {
  if (clips.empty()) throw DataError("evaluate_gen_loss: no clips");
  std::vector<double> losses(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    const ClipRecord& clip = clips[i];
    check_clip(clip, backbone.decoder.config());
    const DelayedGrid target = apply_delay(clip.tokens, clip.tokens.codec().pad_token());
    const AnchorEmbedding anchor = backbone.anchor_encoder.encode(clip.anchor);
    std::optional<ControlSignal> control;
    if (branch) {
      control = ControlSignal{
          align_control(clip_control(*branch, clip.va_curve, clip.tokens.steps()).rows, target.steps)};
    }
    const GateParams none;
    losses[i] = gen_loss(decoder_forward(target, anchor, control ? &*control : nullptr,
                                         branch ? branch->gates : none, backbone.decoder),
                         target);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

// ---- sampling -------------------------------------------------------------------

void SamplerConfig::validate(int vocab) const {
  if (!(temperature > 0.0)) throw ConfigError("sampler: temperature must be > 0");
  if (top_k < 1 || top_k > vocab) throw ConfigError("sampler: top_k must be in [1, N]");
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

int sample_token(const RowVector& logits, int pad_id, const SamplerConfig& sampler, std::mt19937_64& rng) {
  const int vocab = static_cast<int>(logits.size());
  std::vector<int> ids(static_cast<std::size_t>(vocab));
  std::iota(ids.begin(), ids.end(), 0);
  const int k = std::min(sampler.top_k, vocab);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&logits](int a, int b) {
    return logits(a) != logits(b) ? logits(a) > logits(b) : a < b;
  });
  ids.resize(static_cast<std::size_t>(k));
  std::erase(ids, pad_id);
  if (ids.empty()) {
    int best = -1;
    for (int i = 0; i < vocab; ++i) {
      if (i != pad_id && (best < 0 || logits(i) > logits(best))) best = i;
    }
    return best;
  }
  const double top = logits(ids.front());
  std::vector<double> weights;
  double total = 0.0;
  for (int id : ids) {
    weights.push_back(std::exp((logits(id) - top) / sampler.temperature));
    total += weights.back();
  }
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return ids[i];
  }
  return ids.back();
}

DecoderSession::DecoderSession(const AcousticDecoder& decoder, const AnchorEmbedding& anchor, const GateParams* gates)
    : decoder_(decoder), gates_(gates) {
  const DecoderConfig& cfg = decoder.config();
  if (anchor.context.cols() != cfg.model_dim) throw ShapeError("session: anchor width mismatch");
  if (gates && gates->injected_layers() > cfg.layers) throw ShapeError("session: more gates than layers");
  const int d = cfg.model_dim;
  for (const AcousticDecoder::Block& b : decoder.blocks_) {
    keys_.push_back(Matrix(cfg.max_context, d));
    values_.push_back(Matrix(cfg.max_context, d));
    Matrix kv = anchor.context * b.cross_kv_weight.value;
    kv.rowwise() += b.cross_kv_bias.value.row(0);
    cross_keys_.push_back(kv.leftCols(d));
    cross_values_.push_back(kv.rightCols(d));
  }
}

namespace {

RowVector attend(const RowVector& q, const Matrix& keys, const Matrix& values, Eigen::Index rows, int heads) {
  const Eigen::Index dim = q.size();
  const Eigen::Index hd = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  RowVector out(dim);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * hd;
    Eigen::RowVectorXd scores = (q.segment(c0, hd) * keys.block(0, c0, rows, hd).transpose()) * scale;
    scores = (scores.array() - scores.maxCoeff()).exp();
    scores /= scores.sum();
    out.segment(c0, hd) = scores * values.block(0, c0, rows, hd);
  }
  return out;
}

RowVector affine(const RowVector& x, const Parameter& w, const Parameter& b) { return x * w.value + b.value; }

}  // namespace

Matrix DecoderSession::step(std::span<const int> input_row, const RowVector* control_row) {
  const DecoderConfig& cfg = decoder_.config();
  const int d = cfg.model_dim;
  if (position_ >= cfg.max_context) throw ShapeError("session: context overflow");
  if (static_cast<int>(input_row.size()) != cfg.num_codebooks) throw ShapeError("session: row width mismatch");
  if (control_row && control_row->size() != d) throw ShapeError("session: control width mismatch");

  RowVector h = decoder_.position_table_.value.row(position_);
  for (int k = 0; k < cfg.num_codebooks; ++k) {
    const int id = input_row[static_cast<std::size_t>(k)];
    if (id < 0 || id >= cfg.vocab_size) throw ShapeError("session: token id out of range");
    h += decoder_.token_tables_[static_cast<std::size_t>(k)].value.row(id);
  }
  const int shallow = gates_ ? gates_->injected_layers() : 0;
  for (int l = 0; l < cfg.layers; ++l) {
    const AcousticDecoder::Block& b = decoder_.blocks_[static_cast<std::size_t>(l)];
    const auto li = static_cast<std::size_t>(l);
    if (control_row && gates_ && l < shallow) h += gates_->value(l) * *control_row;

    RowVector a = nn::layer_norm_rows(h, b.ln1_gain.value.row(0), b.ln1_bias.value.row(0));
    const RowVector qkv = affine(a, b.qkv_weight, b.qkv_bias);
    keys_[li].row(position_) = qkv.segment(d, d);
    values_[li].row(position_) = qkv.segment(2 * d, d);
    h += affine(attend(qkv.head(d), keys_[li], values_[li], position_ + 1, cfg.heads), b.attn_out_weight,
                b.attn_out_bias);

    a = nn::layer_norm_rows(h, b.ln2_gain.value.row(0), b.ln2_bias.value.row(0));
    const RowVector q = affine(a, b.cross_q_weight, b.cross_q_bias);
    h += affine(attend(q, cross_keys_[li], cross_values_[li], cross_keys_[li].rows(), cfg.heads), b.cross_out_weight,
                b.cross_out_bias);

    a = nn::layer_norm_rows(h, b.ln3_gain.value.row(0), b.ln3_bias.value.row(0));
    RowVector mid = affine(a, b.mlp_in_weight, b.mlp_in_bias);
    mid = mid.unaryExpr([](double x) { return nn::gelu_value(x); });
    h += affine(mid, b.mlp_out_weight, b.mlp_out_bias);
  }
  const RowVector out = nn::layer_norm_rows(h, decoder_.final_gain_.value.row(0), decoder_.final_bias_.value.row(0));
  Matrix logits(cfg.num_codebooks, cfg.vocab_size);
  for (int k = 0; k < cfg.num_codebooks; ++k) {
    logits.row(k) = affine(out, decoder_.head_weights_[static_cast<std::size_t>(k)],
                           decoder_.head_biases_[static_cast<std::size_t>(k)]);
  }
  ++position_;
  return logits;
}

TokenGrid sample(const MusicBackbone& backbone, const AnchorEmbedding& anchor, const ControlSignal* control,
                 const GateParams* gates, const TokenGrid& prefix, const SamplerConfig& sampler, int length,
                 SampleStats* stats) {
  const DecoderConfig& cfg = backbone.decoder.config();
  const CodecSpec& codec = prefix.codec();
  if (codec.num_codebooks != cfg.num_codebooks || codec.vocab_size + 1 != cfg.vocab_size) {
    throw ShapeError("sample: prefix codec does not match the decoder");
  }
  sampler.validate(codec.vocab_size);
  if (length < 1) throw ConfigError("sample: length must be >= 1");
  const int total = prefix.steps() + length;
  const int positions = total + cfg.num_codebooks - 1;
  if (positions > cfg.max_context) throw ShapeError("sample: context overflow");
  if (control && control->steps() != total) throw ShapeError("sample: control must cover prefix + length");

  const int pad = codec.pad_token();
  DelayedGrid grid{positions, cfg.num_codebooks, pad, std::vector<int>(static_cast<std::size_t>(positions) *
                                                                           static_cast<std::size_t>(cfg.num_codebooks),
                                                                       pad)};
  DecoderSession session(backbone.decoder, anchor, gates);
  std::mt19937_64 rng(sampler.seed);
  const std::vector<int> bos(static_cast<std::size_t>(cfg.num_codebooks), pad);
  for (int s = 0; s < positions; ++s) {
    const RowVector control_row = control ? RowVector(control->rows.row(std::min(s, total - 1))) : RowVector();
    const Matrix logits = session.step(s == 0 ? std::span<const int>(bos) : grid.row(s - 1),
                                       control ? &control_row : nullptr);
    for (int k = 0; k < cfg.num_codebooks; ++k) {
      const int t = s - k;
      if (t < 0 || t >= total) continue;
      grid.set(s, k, t < prefix.steps() ? prefix.at(t, k) : sample_token(logits.row(k), pad, sampler, rng));
    }
  }
  if (stats) stats->peak_context = std::max(stats->peak_context, positions);
  return remove_delay(grid, codec).slice(prefix.steps(), length);
}

}  // namespace arcscore
