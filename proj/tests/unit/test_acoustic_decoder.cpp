#include <doctest.h>

#include <cmath>
#include <random>

#include "arcscore/acoustic_decoder.hpp"
#include "arcscore/errors.hpp"
#include "arcscore/weights_io.hpp"
#include "test_support.hpp"

using namespace arcscore;

namespace {

CodecSpec tiny_codec() {
  CodecSpec c;
  c.num_codebooks = 2;
  c.vocab_size = 8;
  c.tokens_per_second = 2;
  return c;
}

DecoderConfig tiny_config(int layers = 2, int dim = 8, double rho = 1.0) {
  DecoderConfig d = decoder_config_for(tiny_codec());
  d.layers = layers;
  d.model_dim = dim;
  d.heads = 2;
  d.max_context = 24;
  d.injection_ratio = rho;
  d.seed = 31;
  return d;
}

TokenGrid random_tokens(const CodecSpec& codec, int steps, std::mt19937_64& rng) {
  TokenGrid g(codec, steps);
  std::uniform_int_distribution<int> id(0, codec.vocab_size - 1);
  for (int t = 0; t < steps; ++t)
    for (int k = 0; k < codec.num_codebooks; ++k) g.set(t, k, id(rng));
  return g;
}

SemanticAnchor some_anchor() {
  SemanticAnchor a;
  a.ids = {1, 5, 2, 7};
  return a;
}

double max_abs_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return m;
}

std::vector<ClipRecord> toy_corpus(const CodecSpec& codec, int clips, std::uint64_t seed) {
  std::vector<ClipRecord> out;
  for (int i = 0; i < clips; ++i) {
    ClipRecord c;
    c.va_curve = make_arc(derive_seed(seed, static_cast<std::uint64_t>(i)), 10,
                          i % 2 ? Archetype::kRise : Archetype::kFall)
                     .sample_1hz();
    c.tokens = grammar_emit(c.va_curve, codec, derive_seed(seed, static_cast<std::uint64_t>(100 + i)));
    c.anchor = some_anchor();
    c.anchor.ids[0] = i % 8;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

TEST_CASE("injection ratio schedule") {
  DecoderConfig c;
  for (auto [rho, shallow] : {std::pair{0.5, 4}, {0.75, 6}, {1.0, 8}}) {
    c.injection_ratio = rho;
    CHECK(c.shallow_layers() == shallow);
    CHECK(GateParams(c).injected_layers() == shallow);
  }
  c.injection_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.injection_ratio = 0.3;
  CHECK(c.shallow_layers() == 3);
  c.injection_ratio = 0.75;
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("gates start at zero; tying shares one scalar") {
  DecoderConfig c = tiny_config();
  const GateParams g(c);
  for (int l = 0; l < g.injected_layers(); ++l) CHECK(g.value(l) == 0.0);
  c.tie_gates = true;
  GateParams tied(c);
  CHECK(tied.parameters().size() == 1);
  tied.for_layer(0).value(0, 0) = 0.3;
  CHECK(tied.value(1) == 0.3);
}

TEST_CASE("zero gates and zero control leave the logits untouched") {
  const CodecSpec codec = tiny_codec();
  const MusicBackbone music(tiny_config());
  const AnchorEmbedding anchor = music.anchor_encoder.encode(some_anchor());
  std::mt19937_64 rng(3);
  const DelayedGrid grid = apply_delay(random_tokens(codec, 9, rng), codec.pad_token());
  const ControlSignal control{random_normal(grid.steps, 8, 1.0, rng)};
  const GateParams fresh(music.decoder.config());
  const auto plain = decoder_forward(grid, anchor, nullptr, fresh, music.decoder);
  CHECK(max_abs_diff(plain, decoder_forward(grid, anchor, &control, fresh, music.decoder)) == 0.0);

  GateParams open(music.decoder.config());
  for (Parameter* p : open.parameters()) p->value(0, 0) = 0.7;
  const ControlSignal zeros{Matrix::Zero(grid.steps, 8)};
  CHECK(max_abs_diff(plain, decoder_forward(grid, anchor, &zeros, open, music.decoder)) == 0.0);
  CHECK(max_abs_diff(plain, decoder_forward(grid, anchor, &control, open, music.decoder)) > 1e-6);
}

TEST_CASE("injection arithmetic and locality") {
  const CodecSpec codec = tiny_codec();
  const MusicBackbone music(tiny_config(4, 8, 0.5));
  const AnchorEmbedding anchor = music.anchor_encoder.encode(some_anchor());
  std::mt19937_64 rng(5);
  const DelayedGrid grid = apply_delay(random_tokens(codec, 6, rng), codec.pad_token());
  const ControlSignal control{random_normal(grid.steps, 8, 1.0, rng)};
  GateParams gates(music.decoder.config());
  REQUIRE(gates.injected_layers() == 2);
  gates.for_layer(0).value(0, 0) = 0.5;
  gates.for_layer(1).value(0, 0) = 0.0;
  LayerTrace trace;
  decoder_forward(grid, anchor, &control, gates, music.decoder, &trace);
  REQUIRE(trace.before_injection.size() == 4);
  CHECK((trace.after_injection[0] - trace.before_injection[0] - 0.5 * align_control(control.rows, grid.steps))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  for (int l = 1; l < 4; ++l) CHECK(trace.after_injection[l] == trace.before_injection[l]);

  SUBCASE("the gates, not the backbone, set the injection depth") {
    GateParams deeper(tiny_config(4, 8, 0.75));
    REQUIRE(deeper.injected_layers() == 3);
    for (Parameter* p : deeper.parameters()) p->value(0, 0) = 0.5;
    LayerTrace deep;
    const auto logits = decoder_forward(grid, anchor, &control, deeper, music.decoder, &deep);
    for (int l = 0; l < 3; ++l) CHECK(deep.after_injection[l] != deep.before_injection[l]);
    CHECK(deep.after_injection[3] == deep.before_injection[3]);
    DecoderSession session(music.decoder, anchor, &deeper);
    const DelayedGrid inputs = shift_for_prediction(grid);
    const RowVector c0 = align_control(control.rows, grid.steps).row(0);
    const Matrix first = session.step(inputs.row(0), &c0);
    for (int k = 0; k < 2; ++k) CHECK((first.row(k) - logits[k].row(0)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(decoder_forward(grid, anchor, &control, GateParams(tiny_config(8, 8, 1.0)), music.decoder),
                    ShapeError);
  }

  SUBCASE("hand example h + gamma * C") {
    Matrix h(1, 2), c(1, 2);
    h << 1.0, 2.0;
    c << 0.2, -0.4;
    nn::Tape tape;
    Parameter gamma{"g", Matrix::Constant(1, 1, 0.5)};
    const Matrix out =
        tape.value(nn::add(tape, tape.constant(h), nn::scale_by(tape, tape.constant(c), tape.parameter(gamma))));
    CHECK(out(0, 0) == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(1.8).epsilon(1e-15));
  }
}

TEST_CASE("causality over tokens and control") {
  const CodecSpec codec = tiny_codec();
  const MusicBackbone music(tiny_config());
  const AnchorEmbedding anchor = music.anchor_encoder.encode(some_anchor());
  GateParams gates(music.decoder.config());
  for (Parameter* p : gates.parameters()) p->value(0, 0) = 0.4;
  std::mt19937_64 rng(6);
  const TokenGrid tokens = random_tokens(codec, 10, rng);
  const DelayedGrid grid = apply_delay(tokens, codec.pad_token());
  const ControlSignal control{random_normal(grid.steps, 8, 1.0, rng)};
  const auto base = decoder_forward(grid, anchor, &control, gates, music.decoder);
  for (int cut : {3, 7}) {
    DelayedGrid g2 = grid;
    ControlSignal c2 = control;
    for (int s = cut + 1; s < grid.steps; ++s) {
      for (int k = 0; k < 2; ++k)
        if (!g2.is_pad_position(s, k)) g2.set(s, k, (g2.at(s, k) + 3) % 8);
      c2.rows.row(s).setConstant(9.0);
    }
    // Position s reads token row s - 1 and control row s.
    const auto moved = decoder_forward(g2, anchor, &c2, gates, music.decoder);
    for (int k = 0; k < 2; ++k) {
      CHECK((moved[k].topRows(cut + 1) - base[k].topRows(cut + 1)).cwiseAbs().maxCoeff() == 0.0);
      CHECK((moved[k].row(cut + 1) - base[k].row(cut + 1)).norm() > 0.0);
    }
  }
}

TEST_CASE("generation loss") {
  DelayedGrid targets{3, 1, 64, {5, 9, 63}};
  const std::vector<Matrix> uniform{Matrix::Zero(3, 64)};
  CHECK(gen_loss(uniform, targets) == doctest::Approx(std::log(64.0)).epsilon(1e-12));
  Matrix sharp = Matrix::Constant(3, 64, -1e4);
  sharp(0, 5) = sharp(1, 9) = sharp(2, 63) = 0.0;
  CHECK(gen_loss({sharp}, targets) < 1e-12);
  const DelayedGrid padded{1, 2, 64, {64, 64}};
  CHECK_THROWS_AS(gen_loss({Matrix::Zero(1, 65), Matrix::Zero(1, 65)}, padded), DataError);

  SUBCASE("pad positions are excluded from the mean") {
    const CodecSpec codec = tiny_codec();
    TokenGrid t(codec, 2);
    t.set(0, 0, 1); t.set(0, 1, 2); t.set(1, 0, 3); t.set(1, 1, 4);
    const DelayedGrid d = apply_delay(t, codec.pad_token());
    Matrix l0 = Matrix::Zero(3, 9), l1 = Matrix::Zero(3, 9);
    l1(0, 8) = 50.0;  // the pad slot of codebook 1 at position 0 must not count
    CHECK(gen_loss({l0, l1}, d) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  }
}

TEST_CASE("decoder, gate and adapter gradients match finite differences") {
  const CodecSpec codec = tiny_codec();
  std::mt19937_64 rng(8);
  const DelayedGrid target = apply_delay(random_tokens(codec, 5, rng), codec.pad_token());

  SUBCASE("gen_loss w.r.t. every backbone parameter") {
    MusicBackbone music(tiny_config());
    auto build = [&](nn::Tape& tape) {
      nn::Var mem = music.anchor_encoder.encode(tape, some_anchor(), true);
      auto logits = music.decoder.forward(tape, shift_for_prediction(target), mem, std::nullopt, nullptr, true, false);
      return gen_loss(tape, logits, target);
    };
    const auto r = arcscore::testing::check_gradients(build, music.parameters());
    CHECK(r.worst_relative_error < 1e-4);
  }
  SUBCASE("gen_loss w.r.t. gates and adapter through a frozen backbone") {
    const MusicBackbone music(tiny_config());
    AdapterConfig ac;
    ac.model_dim = 8;
    ControlBranch branch(ac, music.decoder.config());
    for (Parameter* p : branch.gates.parameters()) p->value(0, 0) = 0.3;
    const Matrix dense = random_normal(5, 2, 0.5, rng);
    const Matrix memory = music.anchor_encoder.encode(some_anchor()).context;
    auto build = [&](nn::Tape& tape) {
      nn::Var c = branch.adapter.forward(tape, tape.constant(dense), AdapterMode::kEval, nullptr, true);
      std::vector<int> rows(static_cast<std::size_t>(target.steps));
      for (int s = 0; s < target.steps; ++s) rows[static_cast<std::size_t>(s)] = std::min(s, 4);
      const nn::Var aligned = nn::gather_rows(tape, c, rows);
      auto logits = music.decoder.forward(tape, shift_for_prediction(target), tape.constant(memory), aligned,
                                          &branch.gates, false, true);
      return gen_loss(tape, logits, target);
    };
    const auto r = arcscore::testing::check_gradients(build, branch.parameters());
    CHECK(r.worst_relative_error < 1e-4);
  }
}

TEST_CASE("incremental session matches the full forward pass") {
  const CodecSpec codec = tiny_codec();
  const MusicBackbone music(tiny_config());
  const AnchorEmbedding anchor = music.anchor_encoder.encode(some_anchor());
  GateParams gates(music.decoder.config());
  for (Parameter* p : gates.parameters()) p->value(0, 0) = -0.2;
  std::mt19937_64 rng(9);
  const DelayedGrid grid = apply_delay(random_tokens(codec, 8, rng), codec.pad_token());
  const ControlSignal control{random_normal(grid.steps, 8, 1.0, rng)};
  const auto full = decoder_forward(grid, anchor, &control, gates, music.decoder);
  DecoderSession session(music.decoder, anchor, &gates);
  const DelayedGrid inputs = shift_for_prediction(grid);
  for (int s = 0; s < grid.steps; ++s) {
    const RowVector c = control.rows.row(s);
    const Matrix logits = session.step(inputs.row(s), &c);
    for (int k = 0; k < 2; ++k) CHECK((logits.row(k) - full[k].row(s)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("top-k sampling") {
  std::mt19937_64 rng(1);
  RowVector logits(6);
  logits << 0.1, 3.0, 2.0, -1.0, 0.5, 10.0;  // id 5 is the pad
  SamplerConfig greedy;
  greedy.top_k = 1;
  CHECK(sample_token(logits, 5, greedy, rng) == 1);
  SamplerConfig two;
  two.top_k = 3;
  for (int i = 0; i < 200; ++i) {
    const int id = sample_token(logits, 5, two, rng);
    CHECK((id == 1 || id == 2));
  }
  SamplerConfig cold;
  cold.top_k = 5;
  cold.temperature = 1e-3;
  for (int i = 0; i < 20; ++i) CHECK(sample_token(logits, 5, cold, rng) == 1);
  RowVector ties = RowVector::Zero(6);
  CHECK(sample_token(ties, 5, greedy, rng) == 0);
  CHECK_THROWS_AS(SamplerConfig{.temperature = 0.0}.validate(64), ConfigError);
  CHECK_THROWS_AS(SamplerConfig{.top_k = 65}.validate(64), ConfigError);
  CHECK_THROWS_AS(SamplerConfig{.top_k = 0}.validate(64), ConfigError);
}

TEST_CASE("sampling shape, determinism and prefix continuation") {
  const CodecSpec codec;
  DecoderConfig c = decoder_config_for(codec);
  c.layers = 2;
  c.model_dim = 16;
  c.max_context = 160;
  const MusicBackbone music(c);
  const AnchorEmbedding anchor = music.anchor_encoder.encode(some_anchor());
  SamplerConfig sampler;
  sampler.seed = 4;
  SampleStats stats;
  const TokenGrid a = sample(music, anchor, nullptr, nullptr, TokenGrid(codec, 0), sampler, 100, &stats);
  CHECK(a.steps() == 100);
  CHECK(a.codebooks() == 4);
  CHECK(stats.peak_context == 103);
  CHECK(sample(music, anchor, nullptr, nullptr, TokenGrid(codec, 0), sampler, 100) == a);
  sampler.seed = 5;
  CHECK(!(sample(music, anchor, nullptr, nullptr, TokenGrid(codec, 0), sampler, 100) == a));
  for (int id : a.ids()) CHECK(id < codec.vocab_size);

  const TokenGrid cont = sample(music, anchor, nullptr, nullptr, a.slice(0, 20), sampler, 30);
  CHECK(cont.steps() == 30);
  CHECK_THROWS_AS(sample(music, anchor, nullptr, nullptr, TokenGrid(codec, 0), sampler, 200), ShapeError);
  const ControlSignal short_control{Matrix::Zero(10, 16)};
  GateParams gates(c);
  CHECK_THROWS_AS(sample(music, anchor, &short_control, &gates, TokenGrid(codec, 0), sampler, 20), ShapeError);
}

TEST_CASE("backbone pretraining and adapter fine-tuning on a toy corpus") {
  const CodecSpec codec = tiny_codec();
  DecoderConfig c = tiny_config(2, 16, 0.5);
  c.max_context = 32;
  MusicBackbone music(c);
  const auto corpus = toy_corpus(codec, 12, 77);
  const auto heldout = toy_corpus(codec, 4, 78);

  TrainSchedule schedule;
  schedule.epochs = 12;
  schedule.learning_rate = 1e-2;
  const TrainingHistory h = pretrain_backbone(music, corpus, schedule);
  REQUIRE(h.epoch_loss.size() == 12);
  CHECK(h.epoch_loss.back() < std::log(8.0));
  for (std::size_t e = 1; e < h.epoch_loss.size(); ++e) CHECK(h.epoch_loss[e] <= 1.05 * h.epoch_loss[e - 1]);
  CHECK_THROWS_AS(pretrain_backbone(music, {}, schedule), DataError);

  arcscore::testing::TempDir dir("decoder");
  save_weights(dir / "b.weights", music.parameters());
  MusicBackbone reloaded(c);
  load_weights(dir / "b.weights", reloaded.parameters());
  std::mt19937_64 rng(2);
  const DelayedGrid grid = apply_delay(random_tokens(codec, 7, rng), codec.pad_token());
  const GateParams none;
  CHECK(max_abs_diff(decoder_forward(grid, music.anchor_encoder.encode(some_anchor()), nullptr, none, music.decoder),
                     decoder_forward(grid, reloaded.anchor_encoder.encode(some_anchor()), nullptr, none,
                                     reloaded.decoder)) == 0.0);

  AdapterConfig ac;
  ac.model_dim = 16;
  ControlBranch branch(ac, c);
  const std::uint64_t before = parameter_checksum(arcscore::as_const(music.parameters()));
  const std::uint64_t decoder_before = music.decoder.checksum();
  TrainSchedule adapter_schedule = schedule;
  adapter_schedule.epochs = 6;
  train_adapter(&music, branch, corpus, adapter_schedule);
  CHECK(parameter_checksum(arcscore::as_const(music.parameters())) == before);
  CHECK(music.decoder.checksum() == decoder_before);
  bool any_open = false;
  for (int l = 0; l < branch.gates.injected_layers(); ++l) any_open |= branch.gates.value(l) != 0.0;
  CHECK(any_open);
  CHECK_THROWS_AS(train_adapter(nullptr, branch, corpus, adapter_schedule), ConfigError);
  CHECK(std::isfinite(evaluate_gen_loss(music, &branch, heldout)));
}
