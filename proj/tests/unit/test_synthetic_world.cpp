#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "arcscore/corpus.hpp"
#include "arcscore/errors.hpp"
#include "arcscore/synthetic_world.hpp"

using namespace arcscore;

namespace {

AffectTrajectory constant_trajectory(double v, double a, int seconds) {
  AffectTrajectory t;
  t.points.assign(static_cast<std::size_t>(seconds), AffectPoint{v, a});
  return t;
}

TokenGrid random_grid(const CodecSpec& codec, int steps, std::mt19937_64& rng) {
  TokenGrid g(codec, steps);
  std::uniform_int_distribution<int> id(0, codec.vocab_size - 1);
  for (int t = 0; t < steps; ++t)
    for (int k = 0; k < codec.num_codebooks; ++k) g.set(t, k, id(rng));
  return g;
}

}  // namespace

TEST_CASE("codec defaults and pools") {
  CodecSpec c;
  CHECK(c.num_codebooks == 4);
  CHECK(c.vocab_size == 64);
  CHECK(c.tokens_per_second == 10);
  CHECK(c.silence_token == 0);
  CHECK(c.pad_token() == 64);
  const auto major = c.major_pool();
  const auto minor = c.minor_pool();
  CHECK(major.front() == 1);
  CHECK(major.back() == 32);
  CHECK(minor.front() == 33);
  CHECK(minor.back() == 63);
  CHECK(major.size() + minor.size() == 63);
  CodecSpec bad;
  bad.silence_token = 64;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("arc archetypes") {
  SUBCASE("plateau is constant") {
    const AffectTrajectory t = make_arc(7, 60, Archetype::kPlateau).sample_1hz();
    for (const AffectPoint& p : t.points) CHECK(p == t.points.front());
  }
  SUBCASE("rise is monotone in arousal") {
    const NarrativeArc arc = make_arc(7, 60, Archetype::kRise);
    CHECK(arc.at(0.0).arousal < arc.at(60.0).arousal);
    for (int s = 1; s <= 60; ++s) CHECK(arc.at(s).arousal >= arc.at(s - 1).arousal);
  }
  SUBCASE("rise-fall peaks inside") {
    const NarrativeArc arc = make_arc(7, 60, Archetype::kRiseFall);
    int best = 0;
    for (int s = 0; s <= 60; ++s)
      if (arc.at(s).arousal > arc.at(best).arousal) best = s;
    CHECK(best > 0);
    CHECK(best < 60);
  }
  SUBCASE("segments are continuous and sum to the total") {
    for (Archetype a : kAllArchetypes) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const NarrativeArc arc = make_arc(seed, 97, a);
        double total = 0.0;
        for (std::size_t i = 0; i < arc.segments.size(); ++i) {
          total += arc.segments[i].duration_s;
          if (i > 0) CHECK(arc.segments[i].start == arc.segments[i - 1].end);
          for (const AffectPoint& p : {arc.segments[i].start, arc.segments[i].end}) {
            CHECK(std::abs(p.valence) <= 1.0);
            CHECK(std::abs(p.arousal) <= 1.0);
          }
        }
        CHECK(total == doctest::Approx(arc.total_duration_s).epsilon(1e-12));
        CHECK(arc.sample_1hz().duration_s() == 97);
      }
    }
  }
  CHECK_THROWS_AS(parse_archetype("crescendo"), ConfigError);
  CHECK(parse_archetype("random-walk") == Archetype::kRandomWalk);
  CHECK_THROWS_AS(make_arc(1, 9, Archetype::kRise), ConfigError);
}

TEST_CASE("grammar constants") {
  CHECK(switch_probability(1.0) == doctest::Approx(0.95));
  CHECK(switch_probability(-1.0) == doctest::Approx(0.05));
  CHECK(major_probability(0.0) == doctest::Approx(0.5));
  CHECK(codebook_token(5, 1, 64) == 12);
  CHECK(codebook_token(63, 1, 64) == 7);
  CHECK(codebook_token(1, 3, 64) == 22);
}

TEST_CASE("grammar emission") {
  const CodecSpec codec;
  SUBCASE("high arousal switches almost every step") {
    const TokenGrid g = grammar_emit(constant_trajectory(0.0, 1.0, 120), codec, 11);
    int switches = 0;
    for (int t = 1; t < g.steps(); ++t) switches += g.at(t, 0) != g.at(t - 1, 0);
    const double rate = static_cast<double>(switches) / (g.steps() - 1);
    CHECK(rate >= 0.90);
    CHECK(rate <= 1.0);
  }
  SUBCASE("full valence stays in the major pool") {
    const TokenGrid g = grammar_emit(constant_trajectory(1.0, 0.3, 60), codec, 12);
    for (int t = 0; t < g.steps(); ++t) CHECK(codec.is_major(g.at(t, 0)));
  }
  SUBCASE("higher codebooks follow codebook 0 and silence is never emitted") {
    const TokenGrid g = grammar_emit(make_arc(3, 40, Archetype::kRandomWalk), codec, 13);
    CHECK(g.steps() == 400);
    for (int t = 0; t < g.steps(); ++t) {
      CHECK(g.at(t, 0) != codec.silence_token);
      for (int k = 1; k < 4; ++k) CHECK(g.at(t, k) == 1 + ((g.at(t, 0) - 1 + 7 * k) % 63));
    }
  }
  SUBCASE("deterministic in the seed") {
    const AffectTrajectory t = make_arc(4, 30, Archetype::kRise).sample_1hz();
    CHECK(grammar_emit(t, codec, 5) == grammar_emit(t, codec, 5));
    CHECK(!(grammar_emit(t, codec, 5) == grammar_emit(t, codec, 6)));
  }
}

TEST_CASE("oracle decoding") {
  const CodecSpec codec;
  SUBCASE("hand example: 3 switches in 9 transitions") {
    TokenGrid g(codec, 10);
    const int ids[10] = {1, 1, 1, 2, 2, 2, 3, 3, 3, 40};
    for (int t = 0; t < 10; ++t) g.set(t, 0, ids[t]);
    const auto stats = window_stats(g, 0, 10);
    CHECK(stats.transitions == 9);
    CHECK(stats.switches == 3);
    const auto p = decode_window(stats);
    REQUIRE(p);
    CHECK(p->arousal == doctest::Approx(2.0 * ((1.0 / 3.0 - 0.05) / 0.90) - 1.0).epsilon(1e-12));
    CHECK(p->arousal == doctest::Approx(-0.3704).epsilon(1e-3));
    CHECK(p->valence == doctest::Approx(0.8));
  }
  SUBCASE("all-silence window is undefined") {
    const TokenGrid silent(codec, 50);
    const auto out = oracle_decode(silent, 5);
    REQUIRE(out.size() == 1);
    CHECK(!out[0]);
  }
  SUBCASE("silence steps are excluded") {
    TokenGrid g(codec, 6);
    const int ids[6] = {1, 0, 1, 1, 0, 0};
    for (int t = 0; t < 6; ++t) g.set(t, 0, ids[t]);
    const auto stats = window_stats(g, 0, 6);
    CHECK(stats.voiced_steps == 3);
    CHECK(stats.transitions == 1);
    CHECK(stats.switches == 0);
  }
  CHECK_THROWS_AS(oracle_decode(TokenGrid(codec, 0), 5), ShapeError);
  CHECK_THROWS_AS(oracle_decode(TokenGrid(codec, 10), 0), ConfigError);
}

TEST_CASE("grammar and oracle agree on constant affect in every quadrant") {
  const CodecSpec codec;
  const AffectPoint quadrants[4] = {{0.5, 0.5}, {-0.5, 0.5}, {-0.5, -0.5}, {0.5, -0.5}};
  for (const AffectPoint& q : quadrants) {
    double err_v = 0.0, err_a = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const TokenGrid g = grammar_emit(constant_trajectory(q.valence, q.arousal, 30), codec, seed);
      const auto p = decode_window(window_stats(g, 0, g.steps()));
      REQUIRE(p);
      err_v += std::abs(p->valence - q.valence);
      err_a += std::abs(p->arousal - q.arousal);
    }
    CHECK(err_v / 100.0 <= 0.15);
    CHECK(err_a / 100.0 <= 0.15);
  }
}

TEST_CASE("delay pattern") {
  CodecSpec codec;
  codec.num_codebooks = 2;
  SUBCASE("hand example") {
    TokenGrid g(codec, 3);
    g.set(0, 0, 1); g.set(0, 1, 2);
    g.set(1, 0, 3); g.set(1, 1, 4);
    g.set(2, 0, 5); g.set(2, 1, 6);
    const DelayedGrid d = apply_delay(g, codec.pad_token());
    const int P = codec.pad_token();
    CHECK(d.steps == 4);
    CHECK(d.ids == std::vector<int>{1, P, 3, 2, 5, 4, P, 6});
    CHECK(remove_delay(d, codec) == g);
  }
  SUBCASE("one codebook is the identity") {
    CodecSpec one;
    one.num_codebooks = 1;
    std::mt19937_64 rng(3);
    const TokenGrid g = random_grid(one, 7, rng);
    const DelayedGrid d = apply_delay(g, one.pad_token());
    CHECK(d.steps == 7);
    CHECK(std::vector<int>(g.ids().begin(), g.ids().end()) == d.ids);
  }
  SUBCASE("exhaustive round trip for T <= 64, K <= 4") {
    std::mt19937_64 rng(99);
    for (int k = 1; k <= 4; ++k) {
      CodecSpec c;
      c.num_codebooks = k;
      for (int t = 1; t <= 64; ++t) {
        for (int rep = 0; rep < 3; ++rep) {
          const TokenGrid g = random_grid(c, t, rng);
          const DelayedGrid d = apply_delay(g, c.pad_token());
          CHECK(d.steps == t + k - 1);
          for (int s = 0; s < d.steps; ++s)
            for (int j = 0; j < k; ++j) CHECK((d.at(s, j) == c.pad_token()) == d.is_pad_position(s, j));
          CHECK(remove_delay(d, c) == g);
        }
      }
    }
  }
  SUBCASE("malformed grids are rejected") {
    TokenGrid g(codec, 3);
    DelayedGrid d = apply_delay(g, codec.pad_token());
    d.set(0, 1, 5);
    CHECK_THROWS_AS(remove_delay(d, codec), DecodeError);
    DelayedGrid e = apply_delay(g, codec.pad_token());
    e.set(1, 0, codec.pad_token());
    CHECK_THROWS_AS(remove_delay(e, codec), DecodeError);
    CHECK_THROWS_AS(apply_delay(g, 3), ConfigError);
  }
}

TEST_CASE("pseudo-video rendering") {
  const SyntheticWorld world;
  const NarrativeArc arc = make_arc(7, 60, Archetype::kRiseFall);
  const PseudoVideo a = render_pseudo_video(world, arc, 3, 17);
  CHECK(a.duration_s() == 60);
  CHECK(a.frames.front().rows() == 4);
  CHECK(a.frames.front().cols() == 32);
  CHECK(a.ground_truth == arc.sample_1hz());
  const PseudoVideo b = render_pseudo_video(world, arc, 3, 17);
  for (int s = 0; s < 60; ++s) CHECK(a.frames[s] == b.frames[s]);

  SUBCASE("frames differ by the affect loading times the VA difference") {
    const AffectTrajectory t1 = constant_trajectory(0.2, -0.1, 5);
    const AffectTrajectory t2 = constant_trajectory(-0.4, 0.7, 5);
    const PseudoVideo v1 = render_pseudo_video(world, t1, 9, 4);
    const PseudoVideo v2 = render_pseudo_video(world, t2, 9, 4);
    RowVector dva(2);
    dva << -0.6, 0.8;
    const RowVector expected = (world.affect_loading() * dva.transpose()).transpose();
    for (int s = 0; s < 5; ++s)
      for (int m = 0; m < 4; ++m) CHECK((v2.frames[s].row(m) - v1.frames[s].row(m) - expected).norm() < 1e-9);
  }
  SUBCASE("least-squares inverse recovers affect up to noise") {
    double err = 0.0;
    for (int s = 0; s < 60; ++s) {
      const AffectPoint p = world.estimate_affect(a.frames[s], 3);
      err += std::abs(p.valence - a.ground_truth.points[s].valence) + std::abs(p.arousal - a.ground_truth.points[s].arousal);
    }
    CHECK(err / 120.0 < 0.2);
  }
}

TEST_CASE("segmentation") {
  const SyntheticWorld world;
  const CodecSpec codec;
  auto stream_of = [&](int seconds) {
    SourceStream s;
    s.source_id = 4;
    s.seed = 21;
    s.va = make_arc(5, std::max(seconds, 10), Archetype::kRise).sample_1hz();
    s.va.points.resize(static_cast<std::size_t>(seconds));
    s.tokens = grammar_emit(s.va, codec, 8);
    return s;
  };
  SUBCASE("90 s stream gives five clips") {
    const auto clips = segment_clips(stream_of(90), world);
    REQUIRE(clips.size() == 5);
    const int starts[5] = {0, 15, 30, 45, 60};
    for (int i = 0; i < 5; ++i) {
      CHECK(clips[i].clip_start_s == starts[i]);
      CHECK(clips[i].va_curve.duration_s() == 30);
      CHECK(clips[i].tokens.steps() == 300);
    }
  }
  CHECK(segment_clips(stream_of(30), world).size() == 1);
  CHECK(segment_clips(stream_of(29), world).empty());
  SUBCASE("coverage") {
    for (int duration : {30, 44, 45, 61, 90, 137}) {
      const std::vector<int> starts = clip_starts(duration, 30, 15);
      const int end = starts.back() + 30;
      for (int s = 0; s < end; ++s) {
        int cover = 0;
        for (int st : starts) cover += (s >= st && s < st + 30);
        CHECK(cover >= 1);
        if (s >= 15 && s < end - 15) CHECK(cover >= 2);
      }
    }
  }
}

TEST_CASE("silence filter boundary") {
  const CodecSpec codec;
  auto clip_with_silence = [&](int silent_steps) {
    ClipRecord c;
    c.va_curve = constant_trajectory(0.0, 0.0, 10);
    c.tokens = grammar_emit(c.va_curve, codec, 2);
    for (int t = 0; t < silent_steps; ++t)
      for (int k = 0; k < 4; ++k) c.tokens.set(t, k, 0);
    return c;
  };
  CHECK(silence_ratio(clip_with_silence(41).tokens) == doctest::Approx(0.41));
  CHECK(silence_filter({clip_with_silence(41)}).empty());
  CHECK(silence_filter({clip_with_silence(40)}).size() == 1);
  CHECK(silence_filter({clip_with_silence(0)}).size() == 1);
}

TEST_CASE("corpus reaches its clip-minute target") {
  const SyntheticWorld world;
  CorpusConfig config;
  config.scale = 0.05;
  const auto corpus = build_corpus(CodecSpec{}, world, config, 5);
  double minutes = 0.0;
  for (const ClipRecord& c : corpus) {
    minutes += c.va_curve.duration_s() / 60.0;
    CHECK(c.va_curve.duration_s() * 10 == c.tokens.steps());
    CHECK(silence_ratio(c.tokens) <= 0.40);
  }
  CHECK(minutes >= 0.05 * 800.0);
  const auto again = build_corpus(CodecSpec{}, world, config, 5);
  REQUIRE(again.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(again[i].tokens == corpus[i].tokens);
}
