#include <doctest.h>

#include <cstring>

#include "arcscore/dataset_io.hpp"
#include "arcscore/errors.hpp"
#include "arcscore/pipeline.hpp"
#include "test_support.hpp"

using namespace arcscore;

TEST_CASE("tokens.bin layout") {
  CodecSpec codec;
  codec.num_codebooks = 2;
  TokenGrid g(codec, 2);
  g.set(0, 0, 1);
  g.set(0, 1, 2);
  g.set(1, 0, 63);
  g.set(1, 1, 258 % 64);
  const std::string bytes = encode_tokens_bin(g);
  const std::string header = "TOKENS v1 2 2 64\n";
  REQUIRE(bytes.size() == header.size() + 8);
  CHECK(bytes.substr(0, header.size()) == header);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + header.size();
  CHECK(p[0] == 1);
  CHECK(p[1] == 0);
  CHECK(p[2] == 2);
  CHECK(p[4] == 63);
  CHECK(decode_tokens_bin(bytes, CodecSpec{}) == g);

  CHECK_THROWS_AS(decode_tokens_bin(bytes.substr(0, bytes.size() - 1), CodecSpec{}), DecodeError);
  CHECK_THROWS_AS(decode_tokens_bin("TOKENS v2 2 2 64\n" + bytes.substr(header.size()), CodecSpec{}), DecodeError);
  std::string out_of_range = bytes;
  out_of_range[header.size()] = 64;
  CHECK_THROWS_AS(decode_tokens_bin(out_of_range, CodecSpec{}), DecodeError);
}

TEST_CASE("va.csv round trip") {
  AffectTrajectory t;
  t.points = {{0.1, -0.2}, {0.123457, 1.0}, {-1.0, 0.0}};
  const std::string text = encode_va_csv(t);
  CHECK(text.rfind("t_s,valence,arousal\n0,", 0) == 0);
  CHECK(decode_va_csv(text) == t);
  AffectTrajectory fine;
  fine.points = {{0.123456789, -0.5}};
  CHECK(decode_va_csv(encode_va_csv(fine)).points[0].valence == 0.123457);
  CHECK_THROWS_AS(decode_va_csv("time,v,a\n"), DecodeError);
  CHECK_THROWS_AS(decode_va_csv("t_s,valence,arousal\n0,abc,1\n"), DecodeError);
}

TEST_CASE("clip directories round trip") {
  arcscore::testing::TempDir dir("dataset");
  const SyntheticWorld world;
  SourceStream stream;
  stream.source_id = 12;
  stream.seed = 3;
  stream.va = make_arc(2, 45, Archetype::kFall).sample_1hz();
  stream.tokens = grammar_emit(stream.va, CodecSpec{}, 4);
  const auto clips = segment_clips(stream, world);
  REQUIRE(clips.size() == 2);
  for (const ClipRecord& c : clips) write_clip(dir / "set" / clip_dir_name(c), c);
  for (const char* name : {"va.csv", "tokens.bin", "anchor.json", "meta.json"}) {
    CHECK(std::filesystem::exists(dir / "set" / clip_dir_name(clips[0]) / name));
  }
  const auto back = read_dataset(dir / "set", CodecSpec{});
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].tokens == clips[i].tokens);
    CHECK(back[i].va_curve == clips[i].va_curve);
    CHECK(back[i].anchor == clips[i].anchor);
    CHECK(back[i].source_id == 12);
    CHECK(back[i].clip_start_s == clips[i].clip_start_s);
    CHECK(back[i].seed == clips[i].seed);
  }
  CHECK_THROWS_AS(read_dataset(dir / "nowhere", CodecSpec{}), DataError);

  SUBCASE("length mismatch between va.csv and tokens.bin") {
    const auto clip_dir = dir / "set" / clip_dir_name(clips[0]);
    AffectTrajectory shorter = clips[0].va_curve;
    shorter.points.pop_back();
    write_va_csv(clip_dir / "va.csv", shorter);
    CHECK_THROWS_AS(read_clip(clip_dir, CodecSpec{}), DecodeError);
  }
}

TEST_CASE("load_clips skips then caps the sorted split") {
  arcscore::testing::TempDir dir("split");
  const SyntheticWorld world;
  SourceStream stream;
  stream.source_id = 5;
  stream.seed = 9;
  stream.va = make_arc(4, 105, Archetype::kRise).sample_1hz();
  stream.tokens = grammar_emit(stream.va, CodecSpec{}, 6);
  const auto clips = segment_clips(stream, world);
  REQUIRE(clips.size() == 6);
  for (const ClipRecord& c : clips) write_clip(dir / "set" / clip_dir_name(c), c);
  const RunConfig config;
  const auto all = load_clips(config, dir / "set");
  REQUIRE(all.size() == 6);
  const auto middle = load_clips(config, dir / "set", 2, 3);
  REQUIRE(middle.size() == 2);
  CHECK(middle[0].clip_start_s == all[3].clip_start_s);
  CHECK(middle[1].clip_start_s == all[4].clip_start_s);
  CHECK(load_clips(config, dir / "set", 0, 4).size() == 2);
  CHECK(load_clips(config, dir / "set", 0, 10).empty());
}
