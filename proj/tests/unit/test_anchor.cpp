#include <doctest.h>

#include "arcscore/anchor.hpp"
#include "arcscore/dataset_io.hpp"
#include "arcscore/errors.hpp"

using namespace arcscore;

namespace {

PseudoVideo constant_video(double v, double a, int scene, int seconds = 40) {
  static const SyntheticWorld world;
  AffectTrajectory t;
  t.points.assign(static_cast<std::size_t>(seconds), AffectPoint{v, a});
  return render_pseudo_video(world, t, scene, 77);
}

}  // namespace

TEST_CASE("conceptualizer rules") {
  const SyntheticWorld world;
  CHECK(conceptualize(constant_video(0.0, 1.0, 3), world)[AnchorField::kPacing] == kAnchorVocabSize - 1);
  CHECK(conceptualize(constant_video(0.0, -1.0, 3), world)[AnchorField::kPacing] == 0);
  CHECK(conceptualize(constant_video(-1.0, 0.0, 3), world)[AnchorField::kMood] == 0);
  CHECK(conceptualize(constant_video(1.0, 0.0, 3), world)[AnchorField::kMood] == kAnchorVocabSize - 1);
  const PseudoVideo v = constant_video(0.3, -0.2, 11);
  CHECK(conceptualize(v, world) == conceptualize(v, world));
  CHECK(conceptualize(v, world)[AnchorField::kGenre] == 11 % kAnchorVocabSize);
  CHECK(conceptualize(v, world)[AnchorField::kInstrumentation] == 0);
  conceptualize(v, world).validate();
}

TEST_CASE("keyframes are uniform and include both ends") {
  CHECK(keyframe_indices(60, 8) == std::vector<int>{0, 8, 17, 25, 34, 42, 51, 59});
  CHECK(keyframe_indices(3, 8) == std::vector<int>{0, 1, 2});
  CHECK(keyframe_indices(1, 8) == std::vector<int>{0});
  CHECK_THROWS_AS(keyframe_indices(0, 8), ShapeError);
}

TEST_CASE("anchor json and vocabulary") {
  SemanticAnchor a;
  a.ids = {1, 2, 3, 4};
  const auto j = anchor_to_json(a);
  CHECK(j.size() == 4);
  CHECK(anchor_from_json(nlohmann::json::parse(j.dump())) == a);
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    for (int id = 0; id < kAnchorVocabSize; ++id) CHECK(anchor_vocab_lookup(f, anchor_vocab_entry(f, id)) == id);
  }
  CHECK_THROWS_AS(anchor_vocab_lookup(0, "polka-metal"), ConfigError);
  nlohmann::json missing = nlohmann::json::parse(j.dump());
  missing.erase("mood");
  CHECK_THROWS_AS(anchor_from_json(missing), DecodeError);
  SemanticAnchor bad;
  bad.ids = {0, 0, 8, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("shipped vocab.json matches the built-in tables") {
  const auto shipped = read_json_file(std::filesystem::path(ARCSCORE_SOURCE_DIR) / "data" / "vocab.json");
  CHECK(shipped == nlohmann::json::parse(anchor_vocabulary_json().dump()));
}

TEST_CASE("anchor encoder") {
  const AnchorEncoder enc(16, 5);
  SemanticAnchor a, b;
  a.ids = {1, 2, 3, 4};
  b.ids = {1, 2, 6, 4};
  const AnchorEmbedding ea = enc.encode(a);
  CHECK(ea.context.rows() == 4);
  CHECK(ea.context.cols() == 16);
  CHECK(ea.context.allFinite());
  CHECK(enc.encode(a) == ea);
  const AnchorEmbedding eb = enc.encode(b);
  for (int r = 0; r < 4; ++r) CHECK((ea.context.row(r) == eb.context.row(r)) == (r != 2));
  SemanticAnchor oov;
  oov.ids = {8, 0, 0, 0};
  CHECK_THROWS_AS(enc.encode(oov), ConfigError);
}
