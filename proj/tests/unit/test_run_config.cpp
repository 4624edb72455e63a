#include <doctest.h>

#include <fstream>

#include "arcscore/errors.hpp"
#include "arcscore/run_config.hpp"
#include "test_support.hpp"

using namespace arcscore;

TEST_CASE("defaults survive a JSON round trip") {
  const RunConfig defaults;
  const nlohmann::ordered_json j = run_config_to_json(defaults);
  CHECK(run_config_to_json(run_config_from_json(nlohmann::json::parse(j.dump()))) == j);
  CHECK(run_config_from_json(nlohmann::json::object()).seed == defaults.seed);
}

TEST_CASE("partial overrides keep the other defaults") {
  const RunConfig c = run_config_from_json(nlohmann::json::parse(R"({"seed": 5, "decoder": {"layers": 3}})"));
  CHECK(c.seed == 5);
  CHECK(c.decoder.layers == 3);
  CHECK(c.decoder.model_dim == RunConfig{}.decoder.model_dim);
  CHECK(c.decoder_config().layers == 3);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"sed": 5})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"decoder": {"layer": 3}})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"decoder": {"layers": "3"}})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"decoder": 3})")), ConfigError);
}

TEST_CASE("validation") {
  auto rejects = [](const char* text) {
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(text)).validate(), ConfigError);
  };
  rejects(R"({"ablate": {"ratios": [0.5, 0.0]}})");
  rejects(R"({"ablate": {"ratios": []}})");
  rejects(R"({"windows": {"window_len_s": 30, "overlap_s": 30}})");
  rejects(R"({"windows": {"prefix_s": 20}})");
  rejects(R"({"corpus": {"stream": {"episode_min_s": 30, "episode_max_s": 10}}})");
  rejects(R"({"backbone_training": {"epochs": -1}})");
  rejects(R"({"adapter_training": {"batch_clips": 0}})");
  rejects(R"({"adapter_training": {"first_clip": -1}})");
  RunConfig{}.validate();
}

TEST_CASE("module seeds") {
  RunConfig a, b;
  b.seed = a.seed + 1;
  CHECK(a.module_seed("corpus") != a.module_seed("split"));
  CHECK(a.module_seed("corpus") != b.module_seed("corpus"));
  CHECK(a.decoder_config().seed != b.decoder_config().seed);
  CHECK(a.vision_config().seed == b.vision_config().seed);
  CHECK(a.world.seed == b.world.seed);
}

TEST_CASE("commented config files") {
  arcscore::testing::TempDir dir("config");
  {
    std::ofstream out(dir / "c.jsonc");
    out << "// header\n{\n  \"seed\": 9, /* inline */\n  \"sampler\": {\"top_k\": 4} // trailing\n}\n";
  }
  const RunConfig c = load_run_config(dir / "c.jsonc");
  CHECK(c.seed == 9);
  CHECK(c.sampler.top_k == 4);
  {
    std::ofstream out(dir / "bad.jsonc");
    out << "{\"seed\": }";
  }
  CHECK_THROWS_AS(load_run_config(dir / "bad.jsonc"), ConfigError);
}

TEST_CASE("the shipped annotated config equals the defaults") {
  const RunConfig shipped = load_run_config(std::filesystem::path(ARCSCORE_SOURCE_DIR) / "configs" / "default.jsonc");
  CHECK(run_config_to_json(shipped) == run_config_to_json(RunConfig{}));
}
