#pragma once

// Every hyperparameter of a run in one JSON-serializable record. Module seeds are
// derived from the global seed by label; the world and the frozen vision backbone keep
// their own fixed seeds so a new --seed does not change the world being modeled.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "arcscore/acoustic_decoder.hpp"
#include "arcscore/affect_probe.hpp"
#include "arcscore/control_adapter.hpp"
#include "arcscore/corpus.hpp"
#include "arcscore/evalsuite.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

struct TrainingConfig {
  int epochs = 10;
  double learning_rate = 2e-3;
  int batch_clips = 4;
  int max_clips = 0;  // 0 uses every training clip
  int first_clip = 0;  // skips this many clips of the sorted training split
};

struct WindowConfig {
  int window_len_s = 30;
  int overlap_s = 15;
  int prefix_s = 5;
};

struct GenerateConfig {
  int duration_s = 60;
  std::string archetype = "rise-fall";
  int scene_id = 100000;
  std::uint64_t arc_seed = 7;
};

struct AblateConfig {
  std::vector<double> ratios{0.5, 0.75, 1.0};
  int eval_arcs = 20;
  int arc_duration_s = 60;
};

struct RunConfig {
  std::uint64_t seed = 20240917;
  CodecSpec codec;
  WorldConfig world;
  CorpusConfig corpus;
  double holdout_fraction = 0.1;
  BackboneConfig vision;
  ProbeConfig probe;
  DecoderConfig decoder{.layers = 8, .model_dim = 128};
  TrainingConfig backbone_training{.epochs = 30, .learning_rate = 2e-3, .batch_clips = 4};
  AdapterConfig adapter;
  TrainingConfig adapter_training{.epochs = 50, .learning_rate = 2e-3, .batch_clips = 4};
  SamplerConfig sampler;
  WindowConfig windows;
  EmbeddingConfig eval;
  GenerateConfig generate;
  AblateConfig ablate;

  void validate() const;
  std::uint64_t module_seed(std::string_view label) const { return derive_seed(seed, label); }

  // Module configs with shared sizes filled in and seeds derived from `seed`.
  DecoderConfig decoder_config() const;
  AdapterConfig adapter_config() const;
  ProbeConfig probe_config() const;
  BackboneConfig vision_config() const;
  SamplerConfig sampler_config() const;
  TrainSchedule backbone_schedule() const;
  TrainSchedule adapter_schedule() const;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
// Starts from the defaults and overrides the keys present; unknown keys are an error.
RunConfig run_config_from_json(const nlohmann::json& j);
// JSON with // and /* */ comments.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace arcscore
