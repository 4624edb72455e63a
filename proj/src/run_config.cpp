#include "arcscore/run_config.hpp"

#include <set>

#include <fmt/format.h>

#include "arcscore/dataset_io.hpp"
#include "arcscore/errors.hpp"

namespace arcscore {

void RunConfig::validate() const {
  codec.validate();
  if (world.feature_dim < 1 || world.tokens_per_frame < 1 || world.noise_sigma < 0.0) {
    throw ConfigError("world: bad sizes");
  }
  if (corpus.scale < 0.0) throw ConfigError("corpus: scale must be >= 0");
  if (corpus.segment.clip_len_s < 1 || corpus.segment.hop_s < 1) throw ConfigError("corpus: bad segmentation");
  const StreamConfig& st = corpus.stream;
  if (st.min_duration_s < 1 || st.max_duration_s < st.min_duration_s) throw ConfigError("corpus: bad stream durations");
  if (st.episode_max_s > 0 && (st.episode_min_s < 1 || st.episode_max_s < st.episode_min_s))
    throw ConfigError("corpus: bad episode lengths");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("holdout_fraction must be in [0, 1)");
  probe_config().validate();
  decoder_config().validate();
  adapter_config().validate();
  sampler_config().validate(codec.vocab_size);
  for (const TrainingConfig* t : {&backbone_training, &adapter_training}) {
    if (t->epochs < 0 || t->batch_clips < 1 || !(t->learning_rate > 0.0) || t->max_clips < 0 || t->first_clip < 0) {
      throw ConfigError("training: bad epochs/batch/learning rate");
    }
  }
  if (windows.window_len_s < 1 || windows.overlap_s < 0 || windows.overlap_s >= windows.window_len_s ||
      windows.prefix_s < 1 || windows.prefix_s > windows.overlap_s) {
    throw ConfigError("windows: need 0 < prefix <= overlap < window length");
  }
  if (eval.window_s < 1 || eval.windows < 1) throw ConfigError("eval: window sizes must be >= 1");
  if (generate.duration_s < 10) throw ConfigError("generate: duration must be >= 10 s");
  parse_archetype(generate.archetype);
  if (ablate.ratios.empty()) throw ConfigError("ablate: no ratios");
  for (double r : ablate.ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError(fmt::format("ablate: injection ratio {} is outside (0, 1]", r));
  }
  if (ablate.eval_arcs < 1 || ablate.arc_duration_s < 10) throw ConfigError("ablate: bad evaluation set");
}

DecoderConfig RunConfig::decoder_config() const {
  DecoderConfig d = decoder_config_for(codec, decoder);
  d.seed = module_seed("decoder");
  return d;
}

AdapterConfig RunConfig::adapter_config() const {
  AdapterConfig a = adapter;
  a.model_dim = decoder.model_dim;
  a.seed = module_seed("adapter");
  return a;
}

ProbeConfig RunConfig::probe_config() const {
  ProbeConfig p = probe;
  p.seed = module_seed("probe");
  return p;
}

BackboneConfig RunConfig::vision_config() const {
  BackboneConfig v = vision;
  v.feature_dim = world.feature_dim;
  v.tokens_per_frame = world.tokens_per_frame;
  return v;
}

SamplerConfig RunConfig::sampler_config() const {
  SamplerConfig s = sampler;
  s.seed = module_seed("sampler");
  return s;
}

TrainSchedule RunConfig::backbone_schedule() const {
  return {backbone_training.epochs, backbone_training.learning_rate, backbone_training.batch_clips,
          module_seed("backbone_training")};
}

TrainSchedule RunConfig::adapter_schedule() const {
  return {adapter_training.epochs, adapter_training.learning_rate, adapter_training.batch_clips,
          module_seed("adapter_training")};
}

// ---- JSON ------------------------------------------------------------------------

namespace {

using ojson = nlohmann::ordered_json;

ojson training_json(const TrainingConfig& t) {
  return {{"epochs", t.epochs}, {"learning_rate", t.learning_rate}, {"batch_clips", t.batch_clips},
          {"max_clips", t.max_clips}, {"first_clip", t.first_clip}};
}

// Reads known keys of one object and rejects anything else.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("config: '{}' must be an object", path_));
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError(fmt::format("config: unknown key '{}{}'", prefix(), item.key()));
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(fmt::format("config: '{}{}' has the wrong type", prefix(), key));
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const nlohmann::json& at(const char* key) const { return j_.at(key); }
  std::string child(const char* key) const { return prefix() + key; }

 private:
  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_training(Reader& parent, const char* key, TrainingConfig& t) {
  if (!parent.has(key)) return;
  Reader r(parent.at(key), parent.child(key));
  r.get("epochs", t.epochs);
  r.get("learning_rate", t.learning_rate);
  r.get("batch_clips", t.batch_clips);
  r.get("max_clips", t.max_clips);
  r.get("first_clip", t.first_clip);
}

}  // namespace

ojson run_config_to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["codec"] = {{"num_codebooks", c.codec.num_codebooks},
                {"vocab_size", c.codec.vocab_size},
                {"tokens_per_second", c.codec.tokens_per_second},
                {"silence_token", c.codec.silence_token}};
  j["world"] = {{"feature_dim", c.world.feature_dim},
                {"tokens_per_frame", c.world.tokens_per_frame},
                {"noise_sigma", c.world.noise_sigma},
                {"affect_gain", c.world.affect_gain},
                {"seed", c.world.seed}};
  j["corpus"] = {{"scale", c.corpus.scale},
                 {"clip_minutes_at_unit_scale", c.corpus.clip_minutes_at_unit_scale},
                 {"stream",
                  {{"min_duration_s", c.corpus.stream.min_duration_s},
                   {"max_duration_s", c.corpus.stream.max_duration_s},
                   {"silence_gap_probability", c.corpus.stream.silence_gap_probability},
                   {"silence_gap_min_s", c.corpus.stream.silence_gap_min_s},
                   {"silence_gap_max_s", c.corpus.stream.silence_gap_max_s},
                   {"episode_min_s", c.corpus.stream.episode_min_s},
                   {"episode_max_s", c.corpus.stream.episode_max_s}}},
                 {"segment",
                  {{"clip_len_s", c.corpus.segment.clip_len_s},
                   {"hop_s", c.corpus.segment.hop_s},
                   {"max_silence_ratio", c.corpus.segment.max_silence_ratio}}},
                 {"num_keyframes", c.corpus.num_keyframes},
                 {"holdout_fraction", c.holdout_fraction}};
  j["vision_backbone"] = {{"layers", c.vision.layers},
                          {"hidden_dim", c.vision.hidden_dim},
                          {"heads", c.vision.heads},
                          {"instruction_count", c.vision.instruction_count},
                          {"instruction_length", c.vision.instruction_length},
                          {"max_seconds", c.vision.max_seconds},
                          {"seed", c.vision.seed}};
  j["probe"] = {{"hidden_dim", c.probe.hidden_dim},       {"lambda", c.probe.lambda},
                {"epochs", c.probe.epochs},               {"learning_rate", c.probe.learning_rate},
                {"batch_clips", c.probe.batch_clips},     {"instruction_id", c.probe.instruction_id}};
  j["decoder"] = {{"layers", c.decoder.layers},
                  {"model_dim", c.decoder.model_dim},
                  {"heads", c.decoder.heads},
                  {"max_context", c.decoder.max_context},
                  {"mlp_ratio", c.decoder.mlp_ratio},
                  {"injection_ratio", c.decoder.injection_ratio},
                  {"tie_gates", c.decoder.tie_gates}};
  j["backbone_training"] = training_json(c.backbone_training);
  j["adapter"] = {{"dropout", c.adapter.dropout},
                  {"kernel", c.adapter.kernel},
                  {"dilations", c.adapter.dilations},
                  {"leaky_slope", c.adapter.leaky_slope}};
  j["adapter_training"] = training_json(c.adapter_training);
  j["sampler"] = {{"temperature", c.sampler.temperature}, {"top_k", c.sampler.top_k}};
  j["windows"] = {{"window_len_s", c.windows.window_len_s},
                  {"overlap_s", c.windows.overlap_s},
                  {"prefix_s", c.windows.prefix_s}};
  j["eval"] = {{"window_s", c.eval.window_s}, {"windows", c.eval.windows}};
  j["generate"] = {{"duration_s", c.generate.duration_s},
                   {"archetype", c.generate.archetype},
                   {"scene_id", c.generate.scene_id},
                   {"arc_seed", c.generate.arc_seed}};
  j["ablate"] = {{"ratios", c.ablate.ratios},
                 {"eval_arcs", c.ablate.eval_arcs},
                 {"arc_duration_s", c.ablate.arc_duration_s}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  {
    Reader r(j, "");
    r.get("seed", c.seed);
    if (r.has("codec")) {
      Reader s(r.at("codec"), "codec");
      s.get("num_codebooks", c.codec.num_codebooks);
      s.get("vocab_size", c.codec.vocab_size);
      s.get("tokens_per_second", c.codec.tokens_per_second);
      s.get("silence_token", c.codec.silence_token);
    }
    if (r.has("world")) {
      Reader s(r.at("world"), "world");
      s.get("feature_dim", c.world.feature_dim);
      s.get("tokens_per_frame", c.world.tokens_per_frame);
      s.get("noise_sigma", c.world.noise_sigma);
      s.get("affect_gain", c.world.affect_gain);
      s.get("seed", c.world.seed);
    }
    if (r.has("corpus")) {
      Reader s(r.at("corpus"), "corpus");
      s.get("scale", c.corpus.scale);
      s.get("clip_minutes_at_unit_scale", c.corpus.clip_minutes_at_unit_scale);
      s.get("num_keyframes", c.corpus.num_keyframes);
      s.get("holdout_fraction", c.holdout_fraction);
      if (s.has("stream")) {
        Reader t(s.at("stream"), "corpus.stream");
        t.get("min_duration_s", c.corpus.stream.min_duration_s);
        t.get("max_duration_s", c.corpus.stream.max_duration_s);
        t.get("silence_gap_probability", c.corpus.stream.silence_gap_probability);
        t.get("silence_gap_min_s", c.corpus.stream.silence_gap_min_s);
        t.get("silence_gap_max_s", c.corpus.stream.silence_gap_max_s);
        t.get("episode_min_s", c.corpus.stream.episode_min_s);
        t.get("episode_max_s", c.corpus.stream.episode_max_s);
      }
      if (s.has("segment")) {
        Reader t(s.at("segment"), "corpus.segment");
        t.get("clip_len_s", c.corpus.segment.clip_len_s);
        t.get("hop_s", c.corpus.segment.hop_s);
        t.get("max_silence_ratio", c.corpus.segment.max_silence_ratio);
      }
    }
    if (r.has("vision_backbone")) {
      Reader s(r.at("vision_backbone"), "vision_backbone");
      s.get("layers", c.vision.layers);
      s.get("hidden_dim", c.vision.hidden_dim);
      s.get("heads", c.vision.heads);
      s.get("instruction_count", c.vision.instruction_count);
      s.get("instruction_length", c.vision.instruction_length);
      s.get("max_seconds", c.vision.max_seconds);
      s.get("seed", c.vision.seed);
    }
    if (r.has("probe")) {
      Reader s(r.at("probe"), "probe");
      s.get("hidden_dim", c.probe.hidden_dim);
      s.get("lambda", c.probe.lambda);
      s.get("epochs", c.probe.epochs);
      s.get("learning_rate", c.probe.learning_rate);
      s.get("batch_clips", c.probe.batch_clips);
      s.get("instruction_id", c.probe.instruction_id);
    }
    if (r.has("decoder")) {
      Reader s(r.at("decoder"), "decoder");
      s.get("layers", c.decoder.layers);
      s.get("model_dim", c.decoder.model_dim);
      s.get("heads", c.decoder.heads);
      s.get("max_context", c.decoder.max_context);
      s.get("mlp_ratio", c.decoder.mlp_ratio);
      s.get("injection_ratio", c.decoder.injection_ratio);
      s.get("tie_gates", c.decoder.tie_gates);
    }
    read_training(r, "backbone_training", c.backbone_training);
    if (r.has("adapter")) {
      Reader s(r.at("adapter"), "adapter");
      s.get("dropout", c.adapter.dropout);
      s.get("kernel", c.adapter.kernel);
      s.get("dilations", c.adapter.dilations);
      s.get("leaky_slope", c.adapter.leaky_slope);
    }
    read_training(r, "adapter_training", c.adapter_training);
    if (r.has("sampler")) {
      Reader s(r.at("sampler"), "sampler");
      s.get("temperature", c.sampler.temperature);
      s.get("top_k", c.sampler.top_k);
    }
    if (r.has("windows")) {
      Reader s(r.at("windows"), "windows");
      s.get("window_len_s", c.windows.window_len_s);
      s.get("overlap_s", c.windows.overlap_s);
      s.get("prefix_s", c.windows.prefix_s);
    }
    if (r.has("eval")) {
      Reader s(r.at("eval"), "eval");
      s.get("window_s", c.eval.window_s);
      s.get("windows", c.eval.windows);
    }
    if (r.has("generate")) {
      Reader s(r.at("generate"), "generate");
      s.get("duration_s", c.generate.duration_s);
      s.get("archetype", c.generate.archetype);
      s.get("scene_id", c.generate.scene_id);
      s.get("arc_seed", c.generate.arc_seed);
    }
    if (r.has("ablate")) {
      Reader s(r.at("ablate"), "ablate");
      s.get("ratios", c.ablate.ratios);
      s.get("eval_arcs", c.ablate.eval_arcs);
      s.get("arc_duration_s", c.ablate.arc_duration_s);
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const DecodeError& e) {
    throw ConfigError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  return run_config_from_json(j);
}

}  // namespace arcscore
