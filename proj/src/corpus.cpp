#include "arcscore/corpus.hpp"

#include <algorithm>
#include <random>

#include <spdlog/spdlog.h>

#include "arcscore/errors.hpp"

namespace arcscore {

SourceStream make_stream(const CodecSpec& codec, int source_id, std::uint64_t seed, const StreamConfig& config) {
  std::mt19937_64 rng(seed);
  const int duration = std::uniform_int_distribution<int>(config.min_duration_s, config.max_duration_s)(rng);
  SourceStream stream;
  stream.source_id = source_id;
  stream.seed = seed;
  if (config.episode_max_s <= 0) {
    const Archetype archetype = kAllArchetypes[rng() % std::size(kAllArchetypes)];
    stream.va = make_arc(derive_seed(seed, "arc"), duration, archetype).sample_1hz();
  } else {
    std::uniform_int_distribution<int> episode_len(config.episode_min_s, config.episode_max_s);
    for (std::uint64_t e = 0; stream.va.duration_s() < duration; ++e) {
      const int len = std::min(episode_len(rng), duration - stream.va.duration_s());
      const Archetype archetype = kAllArchetypes[rng() % std::size(kAllArchetypes)];
      const AffectTrajectory piece = make_arc(derive_seed(derive_seed(seed, "arc"), e), std::max(len, 10), archetype)
                                         .sample_1hz()
                                         .slice(0, len);
      stream.va.points.insert(stream.va.points.end(), piece.points.begin(), piece.points.end());
    }
  }
  stream.tokens = grammar_emit(stream.va, codec, derive_seed(seed, "grammar"));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < config.silence_gap_probability) {
    const int gaps = 1 + static_cast<int>(rng() % 2);
    for (int g = 0; g < gaps; ++g) {
      const int len = std::uniform_int_distribution<int>(config.silence_gap_min_s, config.silence_gap_max_s)(rng);
      const int start = std::uniform_int_distribution<int>(0, std::max(0, duration - len))(rng);
      const int tps = codec.tokens_per_second;
      for (int t = start * tps; t < std::min(duration, start + len) * tps; ++t) {
        for (int k = 0; k < codec.num_codebooks; ++k) stream.tokens.set(t, k, codec.silence_token);
      }
    }
  }
  return stream;
}

std::vector<int> clip_starts(int duration_s, int clip_len_s, int hop_s) {
  if (clip_len_s < 1 || hop_s < 1) throw ConfigError("segment: clip length and hop must be >= 1");
  std::vector<int> starts;
  for (int s = 0; s + clip_len_s <= duration_s; s += hop_s) starts.push_back(s);
  return starts;
}

std::vector<ClipRecord> segment_clips(const SourceStream& stream, const SyntheticWorld& world,
                                      const SegmentConfig& config, int num_keyframes) {
  const int duration = stream.va.duration_s();
  if (duration < config.clip_len_s) {
    spdlog::warn("stream {} is {} s, shorter than the {} s clip length; no clips emitted", stream.source_id, duration,
                 config.clip_len_s);
    return {};
  }
  const int tps = stream.tokens.codec().tokens_per_second;
  std::vector<ClipRecord> clips;
  for (int start : clip_starts(duration, config.clip_len_s, config.hop_s)) {
    ClipRecord clip;
    clip.va_curve = stream.va.slice(start, config.clip_len_s);
    clip.tokens = stream.tokens.slice(start * tps, config.clip_len_s * tps);
    clip.source_id = stream.source_id;
    clip.clip_start_s = start;
    clip.seed = derive_seed(stream.seed, static_cast<std::uint64_t>(start));
    clip.anchor = conceptualize(clip_video(world, clip), world, num_keyframes);
    clips.push_back(std::move(clip));
  }
  return clips;
}

double silence_ratio(const TokenGrid& tokens) {
  if (tokens.empty()) return 0.0;
  int silent = 0;
  for (int t = 0; t < tokens.steps(); ++t) {
    if (tokens.at(t, 0) == tokens.codec().silence_token) ++silent;
  }
  return static_cast<double>(silent) / tokens.steps();
}

std::vector<ClipRecord> silence_filter(std::vector<ClipRecord> clips, double max_ratio) {
  std::erase_if(clips, [max_ratio](const ClipRecord& c) { return silence_ratio(c.tokens) > max_ratio; });
  return clips;
}

PseudoVideo clip_video(const SyntheticWorld& world, const ClipRecord& clip) {
  return render_pseudo_video(world, clip.va_curve, clip.source_id, clip.seed);
}

bool is_holdout_source(int source_id, double holdout_fraction, std::uint64_t split_seed) {
  const std::uint64_t h = derive_seed(split_seed, static_cast<std::uint64_t>(source_id));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < holdout_fraction;
}

std::vector<ClipRecord> build_corpus(const CodecSpec& codec, const SyntheticWorld& world, const CorpusConfig& config,
                                     std::uint64_t seed) {
  std::vector<ClipRecord> corpus;
  if (config.scale <= 0.0) {
    spdlog::warn("corpus scale is {}; no clips generated", config.scale);
    return corpus;
  }
  const double target_minutes = config.scale * config.clip_minutes_at_unit_scale;
  double minutes = 0.0;
  for (int source = 0; minutes < target_minutes; ++source) {
    const SourceStream stream = make_stream(codec, source, derive_seed(seed, static_cast<std::uint64_t>(source)),
                                            config.stream);
    for (ClipRecord& clip : silence_filter(segment_clips(stream, world, config.segment, config.num_keyframes),
                                           config.segment.max_silence_ratio)) {
      minutes += clip.va_curve.duration_s() / 60.0;
      corpus.push_back(std::move(clip));
    }
  }
  return corpus;
}

}  // namespace arcscore
