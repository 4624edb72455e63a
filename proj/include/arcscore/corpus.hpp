#pragma once

// Paired-corpus assembly: long source streams cut into overlapping clips,
// silent clips dropped.

#include <cstdint>
#include <vector>

#include "arcscore/anchor.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

struct StreamConfig {
  int min_duration_s = 120;
  int max_duration_s = 240;
  double silence_gap_probability = 0.3;
  int silence_gap_min_s = 4;
  int silence_gap_max_s = 20;
  // A stream chains independent arcs ("episodes") of this length range; each episode
  // draws its own archetype and endpoints. episode_max_s = 0 uses one arc per stream.
  int episode_min_s = 8;
  int episode_max_s = 24;
};

struct SourceStream {
  int source_id = 0;
  std::uint64_t seed = 0;
  AffectTrajectory va;
  TokenGrid tokens;
};

struct ClipRecord {
  AffectTrajectory va_curve;
  TokenGrid tokens;
  SemanticAnchor anchor;
  int source_id = 0;
  int clip_start_s = 0;
  std::uint64_t seed = 0;  // pseudo-video render seed
};

struct SegmentConfig {
  int clip_len_s = 30;
  int hop_s = 15;
  double max_silence_ratio = 0.40;
};

SourceStream make_stream(const CodecSpec& codec, int source_id, std::uint64_t seed, const StreamConfig& config);

// Clip start times 0, hop, 2*hop, ... while start + clip_len <= duration.
std::vector<int> clip_starts(int duration_s, int clip_len_s, int hop_s);

// Cuts a stream into clips; each clip's anchor comes from its own pseudo-video.
std::vector<ClipRecord> segment_clips(const SourceStream& stream, const SyntheticWorld& world,
                                      const SegmentConfig& config = {}, int num_keyframes = 8);

// Fraction of steps whose codebook-0 token is silence.
double silence_ratio(const TokenGrid& tokens);
// Keeps clips whose silence ratio does not exceed max_ratio.
std::vector<ClipRecord> silence_filter(std::vector<ClipRecord> clips, double max_ratio = 0.40);

PseudoVideo clip_video(const SyntheticWorld& world, const ClipRecord& clip);

// Held-out membership is decided per source so clips of one scene never straddle the split.
bool is_holdout_source(int source_id, double holdout_fraction, std::uint64_t split_seed);

struct CorpusConfig {
  double scale = 1.0;                 // 1.0 targets >= 800 clip-minutes
  double clip_minutes_at_unit_scale = 800.0;
  StreamConfig stream;
  SegmentConfig segment;
  int num_keyframes = 8;
};

// Generates streams until the kept clips reach scale * clip_minutes_at_unit_scale.
std::vector<ClipRecord> build_corpus(const CodecSpec& codec, const SyntheticWorld& world, const CorpusConfig& config,
                                     std::uint64_t seed);

}  // namespace arcscore
