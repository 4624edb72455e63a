#pragma once

// The synthetic affect-grammar world: codec conventions, narrative arcs with known
// valence/arousal, the token grammar that renders affect into codebook streams, its
// analytic inverse, and pseudo-video feature streams.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "arcscore/tensor.hpp"

namespace arcscore {

struct CodecSpec {
  int num_codebooks = 4;
  int vocab_size = 64;
  int tokens_per_second = 10;
  int silence_token = 0;

  void validate() const;
  // Reserved id used to fill delay-pattern gaps; outside the codec vocabulary.
  int pad_token() const { return vocab_size; }
  // Major pool: ids 1 .. floor((N-2)/2)+1, silence excluded.
  bool is_major(int id) const;
  bool is_minor(int id) const;
  std::vector<int> major_pool() const;
  std::vector<int> minor_pool() const;

  friend bool operator==(const CodecSpec&, const CodecSpec&) = default;
};

struct AffectPoint {
  double valence = 0.0;
  double arousal = 0.0;
  friend bool operator==(const AffectPoint&, const AffectPoint&) = default;
};

// 1 Hz valence/arousal curve; point i describes second i.
struct AffectTrajectory {
  std::vector<AffectPoint> points;

  int duration_s() const { return static_cast<int>(points.size()); }
  bool empty() const { return points.empty(); }
  AffectTrajectory slice(int first_s, int count) const;
  // T x 2 matrix, columns (valence, arousal).
  Matrix as_matrix() const;
  static AffectTrajectory from_matrix(const Matrix& m);
  friend bool operator==(const AffectTrajectory&, const AffectTrajectory&) = default;
};

struct ArcSegment {
  double duration_s = 0.0;
  AffectPoint start;
  AffectPoint end;
};

struct NarrativeArc {
  std::vector<ArcSegment> segments;
  double total_duration_s = 0.0;

  // Piecewise-linear evaluation on [0, total_duration_s]; clamps outside.
  AffectPoint at(double t_s) const;
  // Samples t = 0, 1, ..., ceil(total)-1.
  AffectTrajectory sample_1hz() const;
};

enum class Archetype { kRise, kFall, kRiseFall, kPlateau, kRandomWalk };

Archetype parse_archetype(std::string_view name);
std::string_view archetype_name(Archetype a);
inline constexpr Archetype kAllArchetypes[] = {Archetype::kRise, Archetype::kFall, Archetype::kRiseFall,
                                               Archetype::kPlateau, Archetype::kRandomWalk};

NarrativeArc make_arc(std::uint64_t seed, int duration_s, Archetype archetype);
NarrativeArc make_arc(std::uint64_t seed, int duration_s, std::string_view archetype);

// T_a x K token ids in [0, N).
class TokenGrid {
 public:
  TokenGrid() = default;
  // Filled with the codec's silence token.
  TokenGrid(const CodecSpec& codec, int steps);

  const CodecSpec& codec() const { return codec_; }
  int steps() const { return steps_; }
  int codebooks() const { return codec_.num_codebooks; }
  bool empty() const { return steps_ == 0; }

  int at(int t, int k) const { return ids_[static_cast<std::size_t>(t * codec_.num_codebooks + k)]; }
  void set(int t, int k, int id);
  std::span<const int> row(int t) const {
    return std::span<const int>(ids_).subspan(static_cast<std::size_t>(t * codec_.num_codebooks),
                                              static_cast<std::size_t>(codec_.num_codebooks));
  }
  std::span<const int> ids() const { return ids_; }

  TokenGrid slice(int first, int count) const;
  void append(const TokenGrid& other);

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;

 private:
  CodecSpec codec_;
  int steps_ = 0;
  std::vector<int> ids_;
};

// Delay-pattern layout: codebook k shifted right by k steps, gaps hold the pad id.
struct DelayedGrid {
  int steps = 0;
  int codebooks = 0;
  int pad_token = 0;
  std::vector<int> ids;

  int at(int s, int k) const { return ids[static_cast<std::size_t>(s * codebooks + k)]; }
  void set(int s, int k, int id) { ids[static_cast<std::size_t>(s * codebooks + k)] = id; }
  std::span<const int> row(int s) const {
    return std::span<const int>(ids).subspan(static_cast<std::size_t>(s * codebooks),
                                             static_cast<std::size_t>(codebooks));
  }
  // True where the delay pattern requires a pad (k > s, or s - k >= T).
  bool is_pad_position(int s, int k) const;
  friend bool operator==(const DelayedGrid&, const DelayedGrid&) = default;
};

DelayedGrid apply_delay(const TokenGrid& tokens, int pad_token);
TokenGrid remove_delay(const DelayedGrid& delayed, const CodecSpec& codec);

// ---- grammar ----------------------------------------------------------------

double switch_probability(double arousal);
double major_probability(double valence);
// Token of codebook k >= 1 derived from codebook-0 token c0.
int codebook_token(int c0, int k, int vocab_size);

TokenGrid grammar_emit(const AffectTrajectory& trajectory, const CodecSpec& codec, std::uint64_t seed);
TokenGrid grammar_emit(const NarrativeArc& arc, const CodecSpec& codec, std::uint64_t seed);

// ---- oracle -----------------------------------------------------------------

struct OracleWindowStats {
  int voiced_steps = 0;   // non-silence codebook-0 steps
  int transitions = 0;    // consecutive voiced pairs
  int switches = 0;       // of which the token changed
  int major_steps = 0;
};

OracleWindowStats window_stats(const TokenGrid& tokens, int first_step, int count);
// nullopt when the window has no voiced transition.
std::optional<AffectPoint> decode_window(const OracleWindowStats& stats);

// One affect estimate per window_s-second window (the last may be partial).
std::vector<std::optional<AffectPoint>> oracle_decode(const TokenGrid& tokens, int window_s);

// ---- pseudo-video -------------------------------------------------------------

struct WorldConfig {
  int feature_dim = 32;
  int tokens_per_frame = 4;
  double noise_sigma = 0.1;
  double affect_gain = 0.5;
  std::uint64_t seed = 0x6e61727261ULL;
};

struct PseudoVideo {
  std::vector<Matrix> frames;  // per second: M x D_f
  AffectTrajectory ground_truth;
  int scene_id = 0;

  int duration_s() const { return static_cast<int>(frames.size()); }
  PseudoVideo slice(int first_s, int count) const;
};

class SyntheticWorld {
 public:
  explicit SyntheticWorld(WorldConfig config = {});

  const WorldConfig& config() const { return config_; }
  // D_f x 2 loading of (valence, arousal) onto visual features.
  const Matrix& affect_loading() const { return affect_loading_; }
  Matrix scene_basis(int scene_id) const;
  // Least-squares inverse of the rendering map for one frame.
  AffectPoint estimate_affect(const Matrix& frame, int scene_id) const;

 private:
  WorldConfig config_;
  Matrix affect_loading_;
  Matrix loading_pinv_;
};

PseudoVideo render_pseudo_video(const SyntheticWorld& world, const AffectTrajectory& trajectory, int scene_id,
                                std::uint64_t seed);
PseudoVideo render_pseudo_video(const SyntheticWorld& world, const NarrativeArc& arc, int scene_id,
                                std::uint64_t seed);

}  // namespace arcscore
