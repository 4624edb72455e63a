#pragma once

// Long-form inference: overlapping windows for trajectory extraction (crossfaded into
// one curve) and window-by-window acoustic continuation seeded with the previous
// window's final tokens. One anchor per video.

#include <cstdint>
#include <vector>

#include "arcscore/acoustic_decoder.hpp"
#include "arcscore/affect_probe.hpp"
#include "arcscore/anchor.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

struct WindowSpan {
  int start_s = 0;
  int end_s = 0;  // exclusive
  friend bool operator==(const WindowSpan&, const WindowSpan&) = default;
};

struct WindowPlan {
  int duration_s = 0;
  int window_len_s = 30;
  int overlap_s = 15;
  int prefix_s = 5;
  std::vector<WindowSpan> windows;

  int stride_s() const { return window_len_s - overlap_s; }
};

// Starts 0, W-O, 2(W-O), ... until a window reaches the end; the last one is clipped.
WindowPlan plan_windows(int duration_s, int window_len_s = 30, int overlap_s = 15, int prefix_s = 5);

// Blends per-window trajectories (window i covers plan.windows[i]) with linear crossfades
// over each overlap: in an overlap of length n the later window gets weight (j+1)/(n+1).
AffectTrajectory merge_window_trajectories(const std::vector<AffectTrajectory>& per_window, const WindowPlan& plan);

AffectTrajectory extract_trajectory_longform(const PseudoVideo& video, const FrozenBackbone& backbone,
                                             const AffectProbe& probe, const WindowPlan& plan, int instruction_id = 0);

enum class ContinuationMode { kPrefix, kIndependent };

struct LongformResult {
  TokenGrid tokens;
  std::vector<WindowSpan> windows;      // the plan's windows
  std::vector<WindowSpan> generated;    // span of new tokens each window contributed
  std::vector<TokenGrid> prefixes;      // conditioning prefix fed to each window (empty for the first)
  std::vector<AnchorEmbedding> window_anchors;
  AffectTrajectory trajectory;
  SemanticAnchor anchor;
  int peak_context = 0;
};

struct LongformModels {
  const FrozenBackbone* vision = nullptr;
  const AffectProbe* probe = nullptr;
  const SyntheticWorld* world = nullptr;
  const MusicBackbone* music = nullptr;
  const ControlBranch* control = nullptr;  // nullptr generates without the affect branch
  int instruction_id = 0;
  int num_keyframes = 8;
};

// Acoustic pass over a known trajectory and anchor. Window i >= 1 generates
// [windows[i-1].end, windows[i].end) after a prefix of the last P seconds produced so far;
// in independent mode the prefix is empty. Window i samples with derive_seed(seed, i).
LongformResult generate_from_trajectory(const AffectTrajectory& trajectory, const SemanticAnchor& anchor,
                                        const MusicBackbone& music, const ControlBranch* control,
                                        const WindowPlan& plan, const SamplerConfig& sampler, const CodecSpec& codec,
                                        ContinuationMode mode = ContinuationMode::kPrefix);

// Full pipeline: windowed trajectory extraction, one conceptualized anchor, acoustic pass.
LongformResult generate_longform(const PseudoVideo& video, const LongformModels& models, const WindowPlan& plan,
                                 const SamplerConfig& sampler, const CodecSpec& codec,
                                 ContinuationMode mode = ContinuationMode::kPrefix);

struct SeamScore {
  int seam_s = 0;
  std::optional<double> discontinuity;  // (|dv| + |da|) / 2 between the oracle windows either side
};

// One score per boundary between consecutive generated spans.
std::vector<SeamScore> seam_scores(const TokenGrid& tokens, const std::vector<WindowSpan>& generated,
                                   int window_s = 5);
// Mean over defined seams; nullopt if none is defined.
std::optional<double> mean_seam_discontinuity(const std::vector<SeamScore>& seams);

struct BoundaryStepCheck {
  double max_boundary_step = 0.0;
  double interior_p95 = 0.0;
};

// Step size max(|dv|, |da|) between consecutive seconds; boundary steps are those at a
// window start or end.
BoundaryStepCheck boundary_steps(const AffectTrajectory& merged, const WindowPlan& plan);

}  // namespace arcscore
