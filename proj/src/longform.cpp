#include "arcscore/longform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arcscore/errors.hpp"
#include "arcscore/parallel.hpp"

namespace arcscore {

WindowPlan plan_windows(int duration_s, int window_len_s, int overlap_s, int prefix_s) {
  if (duration_s < 1) throw ConfigError("plan_windows: duration must be >= 1 s");
  if (window_len_s < 1 || overlap_s < 0 || overlap_s >= window_len_s) {
    throw ConfigError("plan_windows: need 0 <= overlap < window length");
  }
  if (prefix_s < 0 || prefix_s > overlap_s) throw ConfigError("plan_windows: need 0 <= prefix <= overlap");
  WindowPlan plan{duration_s, window_len_s, overlap_s, prefix_s, {}};
  for (int start = 0;; start += plan.stride_s()) {
    plan.windows.push_back({start, std::min(start + window_len_s, duration_s)});
    if (start + window_len_s >= duration_s) break;
  }
  return plan;
}

AffectTrajectory merge_window_trajectories(const std::vector<AffectTrajectory>& per_window, const WindowPlan& plan) {
  if (per_window.size() != plan.windows.size()) throw ShapeError("merge: one trajectory per window expected");
  AffectTrajectory merged;
  for (std::size_t i = 0; i < per_window.size(); ++i) {
    const WindowSpan& w = plan.windows[i];
    const AffectTrajectory& part = per_window[i];
    if (part.duration_s() != w.end_s - w.start_s) throw ShapeError("merge: trajectory does not match its window");
    const int have = merged.duration_s();
    const int overlap = std::max(0, have - w.start_s);
    for (int j = 0; j < overlap; ++j) {
      const double wt = static_cast<double>(j + 1) / (overlap + 1);
      AffectPoint& m = merged.points[static_cast<std::size_t>(w.start_s + j)];
      const AffectPoint& p = part.points[static_cast<std::size_t>(j)];
      m = {(1.0 - wt) * m.valence + wt * p.valence, (1.0 - wt) * m.arousal + wt * p.arousal};
    }
    merged.points.insert(merged.points.end(), part.points.begin() + overlap, part.points.end());
  }
  if (merged.duration_s() != plan.duration_s) throw ShapeError("merge: windows do not cover the duration");
  return merged;
}

AffectTrajectory extract_trajectory_longform(const PseudoVideo& video, const FrozenBackbone& backbone,
                                             const AffectProbe& probe, const WindowPlan& plan, int instruction_id) {
  if (video.duration_s() != plan.duration_s) throw ShapeError("extract_trajectory_longform: plan/video length mismatch");
  std::vector<AffectTrajectory> parts(plan.windows.size());
  parallel_for(parts.size(), [&](std::size_t i) {
    const WindowSpan& w = plan.windows[i];
    parts[i] = predict_trajectory(backbone, probe, video.slice(w.start_s, w.end_s - w.start_s), instruction_id);
  });
  return merge_window_trajectories(parts, plan);
}

LongformResult generate_from_trajectory(const AffectTrajectory& trajectory, const SemanticAnchor& anchor,
                                        const MusicBackbone& music, const ControlBranch* control,
                                        const WindowPlan& plan, const SamplerConfig& sampler, const CodecSpec& codec,
                                        ContinuationMode mode) {
  if (trajectory.duration_s() != plan.duration_s) throw ShapeError("generate: plan/trajectory length mismatch");
  if (mode == ContinuationMode::kPrefix && plan.windows.size() > 1 && plan.prefix_s < 1) {
    throw ConfigError("generate: prefix prompting needs prefix_s >= 1");
  }
  const int tps = codec.tokens_per_second;
  LongformResult result;
  result.tokens = TokenGrid(codec, 0);
  result.windows = plan.windows;
  result.trajectory = trajectory;
  result.anchor = anchor;
  const AnchorEmbedding embedding = music.anchor_encoder.encode(anchor);

  int produced_s = 0;
  for (std::size_t i = 0; i < plan.windows.size(); ++i) {
    const WindowSpan& w = plan.windows[i];
    const int new_from = i == 0 ? w.start_s : produced_s;
    const int prefix_s = (i == 0 || mode == ContinuationMode::kIndependent) ? 0 : std::min(plan.prefix_s, produced_s);
    const int context_from = new_from - prefix_s;
    const TokenGrid prefix = result.tokens.slice(context_from * tps, prefix_s * tps);

    std::optional<ControlSignal> signal;
    if (control) {
      const int steps = (w.end_s - context_from) * tps;
      signal = clip_control(*control, trajectory.slice(context_from, w.end_s - context_from), steps);
    }
    SamplerConfig window_sampler = sampler;
    window_sampler.seed = derive_seed(sampler.seed, static_cast<std::uint64_t>(i));
    SampleStats stats;
    const TokenGrid fresh = sample(music, embedding, signal ? &*signal : nullptr, control ? &control->gates : nullptr,
                                   prefix, window_sampler, (w.end_s - new_from) * tps, &stats);
    result.peak_context = std::max(result.peak_context, stats.peak_context);
    result.tokens.append(fresh);
    result.generated.push_back({new_from, w.end_s});
    result.prefixes.push_back(prefix);
    result.window_anchors.push_back(embedding);
    produced_s = w.end_s;
  }
  return result;
}

LongformResult generate_longform(const PseudoVideo& video, const LongformModels& models, const WindowPlan& plan,
                                 const SamplerConfig& sampler, const CodecSpec& codec, ContinuationMode mode) {
  if (!models.vision || !models.probe || !models.world || !models.music) {
    throw ConfigError("generate_longform: backbone, probe, world and music model are all required");
  }
  if (video.duration_s() != plan.duration_s) throw ShapeError("generate_longform: plan/video length mismatch");
  const AffectTrajectory trajectory =
      extract_trajectory_longform(video, *models.vision, *models.probe, plan, models.instruction_id);
  const SemanticAnchor anchor = conceptualize(video, *models.world, models.num_keyframes);
  return generate_from_trajectory(trajectory, anchor, *models.music, models.control, plan, sampler, codec, mode);
}

std::vector<SeamScore> seam_scores(const TokenGrid& tokens, const std::vector<WindowSpan>& generated, int window_s) {
  if (window_s < 1) throw ConfigError("seam_scores: window must be >= 1 s");
  const int tps = tokens.codec().tokens_per_second;
  const int span = window_s * tps;
  std::vector<SeamScore> out;
  for (std::size_t i = 1; i < generated.size(); ++i) {
    const int seam = generated[i].start_s;
    SeamScore score{seam, std::nullopt};
    const int at = seam * tps;
    const int before = std::min(span, at);
    const int after = std::min(span, tokens.steps() - at);
    if (before > 0 && after > 0) {
      const auto left = decode_window(window_stats(tokens, at - before, before));
      const auto right = decode_window(window_stats(tokens, at, after));
      if (left && right) {
        score.discontinuity =
            0.5 * (std::abs(left->valence - right->valence) + std::abs(left->arousal - right->arousal));
      }
    }
    out.push_back(score);
  }
  return out;
}

std::optional<double> mean_seam_discontinuity(const std::vector<SeamScore>& seams) {
  double total = 0.0;
  int n = 0;
  for (const SeamScore& s : seams) {
    if (s.discontinuity) {
      total += *s.discontinuity;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

BoundaryStepCheck boundary_steps(const AffectTrajectory& merged, const WindowPlan& plan) {
  if (merged.duration_s() != plan.duration_s) throw ShapeError("boundary_steps: length mismatch");
  std::vector<bool> boundary(static_cast<std::size_t>(plan.duration_s + 1), false);
  for (const WindowSpan& w : plan.windows) {
    boundary[static_cast<std::size_t>(w.start_s)] = true;
    boundary[static_cast<std::size_t>(w.end_s)] = true;
  }
  BoundaryStepCheck check;
  std::vector<double> interior;
  for (int t = 1; t < merged.duration_s(); ++t) {
    const AffectPoint& a = merged.points[static_cast<std::size_t>(t - 1)];
    const AffectPoint& b = merged.points[static_cast<std::size_t>(t)];
    const double step = std::max(std::abs(b.valence - a.valence), std::abs(b.arousal - a.arousal));
    if (boundary[static_cast<std::size_t>(t)]) {
      check.max_boundary_step = std::max(check.max_boundary_step, step);
    } else {
      interior.push_back(step);
    }
  }
  if (!interior.empty()) {
    std::sort(interior.begin(), interior.end());
    const double rank = 0.95 * static_cast<double>(interior.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, interior.size() - 1);
    check.interior_p95 = interior[lo] + (rank - static_cast<double>(lo)) * (interior[hi] - interior[lo]);
  }
  return check;
}

}  // namespace arcscore
