#include "arcscore/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "arcscore/errors.hpp"

namespace arcscore {

void CodecSpec::validate() const {
  if (num_codebooks < 1) throw ConfigError("codec: num_codebooks must be >= 1");
  if (vocab_size < 4) throw ConfigError("codec: vocab_size must be >= 4");
  if (tokens_per_second < 1) throw ConfigError("codec: tokens_per_second must be >= 1");
  if (silence_token < 0 || silence_token >= vocab_size) throw ConfigError("codec: silence_token must be < vocab_size");
}

bool CodecSpec::is_major(int id) const {
  return id != silence_token && id >= 1 && id <= (vocab_size - 2) / 2 + 1;
}

bool CodecSpec::is_minor(int id) const {
  return id != silence_token && id >= 0 && id < vocab_size && !is_major(id);
}

std::vector<int> CodecSpec::major_pool() const {
  std::vector<int> pool;
  for (int id = 0; id < vocab_size; ++id) {
    if (is_major(id)) pool.push_back(id);
  }
  return pool;
}

std::vector<int> CodecSpec::minor_pool() const {
  std::vector<int> pool;
  for (int id = 0; id < vocab_size; ++id) {
    if (is_minor(id)) pool.push_back(id);
  }
  return pool;
}

AffectTrajectory AffectTrajectory::slice(int first_s, int count) const {
  if (first_s < 0 || count < 0 || first_s + count > duration_s()) throw ShapeError("trajectory slice out of range");
  AffectTrajectory out;
  out.points.assign(points.begin() + first_s, points.begin() + first_s + count);
  return out;
}

Matrix AffectTrajectory::as_matrix() const {
  Matrix m(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = points[i].valence;
    m(static_cast<Eigen::Index>(i), 1) = points[i].arousal;
  }
  return m;
}

AffectTrajectory AffectTrajectory::from_matrix(const Matrix& m) {
  if (m.cols() != 2) throw ShapeError("trajectory matrix must have 2 columns");
  AffectTrajectory out;
  out.points.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.points.push_back({m(r, 0), m(r, 1)});
  return out;
}

// ---- arcs -------------------------------------------------------------------

AffectPoint NarrativeArc::at(double t_s) const {
  if (segments.empty()) throw ConfigError("arc has no segments");
  double t = std::clamp(t_s, 0.0, total_duration_s);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const ArcSegment& seg = segments[i];
    if (t <= seg.duration_s || i + 1 == segments.size()) {
      const double w = seg.duration_s > 0.0 ? std::clamp(t / seg.duration_s, 0.0, 1.0) : 1.0;
      return {seg.start.valence + w * (seg.end.valence - seg.start.valence),
              seg.start.arousal + w * (seg.end.arousal - seg.start.arousal)};
    }
    t -= seg.duration_s;
  }
  return segments.back().end;
}

AffectTrajectory NarrativeArc::sample_1hz() const {
  // Values are quantized to 1e-6 so that va.csv round-trips exactly.
  auto quantize = [](double v) { return std::round(v * 1e6) / 1e6; };
  AffectTrajectory out;
  const int n = static_cast<int>(std::ceil(total_duration_s - 1e-9));
  for (int i = 0; i < n; ++i) {
    const AffectPoint p = at(static_cast<double>(i));
    out.points.push_back({quantize(p.valence), quantize(p.arousal)});
  }
  return out;
}

Archetype parse_archetype(std::string_view name) {
  if (name == "rise") return Archetype::kRise;
  if (name == "fall") return Archetype::kFall;
  if (name == "rise-fall") return Archetype::kRiseFall;
  if (name == "plateau") return Archetype::kPlateau;
  if (name == "random-walk") return Archetype::kRandomWalk;
  throw ConfigError("unknown archetype '" + std::string(name) + "'");
}

std::string_view archetype_name(Archetype a) {
  switch (a) {
    case Archetype::kRise: return "rise";
    case Archetype::kFall: return "fall";
    case Archetype::kRiseFall: return "rise-fall";
    case Archetype::kPlateau: return "plateau";
    case Archetype::kRandomWalk: return "random-walk";
  }
  return "unknown";
}

namespace {

// Chain of knots (progress in [0,1] at sorted times) between two endpoints.
NarrativeArc monotone_arc(std::mt19937_64& rng, double total, AffectPoint from, AffectPoint to) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int pieces = 2 + static_cast<int>(rng() % 2);
  std::vector<double> times{0.0, total};
  std::vector<double> progress{0.0, 1.0};
  for (int i = 1; i < pieces; ++i) {
    times.push_back(total * (0.15 + 0.7 * unit(rng)));
    progress.push_back(unit(rng));
  }
  std::sort(times.begin(), times.end());
  std::sort(progress.begin(), progress.end());
  auto lerp = [&](double w) -> AffectPoint {
    return {from.valence + w * (to.valence - from.valence), from.arousal + w * (to.arousal - from.arousal)};
  };
  NarrativeArc arc;
  arc.total_duration_s = total;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    arc.segments.push_back({times[i + 1] - times[i], lerp(progress[i]), lerp(progress[i + 1])});
  }
  return arc;
}

void close_durations(NarrativeArc& arc) {
  double used = 0.0;
  for (std::size_t i = 0; i + 1 < arc.segments.size(); ++i) used += arc.segments[i].duration_s;
  arc.segments.back().duration_s = arc.total_duration_s - used;
}

}  // namespace

NarrativeArc make_arc(std::uint64_t seed, int duration_s, Archetype archetype) {
  if (duration_s < 10) throw ConfigError("make_arc: duration must be >= 10 s");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double total = static_cast<double>(duration_s);
  NarrativeArc arc;
  switch (archetype) {
    case Archetype::kPlateau: {
      const AffectPoint p{uniform(-0.9, 0.9), uniform(-0.9, 0.9)};
      arc.total_duration_s = total;
      arc.segments.push_back({total, p, p});
      break;
    }
    case Archetype::kRise:
    case Archetype::kFall: {
      const double low = uniform(-1.0, -0.2);
      const double high = uniform(0.2, 1.0);
      const double v0 = uniform(-1.0, 1.0);
      const double v1 = uniform(-1.0, 1.0);
      const bool rise = archetype == Archetype::kRise;
      arc = monotone_arc(rng, total, {v0, rise ? low : high}, {v1, rise ? high : low});
      break;
    }
    case Archetype::kRiseFall: {
      const double peak_time = total * uniform(0.3, 0.7);
      const AffectPoint start{uniform(-1.0, 1.0), uniform(-1.0, -0.2)};
      const AffectPoint peak{uniform(-1.0, 1.0), uniform(0.3, 1.0)};
      const AffectPoint end{uniform(-1.0, 1.0), uniform(-1.0, -0.2)};
      arc.total_duration_s = total;
      arc.segments.push_back({peak_time, start, peak});
      arc.segments.push_back({total - peak_time, peak, end});
      break;
    }
    case Archetype::kRandomWalk: {
      std::normal_distribution<double> step(0.0, 0.5);
      AffectPoint current{uniform(-0.8, 0.8), uniform(-0.8, 0.8)};
      arc.total_duration_s = total;
      double t = 0.0;
      while (t < total - 1e-9) {
        const double d = std::min(uniform(5.0, 15.0), total - t);
        const AffectPoint next{std::clamp(current.valence + step(rng), -1.0, 1.0),
                               std::clamp(current.arousal + step(rng), -1.0, 1.0)};
        arc.segments.push_back({d, current, next});
        current = next;
        t += d;
      }
      break;
    }
  }
  close_durations(arc);
  return arc;
}

NarrativeArc make_arc(std::uint64_t seed, int duration_s, std::string_view archetype) {
  return make_arc(seed, duration_s, parse_archetype(archetype));
}

// ---- token grids -------------------------------------------------------------

TokenGrid::TokenGrid(const CodecSpec& codec, int steps) : codec_(codec), steps_(steps) {
  codec_.validate();
  if (steps < 0) throw ShapeError("TokenGrid: negative length");
  ids_.assign(static_cast<std::size_t>(steps) * static_cast<std::size_t>(codec.num_codebooks), codec.silence_token);
}

void TokenGrid::set(int t, int k, int id) {
  if (t < 0 || t >= steps_ || k < 0 || k >= codec_.num_codebooks) throw ShapeError("TokenGrid::set out of range");
  if (id < 0 || id >= codec_.vocab_size) throw ShapeError("TokenGrid::set: id outside [0, N)");
  ids_[static_cast<std::size_t>(t * codec_.num_codebooks + k)] = id;
}

TokenGrid TokenGrid::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > steps_) throw ShapeError("TokenGrid::slice out of range");
  TokenGrid out(codec_, count);
  const auto k = static_cast<std::size_t>(codec_.num_codebooks);
  std::copy(ids_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(first) * k),
            ids_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(first + count) * k), out.ids_.begin());
  return out;
}

void TokenGrid::append(const TokenGrid& other) {
  if (steps_ == 0 && ids_.empty() && !(other.codec_ == codec_)) codec_ = other.codec_;
  if (!(other.codec_ == codec_)) throw ShapeError("TokenGrid::append: codec mismatch");
  ids_.insert(ids_.end(), other.ids_.begin(), other.ids_.end());
  steps_ += other.steps_;
}

bool DelayedGrid::is_pad_position(int s, int k) const {
  const int original_steps = steps - codebooks + 1;
  return s - k < 0 || s - k >= original_steps;
}

DelayedGrid apply_delay(const TokenGrid& tokens, int pad_token) {
  const CodecSpec& codec = tokens.codec();
  if (pad_token != codec.pad_token()) throw ConfigError("apply_delay: pad token must be the reserved id N");
  DelayedGrid out;
  out.codebooks = codec.num_codebooks;
  out.steps = tokens.steps() + codec.num_codebooks - 1;
  out.pad_token = pad_token;
  out.ids.assign(static_cast<std::size_t>(out.steps * out.codebooks), pad_token);
  for (int t = 0; t < tokens.steps(); ++t) {
    for (int k = 0; k < out.codebooks; ++k) out.set(t + k, k, tokens.at(t, k));
  }
  return out;
}

TokenGrid remove_delay(const DelayedGrid& delayed, const CodecSpec& codec) {
  if (delayed.codebooks != codec.num_codebooks || delayed.pad_token != codec.pad_token()) {
    throw DecodeError("remove_delay: grid does not match codec");
  }
  if (delayed.ids.size() != static_cast<std::size_t>(delayed.steps * delayed.codebooks)) {
    throw DecodeError("remove_delay: ragged grid");
  }
  const int steps = delayed.steps - delayed.codebooks + 1;
  if (steps < 0) throw DecodeError("remove_delay: grid shorter than the delay span");
  TokenGrid out(codec, steps);
  for (int s = 0; s < delayed.steps; ++s) {
    for (int k = 0; k < delayed.codebooks; ++k) {
      const int id = delayed.at(s, k);
      if (delayed.is_pad_position(s, k)) {
        if (id != delayed.pad_token) throw DecodeError("remove_delay: expected pad at a delay gap");
      } else {
        if (id == delayed.pad_token || id < 0 || id >= codec.vocab_size) {
          throw DecodeError("remove_delay: pad or invalid id inside the token region");
        }
        out.set(s - k, k, id);
      }
    }
  }
  return out;
}

// ---- grammar -------------------------------------------------------------------

double switch_probability(double arousal) { return 0.05 + 0.90 * (arousal + 1.0) / 2.0; }

double major_probability(double valence) { return std::clamp((valence + 1.0) / 2.0, 0.0, 1.0); }

int codebook_token(int c0, int k, int vocab_size) { return 1 + ((c0 - 1 + 7 * k) % (vocab_size - 1) + (vocab_size - 1)) % (vocab_size - 1); }

TokenGrid grammar_emit(const AffectTrajectory& trajectory, const CodecSpec& codec, std::uint64_t seed) {
  codec.validate();
  const int steps = trajectory.duration_s() * codec.tokens_per_second;
  TokenGrid grid(codec, steps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<int> major = codec.major_pool();
  const std::vector<int> minor = codec.minor_pool();

  auto draw_from = [&](const std::vector<int>& pool, int exclude) {
    const bool contains = std::find(pool.begin(), pool.end(), exclude) != pool.end();
    const int n = static_cast<int>(pool.size()) - (contains ? 1 : 0);
    int idx = std::uniform_int_distribution<int>(0, n - 1)(rng);
    for (int id : pool) {
      if (id == exclude) continue;
      if (idx-- == 0) return id;
    }
    return pool.front();
  };

  int current = -1;
  for (int t = 0; t < steps; ++t) {
    const AffectPoint& p = trajectory.points[static_cast<std::size_t>(t / codec.tokens_per_second)];
    const double u_switch = unit(rng);
    if (current < 0 || u_switch < switch_probability(p.arousal)) {
      const bool use_major = unit(rng) < major_probability(p.valence);
      current = draw_from(use_major ? major : minor, current);
    }
    grid.set(t, 0, current);
    for (int k = 1; k < codec.num_codebooks; ++k) grid.set(t, k, codebook_token(current, k, codec.vocab_size));
  }
  return grid;
}

TokenGrid grammar_emit(const NarrativeArc& arc, const CodecSpec& codec, std::uint64_t seed) {
  return grammar_emit(arc.sample_1hz(), codec, seed);
}

// ---- oracle ------------------------------------------------------------------

OracleWindowStats window_stats(const TokenGrid& tokens, int first_step, int count) {
  const CodecSpec& codec = tokens.codec();
  OracleWindowStats stats;
  int previous = -1;
  for (int t = first_step; t < first_step + count && t < tokens.steps(); ++t) {
    const int id = tokens.at(t, 0);
    if (id == codec.silence_token) {
      previous = -1;
      continue;
    }
    ++stats.voiced_steps;
    if (codec.is_major(id)) ++stats.major_steps;
    if (previous >= 0) {
      ++stats.transitions;
      if (id != previous) ++stats.switches;
    }
    previous = id;
  }
  return stats;
}

std::optional<AffectPoint> decode_window(const OracleWindowStats& stats) {
  if (stats.transitions == 0) return std::nullopt;
  const double rate = static_cast<double>(stats.switches) / stats.transitions;
  const double major = static_cast<double>(stats.major_steps) / stats.voiced_steps;
  return AffectPoint{std::clamp(2.0 * major - 1.0, -1.0, 1.0), std::clamp(2.0 * (rate - 0.05) / 0.90 - 1.0, -1.0, 1.0)};
}

std::vector<std::optional<AffectPoint>> oracle_decode(const TokenGrid& tokens, int window_s) {
  if (tokens.empty()) throw ShapeError("oracle_decode: empty token grid");
  if (window_s < 1) throw ConfigError("oracle_decode: window must be >= 1 s");
  const int window_steps = window_s * tokens.codec().tokens_per_second;
  std::vector<std::optional<AffectPoint>> out;
  for (int first = 0; first < tokens.steps(); first += window_steps) {
    out.push_back(decode_window(window_stats(tokens, first, window_steps)));
  }
  return out;
}

// ---- pseudo-video ----------------------------------------------------------------

SyntheticWorld::SyntheticWorld(WorldConfig config) : config_(config) {
  if (config_.feature_dim < 2 || config_.tokens_per_frame < 1) throw ConfigError("world: bad feature shape");
  std::mt19937_64 rng(derive_seed(config_.seed, "affect-loading"));
  affect_loading_ = random_normal(config_.feature_dim, 2, config_.affect_gain, rng);
  const Matrix gram = affect_loading_.transpose() * affect_loading_;
  loading_pinv_ = gram.inverse() * affect_loading_.transpose();
}

Matrix SyntheticWorld::scene_basis(int scene_id) const {
  std::mt19937_64 rng(derive_seed(derive_seed(config_.seed, "scene"), static_cast<std::uint64_t>(scene_id)));
  return random_normal(config_.tokens_per_frame, config_.feature_dim, 1.0, rng);
}

AffectPoint SyntheticWorld::estimate_affect(const Matrix& frame, int scene_id) const {
  const RowVector residual = (frame - scene_basis(scene_id)).colwise().mean();
  const Eigen::Vector2d va = loading_pinv_ * residual.transpose();
  return {va(0), va(1)};
}

PseudoVideo PseudoVideo::slice(int first_s, int count) const {
  if (first_s < 0 || count < 0 || first_s + count > duration_s()) throw ShapeError("video slice out of range");
  PseudoVideo out;
  out.frames.assign(frames.begin() + first_s, frames.begin() + first_s + count);
  out.ground_truth = ground_truth.slice(first_s, count);
  out.scene_id = scene_id;
  return out;
}

PseudoVideo render_pseudo_video(const SyntheticWorld& world, const AffectTrajectory& trajectory, int scene_id,
                                std::uint64_t seed) {
  const WorldConfig& cfg = world.config();
  const Matrix basis = world.scene_basis(scene_id);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  PseudoVideo video;
  video.scene_id = scene_id;
  video.ground_truth = trajectory;
  video.frames.reserve(trajectory.points.size());
  for (const AffectPoint& p : trajectory.points) {
    const RowVector signal = (world.affect_loading() * Eigen::Vector2d(p.valence, p.arousal)).transpose();
    Matrix frame = basis;
    for (Eigen::Index m = 0; m < frame.rows(); ++m) {
      frame.row(m) += signal;
      for (Eigen::Index d = 0; d < frame.cols(); ++d) frame(m, d) += noise(rng);
    }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

PseudoVideo render_pseudo_video(const SyntheticWorld& world, const NarrativeArc& arc, int scene_id,
                                std::uint64_t seed) {
  return render_pseudo_video(world, arc.sample_1hz(), scene_id, seed);
}

}  // namespace arcscore
