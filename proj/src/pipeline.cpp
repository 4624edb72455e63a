#include "arcscore/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "arcscore/dataset_io.hpp"
#include "arcscore/errors.hpp"
#include "arcscore/parallel.hpp"
#include "arcscore/weights_io.hpp"

namespace arcscore {

namespace fs = std::filesystem;

SyntheticWorld make_world(const RunConfig& config) { return SyntheticWorld(config.world); }

DatasetSummary write_dataset(const RunConfig& config, const fs::path& dataset_dir) {
  const SyntheticWorld world = make_world(config);
  const std::vector<ClipRecord> corpus =
      build_corpus(config.codec, world, config.corpus, config.module_seed("corpus"));
  fs::create_directories(dataset_dir);
  DatasetSummary summary;
  const std::uint64_t split_seed = config.module_seed("split");
  for (const ClipRecord& clip : corpus) {
    const bool heldout = is_holdout_source(clip.source_id, config.holdout_fraction, split_seed);
    write_clip(dataset_dir / (heldout ? "heldout" : "train") / clip_dir_name(clip), clip);
    (heldout ? summary.heldout_clips : summary.train_clips) += 1;
    summary.clip_minutes += clip.va_curve.duration_s() / 60.0;
  }
  nlohmann::ordered_json manifest;
  manifest["train_clips"] = summary.train_clips;
  manifest["heldout_clips"] = summary.heldout_clips;
  manifest["clip_minutes"] = summary.clip_minutes;
  std::uint64_t checksum = kFnvOffsetBasis;
  for (const ClipRecord& clip : corpus) {
    const std::string bytes = encode_tokens_bin(clip.tokens);
    checksum = fnv1a(std::as_bytes(std::span(bytes.data(), bytes.size())), checksum);
  }
  manifest["tokens_checksum"] = fmt::format("{:016x}", checksum);
  write_json_file(dataset_dir / "manifest.json", manifest);
  return summary;
}

std::vector<ClipRecord> load_clips(const RunConfig& config, const fs::path& dir, int max_clips, int first_clip) {
  if (!fs::is_directory(dir)) throw DataError("missing dataset directory " + dir.string() + " (run datagen first)");
  std::vector<ClipRecord> clips = read_dataset(dir, config.codec);
  clips.erase(clips.begin(), clips.begin() + std::min<std::ptrdiff_t>(first_clip, std::ssize(clips)));
  if (max_clips > 0 && static_cast<int>(clips.size()) > max_clips) clips.resize(static_cast<std::size_t>(max_clips));
  return clips;
}

std::vector<ProbeSample> probe_samples(const SyntheticWorld& world, const std::vector<ClipRecord>& clips) {
  std::vector<ProbeSample> out(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) { out[i] = {clip_video(world, clips[i]), clips[i].va_curve}; });
  return out;
}

ProbeEvaluation evaluate_probe(const FrozenBackbone& vision, const AffectProbe& probe,
                               const std::vector<ProbeSample>& train, const std::vector<ProbeSample>& heldout,
                               int instruction_id) {
  if (train.empty() || heldout.empty()) throw DataError("evaluate_probe: empty split");
  RowVector mean = RowVector::Zero(2);
  double n = 0.0;
  for (const ProbeSample& s : train) {
    mean += s.truth.as_matrix().colwise().sum();
    n += s.truth.duration_s();
  }
  mean /= n;
  std::vector<double> se(heldout.size()), base(heldout.size());
  parallel_for(heldout.size(), [&](std::size_t i) {
    const Matrix truth = heldout[i].truth.as_matrix();
    const Matrix pred = predict_trajectory(vision, probe, heldout[i].video, instruction_id).as_matrix();
    se[i] = (pred - truth).squaredNorm();
    base[i] = (truth.rowwise() - mean).squaredNorm();
  });
  double total = 0.0, total_base = 0.0, count = 0.0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    total += se[i];
    total_base += base[i];
    count += 2.0 * heldout[i].truth.duration_s();
  }
  return {total / count, total_base / count};
}

MusicBackbone load_backbone(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing backbone weights " + path.string() + " (run 'train backbone' first)");
  MusicBackbone music(config.decoder_config());
  load_weights(path, music.parameters());
  return music;
}

ControlBranch load_control_branch(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing adapter weights " + path.string() + " (run 'train adapter' first)");
  ControlBranch branch(config.adapter_config(), config.decoder_config());
  load_weights(path, branch.parameters());
  return branch;
}

AffectProbe load_probe(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing probe weights " + path.string() + " (run 'train probe' first)");
  const ProbeConfig pc = config.probe_config();
  AffectProbe probe(config.vision_config().hidden_dim, pc.hidden_dim, pc.seed);
  load_weights(path, probe.parameters());
  return probe;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += fmt::format("{},{:.9g}\n", i + 1, losses[i]);
  write_text_file(path, out);
}

HeldoutArc heldout_arc(const RunConfig& config, const SyntheticWorld& world, int index, int duration_s) {
  static constexpr Archetype kVarying[] = {Archetype::kRise, Archetype::kFall, Archetype::kRiseFall,
                                           Archetype::kRandomWalk};
  const std::uint64_t seed = derive_seed(config.module_seed("heldout_arc"), static_cast<std::uint64_t>(index));
  const NarrativeArc arc = make_arc(seed, duration_s, kVarying[index % 4]);
  HeldoutArc out;
  out.trajectory = arc.sample_1hz();
  out.video = render_pseudo_video(world, out.trajectory, 1000000 + index, derive_seed(seed, "video"));
  out.anchor = conceptualize(out.video, world, config.corpus.num_keyframes);
  return out;
}

double ControlEvaluation::mean() const {
  if (!valence || !arousal) return std::numeric_limits<double>::quiet_NaN();
  return 0.5 * (*valence + *arousal);
}

ControlEvaluation evaluate_control(const RunConfig& config, const SyntheticWorld& world, const MusicBackbone& music,
                                   const ControlBranch* branch, int arcs, int duration_s) {
  ControlEvaluation eval;
  eval.per_arc.resize(static_cast<std::size_t>(arcs));
  const WindowPlan plan =
      plan_windows(duration_s, config.windows.window_len_s, config.windows.overlap_s, config.windows.prefix_s);
  const SamplerConfig sampler = config.sampler_config();
  parallel_for(static_cast<std::size_t>(arcs), [&](std::size_t i) {
    const HeldoutArc arc = heldout_arc(config, world, static_cast<int>(i), duration_s);
    SamplerConfig s = sampler;
    s.seed = derive_seed(sampler.seed, static_cast<std::uint64_t>(i));
    const LongformResult result =
        generate_from_trajectory(arc.trajectory, arc.anchor, music, branch, plan, s, config.codec);
    try {
      eval.per_arc[i] = affect_alignment(result.tokens, arc.trajectory, config.eval.window_s);
    } catch (const DataError& e) {
      spdlog::warn("arc {}: {}", i, e.what());
    }
  });
  double sv = 0.0, sa = 0.0;
  int nv = 0, na = 0;
  for (const auto& a : eval.per_arc) {
    if (a && a->valence) {
      sv += *a->valence;
      ++nv;
    }
    if (a && a->arousal) {
      sa += *a->arousal;
      ++na;
    }
  }
  if (nv > 0) eval.valence = sv / nv;
  if (na > 0) eval.arousal = sa / na;
  return eval;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const MusicBackbone& music,
                                      const std::vector<ClipRecord>& train, const std::vector<ClipRecord>& heldout) {
  const SyntheticWorld world = make_world(config);
  std::vector<AblationRow> rows;
  for (double ratio : config.ablate.ratios) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError(fmt::format("injection ratio {} is outside (0, 1]", ratio));
    RunConfig rc = config;
    rc.decoder.injection_ratio = ratio;
    ControlBranch branch(rc.adapter_config(), rc.decoder_config());
    const TrainingHistory history = train_adapter(&music, branch, train, rc.adapter_schedule());
    AblationRow row;
    row.ratio = ratio;
    row.shallow_layers = rc.decoder_config().shallow_layers();
    row.final_train_loss = history.epoch_loss.empty() ? 0.0 : history.epoch_loss.back();
    for (int l = 0; l < branch.gates.injected_layers(); ++l) row.gates.push_back(branch.gates.value(l));
    if (!heldout.empty()) {
      row.heldout_ce_conditioned = evaluate_gen_loss(music, &branch, heldout);
      row.heldout_ce_unconditioned = evaluate_gen_loss(music, nullptr, heldout);
    }
    row.control = evaluate_control(rc, world, music, &branch, config.ablate.eval_arcs, config.ablate.arc_duration_s);
    spdlog::info("ratio {}: alignment v={:.3f} a={:.3f}", ratio, row.control.valence.value_or(NAN),
                 row.control.arousal.value_or(NAN));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string cell(const std::optional<double>& x) { return x ? fmt::format("{:.4f}", *x) : "nan"; }

}  // namespace

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out =
      "injection_ratio,shallow_layers,alignment_valence,alignment_arousal,alignment_mean,heldout_ce_conditioned,"
      "heldout_ce_unconditioned,final_train_loss\n";
  for (const AblationRow& r : rows) {
    out += fmt::format("{},{},{},{},{:.4f},{:.6f},{:.6f},{:.6f}\n", r.ratio, r.shallow_layers, cell(r.control.valence),
                       cell(r.control.arousal), r.control.mean(), r.heldout_ce_conditioned,
                       r.heldout_ce_unconditioned, r.final_train_loss);
  }
  return out;
}

nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const AblationRow& r : rows) {
    nlohmann::ordered_json e;
    e["injection_ratio"] = r.ratio;
    e["shallow_layers"] = r.shallow_layers;
    e["alignment_valence"] = r.control.valence ? nlohmann::ordered_json(*r.control.valence) : nullptr;
    e["alignment_arousal"] = r.control.arousal ? nlohmann::ordered_json(*r.control.arousal) : nullptr;
    e["heldout_ce_conditioned"] = r.heldout_ce_conditioned;
    e["heldout_ce_unconditioned"] = r.heldout_ce_unconditioned;
    e["final_train_loss"] = r.final_train_loss;
    e["gates"] = r.gates;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace arcscore
