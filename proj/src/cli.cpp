#include "arcscore/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "arcscore/dataset_io.hpp"
#include "arcscore/errors.hpp"
#include "arcscore/parallel.hpp"
#include "arcscore/pipeline.hpp"
#include "arcscore/sonify.hpp"
#include "arcscore/weights_io.hpp"

namespace arcscore {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  int threads = 1;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig config = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

void save_resolved(const RunConfig& config, const RunPaths& paths) {
  fs::create_directories(paths.root);
  write_json_file(paths.root / "run_config.json", run_config_to_json(config));
}

std::string checksum_hex(std::uint64_t c) { return fmt::format("{:016x}", c); }

// ---- commands ------------------------------------------------------------------

void cmd_datagen(const RunConfig& config, const RunPaths& paths) {
  save_resolved(config, paths);
  const DatasetSummary s = write_dataset(config, paths.dataset());
  spdlog::info("datagen: {} train clips, {} held-out clips, {:.1f} clip-minutes", s.train_clips, s.heldout_clips,
               s.clip_minutes);
}

void cmd_train_probe(const RunConfig& config, const RunPaths& paths) {
  save_resolved(config, paths);
  const SyntheticWorld world = make_world(config);
  const std::vector<ProbeSample> train = probe_samples(world, load_clips(config, paths.train()));
  if (train.empty()) throw DataError("train probe: no training clips in " + paths.train().string());
  const FrozenBackbone vision(config.vision_config());
  const std::uint64_t before = vision.checksum();
  const ProbeTrainingResult result = train_probe(vision, train, config.probe_config());
  fs::create_directories(paths.weights());
  fs::create_directories(paths.logs());
  save_weights(paths.probe_weights(), result.weights.parameters());
  write_loss_csv(paths.logs() / "probe_loss.csv", result.loss_history);

  nlohmann::ordered_json report;
  report["initial_loss"] = result.initial_loss;
  report["final_loss"] = result.loss_history.empty() ? result.initial_loss : result.loss_history.back();
  report["backbone_checksum_before"] = checksum_hex(before);
  report["backbone_checksum_after"] = checksum_hex(vision.checksum());
  if (fs::is_directory(paths.heldout())) {
    const std::vector<ProbeSample> heldout = probe_samples(world, load_clips(config, paths.heldout()));
    if (!heldout.empty()) {
      const ProbeEvaluation e = evaluate_probe(vision, result.weights, train, heldout, config.probe.instruction_id);
      report["heldout_mse"] = e.mse;
      report["baseline_mse"] = e.baseline_mse;
      spdlog::info("probe: held-out MSE {:.4f} vs constant-mean baseline {:.4f}", e.mse, e.baseline_mse);
    }
  }
  write_json_file(paths.logs() / "probe_eval.json", report);
}

void cmd_train_backbone(const RunConfig& config, const RunPaths& paths) {
  save_resolved(config, paths);
  const std::vector<ClipRecord> train = load_clips(config, paths.train(), config.backbone_training.max_clips,
                                                     config.backbone_training.first_clip);
  MusicBackbone music(config.decoder_config());
  const TrainingHistory history = pretrain_backbone(music, train, config.backbone_schedule());
  fs::create_directories(paths.weights());
  fs::create_directories(paths.logs());
  save_weights(paths.backbone_weights(), music.parameters());
  write_loss_csv(paths.logs() / "backbone_loss.csv", history.epoch_loss);
  spdlog::info("backbone: {} clips, final epoch loss {:.4f}", train.size(),
               history.epoch_loss.empty() ? 0.0 : history.epoch_loss.back());
}

void cmd_train_adapter(const RunConfig& config, const RunPaths& paths) {
  save_resolved(config, paths);
  const MusicBackbone music = load_backbone(config, paths.backbone_weights());
  const std::vector<ClipRecord> train = load_clips(config, paths.train(), config.adapter_training.max_clips,
                                                     config.adapter_training.first_clip);
  const std::uint64_t before = parameter_checksum(music.parameters());
  ControlBranch branch(config.adapter_config(), config.decoder_config());
  const TrainingHistory history = train_adapter(&music, branch, train, config.adapter_schedule());
  fs::create_directories(paths.logs());
  save_weights(paths.adapter_weights(), branch.parameters());
  write_loss_csv(paths.logs() / "adapter_loss.csv", history.epoch_loss);

  nlohmann::ordered_json report;
  report["backbone_checksum_before"] = checksum_hex(before);
  report["backbone_checksum_after"] = checksum_hex(parameter_checksum(music.parameters()));
  std::vector<double> gates;
  for (int l = 0; l < branch.gates.injected_layers(); ++l) gates.push_back(branch.gates.value(l));
  report["gates"] = gates;
  if (fs::is_directory(paths.heldout())) {
    const std::vector<ClipRecord> heldout = load_clips(config, paths.heldout(), config.adapter_training.max_clips);
    if (!heldout.empty()) {
      report["heldout_ce_conditioned"] = evaluate_gen_loss(music, &branch, heldout);
      report["heldout_ce_unconditioned"] = evaluate_gen_loss(music, nullptr, heldout);
    }
  }
  write_json_file(paths.logs() / "adapter_eval.json", report);
}

struct GenerateOptions {
  std::string weights_dir;
  std::string clip_dir;
  std::optional<int> duration_s;
  std::optional<std::string> archetype;
  std::optional<int> scene_id;
  bool independent = false;
  bool wav = false;
  std::string output_dir;
};

void cmd_generate(RunConfig config, const RunPaths& paths, const GenerateOptions& o) {
  if (o.duration_s) config.generate.duration_s = *o.duration_s;
  if (o.archetype) config.generate.archetype = *o.archetype;
  if (o.scene_id) config.generate.scene_id = *o.scene_id;
  config.validate();
  save_resolved(config, paths);
  const fs::path wdir = o.weights_dir.empty() ? paths.weights() : fs::path(o.weights_dir);
  const SyntheticWorld world = make_world(config);
  const FrozenBackbone vision(config.vision_config());
  const AffectProbe probe = load_probe(config, wdir / "probe.weights");
  const MusicBackbone music = load_backbone(config, wdir / "backbone.weights");
  const ControlBranch branch = load_control_branch(config, wdir / "adapter.weights");

  PseudoVideo video;
  if (!o.clip_dir.empty()) {
    video = clip_video(world, read_clip(o.clip_dir, config.codec));
  } else {
    const NarrativeArc arc = make_arc(config.generate.arc_seed, config.generate.duration_s, config.generate.archetype);
    video = render_pseudo_video(world, arc, config.generate.scene_id, config.module_seed("video"));
  }
  const WindowPlan plan = plan_windows(video.duration_s(), config.windows.window_len_s, config.windows.overlap_s,
                                       config.windows.prefix_s);
  const LongformModels models{&vision, &probe, &world, &music, &branch, config.probe.instruction_id,
                              config.corpus.num_keyframes};
  const LongformResult result =
      generate_longform(video, models, plan, config.sampler_config(), config.codec,
                        o.independent ? ContinuationMode::kIndependent : ContinuationMode::kPrefix);

  const fs::path out = o.output_dir.empty() ? paths.root / "generate" : fs::path(o.output_dir);
  fs::create_directories(out);
  write_tokens_bin(out / "tokens.bin", result.tokens);
  write_va_csv(out / "va.csv", result.trajectory);
  write_va_csv(out / "target_va.csv", video.ground_truth);
  write_json_file(out / "anchor.json", anchor_to_json(result.anchor));
  std::string seams = "seam_s,discontinuity\n";
  for (const SeamScore& s : seam_scores(result.tokens, result.generated, config.eval.window_s)) {
    seams += fmt::format("{},{}\n", s.seam_s, s.discontinuity ? fmt::format("{:.6f}", *s.discontinuity) : "");
  }
  write_text_file(out / "seams.csv", seams);
  nlohmann::ordered_json windows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.windows.size(); ++i) {
    windows.push_back({{"start_s", result.windows[i].start_s},
                       {"end_s", result.windows[i].end_s},
                       {"generated_from_s", result.generated[i].start_s},
                       {"prefix_steps", result.prefixes[i].steps()}});
  }
  write_json_file(out / "windows.json", windows);
  if (o.wav) write_text_file(out / "audio.wav", render_wav(result.tokens));
  spdlog::info("generate: {} x {} tokens written to {}", result.tokens.steps(), result.tokens.codebooks(),
               out.string());
}

void cmd_eval(const RunConfig& config, const RunPaths& paths, const std::string& gen, const std::string& ref,
              const std::string& output_dir) {
  save_resolved(config, paths);
  std::vector<EvalClip> generated;
  for (const fs::path& dir : list_clip_dirs(gen)) {
    EvalClip c{dir.filename().string(), read_tokens_bin(dir / "tokens.bin", config.codec), std::nullopt};
    if (fs::exists(dir / "va.csv")) c.target = read_va_csv(dir / "va.csv");
    generated.push_back(std::move(c));
  }
  std::vector<TokenGrid> reference;
  for (const fs::path& dir : list_clip_dirs(ref)) reference.push_back(read_tokens_bin(dir / "tokens.bin", config.codec));
  if (generated.empty()) throw DataError("eval: no clips under " + gen);
  if (reference.empty()) throw DataError("eval: no clips under " + ref);
  const MetricReport report = evaluate(generated, reference, config.eval);
  const fs::path out = output_dir.empty() ? paths.root / "eval" : fs::path(output_dir);
  fs::create_directories(out);
  write_json_file(out / "report.json", report_to_json(report));
  write_text_file(out / "report.csv", report_to_csv(report));
  spdlog::info("eval: kld {:.6f}, fd {}", report.kld, report.fd ? fmt::format("{:.6f}", *report.fd) : report.fd_note);
}

void cmd_ablate(RunConfig config, const RunPaths& paths, const std::vector<double>& ratios) {
  if (!ratios.empty()) config.ablate.ratios = ratios;
  config.validate();
  save_resolved(config, paths);
  const MusicBackbone music = load_backbone(config, paths.backbone_weights());
  const std::vector<ClipRecord> train = load_clips(config, paths.train(), config.adapter_training.max_clips,
                                                     config.adapter_training.first_clip);
  std::vector<ClipRecord> heldout;
  if (fs::is_directory(paths.heldout())) heldout = load_clips(config, paths.heldout(), config.adapter_training.max_clips);
  const std::vector<AblationRow> rows = run_ablation(config, music, train, heldout);
  const fs::path out = paths.root / "ablate";
  fs::create_directories(out);
  const std::string table = ablation_table(rows);
  write_text_file(out / "ablation.csv", table);
  write_json_file(out / "ablation.json", ablation_json(rows));
  std::cout << table;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Desk-scale affect-to-music pipeline: datagen, train, generate, eval, ablate"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run configuration (comments allowed)")->check(CLI::ExistingFile);
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Global seed; overrides the config");
  app.add_option("--out", g.out, "Run directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 256))->capture_default_str();
  app.fallthrough();

  CLI::App* datagen = app.add_subcommand("datagen", "Generate the paired synthetic corpus");
  std::optional<double> scale;
  datagen->add_option("--scale", scale, "Corpus scale (1.0 = 800 clip-minutes)");

  CLI::App* train = app.add_subcommand("train", "Train one stage");
  std::string stage;
  train->add_option("stage", stage, "probe | backbone | adapter")
      ->required()
      ->check(CLI::IsMember({"probe", "backbone", "adapter"}));

  CLI::App* generate = app.add_subcommand("generate", "Long-form generation for one pseudo-video");
  GenerateOptions gen_opts;
  generate->add_option("--weights", gen_opts.weights_dir, "Weights directory (default <out>/weights)");
  generate->add_option("--clip", gen_opts.clip_dir, "Clip directory whose pseudo-video is scored");
  generate->add_option("--duration", gen_opts.duration_s, "Arc duration in seconds");
  generate->add_option("--archetype", gen_opts.archetype, "rise | fall | rise-fall | plateau | random-walk");
  generate->add_option("--scene", gen_opts.scene_id, "Scene id of the rendered pseudo-video");
  generate->add_flag("--independent", gen_opts.independent, "Generate windows without prefix prompting");
  generate->add_flag("--wav", gen_opts.wav, "Also write a sonified audio.wav");
  generate->add_option("--output", gen_opts.output_dir, "Output directory (default <out>/generate)");

  CLI::App* eval = app.add_subcommand("eval", "Score generated tokens against a reference corpus");
  std::string gen_dir, ref_dir, eval_out;
  eval->add_option("--gen", gen_dir, "Generated clip directory or parent")->required();
  eval->add_option("--ref", ref_dir, "Reference clip directory or parent")->required();
  eval->add_option("--output", eval_out, "Output directory (default <out>/eval)");

  CLI::App* ablate = app.add_subcommand("ablate", "Injection-ratio ablation");
  std::vector<double> ratios;
  ablate->add_option("--ratios", ratios, "Comma-separated injection ratios")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    thread_count() = g.threads;
    RunConfig config = resolve_config(g);
    if (scale) {
      config.corpus.scale = *scale;
      config.validate();
    }
    const RunPaths paths{g.out};
    if (datagen->parsed()) {
      cmd_datagen(config, paths);
    } else if (train->parsed()) {
      if (stage == "probe") cmd_train_probe(config, paths);
      if (stage == "backbone") cmd_train_backbone(config, paths);
      if (stage == "adapter") cmd_train_adapter(config, paths);
    } else if (generate->parsed()) {
      cmd_generate(config, paths, gen_opts);
    } else if (eval->parsed()) {
      cmd_eval(config, paths, gen_dir, ref_dir, eval_out);
    } else if (ablate->parsed()) {
      cmd_ablate(config, paths, ratios);
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

}  // namespace arcscore
