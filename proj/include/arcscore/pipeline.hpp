#pragma once

// End-to-end stages shared by the command-line tool and the acceptance harness.
//
// Run directory layout:
//   dataset/train/clip_*/    dataset/heldout/clip_*/    dataset/manifest.json
//   weights/{probe,backbone,adapter}.weights
//   logs/{probe,backbone,adapter}_loss.csv

#include <filesystem>
#include <string>
#include <vector>

#include "arcscore/acoustic_decoder.hpp"
#include "arcscore/affect_probe.hpp"
#include "arcscore/evalsuite.hpp"
#include "arcscore/longform.hpp"
#include "arcscore/run_config.hpp"

namespace arcscore {

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path train() const { return dataset() / "train"; }
  std::filesystem::path heldout() const { return dataset() / "heldout"; }
  std::filesystem::path weights() const { return root / "weights"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path probe_weights() const { return weights() / "probe.weights"; }
  std::filesystem::path backbone_weights() const { return weights() / "backbone.weights"; }
  std::filesystem::path adapter_weights() const { return weights() / "adapter.weights"; }
};

struct DatasetSummary {
  int train_clips = 0;
  int heldout_clips = 0;
  double clip_minutes = 0.0;
};

SyntheticWorld make_world(const RunConfig& config);

// Builds the corpus, splits it by source and writes every clip plus manifest.json.
DatasetSummary write_dataset(const RunConfig& config, const std::filesystem::path& dataset_dir);
std::vector<ClipRecord> load_clips(const RunConfig& config, const std::filesystem::path& dir, int max_clips = 0,
                                   int first_clip = 0);

std::vector<ProbeSample> probe_samples(const SyntheticWorld& world, const std::vector<ClipRecord>& clips);

struct ProbeEvaluation {
  double mse = 0.0;           // per-coordinate mean squared error on held-out clips
  double baseline_mse = 0.0;  // constant predictor at the training-set mean
};

ProbeEvaluation evaluate_probe(const FrozenBackbone& vision, const AffectProbe& probe,
                               const std::vector<ProbeSample>& train, const std::vector<ProbeSample>& heldout,
                               int instruction_id);

// Reloads a trained music backbone / control branch from a run's weight files.
MusicBackbone load_backbone(const RunConfig& config, const std::filesystem::path& path);
ControlBranch load_control_branch(const RunConfig& config, const std::filesystem::path& path);
AffectProbe load_probe(const RunConfig& config, const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

// Evaluation arcs never seen in training (scene ids outside the corpus range).
struct HeldoutArc {
  AffectTrajectory trajectory;
  PseudoVideo video;
  SemanticAnchor anchor;
};

HeldoutArc heldout_arc(const RunConfig& config, const SyntheticWorld& world, int index, int duration_s);

struct ControlEvaluation {
  std::optional<double> valence;  // mean Pearson over arcs with a defined score
  std::optional<double> arousal;
  std::vector<std::optional<AlignmentScore>> per_arc;

  double mean() const;
};

// Generates each arc from its ground-truth trajectory (control branch optional) and
// scores affect alignment against that trajectory.
ControlEvaluation evaluate_control(const RunConfig& config, const SyntheticWorld& world, const MusicBackbone& music,
                                   const ControlBranch* branch, int arcs, int duration_s);

struct AblationRow {
  double ratio = 0.0;
  int shallow_layers = 0;
  ControlEvaluation control;
  double heldout_ce_conditioned = 0.0;
  double heldout_ce_unconditioned = 0.0;
  double final_train_loss = 0.0;
  std::vector<double> gates;
};

std::vector<AblationRow> run_ablation(const RunConfig& config, const MusicBackbone& music,
                                      const std::vector<ClipRecord>& train, const std::vector<ClipRecord>& heldout);
std::string ablation_table(const std::vector<AblationRow>& rows);
nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace arcscore
