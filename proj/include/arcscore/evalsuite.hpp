#pragma once

// Objective metrics over token corpora: a Frechet distance between Gaussians fit to
// token-statistic embeddings, a symmetrized unigram KL divergence, and affect
// alignment measured through the grammar's oracle decoder.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arcscore/synthetic_world.hpp"

namespace arcscore {

struct EmbeddingConfig {
  int window_s = 5;
  int windows = 6;  // per embedding; a clip yields floor(duration / (window_s * windows)) embeddings

  int dimension() const { return 4 * windows; }
};

// (codebook-0 switch rate, major-pool fraction, normalized codebook-0 entropy, silence ratio).
RowVector window_features(const TokenGrid& tokens, int first_step, int count);

using FeatureEmbedding = RowVector;

std::vector<FeatureEmbedding> embed_tokens(const TokenGrid& tokens, const EmbeddingConfig& config = {});
std::vector<FeatureEmbedding> embed_corpus(const std::vector<TokenGrid>& corpus, const EmbeddingConfig& config = {});

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}) for explicit moments.
double frechet_distance(const RowVector& mu1, const Matrix& sigma1, const RowVector& mu2, const Matrix& sigma2);
// Fits sample mean and (unbiased) covariance to each set; each set needs more samples than dimensions.
double frechet_distance(const std::vector<FeatureEmbedding>& a, const std::vector<FeatureEmbedding>& b);

// 0.5 KL(P||Q) + 0.5 KL(Q||P) of add-alpha smoothed distributions built from counts.
double symmetric_kl(const std::vector<double>& counts_p, const std::vector<double>& counts_q, double alpha = 1.0);
// Codebook-0 unigram counts over N symbols.
std::vector<double> unigram_counts(const std::vector<TokenGrid>& corpus);
double kld_score(const std::vector<TokenGrid>& a, const std::vector<TokenGrid>& b);

// Pearson correlation; nullopt when either side has (near) zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct AlignmentScore {
  std::optional<double> valence;
  std::optional<double> arousal;
  int windows = 0;  // windows with a defined oracle estimate
};

// Correlates oracle-decoded VA of `generated` with the window means of `target`.
AlignmentScore affect_alignment(const TokenGrid& generated, const AffectTrajectory& target, int window_s = 5);

struct ClipMetrics {
  std::string name;
  std::optional<AlignmentScore> alignment;
  std::string alignment_note;
};

struct MetricReport {
  std::optional<double> fd;
  std::string fd_note;
  double kld = 0.0;
  std::optional<double> alignment_valence;  // mean over clips with a defined score
  std::optional<double> alignment_arousal;
  int generated_clips = 0;
  int reference_clips = 0;
  int embeddings_generated = 0;
  int embeddings_reference = 0;
  std::vector<ClipMetrics> clips;
};

struct EvalClip {
  std::string name;
  TokenGrid tokens;
  std::optional<AffectTrajectory> target;
};

MetricReport evaluate(const std::vector<EvalClip>& generated, const std::vector<TokenGrid>& reference,
                      const EmbeddingConfig& config = {});

nlohmann::ordered_json report_to_json(const MetricReport& report);
std::string report_to_csv(const MetricReport& report);

}  // namespace arcscore
