#include "arcscore/evalsuite.hpp"

#include <cmath>
#include <complex>
#include <numeric>

#include <fmt/format.h>

#include "arcscore/corpus.hpp"
#include "arcscore/errors.hpp"

namespace arcscore {

RowVector window_features(const TokenGrid& tokens, int first_step, int count) {
  if (count < 1 || first_step < 0 || first_step + count > tokens.steps()) throw ShapeError("window_features: range");
  const CodecSpec& codec = tokens.codec();
  const OracleWindowStats stats = window_stats(tokens, first_step, count);
  std::vector<int> hist(static_cast<std::size_t>(codec.vocab_size), 0);
  int silent = 0;
  for (int t = first_step; t < first_step + count; ++t) {
    const int id = tokens.at(t, 0);
    ++hist[static_cast<std::size_t>(id)];
    silent += id == codec.silence_token;
  }
  double entropy = 0.0;
  for (int h : hist) {
    if (h > 0) {
      const double p = static_cast<double>(h) / count;
      entropy -= p * std::log(p);
    }
  }
  RowVector f(4);
  f(0) = stats.transitions > 0 ? static_cast<double>(stats.switches) / stats.transitions : 0.0;
  f(1) = stats.voiced_steps > 0 ? static_cast<double>(stats.major_steps) / stats.voiced_steps : 0.0;
  f(2) = entropy / std::log(static_cast<double>(codec.vocab_size));
  f(3) = static_cast<double>(silent) / count;
  return f;
}

std::vector<FeatureEmbedding> embed_tokens(const TokenGrid& tokens, const EmbeddingConfig& config) {
  if (config.window_s < 1 || config.windows < 1) throw ConfigError("embedding: window sizes must be >= 1");
  const int span = config.window_s * tokens.codec().tokens_per_second;
  const int chunk = span * config.windows;
  std::vector<FeatureEmbedding> out;
  for (int start = 0; start + chunk <= tokens.steps(); start += chunk) {
    FeatureEmbedding e(config.dimension());
    for (int w = 0; w < config.windows; ++w) e.segment(4 * w, 4) = window_features(tokens, start + w * span, span);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<FeatureEmbedding> embed_corpus(const std::vector<TokenGrid>& corpus, const EmbeddingConfig& config) {
  std::vector<FeatureEmbedding> out;
  for (const TokenGrid& g : corpus) {
    std::vector<FeatureEmbedding> part = embed_tokens(g, config);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

double frechet_distance(const RowVector& mu1, const Matrix& sigma1, const RowVector& mu2, const Matrix& sigma2) {
  const Eigen::Index n = mu1.size();
  if (mu2.size() != n || sigma1.rows() != n || sigma1.cols() != n || sigma2.rows() != n || sigma2.cols() != n) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const Eigen::MatrixXd product = Eigen::MatrixXd(sigma1) * Eigen::MatrixXd(sigma2);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(product, false);
  if (solver.info() != Eigen::Success) throw NumericalError("frechet_distance: eigensolver did not converge");
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = solver.eigenvalues()(i).real();
    if (lambda < -1e-8) throw NumericalError("frechet_distance: covariance product has a negative eigenvalue");
    trace_sqrt += std::sqrt(std::max(lambda, 0.0));
  }
  return (mu1 - mu2).squaredNorm() + sigma1.trace() + sigma2.trace() - 2.0 * trace_sqrt;
}

namespace {

void fit_gaussian(const std::vector<FeatureEmbedding>& set, RowVector& mu, Matrix& sigma) {
  const auto n = static_cast<Eigen::Index>(set.size());
  const Eigen::Index dim = set.front().size();
  Matrix x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (set[static_cast<std::size_t>(i)].size() != dim) throw ShapeError("frechet_distance: ragged embeddings");
    x.row(i) = set[static_cast<std::size_t>(i)];
  }
  mu = x.colwise().mean();
  const Matrix centered = x.rowwise() - mu;
  sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
}

}  // namespace

double frechet_distance(const std::vector<FeatureEmbedding>& a, const std::vector<FeatureEmbedding>& b) {
  if (a.empty() || b.empty()) throw DataError("frechet_distance: empty embedding set");
  const auto dim = static_cast<std::size_t>(a.front().size());
  if (a.size() <= dim || b.size() <= dim) {
    throw DataError(fmt::format("frechet_distance: need more than {} samples per set (have {} and {})", dim, a.size(),
                                b.size()));
  }
  RowVector mu1, mu2;
  Matrix s1, s2;
  fit_gaussian(a, mu1, s1);
  fit_gaussian(b, mu2, s2);
  return frechet_distance(mu1, s1, mu2, s2);
}

double symmetric_kl(const std::vector<double>& counts_p, const std::vector<double>& counts_q, double alpha) {
  if (counts_p.size() != counts_q.size() || counts_p.empty()) throw ShapeError("symmetric_kl: alphabet mismatch");
  if (alpha < 0.0) throw ConfigError("symmetric_kl: alpha must be >= 0");
  const double n = static_cast<double>(counts_p.size());
  const double tp = std::accumulate(counts_p.begin(), counts_p.end(), 0.0) + alpha * n;
  const double tq = std::accumulate(counts_q.begin(), counts_q.end(), 0.0) + alpha * n;
  if (!(tp > 0.0) || !(tq > 0.0)) throw DataError("symmetric_kl: empty distribution");
  double kl_pq = 0.0;
  double kl_qp = 0.0;
  for (std::size_t i = 0; i < counts_p.size(); ++i) {
    const double p = (counts_p[i] + alpha) / tp;
    const double q = (counts_q[i] + alpha) / tq;
    if (p > 0.0) kl_pq += p * std::log(p / q);
    if (q > 0.0) kl_qp += q * std::log(q / p);
  }
  return 0.5 * kl_pq + 0.5 * kl_qp;
}

std::vector<double> unigram_counts(const std::vector<TokenGrid>& corpus) {
  if (corpus.empty()) throw DataError("unigram_counts: empty corpus");
  std::vector<double> counts(static_cast<std::size_t>(corpus.front().codec().vocab_size), 0.0);
  for (const TokenGrid& g : corpus) {
    if (g.codec().vocab_size != corpus.front().codec().vocab_size) throw ShapeError("unigram_counts: mixed codecs");
    for (int t = 0; t < g.steps(); ++t) counts[static_cast<std::size_t>(g.at(t, 0))] += 1.0;
  }
  return counts;
}

double kld_score(const std::vector<TokenGrid>& a, const std::vector<TokenGrid>& b) {
  return symmetric_kl(unigram_counts(a), unigram_counts(b), 1.0);
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("pearson: need two equally long series");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx < 1e-12 || syy < 1e-12) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

AlignmentScore affect_alignment(const TokenGrid& generated, const AffectTrajectory& target, int window_s) {
  const int tps = generated.codec().tokens_per_second;
  if (generated.steps() != target.duration_s() * tps) throw ShapeError("affect_alignment: token/trajectory length");
  if (silence_ratio(generated) >= 1.0) throw DataError("affect_alignment: generation is all silence");
  const std::vector<std::optional<AffectPoint>> decoded = oracle_decode(generated, window_s);
  std::vector<double> gv, ga, tv, ta;
  for (std::size_t w = 0; w < decoded.size(); ++w) {
    if (!decoded[w]) continue;
    const int first = static_cast<int>(w) * window_s;
    const AffectTrajectory part = target.slice(first, std::min(window_s, target.duration_s() - first));
    double v = 0.0, a = 0.0;
    for (const AffectPoint& p : part.points) {
      v += p.valence;
      a += p.arousal;
    }
    gv.push_back(decoded[w]->valence);
    ga.push_back(decoded[w]->arousal);
    tv.push_back(v / part.duration_s());
    ta.push_back(a / part.duration_s());
  }
  if (gv.size() < 3) throw DataError("affect_alignment: fewer than 3 decodable windows");
  return {pearson(gv, tv), pearson(ga, ta), static_cast<int>(gv.size())};
}

MetricReport evaluate(const std::vector<EvalClip>& generated, const std::vector<TokenGrid>& reference,
                      const EmbeddingConfig& config) {
  if (generated.empty() || reference.empty()) throw DataError("evaluate: empty corpus");
  MetricReport report;
  std::vector<TokenGrid> gen_tokens;
  for (const EvalClip& c : generated) gen_tokens.push_back(c.tokens);
  report.generated_clips = static_cast<int>(generated.size());
  report.reference_clips = static_cast<int>(reference.size());
  report.kld = kld_score(gen_tokens, reference);

  const std::vector<FeatureEmbedding> ea = embed_corpus(gen_tokens, config);
  const std::vector<FeatureEmbedding> eb = embed_corpus(reference, config);
  report.embeddings_generated = static_cast<int>(ea.size());
  report.embeddings_reference = static_cast<int>(eb.size());
  if (ea.size() > static_cast<std::size_t>(config.dimension()) &&
      eb.size() > static_cast<std::size_t>(config.dimension())) {
    report.fd = frechet_distance(ea, eb);
  } else {
    report.fd_note = fmt::format("insufficient samples: FD needs more than {} embeddings per corpus",
                                 config.dimension());
  }

  double sum_v = 0.0, sum_a = 0.0;
  int n_v = 0, n_a = 0;
  for (const EvalClip& c : generated) {
    ClipMetrics m{c.name, std::nullopt, ""};
    if (!c.target) {
      m.alignment_note = "no target trajectory";
    } else {
      try {
        m.alignment = affect_alignment(c.tokens, *c.target, config.window_s);
        if (m.alignment->valence) {
          sum_v += *m.alignment->valence;
          ++n_v;
        }
        if (m.alignment->arousal) {
          sum_a += *m.alignment->arousal;
          ++n_a;
        }
        if (!m.alignment->valence || !m.alignment->arousal) m.alignment_note = "zero variance on an axis";
      } catch (const std::exception& e) {
        m.alignment_note = e.what();
      }
    }
    report.clips.push_back(std::move(m));
  }
  if (n_v > 0) report.alignment_valence = sum_v / n_v;
  if (n_a > 0) report.alignment_arousal = sum_a / n_a;
  return report;
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& x) {
  return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
}

std::string csv_number(const std::optional<double>& x) { return x ? fmt::format("{:.17g}", *x) : ""; }

}  // namespace

nlohmann::ordered_json report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["fd"] = optional_number(report.fd);
  if (!report.fd_note.empty()) j["fd_note"] = report.fd_note;
  j["kld"] = report.kld;
  j["affect_alignment"] = {{"valence", optional_number(report.alignment_valence)},
                           {"arousal", optional_number(report.alignment_arousal)}};
  j["generated_clips"] = report.generated_clips;
  j["reference_clips"] = report.reference_clips;
  j["embeddings"] = {{"generated", report.embeddings_generated}, {"reference", report.embeddings_reference}};
  nlohmann::ordered_json clips = nlohmann::ordered_json::array();
  for (const ClipMetrics& c : report.clips) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["alignment_valence"] = c.alignment ? optional_number(c.alignment->valence) : nullptr;
    e["alignment_arousal"] = c.alignment ? optional_number(c.alignment->arousal) : nullptr;
    e["alignment_windows"] = c.alignment ? c.alignment->windows : 0;
    if (!c.alignment_note.empty()) e["note"] = c.alignment_note;
    clips.push_back(std::move(e));
  }
  j["clips"] = std::move(clips);
  return j;
}

std::string report_to_csv(const MetricReport& report) {
  std::string out = "scope,name,fd,kld,alignment_valence,alignment_arousal\n";
  out += fmt::format("corpus,all,{},{:.17g},{},{}\n", csv_number(report.fd), report.kld,
                     csv_number(report.alignment_valence), csv_number(report.alignment_arousal));
  for (const ClipMetrics& c : report.clips) {
    out += fmt::format("clip,{},,,{},{}\n", c.name, c.alignment ? csv_number(c.alignment->valence) : "",
                       c.alignment ? csv_number(c.alignment->arousal) : "");
  }
  return out;
}

}  // namespace arcscore
