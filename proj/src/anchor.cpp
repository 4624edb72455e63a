#include "arcscore/anchor.hpp"

#include <algorithm>
#include <cmath>

#include "arcscore/errors.hpp"

namespace arcscore {

namespace {

constexpr std::array<std::string_view, kAnchorFieldCount> kFieldNames = {"genre", "instrumentation", "mood",
                                                                          "pacing"};

constexpr std::array<std::array<std::string_view, kAnchorVocabSize>, kAnchorFieldCount> kVocabulary = {{
    {"ambient", "orchestral", "electronic", "jazz", "folk", "rock", "minimalist", "trailer"},
    {"solo piano", "string ensemble", "synth pads", "acoustic guitar", "brass section", "woodwinds",
     "percussion ensemble", "full orchestra"},
    {"bleak", "somber", "melancholic", "pensive", "serene", "warm", "hopeful", "euphoric"},
    {"glacial", "very slow", "slow", "relaxed", "moderate", "lively", "fast", "frantic"},
}};

void check_field(int field) {
  if (field < 0 || field >= kAnchorFieldCount) throw ConfigError("anchor field index out of range");
}

int bucket(double x) { return std::clamp(static_cast<int>(std::floor((x + 1.0) / 2.0 * kAnchorVocabSize)), 0, kAnchorVocabSize - 1); }

}  // namespace

void SemanticAnchor::validate() const {
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    const int id = ids[static_cast<std::size_t>(f)];
    if (id < 0 || id >= kAnchorVocabSize) {
      throw ConfigError("anchor field '" + std::string(kFieldNames[static_cast<std::size_t>(f)]) +
                        "' id " + std::to_string(id) + " is out of vocabulary");
    }
  }
}

std::string_view anchor_field_name(int field) {
  check_field(field);
  return kFieldNames[static_cast<std::size_t>(field)];
}

std::string_view anchor_vocab_entry(int field, int id) {
  check_field(field);
  if (id < 0 || id >= kAnchorVocabSize) throw ConfigError("anchor id out of vocabulary");
  return kVocabulary[static_cast<std::size_t>(field)][static_cast<std::size_t>(id)];
}

int anchor_vocab_lookup(int field, std::string_view entry) {
  check_field(field);
  const auto& row = kVocabulary[static_cast<std::size_t>(field)];
  auto it = std::find(row.begin(), row.end(), entry);
  if (it == row.end()) {
    throw ConfigError("'" + std::string(entry) + "' is not a " + std::string(kFieldNames[static_cast<std::size_t>(field)]));
  }
  return static_cast<int>(it - row.begin());
}

nlohmann::ordered_json anchor_vocabulary_json() {
  nlohmann::ordered_json j;
  j["version"] = 1;
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    auto& arr = j[std::string(kFieldNames[static_cast<std::size_t>(f)])] = nlohmann::ordered_json::array();
    for (std::string_view s : kVocabulary[static_cast<std::size_t>(f)]) arr.push_back(std::string(s));
  }
  return j;
}

nlohmann::ordered_json anchor_to_json(const SemanticAnchor& anchor) {
  anchor.validate();
  nlohmann::ordered_json j;
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    j[std::string(kFieldNames[static_cast<std::size_t>(f)])] =
        std::string(anchor_vocab_entry(f, anchor.ids[static_cast<std::size_t>(f)]));
  }
  return j;
}

SemanticAnchor anchor_from_json(const nlohmann::json& j) {
  SemanticAnchor anchor;
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    const std::string key(kFieldNames[static_cast<std::size_t>(f)]);
    if (!j.contains(key) || !j[key].is_string()) throw DecodeError("anchor.json: missing field " + key);
    anchor.ids[static_cast<std::size_t>(f)] = anchor_vocab_lookup(f, j[key].get<std::string>());
  }
  return anchor;
}

std::vector<int> keyframe_indices(int duration_s, int num_keyframes) {
  if (duration_s < 1) throw ShapeError("keyframes: empty video");
  const int n = std::max(1, std::min(num_keyframes, duration_s));
  std::vector<int> idx;
  for (int i = 0; i < n; ++i) {
    idx.push_back(n == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(i) * (duration_s - 1) / (n - 1))));
  }
  return idx;
}

SemanticAnchor conceptualize(const PseudoVideo& video, const SyntheticWorld& world, int num_keyframes) {
  double sum_v = 0.0, sum_a = 0.0;
  double min_a = 1e300, max_a = -1e300;
  const std::vector<int> keys = keyframe_indices(video.duration_s(), num_keyframes);
  for (int i : keys) {
    const AffectPoint p = world.estimate_affect(video.frames[static_cast<std::size_t>(i)], video.scene_id);
    const double v = std::clamp(p.valence, -1.0, 1.0);
    const double a = std::clamp(p.arousal, -1.0, 1.0);
    sum_v += v;
    sum_a += a;
    min_a = std::min(min_a, a);
    max_a = std::max(max_a, a);
  }
  const double n = static_cast<double>(keys.size());
  SemanticAnchor anchor;
  anchor[AnchorField::kGenre] = ((video.scene_id % kAnchorVocabSize) + kAnchorVocabSize) % kAnchorVocabSize;
  anchor[AnchorField::kInstrumentation] =
      std::clamp(static_cast<int>(std::floor((max_a - min_a) / 2.0 * kAnchorVocabSize)), 0, kAnchorVocabSize - 1);
  anchor[AnchorField::kMood] = bucket(sum_v / n);
  anchor[AnchorField::kPacing] = bucket(sum_a / n);
  return anchor;
}

AnchorEncoder::AnchorEncoder(int model_dim, std::uint64_t seed) : model_dim_(model_dim) {
  if (model_dim < 1) throw ConfigError("anchor encoder: model_dim must be >= 1");
  std::mt19937_64 rng(seed);
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    tables_[static_cast<std::size_t>(f)] = {"anchor." + std::string(kFieldNames[static_cast<std::size_t>(f)]),
                                            random_normal(kAnchorVocabSize, model_dim, 0.5, rng)};
  }
  field_offsets_ = {"anchor.field_offset", random_normal(kAnchorFieldCount, model_dim, 0.5, rng)};
}

AnchorEmbedding AnchorEncoder::encode(const SemanticAnchor& anchor) const {
  anchor.validate();
  AnchorEmbedding out{Matrix(kAnchorFieldCount, model_dim_)};
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    out.context.row(f) = tables_[static_cast<std::size_t>(f)].value.row(anchor.ids[static_cast<std::size_t>(f)]) +
                         field_offsets_.value.row(f);
  }
  return out;
}

nn::Var AnchorEncoder::encode(nn::Tape& tape, const SemanticAnchor& anchor, bool trainable) const {
  anchor.validate();
  if (!trainable) return tape.constant(encode(anchor).context);
  // Stack per-field lookups: gather from each table, then place into its row via a one-hot matmul.
  nn::Var out = tape.parameter(field_offsets_, true);
  for (int f = 0; f < kAnchorFieldCount; ++f) {
    const int id = anchor.ids[static_cast<std::size_t>(f)];
    nn::Var row = nn::gather_rows(tape, tape.parameter(tables_[static_cast<std::size_t>(f)], true), std::span(&id, 1));
    Matrix placement = Matrix::Zero(kAnchorFieldCount, 1);
    placement(f, 0) = 1.0;
    out = nn::add(tape, out, nn::matmul(tape, tape.constant(std::move(placement)), row));
  }
  return out;
}

ParameterRefs AnchorEncoder::parameters() {
  ParameterRefs refs;
  for (Parameter& p : tables_) refs.push_back(&p);
  refs.push_back(&field_offsets_);
  return refs;
}

ConstParameterRefs AnchorEncoder::parameters() const {
  ConstParameterRefs refs;
  for (const Parameter& p : tables_) refs.push_back(&p);
  refs.push_back(&field_offsets_);
  return refs;
}

}  // namespace arcscore
