#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "arcscore/autograd.hpp"
#include "arcscore/synthetic_world.hpp"

namespace arcscore {

inline constexpr int kAnchorFieldCount = 4;
inline constexpr int kAnchorVocabSize = 8;

enum class AnchorField { kGenre = 0, kInstrumentation = 1, kMood = 2, kPacing = 3 };

// Global style description: one vocabulary id per field.
struct SemanticAnchor {
  std::array<int, kAnchorFieldCount> ids{};

  int& operator[](AnchorField f) { return ids[static_cast<std::size_t>(f)]; }
  int operator[](AnchorField f) const { return ids[static_cast<std::size_t>(f)]; }
  void validate() const;
  friend bool operator==(const SemanticAnchor&, const SemanticAnchor&) = default;
};

std::string_view anchor_field_name(int field);
// String for a field id; mood is ordered darkest -> brightest, pacing slowest -> fastest.
std::string_view anchor_vocab_entry(int field, int id);
int anchor_vocab_lookup(int field, std::string_view entry);

// The versioned string <-> id tables (contents of data/vocab.json).
nlohmann::ordered_json anchor_vocabulary_json();

nlohmann::ordered_json anchor_to_json(const SemanticAnchor& anchor);
SemanticAnchor anchor_from_json(const nlohmann::json& j);

std::vector<int> keyframe_indices(int duration_s, int num_keyframes);

// Rule-based conceptualizer over uniformly spaced keyframes: perceived mean valence sets
// mood, mean arousal sets pacing, the arousal span sets instrumentation, the scene sets genre.
SemanticAnchor conceptualize(const PseudoVideo& video, const SyntheticWorld& world, int num_keyframes = 8);

// Cross-attention memory: one row per anchor field.
struct AnchorEmbedding {
  Matrix context;  // 4 x D_a
  friend bool operator==(const AnchorEmbedding& a, const AnchorEmbedding& b) { return a.context == b.context; }
};

class AnchorEncoder {
 public:
  AnchorEncoder(int model_dim, std::uint64_t seed);

  int model_dim() const { return model_dim_; }
  AnchorEmbedding encode(const SemanticAnchor& anchor) const;
  nn::Var encode(nn::Tape& tape, const SemanticAnchor& anchor, bool trainable) const;

  ParameterRefs parameters();
  ConstParameterRefs parameters() const;

 private:
  int model_dim_;
  std::array<Parameter, kAnchorFieldCount> tables_;
  Parameter field_offsets_;
};

inline AnchorEmbedding encode_anchor(const SemanticAnchor& anchor, const AnchorEncoder& weights) {
  return weights.encode(anchor);
}

}  // namespace arcscore
