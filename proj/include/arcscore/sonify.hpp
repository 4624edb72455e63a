#pragma once

// Inspection-only audio: codebook-0 ids become sine tones, silence becomes silence.

#include <string>

#include "arcscore/synthetic_world.hpp"

namespace arcscore {

inline constexpr int kSonifySampleRate = 16000;

// Tone frequency for a non-silence token id: 110 Hz * 2^(id / 12).
double token_frequency(int id);

// 16-bit little-endian mono PCM WAV, one token per 1 / tokens_per_second seconds.
std::string render_wav(const TokenGrid& tokens, int sample_rate = kSonifySampleRate);

}  // namespace arcscore
