#include "arcscore/sonify.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

#include "arcscore/errors.hpp"

namespace arcscore {

double token_frequency(int id) { return 110.0 * std::pow(2.0, id / 12.0); }

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

std::string render_wav(const TokenGrid& tokens, int sample_rate) {
  if (sample_rate < 1) throw ConfigError("render_wav: sample rate must be >= 1");
  const CodecSpec& codec = tokens.codec();
  const int per_token = sample_rate / codec.tokens_per_second;
  const auto samples = static_cast<std::uint32_t>(per_token * tokens.steps());

  std::string out = "RIFF";
  put_u32(out, 36 + 2 * samples);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * samples);

  double phase = 0.0;
  for (int t = 0; t < tokens.steps(); ++t) {
    const int id = tokens.at(t, 0);
    const bool silent = id == codec.silence_token;
    const double step = 2.0 * std::numbers::pi * token_frequency(id) / sample_rate;
    for (int i = 0; i < per_token; ++i) {
      const double x = silent ? 0.0 : 0.3 * std::sin(phase);
      if (!silent) phase = std::fmod(phase + step, 2.0 * std::numbers::pi);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(x * 32767.0))));
    }
  }
  return out;
}

}  // namespace arcscore
