#pragma once

// On-disk dataset layout, one directory per clip:
//   va.csv       t_s,valence,arousal at 1 Hz
//   tokens.bin   "TOKENS v1 T K N\n" then T*K little-endian u16 ids, row-major
//   anchor.json  genre / instrumentation / mood / pacing strings
//   meta.json    source_id, clip_start_s, seed

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "arcscore/corpus.hpp"

namespace arcscore {

std::string encode_tokens_bin(const TokenGrid& tokens);
// K and N come from the header; tokens_per_second and silence_token from base.
TokenGrid decode_tokens_bin(std::string_view bytes, const CodecSpec& base);

std::string encode_va_csv(const AffectTrajectory& trajectory);
AffectTrajectory decode_va_csv(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

void write_tokens_bin(const std::filesystem::path& path, const TokenGrid& tokens);
TokenGrid read_tokens_bin(const std::filesystem::path& path, const CodecSpec& base);
void write_va_csv(const std::filesystem::path& path, const AffectTrajectory& trajectory);
AffectTrajectory read_va_csv(const std::filesystem::path& path);

std::string clip_dir_name(const ClipRecord& clip);
void write_clip(const std::filesystem::path& dir, const ClipRecord& clip);
ClipRecord read_clip(const std::filesystem::path& dir, const CodecSpec& base);

// Subdirectories of root that contain tokens.bin, sorted by name. A root that itself
// holds tokens.bin is returned as its own single entry.
std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& root);
std::vector<ClipRecord> read_dataset(const std::filesystem::path& root, const CodecSpec& base);

}  // namespace arcscore
