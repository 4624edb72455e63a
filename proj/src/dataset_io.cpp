#include "arcscore/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "arcscore/errors.hpp"

namespace arcscore {

namespace fs = std::filesystem;

std::string encode_tokens_bin(const TokenGrid& tokens) {
  const CodecSpec& codec = tokens.codec();
  std::string out = "TOKENS v1 " + std::to_string(tokens.steps()) + " " + std::to_string(codec.num_codebooks) + " " +
                    std::to_string(codec.vocab_size) + "\n";
  out.reserve(out.size() + tokens.ids().size() * 2);
  for (int id : tokens.ids()) {
    out.push_back(static_cast<char>(id & 0xff));
    out.push_back(static_cast<char>((id >> 8) & 0xff));
  }
  return out;
}

TokenGrid decode_tokens_bin(std::string_view bytes, const CodecSpec& base) {
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw DecodeError("tokens.bin: missing header line");
  std::istringstream header{std::string(bytes.substr(0, eol))};
  std::string magic, version;
  long steps = -1, codebooks = -1, vocab = -1;
  if (!(header >> magic >> version >> steps >> codebooks >> vocab) || magic != "TOKENS" || version != "v1") {
    throw DecodeError("tokens.bin: bad header");
  }
  if (steps < 0 || codebooks < 1 || vocab < 1 || vocab > 65536) throw DecodeError("tokens.bin: bad dimensions");
  const std::size_t expected = static_cast<std::size_t>(steps * codebooks) * 2;
  if (bytes.size() - eol - 1 != expected) throw DecodeError("tokens.bin: payload size mismatch");
  CodecSpec codec = base;
  codec.num_codebooks = static_cast<int>(codebooks);
  codec.vocab_size = static_cast<int>(vocab);
  TokenGrid grid(codec, static_cast<int>(steps));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + eol + 1);
  for (long t = 0; t < steps; ++t) {
    for (long k = 0; k < codebooks; ++k) {
      const int id = p[0] | (p[1] << 8);
      p += 2;
      if (id >= vocab) throw DecodeError("tokens.bin: id outside vocabulary");
      grid.set(static_cast<int>(t), static_cast<int>(k), id);
    }
  }
  return grid;
}

std::string encode_va_csv(const AffectTrajectory& trajectory) {
  std::string out = "t_s,valence,arousal\n";
  char line[96];
  for (std::size_t i = 0; i < trajectory.points.size(); ++i) {
    const AffectPoint& p = trajectory.points[i];
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", i, p.valence, p.arousal);
    out += line;
  }
  return out;
}

AffectTrajectory decode_va_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "t_s,valence,arousal") throw DecodeError("va.csv: bad header");
  AffectTrajectory out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t t = 0;
    double v = 0.0, a = 0.0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &t, &v, &a) != 3 || t != out.points.size()) {
      throw DecodeError("va.csv: bad row '" + line + "'");
    }
    out.points.push_back({v, a});
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

nlohmann::json read_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path), nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

void write_tokens_bin(const fs::path& path, const TokenGrid& tokens) { write_text_file(path, encode_tokens_bin(tokens)); }

TokenGrid read_tokens_bin(const fs::path& path, const CodecSpec& base) {
  return decode_tokens_bin(read_text_file(path), base);
}

void write_va_csv(const fs::path& path, const AffectTrajectory& trajectory) {
  write_text_file(path, encode_va_csv(trajectory));
}

AffectTrajectory read_va_csv(const fs::path& path) { return decode_va_csv(read_text_file(path)); }

std::string clip_dir_name(const ClipRecord& clip) {
  char name[64];
  std::snprintf(name, sizeof name, "clip_%05d_%05d", clip.source_id, clip.clip_start_s);
  return name;
}

void write_clip(const fs::path& dir, const ClipRecord& clip) {
  fs::create_directories(dir);
  write_va_csv(dir / "va.csv", clip.va_curve);
  write_tokens_bin(dir / "tokens.bin", clip.tokens);
  write_json_file(dir / "anchor.json", anchor_to_json(clip.anchor));
  nlohmann::ordered_json meta;
  meta["source_id"] = clip.source_id;
  meta["clip_start_s"] = clip.clip_start_s;
  meta["seed"] = clip.seed;
  write_json_file(dir / "meta.json", meta);
}

ClipRecord read_clip(const fs::path& dir, const CodecSpec& base) {
  ClipRecord clip;
  clip.va_curve = read_va_csv(dir / "va.csv");
  clip.tokens = read_tokens_bin(dir / "tokens.bin", base);
  clip.anchor = anchor_from_json(read_json_file(dir / "anchor.json"));
  const nlohmann::json meta = read_json_file(dir / "meta.json");
  try {
    clip.source_id = meta.at("source_id").get<int>();
    clip.clip_start_s = meta.at("clip_start_s").get<int>();
    clip.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError((dir / "meta.json").string() + ": " + e.what());
  }
  if (clip.va_curve.duration_s() * clip.tokens.codec().tokens_per_second != clip.tokens.steps()) {
    throw DecodeError(dir.string() + ": va.csv duration does not match tokens.bin length");
  }
  return clip;
}

std::vector<fs::path> list_clip_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  if (fs::exists(root / "tokens.bin")) return {root};
  std::vector<fs::path> dirs;
  for (const fs::directory_entry& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "tokens.bin")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<ClipRecord> read_dataset(const fs::path& root, const CodecSpec& base) {
  std::vector<ClipRecord> clips;
  for (const fs::path& dir : list_clip_dirs(root)) clips.push_back(read_clip(dir, base));
  return clips;
}

}  // namespace arcscore
