#include "arcscore/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "arcscore/errors.hpp"

namespace arcscore {

namespace {

constexpr std::string_view kMagic = "ARCSCORE-WEIGHTS v1";

void append_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string_view next_line(std::string_view bytes, std::size_t& pos) {
  const std::size_t end = bytes.find('\n', pos);
  if (end == std::string_view::npos) throw DecodeError("weights: truncated header");
  std::string_view line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

}  // namespace

std::string encode_weights(const ConstParameterRefs& params) {
  std::string header;
  header += kMagic;
  header += "\ntensors " + std::to_string(params.size()) + "\n";
  std::string payload;
  for (const Parameter* p : params) {
    if (p->name.empty() || p->name.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError("weights: tensor names must be non-empty without whitespace: '" + p->name + "'");
    }
    header += p->name + " f32 " + std::to_string(p->value.rows()) + " " + std::to_string(p->value.cols()) + "\n";
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      append_le32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(p->value.data()[i])));
    }
  }
  header += "end\n";
  const std::uint64_t checksum = fnv1a(std::as_bytes(std::span(payload.data(), payload.size())));
  std::string out = header + payload;
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((checksum >> (8 * i)) & 0xff));
  return out;
}

std::vector<NamedTensor> decode_weights(std::string_view bytes) {
  std::size_t pos = 0;
  if (next_line(bytes, pos) != kMagic) throw DecodeError("weights: bad magic");
  std::istringstream count_line{std::string(next_line(bytes, pos))};
  std::string word;
  std::size_t count = 0;
  if (!(count_line >> word >> count) || word != "tensors") throw DecodeError("weights: bad tensor count line");

  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream line{std::string(next_line(bytes, pos))};
    Entry e;
    std::string dtype;
    if (!(line >> e.name >> dtype >> e.rows >> e.cols) || dtype != "f32" || e.rows < 0 || e.cols < 0) {
      throw DecodeError("weights: bad tensor entry");
    }
    entries.push_back(std::move(e));
  }
  if (next_line(bytes, pos) != "end") throw DecodeError("weights: missing end marker");

  std::size_t payload_size = 0;
  for (const Entry& e : entries) payload_size += static_cast<std::size_t>(e.rows * e.cols) * 4;
  if (bytes.size() != pos + payload_size + 8) throw DecodeError("weights: payload size mismatch");
  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  const std::uint64_t expected = fnv1a(std::as_bytes(std::span(bytes.data() + pos, payload_size)));
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(payload[payload_size + i]) << (8 * i);
  if (stored != expected) throw DecodeError("weights: checksum mismatch");

  std::vector<NamedTensor> out;
  std::size_t offset = 0;
  for (const Entry& e : entries) {
    NamedTensor t{e.name, Matrix(e.rows, e.cols)};
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      t.value.data()[i] = static_cast<double>(std::bit_cast<float>(read_le32(payload + offset)));
      offset += 4;
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_weights(const std::filesystem::path& path, const ConstParameterRefs& params) {
  const std::string bytes = encode_weights(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedTensor> read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing weight file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_weights(ss.str());
}

void assign_weights(const std::vector<NamedTensor>& tensors, const ParameterRefs& params) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw DecodeError("weights: missing tensor " + p->name);
    const Matrix& v = it->second->value;
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw DecodeError("weights: shape mismatch for " + p->name);
    }
    p->value = v;
  }
}

void load_weights(const std::filesystem::path& path, const ParameterRefs& params) {
  assign_weights(read_weights(path), params);
}

}  // namespace arcscore
