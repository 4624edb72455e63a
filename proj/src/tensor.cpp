#include "arcscore/tensor.hpp"

#include <cstring>

namespace arcscore {

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t state) {
  for (std::byte b : bytes) {
    state ^= static_cast<std::uint64_t>(b);
    state *= kFnvPrime;
  }
  return state;
}

namespace {

std::uint64_t mix_value(std::uint64_t state, std::uint64_t v) {
  std::byte buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
  return fnv1a(buf, state);
}

}  // namespace

std::uint64_t parameter_checksum(const ConstParameterRefs& params) {
  std::uint64_t state = kFnvOffsetBasis;
  for (const Parameter* p : params) {
    state = fnv1a(std::as_bytes(std::span(p->name.data(), p->name.size())), state);
    state = mix_value(state, static_cast<std::uint64_t>(p->value.rows()));
    state = mix_value(state, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const float f = static_cast<float>(p->value.data()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      state = mix_value(state, bits);
    }
  }
  return state;
}

void round_to_float(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  round_to_float(m);
  return m;
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  return derive_seed(parent, fnv1a(std::as_bytes(std::span(label.data(), label.size()))));
}

}  // namespace arcscore
