#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace arcscore {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// A named trainable tensor. Values are kept exactly representable in f32 so the
// weight container round-trips bit-exactly.
struct Parameter {
  std::string name;
  Matrix value;
};

using ParameterRefs = std::vector<Parameter*>;
using ConstParameterRefs = std::vector<const Parameter*>;

inline ConstParameterRefs as_const(const ParameterRefs& refs) {
  return ConstParameterRefs(refs.begin(), refs.end());
}

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t state = kFnvOffsetBasis);

// FNV-1a over names, shapes and f32 payloads of every parameter, in order.
std::uint64_t parameter_checksum(const ConstParameterRefs& params);

void round_to_float(Matrix& m);

// N(0, stddev^2) entries, rounded to f32.
Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

// Deterministic child seed from a parent seed and a label (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

}  // namespace arcscore
