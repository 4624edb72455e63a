#pragma once

// Shared weight container.
//
//   ARCSCORE-WEIGHTS v1\n
//   tensors <count>\n
//   <name> f32 <rows> <cols>\n        (one line per tensor, payload order)
//   end\n
//   <payload: little-endian f32, row-major, tensors concatenated>
//   <8-byte little-endian FNV-1a 64 of the payload>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "arcscore/tensor.hpp"

namespace arcscore {

struct NamedTensor {
  std::string name;
  Matrix value;
};

std::string encode_weights(const ConstParameterRefs& params);
std::vector<NamedTensor> decode_weights(std::string_view bytes);

void save_weights(const std::filesystem::path& path, const ConstParameterRefs& params);
inline void save_weights(const std::filesystem::path& path, const ParameterRefs& params) {
  save_weights(path, as_const(params));
}
std::vector<NamedTensor> read_weights(const std::filesystem::path& path);

// Assigns tensors to parameters by name; every parameter must be present with a matching shape.
void assign_weights(const std::vector<NamedTensor>& tensors, const ParameterRefs& params);
void load_weights(const std::filesystem::path& path, const ParameterRefs& params);

}  // namespace arcscore
