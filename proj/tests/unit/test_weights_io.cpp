#include <doctest.h>

#include <random>

#include "arcscore/errors.hpp"
#include "arcscore/weights_io.hpp"
#include "test_support.hpp"

using namespace arcscore;

namespace {

std::vector<Parameter> sample_params() {
  std::mt19937_64 rng(42);
  return {{"layer.weight", random_normal(3, 4, 1.0, rng)},
          {"layer.bias", random_normal(1, 4, 1.0, rng)},
          {"scalar", Matrix::Constant(1, 1, 0.25)}};
}

ParameterRefs refs(std::vector<Parameter>& ps) {
  ParameterRefs out;
  for (Parameter& p : ps) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("weights round-trip bit-exactly") {
  auto params = sample_params();
  const std::string bytes = encode_weights(arcscore::as_const(refs(params)));
  CHECK(bytes.rfind("ARCSCORE-WEIGHTS v1\ntensors 3\n", 0) == 0);
  const auto tensors = decode_weights(bytes);
  REQUIRE(tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tensors[i].name == params[i].name);
    CHECK(tensors[i].value == params[i].value);
  }
  const std::uint64_t before = parameter_checksum(arcscore::as_const(refs(params)));
  auto other = sample_params();
  for (Parameter& p : other) p.value.setZero();
  assign_weights(tensors, refs(other));
  CHECK(parameter_checksum(arcscore::as_const(refs(other))) == before);
}

TEST_CASE("weights files on disk") {
  arcscore::testing::TempDir dir("weights");
  auto params = sample_params();
  save_weights(dir / "a.weights", refs(params));
  auto loaded = sample_params();
  for (Parameter& p : loaded) p.value.setConstant(3.0);
  load_weights(dir / "a.weights", refs(loaded));
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(loaded[i].value == params[i].value);
  CHECK_THROWS_AS(load_weights(dir / "missing.weights", refs(loaded)), DataError);
}

TEST_CASE("corrupted or mismatched weights are rejected") {
  auto params = sample_params();
  const std::string bytes = encode_weights(arcscore::as_const(refs(params)));
  SUBCASE("payload bit flip") {
    std::string bad = bytes;
    bad[bad.size() - 12] ^= 0x01;
    CHECK_THROWS_AS(decode_weights(bad), DecodeError);
  }
  SUBCASE("truncation") { CHECK_THROWS_AS(decode_weights(bytes.substr(0, bytes.size() - 3)), DecodeError); }
  SUBCASE("bad magic") { CHECK_THROWS_AS(decode_weights("NOPE\n" + bytes), DecodeError); }
  SUBCASE("shape mismatch") {
    std::vector<Parameter> other{{"layer.weight", Matrix::Zero(4, 3)},
                                 {"layer.bias", Matrix::Zero(1, 4)},
                                 {"scalar", Matrix::Zero(1, 1)}};
    CHECK_THROWS_AS(assign_weights(decode_weights(bytes), refs(other)), DecodeError);
  }
  SUBCASE("missing tensor") {
    std::vector<Parameter> other{{"not.there", Matrix::Zero(1, 1)}};
    CHECK_THROWS_AS(assign_weights(decode_weights(bytes), refs(other)), DecodeError);
  }
}

TEST_CASE("checksum depends on names, shapes and values") {
  auto a = sample_params();
  auto b = sample_params();
  CHECK(parameter_checksum(arcscore::as_const(refs(a))) == parameter_checksum(arcscore::as_const(refs(b))));
  b[0].name = "layer.weightx";
  CHECK(parameter_checksum(arcscore::as_const(refs(a))) != parameter_checksum(arcscore::as_const(refs(b))));
  auto c = sample_params();
  c[2].value(0, 0) = 0.5;
  CHECK(parameter_checksum(arcscore::as_const(refs(a))) != parameter_checksum(arcscore::as_const(refs(c))));
}
