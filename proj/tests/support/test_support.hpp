#pragma once

// Helpers shared by the unit and acceptance tests.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "arcscore/autograd.hpp"
#include "arcscore/tensor.hpp"

namespace arcscore::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("arcscore_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

using LossBuilder = std::function<nn::Var(nn::Tape&)>;

struct GradCheck {
  double worst_relative_error = 0.0;
  std::string worst_parameter;
  int checked_entries = 0;
};

// Central differences for every entry of every parameter against the tape gradient.
// The error per tensor is ||analytic - numeric|| / max(||analytic|| + ||numeric||, floor).
inline GradCheck check_gradients(const LossBuilder& build, const ParameterRefs& params, double eps = 1e-6,
                                 double floor = 1e-8) {
  GradCheck out;
  std::vector<Matrix> analytic;
  {
    nn::Tape tape;
    nn::Var loss = build(tape);
    tape.backward(loss);
    for (Parameter* p : params) {
      const Matrix* g = tape.gradient(*p);
      analytic.push_back(g ? *g : Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  auto eval = [&] {
    nn::Tape tape;
    nn::Var loss = build(tape);
    return tape.value(loss)(0, 0);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& value = params[i]->value;
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index j = 0; j < value.size(); ++j) {
      const double saved = value.data()[j];
      value.data()[j] = saved + eps;
      const double plus = eval();
      value.data()[j] = saved - eps;
      const double minus = eval();
      value.data()[j] = saved;
      numeric.data()[j] = (plus - minus) / (2.0 * eps);
      ++out.checked_entries;
    }
    const double denom = std::max(analytic[i].norm() + numeric.norm(), floor);
    const double err = (analytic[i] - numeric).norm() / denom;
    if (err > out.worst_relative_error) {
      out.worst_relative_error = err;
      out.worst_parameter = params[i]->name;
    }
  }
  return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace arcscore::testing
