#pragma once

// Analytic-vs-finite-difference gradient checks, used by the test suite and
// the `gradcheck` command.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tsrcan/model.hpp"

namespace tsr {

inline double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

struct OpGradCheck {
  std::string op;
  std::size_t coordinates = 0;
  double max_rel_err = 0;
};

// Every differentiable op on small random f64 tensors: the gradient of
// sum(R * op(inputs)) against central differences (step 1e-6) over every input
// coordinate. Inputs are kept away from relu/maxpool/smooth-l1 kinks.
std::vector<OpGradCheck> check_op_gradients(std::uint64_t seed);

struct CoordinateCheck {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;  // f32 backward
  double numeric = 0;   // f64 central difference
  double rel_err = 0;
};

struct ModelGradCheck {
  std::vector<CoordinateCheck> coords;
  double max_rel_err = 0;
};

// Loss gradient of a freshly built model (train-mode batch norm) on a random
// input/target pair. Coordinates are drawn by picking a parameter tensor
// uniformly, then an element uniformly. The f32 analytic gradient is compared
// with a central difference through a double-precision copy of the model.
// Relative errors use max(|a|, |n|, floor) with floor = 1e-3 * max |a| over
// the whole gradient, so that coordinates with near-zero gradient are judged
// against the gradient scale rather than against their own magnitude.
ModelGradCheck check_model_gradients(const ModelConfig& cfg, std::uint64_t seed, std::size_t height,
                                     std::size_t width, std::size_t coordinates,
                                     double step = 1e-5);

}  // namespace tsr
