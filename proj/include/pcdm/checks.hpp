#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcdm/hvp.hpp"

namespace pcdm {

struct CheckResult {
  std::string name;
  double value = 0.0;      // the measured error (or factor)
  double tolerance = 0.0;
  bool pass = false;
};

/// |volume_factor - 1| and max |A^T A - I| for Haar and Laplacian at 4x4 and
/// 8x8 with S in {1,2,3}; volume_factor > 1 for nearest-neighbor.
std::vector<CheckResult> volume_checks(double tol = 1e-9);

/// Round trip max-abs error and relative norm change over `seeds` random
/// inputs of the given shape, per hierarchy. Nearest-neighbor only gets the
/// round trip check.
std::vector<CheckResult> roundtrip_checks(const Shape& shape, std::size_t levels, std::size_t seeds, double tol = 1e-9);

/// Analytic vs central-difference gradients of cascaded_loss on a random
/// 4x4, S=2, T=4 model; value is the worst relative error.
CheckResult gradient_check(std::uint64_t seed, std::size_t probes_per_scale = 25, double tol = 1e-4);

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace pcdm
