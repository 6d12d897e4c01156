#pragma once

// Finite-difference checks of every layer type and of the full training
// objectives on tiny instances.

#include <cstdint>
#include <string>
#include <vector>

#include "srl/autograd.hpp"

namespace srl {

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  bool log_compress = false;
  /// Adds a component built on debug_wrong_grad, which must fail.
  bool inject_wrong_grad = false;
  ag::GradCheckOptions check;
};

struct GradSuiteEntry {
  std::string component;
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // scalar entries compared
  bool passed = true;
};

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace srl
