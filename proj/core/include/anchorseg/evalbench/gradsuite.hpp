#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anchorseg/evalbench/config.hpp"
#include "anchorseg/gradcheck.hpp"

namespace anchorseg::evalbench {

struct GradCase {
  std::string module;
  std::string name;
  GradCheckResult result;
  /// Built with a deliberately wrong backward rule; expected to fail.
  bool negative_control = false;
};

/// tensor-engine, imaging, querybank, grounding, maskdecoder, objectives, full
std::vector<std::string> grad_modules();

/// Small dimensions for the full-objective check (64-bit).
RunConfig grad_check_config();

/// Runs every case of one module, or of all modules when `module` is empty.
/// Throws ConfigError for an unknown module name.
std::vector<GradCase> run_grad_suite(const std::string& module = "", std::uint64_t seed = 2024);

}  // namespace anchorseg::evalbench
