#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "anchorseg/evalbench/config.hpp"
#include "anchorseg/evalbench/metrics.hpp"
#include "anchorseg/evalbench/scene.hpp"

namespace anchorseg::evalbench {

struct AblationSpec {
  std::string id;
  std::size_t n_bank = 8;
  AblationToggles toggles;
};

/// nbank4, nbank8, nbank16, nbank32 (all toggles on), then exp1..exp5.
std::vector<AblationSpec> ablation_grid();
RunConfig apply_ablation(const RunConfig& base, const AblationSpec& spec, std::uint64_t seed);

inline constexpr std::size_t kAblationSeeds = 3;

struct AblateOptions {
  std::vector<std::string> only;  // restrict to these ablation ids; empty runs all
  std::size_t threads = 0;         // 0 reads ANCHORSEG_THREADS (default 1)
  std::function<void(const std::string&)> log;
};

/// Max parallel runs from ANCHORSEG_THREADS; unset means 1.
std::size_t threads_from_env();

/// One row per (ablation, seed) in grid order, seeds base, base+1, base+2.
/// Rows depend only on (config, data), never on thread count.
std::vector<MetricsRow> ablate(const RunConfig& base, const Dataset& data, const AblateOptions& options = {});

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

}  // namespace anchorseg::evalbench
