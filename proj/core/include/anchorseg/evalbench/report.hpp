#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "anchorseg/evalbench/metrics.hpp"
#include "anchorseg/evalbench/model.hpp"

namespace anchorseg::evalbench {

struct Spread {
  double median = 0.0, min = 0.0, max = 0.0;
};

struct AblationSummary {
  std::string ablation_id;
  std::size_t runs = 0;
  Spread giou, ciou, prec05;
  std::optional<Spread> nacc;  // absent when no run reports it
};

Spread spread(std::vector<double> values);

/// Groups rows by ablation id in first-appearance order.
std::vector<AblationSummary> summarize(const std::vector<MetricsRow>& rows);
std::string format_summary_table(const std::vector<AblationSummary>& summary);
/// Bar chart of median gIoU, one <rect class="bar"> per ablation.
std::string render_svg(const std::vector<AblationSummary>& summary);

/// Plain PGM (P2, maxval 255); values in [0,1] scale to 0..255 with rounding.
std::string format_pgm(const std::vector<double>& values, std::size_t h, std::size_t w);
struct GrayImage {
  std::size_t h = 0, w = 0;
  std::vector<int> pixels;
};
GrayImage parse_pgm(const std::string& text);

struct PriorDumpEntry {
  std::size_t sample = 0;
  bool is_null = false;
  std::string grid_file;  // G x G normalized responses
  std::string map_file;   // h x w similarity map
  std::string mask_file;  // h x w ground truth
};

/// Writes the first anchor's normalized token grid and h x w similarity map
/// for every sample, the ground-truth mask, and index.csv.
std::vector<PriorDumpEntry> dump_priors(const Model<float>& model, const std::vector<PreparedSample<float>>& samples,
                                        const std::filesystem::path& dir);

}  // namespace anchorseg::evalbench
