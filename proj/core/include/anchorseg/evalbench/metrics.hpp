#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anchorseg::evalbench {

using Mask = std::vector<std::uint8_t>;  // 0/1 per pixel

struct Overlap {
  std::size_t intersection = 0;
  std::size_t union_ = 0;
  /// |P n G| / |P u G| with the empty-union case defined as 1.
  double iou() const;
};

Overlap overlap(const Mask& pred, const Mask& gt);

/// Mean per-sample IoU. Throws ContractError on an empty or mismatched list
/// and DimensionError when paired masks differ in size.
double giou(const std::vector<Mask>& preds, const std::vector<Mask>& gts);
/// Cumulative intersection over cumulative union; 1 when every union is empty.
double ciou(const std::vector<Mask>& preds, const std::vector<Mask>& gts);
/// Fraction of non-null samples with IoU >= 0.5. `null_flags` may be empty
/// (no null samples). Throws ContractError when no sample is eligible.
double prec_at_05(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                  const std::vector<bool>& null_flags = {});
/// Among null samples, the fraction predicted empty; nullopt without nulls.
std::optional<double> n_acc(const std::vector<Mask>& preds, const std::vector<bool>& null_flags);

struct MetricsRow {
  std::string run_id;
  std::string ablation_id;
  std::uint64_t seed = 0;
  double giou = 0.0;
  double ciou = 0.0;
  double prec05 = 0.0;
  std::optional<double> nacc;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricSet {
  double giou = 0.0;
  double ciou = 0.0;
  double prec05 = 0.0;
  std::optional<double> nacc;
};

MetricSet compute_metrics(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                          const std::vector<bool>& null_flags);

inline constexpr const char* kMetricsHeader = "run_id,ablation_id,seed,giou,ciou,prec05,nacc";

/// One CSV line (no newline); metrics printed with six decimals.
std::string format_metrics_row(const MetricsRow& row);

/// Raised for malformed metrics files; message carries the 1-based line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

}  // namespace anchorseg::evalbench
