#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchorseg/evalbench/model.hpp"

namespace anchorseg::evalbench {

/// Raised when a loss evaluates to NaN or infinity; the message carries the
/// step, the sample and the operand summary.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  /// When set: config.ini, checkpoint.bin, train_log.csv and metrics.csv are
  /// written here, plus nonfinite_dump.txt on abort.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  MetricSet metrics;                 // on the eval split after the last step
  std::vector<double> loss_curve;    // mean batch loss per step
  std::vector<std::pair<std::size_t, double>> eval_curve;  // (step, gIoU)
};

template <typename T>
MetricSet evaluate(const Model<T>& model, const std::vector<PreparedSample<T>>& samples);

/// AdamW training on data.train; the model is updated in place.
TrainResult train_model(Model<float>& model, const PreparedData<float>& data, const TrainOptions& options = {});

/// Builds a model from cfg.run.seed, trains it and returns the eval metrics.
TrainResult train(const RunConfig& cfg, const Dataset& data, const TrainOptions& options = {});

/// "ASGC" checkpoint: every parameter, in registration order, as f32.
void save_checkpoint(const ParameterStore<float>& store, const std::filesystem::path& path);
/// Loads values by name; missing, unknown or mis-shaped entries are errors.
void load_checkpoint(ParameterStore<float>& store, const std::filesystem::path& path);

}  // namespace anchorseg::evalbench
