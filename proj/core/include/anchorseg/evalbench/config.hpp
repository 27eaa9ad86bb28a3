#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "anchorseg/grounding.hpp"
#include "anchorseg/imaging.hpp"
#include "anchorseg/objectives.hpp"
#include "anchorseg/optim.hpp"

namespace anchorseg::evalbench {

struct ModelConfig {
  std::size_t h = 96, w = 96, c = 3;
  std::size_t grid = 8;  // G, N = G*G
  std::size_t d_lm = 64;
  std::size_t d = 32;
  std::size_t channels = 16;  // C
  std::size_t feat_h = 24, feat_w = 24;
  std::size_t l_vl = 96;
  std::size_t l_sam = 96;
  std::size_t n_bank = 8;  // K + 1
  std::size_t anchors = 1;
  std::size_t ffn_hidden = 32;
  std::size_t decoder_blocks = 2;
  std::uint64_t encoder_seed = 7;
};

struct DataConfig {
  std::size_t n_samples = 640;
  double train_fraction = 0.8;
  double null_fraction = 0.1;
  double relation_fraction = 0.15;
  double shape_only_fraction = 0.1;
  std::size_t max_objects = 4;
};

struct RunSettings {
  std::size_t steps = 2000;
  std::size_t batch = 4;
  std::uint64_t seed = 1;
  std::size_t eval_every = 500;  // 0 disables periodic evaluation
};

struct AblationToggles {
  bool use_prior = true;
  bool use_tmcc = true;
  bool use_contextual = true;
  bool use_t2m = true;
  bool use_m2t = true;

  bool operator==(const AblationToggles&) const = default;
};

struct RunConfig {
  ModelConfig model;
  objectives::LossWeights loss;
  imaging::GaussianSpec gaussian;
  AdamWConfig optim;
  DataConfig data;
  RunSettings run;
  AblationToggles ablation;

  std::size_t tokens() const { return model.grid * model.grid; }
  std::size_t contextual() const { return model.n_bank - 1; }
  grounding::PriorGeometry geometry() const;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

/// INI text with sections [model] [loss] [optim] [data] [run] [ablation].
/// Missing keys keep defaults; unknown sections or keys are errors.
RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace anchorseg::evalbench
