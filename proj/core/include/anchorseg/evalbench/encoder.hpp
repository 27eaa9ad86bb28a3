#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "anchorseg/tensor.hpp"

namespace anchorseg::evalbench {

/// Patch tokenizer standing in for the vision tower of the language model:
/// G x G non-overlapping patches, each flattened (row, column, channel) and
/// multiplied by a fixed seeded Gaussian projection to d_lm, plus a fixed 2-D
/// sinusoidal position code scaled by kPositionScale.
class SceneEncoder {
 public:
  /// At unit amplitude the code outweighs patch content by about 10x in
  /// response variance, and a linearly read anchor settles on a fixed
  /// positional pattern instead of the queried object.
  static constexpr double kPositionScale = 0.3;

  SceneEncoder(std::size_t h, std::size_t w, std::size_t c, std::size_t grid, std::size_t d_lm, std::uint64_t seed);

  /// image is h*w*c HWC; returns [G*G, d_lm].
  template <typename T>
  Tensor<T> encode(const std::vector<float>& image) const;

  const Tensor<double>& position_code() const { return position_; }

 private:
  std::size_t h_, w_, c_, grid_, d_lm_, ph_, pw_;
  Tensor<double> projection_;  // [patch_dim, d_lm]
  Tensor<double> position_;    // [G*G, d_lm]
};

/// Convenience wrapper that builds the encoder for one call.
Tensor<double> encode_scene(const std::vector<float>& image, std::size_t h, std::size_t w, std::size_t c,
                            std::size_t grid, std::size_t d_lm, std::uint64_t seed);

/// Frozen stand-in for the segmentation backbone: long-side resize and pad to
/// L_sam, area pooling to H x W, then relu(W x + b) per pixel with a fixed
/// seeded c -> C projection. Sharing the L_sam canvas with the prior keeps
/// features and prior spatially aligned for non-square images.
class FeatureEncoder {
 public:
  FeatureEncoder(std::size_t c, std::size_t channels, std::size_t feat_h, std::size_t feat_w, std::size_t l_sam,
                 std::uint64_t seed);

  /// image is h*w*c HWC; returns [C, H, W].
  template <typename T>
  Tensor<T> encode(const std::vector<float>& image, std::size_t h, std::size_t w) const;

 private:
  std::size_t c_, channels_, feat_h_, feat_w_, l_sam_;
  Tensor<double> weight_;  // [C, c]
  Tensor<double> bias_;    // [C]
};

}  // namespace anchorseg::evalbench
