#include "anchorseg/evalbench/encoder.hpp"

#include <algorithm>
#include <random>

#include "anchorseg/imaging.hpp"
#include "anchorseg/init.hpp"
#include "anchorseg/maskdecoder.hpp"

namespace anchorseg::evalbench {

SceneEncoder::SceneEncoder(std::size_t h, std::size_t w, std::size_t c, std::size_t grid, std::size_t d_lm,
                           std::uint64_t seed)
    : h_(h), w_(w), c_(c), grid_(grid), d_lm_(d_lm) {
  if (grid == 0 || h % grid != 0 || w % grid != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible into a " +
                      std::to_string(grid) + "x" + std::to_string(grid) + " patch grid");
  }
  ph_ = h / grid;
  pw_ = w / grid;
  const std::size_t patch_dim = ph_ * pw_ * c;
  std::mt19937_64 rng(seed);
  projection_ = fan_in_tensor<double>({patch_dim, d_lm}, patch_dim, rng);
  position_ = maskdecoder::pixel_positional_encoding<double>(grid, grid, d_lm);
  for (auto& v : position_.data()) v *= kPositionScale;
}

template <typename T>
Tensor<T> SceneEncoder::encode(const std::vector<float>& image) const {
  if (image.size() != h_ * w_ * c_) throw DimensionError("encode_scene: image has " + std::to_string(image.size()) + " values");
  const std::size_t patch_dim = ph_ * pw_ * c_;
  Tensor<T> out({grid_ * grid_, d_lm_});
  std::vector<double> patch(patch_dim);
  std::vector<double> row(d_lm_);
  for (std::size_t gy = 0; gy < grid_; ++gy)
    for (std::size_t gx = 0; gx < grid_; ++gx) {
      std::size_t k = 0;
      for (std::size_t y = 0; y < ph_; ++y)
        for (std::size_t x = 0; x < pw_; ++x)
          for (std::size_t ch = 0; ch < c_; ++ch)
            patch[k++] = image[((gy * ph_ + y) * w_ + gx * pw_ + x) * c_ + ch];
      const std::size_t t = gy * grid_ + gx;
      for (std::size_t j = 0; j < d_lm_; ++j) row[j] = position_[t * d_lm_ + j];
      for (std::size_t i = 0; i < patch_dim; ++i) {
        if (patch[i] == 0.0) continue;
        const double* p = &projection_.data()[i * d_lm_];
        for (std::size_t j = 0; j < d_lm_; ++j) row[j] += patch[i] * p[j];
      }
      for (std::size_t j = 0; j < d_lm_; ++j) out[t * d_lm_ + j] = static_cast<T>(row[j]);
    }
  return out;
}

Tensor<double> encode_scene(const std::vector<float>& image, std::size_t h, std::size_t w, std::size_t c,
                            std::size_t grid, std::size_t d_lm, std::uint64_t seed) {
  return SceneEncoder(h, w, c, grid, d_lm, seed).encode<double>(image);
}

FeatureEncoder::FeatureEncoder(std::size_t c, std::size_t channels, std::size_t feat_h, std::size_t feat_w,
                               std::size_t l_sam, std::uint64_t seed)
    : c_(c), channels_(channels), feat_h_(feat_h), feat_w_(feat_w), l_sam_(l_sam) {
  if (feat_h == 0 || feat_w == 0 || l_sam % feat_h != 0 || l_sam % feat_w != 0) {
    throw ConfigError("feature extent must divide l_sam");
  }
  // Distinct stream from the patch projection sharing the same seed.
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  weight_ = normal_tensor<double>({channels, c}, 1.0, rng);
  bias_ = normal_tensor<double>({channels}, 0.5, rng);
}

template <typename T>
Tensor<T> FeatureEncoder::encode(const std::vector<float>& image, std::size_t h, std::size_t w) const {
  if (image.size() != h * w * c_) throw DimensionError("feature encoder: image has " + std::to_string(image.size()) + " values");
  Tensor<double> chw({c_, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c_; ++ch) chw.at(ch, y, x) = image[(y * w + x) * c_ + ch];
  const auto canvas = imaging::resize_long_side_pad(chw, l_sam_).map;
  const std::size_t sy = l_sam_ / feat_h_, sx = l_sam_ / feat_w_;
  const double inv = 1.0 / static_cast<double>(sy * sx);
  Tensor<T> out({channels_, feat_h_, feat_w_});
  std::vector<double> pooled(c_);
  for (std::size_t y = 0; y < feat_h_; ++y)
    for (std::size_t x = 0; x < feat_w_; ++x) {
      std::fill(pooled.begin(), pooled.end(), 0.0);
      for (std::size_t ch = 0; ch < c_; ++ch)
        for (std::size_t dy = 0; dy < sy; ++dy)
          for (std::size_t dx = 0; dx < sx; ++dx) pooled[ch] += canvas.at(ch, y * sy + dy, x * sx + dx) * inv;
      for (std::size_t o = 0; o < channels_; ++o) {
        double v = bias_[o];
        for (std::size_t ch = 0; ch < c_; ++ch) v += weight_.at(o, ch) * pooled[ch];
        out.at(o, y, x) = static_cast<T>(std::max(v, 0.0));
      }
    }
  return out;
}

template Tensor<float> SceneEncoder::encode(const std::vector<float>&) const;
template Tensor<double> SceneEncoder::encode(const std::vector<float>&) const;
template Tensor<float> FeatureEncoder::encode(const std::vector<float>&, std::size_t, std::size_t) const;
template Tensor<double> FeatureEncoder::encode(const std::vector<float>&, std::size_t, std::size_t) const;

}  // namespace anchorseg::evalbench
