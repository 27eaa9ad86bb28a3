#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchorseg/evalbench/config.hpp"

namespace anchorseg::evalbench {

/// Query vocabulary. Colors and shapes describe objects; relations select by
/// position among all objects, ABOVE takes a color operand.
enum Symbol : std::uint16_t {
  kRed = 1,
  kGreen,
  kBlue,
  kYellow,
  kMagenta,
  kCyan,
  kRectangle = 7,
  kDisc,
  kTriangle,
  kLeftmost = 10,
  kRightmost,
  kTopmost,
  kBottommost,
  kAbove,
};
inline constexpr std::size_t kVocabSize = 15;
inline constexpr std::size_t kColorCount = 6;
inline constexpr std::size_t kShapeCount = 3;

/// Saturated RGB for color symbol kRed + i.
extern const std::array<std::array<float, 3>, kColorCount> kPalette;

std::string symbol_name(std::uint16_t id);

struct SceneSample {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<float> image;         // h*w*c, row-major HWC, values in [0,1]
  std::vector<std::uint8_t> mask;   // h*w, 0/1
  std::vector<std::uint16_t> symbols;
  bool is_null = false;

  std::size_t foreground() const;
  bool operator==(const SceneSample&) const = default;
};

struct Dataset {
  std::size_t h = 0, w = 0, c = 0, grid = 0;
  std::size_t max_symbols = 0;
  std::vector<SceneSample> samples;

  /// Samples [0, n_train) train, the remainder evaluates.
  std::size_t train_count(double train_fraction) const;
};

/// One scene per index; sample i depends only on (cfg, seed, i).
SceneSample generate_scene(const RunConfig& cfg, std::uint64_t seed, std::size_t index);
Dataset generate_dataset(const RunConfig& cfg, std::uint64_t seed);

void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

/// Raised for malformed dataset or checkpoint files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace anchorseg::evalbench
