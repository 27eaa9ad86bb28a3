#include "anchorseg/evalbench/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>

#include "anchorseg/tensor.hpp"

namespace anchorseg::evalbench {

const std::array<std::array<float, 3>, kColorCount> kPalette = {{
    {0.90f, 0.10f, 0.10f},
    {0.10f, 0.85f, 0.15f},
    {0.10f, 0.20f, 0.95f},
    {0.95f, 0.90f, 0.10f},
    {0.90f, 0.10f, 0.90f},
    {0.10f, 0.90f, 0.90f},
}};

std::string symbol_name(std::uint16_t id) {
  static const char* names[] = {"?",      "red",       "green",     "blue",    "yellow",     "magenta",
                                "cyan",   "rectangle", "disc",      "triangle", "leftmost",   "rightmost",
                                "topmost", "bottommost", "above"};
  return id < std::size(names) ? names[id] : "?";
}

std::size_t SceneSample::foreground() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t Dataset::train_count(double train_fraction) const {
  const auto n = samples.size();
  auto t = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 0.5));
  return std::clamp<std::size_t>(t, 1, n > 1 ? n - 1 : 1);
}

namespace {

constexpr int kMaxPlacementTries = 64;
constexpr int kMaxSceneAttempts = 256;
constexpr int kGap = 3;

struct Object {
  std::size_t color = 0;  // palette index
  std::size_t shape = 0;  // 0 rect, 1 disc, 2 triangle
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open box
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
};

bool covers(const Object& o, int y, int x) {
  if (x < o.x0 || x >= o.x1 || y < o.y0 || y >= o.y1) return false;
  const double px = x + 0.5, py = y + 0.5;
  const double w = o.x1 - o.x0, h = o.y1 - o.y0;
  switch (o.shape) {
    case 0:
      return true;
    case 1: {
      const double dx = (px - o.cx()) / (0.5 * w), dy = (py - o.cy()) / (0.5 * h);
      return dx * dx + dy * dy <= 1.0;
    }
    default: {
      // apex at the top centre, base along the bottom edge
      const double t = (py - o.y0) / h;
      return std::abs(px - o.cx()) <= 0.5 * w * t;
    }
  }
}

bool overlaps(const Object& a, const Object& b) {
  return a.x0 < b.x1 + kGap && b.x0 < a.x1 + kGap && a.y0 < b.y1 + kGap && b.y0 < a.y1 + kGap;
}

std::optional<std::vector<Object>> place_objects(std::mt19937_64& rng, int h, int w, std::size_t max_objects) {
  const int lo = std::max(6, std::min(h, w) / 6), hi = std::max(lo, std::min(h, w) / 3);
  std::uniform_int_distribution<std::size_t> count_dist(1, max_objects);
  std::uniform_int_distribution<int> size_dist(lo, hi);
  std::uniform_int_distribution<std::size_t> shape_dist(0, kShapeCount - 1);
  std::vector<std::size_t> colors(kColorCount);
  std::iota(colors.begin(), colors.end(), 0);
  std::shuffle(colors.begin(), colors.end(), rng);

  const std::size_t n = count_dist(rng);
  std::vector<Object> objs;
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (int t = 0; t < kMaxPlacementTries && !placed; ++t) {
      Object o;
      o.color = colors[i];
      o.shape = shape_dist(rng);
      const int ow = std::min(size_dist(rng), w), oh = std::min(size_dist(rng), h);
      o.x0 = std::uniform_int_distribution<int>(0, w - ow)(rng);
      o.y0 = std::uniform_int_distribution<int>(0, h - oh)(rng);
      o.x1 = o.x0 + ow;
      o.y1 = o.y0 + oh;
      placed = std::none_of(objs.begin(), objs.end(), [&](const Object& p) { return overlaps(o, p); });
      if (placed) objs.push_back(o);
    }
    if (!placed) return std::nullopt;
  }
  return objs;
}

// Index of the unique extreme object under key, or nothing when the runner-up
// is within the separation margin.
template <typename Key>
std::optional<std::size_t> unique_extreme(const std::vector<Object>& objs, Key key, double margin) {
  if (objs.size() < 2) return std::nullopt;
  std::vector<std::size_t> order(objs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(objs[a]) < key(objs[b]); });
  if (key(objs[order[1]]) - key(objs[order[0]]) < margin) return std::nullopt;
  return order[0];
}

struct Query {
  std::vector<std::uint16_t> symbols;
  std::optional<std::size_t> target;
};

std::uint16_t color_symbol(std::size_t c) { return static_cast<std::uint16_t>(kRed + c); }
std::uint16_t shape_symbol(std::size_t s) { return static_cast<std::uint16_t>(kRectangle + s); }

std::optional<Query> null_query(std::mt19937_64& rng, const std::vector<Object>& objs) {
  std::vector<std::size_t> absent;
  for (std::size_t c = 0; c < kColorCount; ++c)
    if (std::none_of(objs.begin(), objs.end(), [c](const Object& o) { return o.color == c; })) absent.push_back(c);
  if (absent.empty()) return std::nullopt;
  const std::size_t c = absent[std::uniform_int_distribution<std::size_t>(0, absent.size() - 1)(rng)];
  Query q;
  if (std::bernoulli_distribution(0.5)(rng)) {
    q.symbols = {color_symbol(c)};
  } else {
    q.symbols = {color_symbol(c), shape_symbol(std::uniform_int_distribution<std::size_t>(0, kShapeCount - 1)(rng))};
  }
  return q;
}

std::optional<Query> relation_query(std::mt19937_64& rng, const std::vector<Object>& objs, double margin) {
  std::vector<Query> options;
  auto add = [&](std::uint16_t rel, std::optional<std::size_t> t) {
    if (t) options.push_back({{rel}, t});
  };
  add(kLeftmost, unique_extreme(objs, [](const Object& o) { return o.cx(); }, margin));
  add(kRightmost, unique_extreme(objs, [](const Object& o) { return -o.cx(); }, margin));
  add(kTopmost, unique_extreme(objs, [](const Object& o) { return o.cy(); }, margin));
  add(kBottommost, unique_extreme(objs, [](const Object& o) { return -o.cy(); }, margin));
  for (std::size_t r = 0; r < objs.size(); ++r) {
    std::vector<std::size_t> above;
    for (std::size_t i = 0; i < objs.size(); ++i)
      if (i != r && objs[i].y1 + kGap <= objs[r].y0) above.push_back(i);
    if (above.size() == 1) options.push_back({{kAbove, color_symbol(objs[r].color)}, above.front()});
  }
  if (options.empty()) return std::nullopt;
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

Query attribute_query(std::mt19937_64& rng, const std::vector<Object>& objs, double shape_only_fraction) {
  const std::size_t t = std::uniform_int_distribution<std::size_t>(0, objs.size() - 1)(rng);
  const auto& o = objs[t];
  const bool shape_unique =
      std::count_if(objs.begin(), objs.end(), [&](const Object& p) { return p.shape == o.shape; }) == 1;
  if (shape_unique && std::bernoulli_distribution(shape_only_fraction)(rng)) return {{shape_symbol(o.shape)}, t};
  if (std::bernoulli_distribution(0.5)(rng)) return {{color_symbol(o.color)}, t};
  return {{color_symbol(o.color), shape_symbol(o.shape)}, t};
}

void render(SceneSample& s, std::mt19937_64& rng, const std::vector<Object>& objs) {
  const int h = static_cast<int>(s.h), w = static_cast<int>(s.w);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  std::uniform_real_distribution<double> freq(0.05, 0.25);
  std::uniform_real_distribution<double> noise(-0.04, 0.04);
  const double fx = freq(rng), fy = freq(rng), px = phase(rng), py = phase(rng);
  const double base = std::uniform_real_distribution<double>(0.4, 0.6)(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double tex = base + 0.06 * std::sin(fx * x + px) * std::cos(fy * y + py);
      const std::size_t obj = [&] {
        for (std::size_t i = 0; i < objs.size(); ++i)
          if (covers(objs[i], y, x)) return i;
        return objs.size();
      }();
      for (std::size_t ch = 0; ch < s.c; ++ch) {
        double v = tex;
        if (obj < objs.size()) v = kPalette[objs[obj].color][ch % 3];
        v += noise(rng);
        s.image[(static_cast<std::size_t>(y) * s.w + static_cast<std::size_t>(x)) * s.c + ch] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index, int attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(attempt)};
  return std::mt19937_64(seq);
}

}  // namespace

SceneSample generate_scene(const RunConfig& cfg, std::uint64_t seed, std::size_t index) {
  const auto& m = cfg.model;
  const int h = static_cast<int>(m.h), w = static_cast<int>(m.w);
  const double margin = std::max(2.0, std::min(h, w) / 24.0);
  for (int attempt = 0; attempt < kMaxSceneAttempts; ++attempt) {
    auto rng = sample_rng(seed, index, attempt);
    auto objs = place_objects(rng, h, w, cfg.data.max_objects);
    if (!objs) continue;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::optional<Query> q;
    bool is_null = false;
    if (u < cfg.data.null_fraction) {
      q = null_query(rng, *objs);
      is_null = true;
    } else if (u < cfg.data.null_fraction + cfg.data.relation_fraction) {
      q = relation_query(rng, *objs, margin);
    } else {
      q = attribute_query(rng, *objs, cfg.data.shape_only_fraction);
    }
    if (!q) continue;  // uniqueness unsatisfiable for this layout: new sub-seed

    SceneSample s;
    s.h = m.h;
    s.w = m.w;
    s.c = m.c;
    s.image.assign(m.h * m.w * m.c, 0.0f);
    s.mask.assign(m.h * m.w, 0);
    s.symbols = q->symbols;
    s.is_null = is_null;
    render(s, rng, *objs);
    if (q->target) {
      const auto& t = (*objs)[*q->target];
      for (int y = t.y0; y < t.y1; ++y)
        for (int x = t.x0; x < t.x1; ++x)
          if (covers(t, y, x)) s.mask[static_cast<std::size_t>(y) * m.w + static_cast<std::size_t>(x)] = 1;
      if (s.foreground() == 0) continue;
    }
    return s;
  }
  throw ContractError("scene " + std::to_string(index) + ": no valid layout after " +
                      std::to_string(kMaxSceneAttempts) + " attempts");
}

Dataset generate_dataset(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset d;
  d.h = cfg.model.h;
  d.w = cfg.model.w;
  d.c = cfg.model.c;
  d.grid = cfg.model.grid;
  d.max_symbols = 2;
  d.samples.reserve(cfg.data.n_samples);
  for (std::size_t i = 0; i < cfg.data.n_samples; ++i) d.samples.push_back(generate_scene(cfg, seed, i));
  return d;
}

// ---- binary format ---------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'S', 'G', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <typename U>
  U get(const char* what) {
    if (pos_ + sizeof(U) > bytes_.size()) {
      throw FormatError(std::string("dataset truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::uint16_t narrow16(std::size_t v, const char* what) {
  if (v > 0xFFFF) throw FormatError(std::string(what) + " does not fit in 16 bits");
  return static_cast<std::uint16_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  Writer out;
  for (char ch : kMagic) out.put(static_cast<std::uint8_t>(ch));
  out.put(kVersion);
  out.put(static_cast<std::uint32_t>(data.samples.size()));
  out.put(narrow16(data.h, "h"));
  out.put(narrow16(data.w, "w"));
  out.put(narrow16(data.c, "c"));
  out.put(narrow16(data.grid, "G"));
  out.put(narrow16(data.max_symbols, "max_symbols"));
  for (const auto& s : data.samples) {
    if (s.h != data.h || s.w != data.w || s.c != data.c) throw FormatError("sample extents differ from dataset header");
    if (s.symbols.size() > data.max_symbols) throw FormatError("sample has more symbols than max_symbols");
    for (float v : s.image) out.put_f32(v);
    for (auto v : s.mask) out.put(v);
    out.put(static_cast<std::uint8_t>(s.symbols.size()));
    for (auto id : s.symbols) out.put(id);
    out.put(static_cast<std::uint8_t>(s.is_null ? 1 : 0));
  }
  return std::move(out.bytes);
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  for (char ch : kMagic) {
    if (in.get<std::uint8_t>("magic") != static_cast<std::uint8_t>(ch)) throw FormatError("bad dataset magic");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  Dataset d;
  const auto n = in.get<std::uint32_t>("n_samples");
  d.h = in.get<std::uint16_t>("h");
  d.w = in.get<std::uint16_t>("w");
  d.c = in.get<std::uint16_t>("c");
  d.grid = in.get<std::uint16_t>("G");
  d.max_symbols = in.get<std::uint16_t>("max_symbols");
  d.samples.resize(n);
  for (auto& s : d.samples) {
    s.h = d.h;
    s.w = d.w;
    s.c = d.c;
    s.image.resize(d.h * d.w * d.c);
    for (auto& v : s.image) v = in.get_f32("image");
    s.mask.resize(d.h * d.w);
    for (auto& v : s.mask) {
      v = in.get<std::uint8_t>("mask");
      if (v > 1) throw FormatError("mask value " + std::to_string(v) + " is not binary");
    }
    const auto k = in.get<std::uint8_t>("n_symbols");
    if (k > d.max_symbols) throw FormatError("sample symbol count exceeds max_symbols");
    s.symbols.resize(k);
    for (auto& id : s.symbols) id = in.get<std::uint16_t>("symbol");
    s.is_null = in.get<std::uint8_t>("is_null") != 0;
  }
  if (!in.done()) throw FormatError("trailing bytes after last dataset sample");
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write dataset " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace anchorseg::evalbench
