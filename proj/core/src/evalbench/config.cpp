#include "anchorseg/evalbench/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace anchorseg::evalbench {
namespace {

namespace pt = boost::property_tree;

// One binding per key: reads a string into the config, writes it back out.
struct Binding {
  std::function<void(RunConfig&, const std::string&)> read;
  std::function<std::string(const RunConfig&)> write;
};

template <typename V>
V parse_value(const std::string& key, const std::string& raw) {
  std::istringstream in(raw);
  V v{};
  if constexpr (std::is_same_v<V, bool>) {
    if (raw == "true" || raw == "1" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + raw + "'");
  } else {
    if constexpr (std::is_unsigned_v<V>) {
      if (!raw.empty() && raw.front() == '-') throw ConfigError("key '" + key + "': negative value '" + raw + "'");
    }
    in >> v;
    if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("key '" + key + "': cannot parse '" + raw + "'");
    return v;
  }
}

template <typename V>
std::string render(const V& v) {
  if constexpr (std::is_same_v<V, bool>) {
    return v ? "true" : "false";
  } else {
    // Shortest form that parses back to the same value.
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }
}

template <typename V, typename Accessor>
Binding make_binding(std::string key, Accessor field) {
  return {[key, field](RunConfig& cfg, const std::string& raw) { field(cfg) = parse_value<V>(key, raw); },
          [field](const RunConfig& cfg) {
            RunConfig copy = cfg;
            return render(field(copy));
          }};
}

using Table = std::map<std::string, std::map<std::string, Binding>>;

const Table& bindings() {
  static const Table table = [] {
    Table t;
#define ASG_BIND(section, key, type, expr) \
  t[section][key] = make_binding<type>(std::string(section) + "." + key, [](RunConfig& c) -> type& { return expr; })
    ASG_BIND("model", "h", std::size_t, c.model.h);
    ASG_BIND("model", "w", std::size_t, c.model.w);
    ASG_BIND("model", "c", std::size_t, c.model.c);
    ASG_BIND("model", "grid", std::size_t, c.model.grid);
    ASG_BIND("model", "d_lm", std::size_t, c.model.d_lm);
    ASG_BIND("model", "d", std::size_t, c.model.d);
    ASG_BIND("model", "channels", std::size_t, c.model.channels);
    ASG_BIND("model", "feat_h", std::size_t, c.model.feat_h);
    ASG_BIND("model", "feat_w", std::size_t, c.model.feat_w);
    ASG_BIND("model", "l_vl", std::size_t, c.model.l_vl);
    ASG_BIND("model", "l_sam", std::size_t, c.model.l_sam);
    ASG_BIND("model", "n_bank", std::size_t, c.model.n_bank);
    ASG_BIND("model", "anchors", std::size_t, c.model.anchors);
    ASG_BIND("model", "ffn_hidden", std::size_t, c.model.ffn_hidden);
    ASG_BIND("model", "decoder_blocks", std::size_t, c.model.decoder_blocks);
    ASG_BIND("model", "encoder_seed", std::uint64_t, c.model.encoder_seed);
    ASG_BIND("loss", "bce", double, c.loss.bce);
    ASG_BIND("loss", "dice", double, c.loss.dice);
    ASG_BIND("loss", "mask", double, c.loss.mask);
    ASG_BIND("loss", "tmcc", double, c.loss.tmcc);
    ASG_BIND("loss", "txt", double, c.loss.txt);
    ASG_BIND("loss", "sigma", double, c.gaussian.sigma);
    ASG_BIND("loss", "ksize", std::size_t, c.gaussian.ksize);
    ASG_BIND("optim", "lr", double, c.optim.lr);
    ASG_BIND("optim", "beta1", double, c.optim.beta1);
    ASG_BIND("optim", "beta2", double, c.optim.beta2);
    ASG_BIND("optim", "weight_decay", double, c.optim.weight_decay);
    ASG_BIND("optim", "eps", double, c.optim.eps);
    ASG_BIND("optim", "warmup_steps", std::size_t, c.optim.warmup_steps);
    ASG_BIND("optim", "clip", double, c.optim.clip);
    ASG_BIND("data", "n_samples", std::size_t, c.data.n_samples);
    ASG_BIND("data", "train_fraction", double, c.data.train_fraction);
    ASG_BIND("data", "null_fraction", double, c.data.null_fraction);
    ASG_BIND("data", "relation_fraction", double, c.data.relation_fraction);
    ASG_BIND("data", "shape_only_fraction", double, c.data.shape_only_fraction);
    ASG_BIND("data", "max_objects", std::size_t, c.data.max_objects);
    ASG_BIND("run", "steps", std::size_t, c.run.steps);
    ASG_BIND("run", "batch", std::size_t, c.run.batch);
    ASG_BIND("run", "seed", std::uint64_t, c.run.seed);
    ASG_BIND("run", "eval_every", std::size_t, c.run.eval_every);
    ASG_BIND("ablation", "use_prior", bool, c.ablation.use_prior);
    ASG_BIND("ablation", "use_tmcc", bool, c.ablation.use_tmcc);
    ASG_BIND("ablation", "use_contextual", bool, c.ablation.use_contextual);
    ASG_BIND("ablation", "use_t2m", bool, c.ablation.use_t2m);
    ASG_BIND("ablation", "use_m2t", bool, c.ablation.use_m2t);
#undef ASG_BIND
    return t;
  }();
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid configuration: " + what);
}

}  // namespace

grounding::PriorGeometry RunConfig::geometry() const {
  grounding::PriorGeometry g;
  g.h = model.h;
  g.w = model.w;
  g.l_vl = model.l_vl;
  g.l_sam = model.l_sam;
  g.channels = model.channels;
  g.feat_h = model.feat_h;
  g.feat_w = model.feat_w;
  g.strides = grounding::default_strides(model.l_sam, model.feat_h);
  return g;
}

void RunConfig::validate() const {
  const auto& m = model;
  require(m.h >= 1 && m.w >= 1 && m.c >= 1, "image extents must be >= 1");
  require(m.grid >= 1, "grid must be >= 1");
  require(m.h % m.grid == 0 && m.w % m.grid == 0, "image extents must be divisible by grid");
  require(m.d_lm >= 1 && m.d >= 1 && m.channels >= 1 && m.ffn_hidden >= 1, "widths must be >= 1");
  require(m.feat_h >= 1 && m.feat_w >= 1 && m.feat_h == m.feat_w, "feature map must be square and non-empty");
  require(m.l_vl >= 1 && m.l_sam >= 1, "canvas extents must be >= 1");
  require(m.l_sam % m.feat_h == 0, "l_sam must be a multiple of feat_h");
  require(m.n_bank >= 1, "n_bank must be >= 1");
  require(m.anchors >= 1, "anchors must be >= 1");
  require(loss.bce >= 0 && loss.dice >= 0 && loss.mask >= 0 && loss.tmcc >= 0 && loss.txt >= 0,
          "loss weights must be non-negative");
  require(gaussian.sigma > 0, "sigma must be positive");
  require(gaussian.ksize % 2 == 1, "ksize must be odd");
  require(optim.lr > 0 && optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1,
          "optimizer coefficients out of range");
  require(data.n_samples >= 2, "n_samples must be >= 2");
  require(data.train_fraction > 0 && data.train_fraction < 1, "train_fraction must lie in (0,1)");
  require(data.null_fraction >= 0 && data.relation_fraction >= 0 && data.shape_only_fraction >= 0 &&
              data.null_fraction + data.relation_fraction <= 1 && data.shape_only_fraction <= 1,
          "query mix fractions out of range");
  require(data.max_objects >= 1 && data.max_objects <= 4, "max_objects must lie in [1,4]");
  require(run.batch >= 1, "batch must be >= 1");
  (void)geometry();
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  const auto& table = bindings();
  for (const auto& [section, keys] : tree) {
    auto sec = table.find(section);
    if (sec == table.end()) throw ConfigError(origin + ": unknown section [" + section + "]");
    if (!keys.data().empty()) throw ConfigError(origin + ": top-level key '" + section + "' outside any section");
    for (const auto& [key, value] : keys) {
      auto b = sec->second.find(key);
      if (b == sec->second.end()) throw ConfigError(origin + ": unknown key '" + key + "' in [" + section + "]");
      b->second.read(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  bool first = true;
  for (const char* section : {"model", "loss", "optim", "data", "run", "ablation"}) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, b] : bindings().at(section)) out << key << " = " << b.write(cfg) << '\n';
  }
  return out.str();
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << format_config(cfg);
}

}  // namespace anchorseg::evalbench
