#include "anchorseg/evalbench/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "anchorseg/ops.hpp"
#include "anchorseg/optim.hpp"

namespace anchorseg::evalbench {
namespace {

template <typename T>
std::string range_str(const Tensor<T>& t) {
  if (t.empty()) return "[]";
  const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  std::ostringstream out;
  out << '[' << *lo << ", " << *hi << ']';
  return out.str();
}

std::string describe_nonfinite(std::size_t step, const PreparedSample<float>& s, const ForwardResult<float>& r) {
  std::ostringstream out;
  out << "non-finite loss at step " << step << ", sample " << s.index << '\n';
  const auto& l = *r.loss;
  out << "  total " << l.total.value().item() << ", mask " << l.mask.value().item();
  if (l.has_t2m) out << ", t2m " << l.t2m.value().item();
  if (l.has_m2t) out << ", m2t " << l.m2t.value().item();
  out << '\n';
  out << "  symbols";
  for (auto id : s.symbols) out << ' ' << symbol_name(id);
  out << (s.is_null ? " (null)" : "") << '\n';
  out << "  logits range " << range_str(r.logits.value()) << '\n';
  out << "  anchor range " << range_str(r.hidden.anchors.front().value()) << '\n';
  for (std::size_t t = 0; t < r.responses.size(); ++t) out << "  responses[" << t << "] range " << range_str(r.responses[t].value()) << '\n';
  if (r.prior) out << "  prior range " << range_str(r.prior->value()) << '\n';
  return out.str();
}

// Cycles through a fresh permutation of the training indices each epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed * 0x9E3779B97F4A7C15ULL + 0xBA7C4ULL) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }
  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

void emit(const TrainOptions& o, const std::string& line) {
  if (o.log) o.log(line);
}

std::string format_metric_set(const MetricSet& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "giou %.6f ciou %.6f prec05 %.6f nacc %s", m.giou, m.ciou, m.prec05,
                m.nacc ? std::to_string(*m.nacc).c_str() : "n/a");
  return buf;
}

}  // namespace

template <typename T>
MetricSet evaluate(const Model<T>& model, const std::vector<PreparedSample<T>>& samples) {
  std::vector<Mask> preds, gts;
  std::vector<bool> nulls;
  for (const auto& s : samples) {
    preds.push_back(model.predict(s));
    gts.push_back(s.gt);
    nulls.push_back(s.is_null);
  }
  return compute_metrics(preds, gts, nulls);
}

TrainResult train_model(Model<float>& model, const PreparedData<float>& data, const TrainOptions& options) {
  const auto& cfg = model.config();
  if (data.train.empty()) throw ContractError("train: empty training split");
  if (data.eval.empty()) throw ContractError("train: empty evaluation split");
  AdamW<float> optim(cfg.optim);
  auto params = model.store().all();
  BatchSampler sampler(data.train.size(), cfg.run.seed);
  const float inv_batch = 1.0f / static_cast<float>(cfg.run.batch);

  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "train_log.csv");
    log_file << "step,loss,grad_norm,lr\n";
  }

  TrainResult result;
  for (std::size_t step = 1; step <= cfg.run.steps; ++step) {
    model.store().zero_grad();
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.run.batch; ++b) {
      const auto& sample = data.train[sampler.next()];
      Tape<float> tape;
      auto fwd = model.forward(tape, sample, true);
      const float loss = fwd.loss->total.value().item();
      if (!std::isfinite(loss)) {
        const auto dump = describe_nonfinite(step, sample, fwd);
        if (options.out_dir) std::ofstream(*options.out_dir / "nonfinite_dump.txt") << dump;
        throw TrainingError(dump);
      }
      batch_loss += loss;
      tape.backward(ops::scale(fwd.loss->total, inv_batch));
    }
    const double norm = optim.step(params);
    batch_loss /= static_cast<double>(cfg.run.batch);
    result.loss_curve.push_back(batch_loss);
    if (log_file) log_file << step << ',' << batch_loss << ',' << norm << ',' << optim.lr_at(step) << '\n';
    if (cfg.run.eval_every > 0 && step % cfg.run.eval_every == 0 && step != cfg.run.steps) {
      const auto m = evaluate(model, data.eval);
      result.eval_curve.emplace_back(step, m.giou);
      emit(options, "step " + std::to_string(step) + " loss " + std::to_string(batch_loss) + " | eval " + format_metric_set(m));
    }
  }
  result.metrics = evaluate(model, data.eval);
  result.eval_curve.emplace_back(cfg.run.steps, result.metrics.giou);
  emit(options, "final eval " + format_metric_set(result.metrics));

  if (options.out_dir) {
    save_config(cfg, *options.out_dir / "config.ini");
    save_checkpoint(model.store(), *options.out_dir / "checkpoint.bin");
    MetricsRow row{"train-seed" + std::to_string(cfg.run.seed), "train", cfg.run.seed, result.metrics.giou,
                   result.metrics.ciou, result.metrics.prec05, result.metrics.nacc};
    std::ofstream(*options.out_dir / "metrics.csv") << kMetricsHeader << '\n' << format_metrics_row(row) << '\n';
  }
  return result;
}

TrainResult train(const RunConfig& cfg, const Dataset& data, const TrainOptions& options) {
  const auto prepared = prepare_data<float>(data, cfg);
  Model<float> model(cfg, cfg.run.seed);
  return train_model(model, prepared, options);
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'A', 'S', 'G', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b, 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 | static_cast<std::uint32_t>(b[2]) << 16 |
      static_cast<std::uint32_t>(b[3]) << 24;
  return true;
}

std::uint32_t need_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) throw FormatError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const ParameterStore<float>& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), 4);
  put_u32(out, kCheckpointVersion);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : p.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
}

void load_checkpoint(ParameterStore<float>& store, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic.begin())) throw FormatError("bad checkpoint magic");
  const auto version = need_u32(in, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  std::map<std::string, bool> seen;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("checkpoint truncated in parameter name");
    auto* p = store.find(name);
    if (p == nullptr) throw FormatError("checkpoint parameter '" + name + "' is not part of the model");
    if (seen[name]) throw FormatError("checkpoint parameter '" + name + "' appears twice");
    seen[name] = true;
    const auto rank = need_u32(in, name + " rank");
    Shape shape(rank);
    for (auto& e : shape) e = need_u32(in, name + " extent");
    if (shape != p->value.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                        shape_str(p->value.shape()));
    }
    for (auto& v : p->value.data()) v = std::bit_cast<float>(need_u32(in, name + " data"));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!seen.count(store[i].name)) throw FormatError("checkpoint lacks parameter '" + store[i].name + "'");
  }
}

template MetricSet evaluate(const Model<float>&, const std::vector<PreparedSample<float>>&);
template MetricSet evaluate(const Model<double>&, const std::vector<PreparedSample<double>>&);

}  // namespace anchorseg::evalbench
