#include "anchorseg/evalbench/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "anchorseg/evalbench/model.hpp"
#include "anchorseg/evalbench/train.hpp"

namespace anchorseg::evalbench {

std::vector<AblationSpec> ablation_grid() {
  std::vector<AblationSpec> grid;
  for (std::size_t n : {4, 8, 16, 32}) grid.push_back({"nbank" + std::to_string(n), n, AblationToggles{}});
  auto exp = [](bool prior, bool tmcc, bool contextual) {
    AblationToggles t;
    t.use_prior = prior;
    t.use_tmcc = tmcc;
    t.use_contextual = contextual;
    return t;
  };
  grid.push_back({"exp1", 8, exp(false, false, true)});
  grid.push_back({"exp2", 8, exp(false, true, true)});   // similarity supervised, never injected
  grid.push_back({"exp3", 8, exp(true, false, true)});
  grid.push_back({"exp4", 8, exp(true, true, false)});
  grid.push_back({"exp5", 8, exp(true, true, true)});
  return grid;
}

RunConfig apply_ablation(const RunConfig& base, const AblationSpec& spec, std::uint64_t seed) {
  RunConfig cfg = base;
  cfg.model.n_bank = spec.n_bank;
  cfg.ablation.use_prior = spec.toggles.use_prior;
  cfg.ablation.use_tmcc = spec.toggles.use_tmcc;
  cfg.ablation.use_contextual = spec.toggles.use_contextual;
  cfg.run.seed = seed;
  return cfg;
}

std::size_t threads_from_env() {
  const char* v = std::getenv("ANCHORSEG_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) throw ConfigError(std::string("ANCHORSEG_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

std::vector<MetricsRow> ablate(const RunConfig& base, const Dataset& data, const AblateOptions& options) {
  base.validate();
  std::vector<AblationSpec> specs;
  for (const auto& s : ablation_grid()) {
    if (options.only.empty() || std::find(options.only.begin(), options.only.end(), s.id) != options.only.end()) specs.push_back(s);
  }
  for (const auto& id : options.only) {
    if (std::none_of(specs.begin(), specs.end(), [&](const AblationSpec& s) { return s.id == id; })) {
      throw ConfigError("unknown ablation id '" + id + "'");
    }
  }

  struct Job {
    std::string ablation;
    RunConfig cfg;
  };
  std::vector<Job> jobs;
  for (const auto& s : specs)
    for (std::size_t k = 0; k < kAblationSeeds; ++k) jobs.push_back({s.id, apply_ablation(base, s, base.run.seed + k)});

  // Runs whose configuration coincides (e.g. nbank8 and exp5) train once.
  std::vector<std::size_t> source(jobs.size());
  std::map<std::string, std::size_t> first_by_config;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    source[i] = first_by_config.emplace(format_config(jobs[i].cfg), i).first->second;
  }

  const auto prepared = prepare_data<float>(data, base);
  std::vector<MetricSet> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      if (source[i] != i) continue;
      try {
        Model<float> model(jobs[i].cfg, jobs[i].cfg.run.seed);
        results[i] = train_model(model, prepared).metrics;
        if (options.log) {
          std::lock_guard lock(log_mutex);
          options.log(jobs[i].ablation + "-seed" + std::to_string(jobs[i].cfg.run.seed) + " giou " + std::to_string(results[i].giou));
        }
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, options.threads ? options.threads : threads_from_env());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, jobs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& m = results[source[i]];
    const auto seed = jobs[i].cfg.run.seed;
    rows.push_back({jobs[i].ablation + "-seed" + std::to_string(seed), jobs[i].ablation, seed, m.giou, m.ciou, m.prec05, m.nacc});
  }
  return rows;
}

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) out += format_metrics_row(r) + "\n";
  return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write metrics file " + path.string());
  out << format_metrics_csv(rows);
}

}  // namespace anchorseg::evalbench
