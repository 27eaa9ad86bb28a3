// anchorseg: dataset generation, training, evaluation, ablation, gradient
// checks and reporting from the command line.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "anchorseg/evalbench/ablate.hpp"
#include "anchorseg/evalbench/config.hpp"
#include "anchorseg/evalbench/gradsuite.hpp"
#include "anchorseg/evalbench/metrics.hpp"
#include "anchorseg/evalbench/model.hpp"
#include "anchorseg/evalbench/report.hpp"
#include "anchorseg/evalbench/scene.hpp"
#include "anchorseg/evalbench/train.hpp"

namespace fs = std::filesystem;
using namespace anchorseg;
using namespace anchorseg::evalbench;

namespace {

void log_line(const std::string& s) { std::cerr << s << '\n'; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// config.ini written next to the checkpoint unless overridden.
RunConfig config_for_checkpoint(const fs::path& checkpoint, const std::string& override_path) {
  const fs::path cfg = override_path.empty() ? checkpoint.parent_path() / "config.ini" : fs::path(override_path);
  return load_config(cfg);
}

std::string format_set(const MetricSet& m) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "giou=%.6f ciou=%.6f prec05=%.6f nacc=%s", m.giou, m.ciou, m.prec05,
                m.nacc ? std::to_string(*m.nacc).c_str() : "n/a");
  return buf;
}

int grad_check_command(const std::string& module) {
  bool ok = true;
  for (const auto& c : run_grad_suite(module)) {
    const bool pass = c.negative_control ? c.result.max_rel_error > 1e-1 : c.result.passed(1e-4);
    ok = ok && pass;
    std::printf("%-4s %-14s %-30s max_rel_err=%.3e entries=%zu worst=%s[%zu]%s%s\n", pass ? "PASS" : "FAIL", c.module.c_str(),
                c.name.c_str(), c.result.max_rel_error, c.result.entries_checked, c.result.worst_param.c_str(), c.result.worst_index,
                c.negative_control ? " (negative control, expect > 1e-1)" : "",
                c.result.ok ? "" : (" " + c.result.failure).c_str());
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchorseg: anchor-query reasoning segmentation toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, out_dir, checkpoint, metrics_path, svg_path, dump_dir, module;
  std::uint64_t seed = 0;
  std::vector<std::string> only;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  gen->add_option("--config", config_path, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", seed, "Dataset seed")->required();
  gen->add_option("--out", out_path, "Output dataset file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train one model and evaluate it on the held-out split");
  train_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", out_dir)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out split");
  eval_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", config_path, "Defaults to config.ini next to the checkpoint");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation grid over three seeds");
  ablate_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", out_path, "Metrics CSV")->required();
  ablate_cmd->add_option("--only", only, "Restrict to these ablation ids")->delimiter(',');

  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  grad_cmd->add_option("--module", module, "One of: tensor-engine, imaging, querybank, grounding, maskdecoder, objectives, full");

  auto* report_cmd = app.add_subcommand("report", "Summarize a metrics CSV");
  report_cmd->add_option("--metrics", metrics_path)->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--svg", svg_path, "Write a bar chart of median gIoU");
  report_cmd->add_option("--dump-prior", dump_dir, "Write PGM similarity maps for the eval split");
  report_cmd->add_option("--checkpoint", checkpoint, "Checkpoint used by --dump-prior")->check(CLI::ExistingFile);
  report_cmd->add_option("--data", data_path, "Dataset used by --dump-prior")->check(CLI::ExistingFile);
  report_cmd->add_option("--config", config_path, "Defaults to config.ini next to the checkpoint");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = load_config(config_path);
      write_dataset(generate_dataset(cfg, seed), out_path);
      std::cout << "wrote " << cfg.data.n_samples << " samples to " << out_path << '\n';
    } else if (train_cmd->parsed()) {
      const auto cfg = load_config(config_path);
      TrainOptions opts;
      opts.out_dir = fs::path(out_dir);
      opts.log = log_line;
      const auto r = train(cfg, read_dataset(data_path), opts);
      std::cout << format_set(r.metrics) << '\n';
    } else if (eval_cmd->parsed()) {
      const auto cfg = config_for_checkpoint(checkpoint, config_path);
      const auto data = prepare_data<float>(read_dataset(data_path), cfg);
      Model<float> model(cfg, cfg.run.seed);
      load_checkpoint(model.store(), checkpoint);
      std::cout << format_set(evaluate(model, data.eval)) << '\n';
    } else if (ablate_cmd->parsed()) {
      const auto cfg = load_config(config_path);
      AblateOptions opts;
      opts.only = only;
      opts.log = log_line;
      const auto rows = ablate(cfg, read_dataset(data_path), opts);
      write_metrics_csv(rows, out_path);
      std::cout << "wrote " << rows.size() << " rows to " << out_path << '\n';
    } else if (grad_cmd->parsed()) {
      return grad_check_command(module);
    } else if (report_cmd->parsed()) {
      const auto summary = summarize(parse_metrics_csv(read_text(metrics_path)));
      std::cout << format_summary_table(summary);
      if (!svg_path.empty()) std::ofstream(svg_path) << render_svg(summary);
      if (!dump_dir.empty()) {
        if (checkpoint.empty() || data_path.empty()) throw ConfigError("--dump-prior requires --checkpoint and --data");
        const auto cfg = config_for_checkpoint(checkpoint, config_path);
        const auto data = prepare_data<float>(read_dataset(data_path), cfg);
        Model<float> model(cfg, cfg.run.seed);
        load_checkpoint(model.store(), checkpoint);
        const auto entries = dump_priors(model, data.eval, dump_dir);
        std::cout << "dumped " << entries.size() << " similarity maps to " << dump_dir << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
