#include <doctest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "anchorseg/evalbench/ablate.hpp"
#include "anchorseg/evalbench/config.hpp"
#include "anchorseg/evalbench/encoder.hpp"
#include "anchorseg/evalbench/gradsuite.hpp"
#include "anchorseg/evalbench/metrics.hpp"
#include "anchorseg/evalbench/model.hpp"
#include "anchorseg/evalbench/report.hpp"
#include "anchorseg/evalbench/scene.hpp"
#include "anchorseg/evalbench/train.hpp"
#include "metric_oracle.hpp"
#include "support.hpp"

using namespace anchorseg;
using namespace anchorseg::evalbench;

namespace {

// Small enough that a forward pass takes well under a millisecond.
RunConfig tiny_config() {
  RunConfig cfg;
  auto& m = cfg.model;
  m.h = m.w = 32;
  m.grid = 4;
  m.d_lm = 16;
  m.d = 8;
  m.channels = 8;
  m.feat_h = m.feat_w = 8;
  m.l_vl = m.l_sam = 32;
  m.n_bank = 4;
  m.ffn_hidden = 16;
  cfg.data.n_samples = 24;
  cfg.run.steps = 0;
  cfg.run.eval_every = 0;
  cfg.validate();
  return cfg;
}

// Block of `n` ones at the start of a 16-pixel mask.
Mask block(std::size_t n, std::size_t size = 16) {
  Mask m(size, 0);
  for (std::size_t i = 0; i < n; ++i) m[i] = 1;
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("worked examples") {
    CHECK(giou({block(4)}, {block(4)}) == 1.0);
    CHECK(overlap(block(4), block(8)).iou() == 0.5);
    CHECK(giou({block(4), block(3)}, {block(8), block(3)}) == 0.75);
    CHECK(ciou({block(4)}, {block(8)}) == 0.5);
    CHECK(ciou({block(4), block(1)}, {block(8), block(1)}) == doctest::Approx(5.0 / 9.0));
    CHECK(ciou({block(5), block(0)}, {block(5), block(0)}) == 1.0);
    CHECK_THROWS_AS(giou({}, {}), ContractError);
  }

  TEST_CASE("precision at 0.5 is inclusive at the boundary") {
    // IoUs 0.5, 0.49, 1.0 over 100-pixel masks.
    const Mask gt50 = block(100, 100);
    const std::vector<Mask> preds{block(50, 100), block(49, 100), block(100, 100)};
    const std::vector<Mask> gts{gt50, gt50, gt50};
    CHECK(prec_at_05(preds, gts) == doctest::Approx(2.0 / 3.0));
    CHECK(prec_at_05(gts, gts) == 1.0);
    CHECK(prec_at_05({block(0), block(0)}, {block(3), block(5)}) == 0.0);
    CHECK_THROWS_AS(prec_at_05({block(0)}, {block(0)}, {true}), ContractError);
  }

  TEST_CASE("null accuracy") {
    CHECK(n_acc({block(0)}, {true}) == 1.0);
    CHECK(n_acc({block(1)}, {true}) == 0.0);
    CHECK(n_acc({block(0), block(2), block(4)}, {true, true, false}) == 0.5);
    CHECK_FALSE(n_acc({block(0)}, {false}).has_value());
  }

  TEST_CASE("mismatched inputs are rejected") {
    CHECK_THROWS_AS(giou({block(1)}, {block(1), block(1)}), ContractError);
    CHECK_THROWS_AS(giou({block(1, 4)}, {block(1, 5)}), DimensionError);
    CHECK_THROWS_AS(n_acc({block(1)}, {}), ContractError);
  }

  TEST_CASE("library equals the pixel-set oracle exactly on random masks") {
    std::mt19937_64 rng(500);
    for (int trial = 0; trial < 500; ++trial) {
      const auto c = metric_oracle::random_case(rng);
      const auto m = compute_metrics(c.preds, c.gts, c.null);
      REQUIRE(m.giou == metric_oracle::giou(c.preds, c.gts));
      REQUIRE(m.ciou == metric_oracle::ciou(c.preds, c.gts));
      REQUIRE(m.prec05 == metric_oracle::prec05(c.preds, c.gts, c.null));
      REQUIRE(m.nacc == metric_oracle::nacc(c.preds, c.null));
      for (double v : {m.giou, m.ciou, m.prec05}) REQUIRE((v >= 0.0 && v <= 1.0));
    }
  }

  TEST_CASE("identical lists score one") {
    std::mt19937_64 rng(501);
    for (int trial = 0; trial < 50; ++trial) {
      const auto c = metric_oracle::random_case(rng);
      CHECK(giou(c.gts, c.gts) == 1.0);
      CHECK(ciou(c.gts, c.gts) == 1.0);
    }
  }

  TEST_CASE("metrics rows round-trip through CSV") {
    const std::vector<MetricsRow> rows{{"r1", "exp1", 3, 0.25, 0.5, 0.125, 0.75}, {"r2", "exp5", 4, 1.0, 0.0, 0.5, std::nullopt}};
    const auto text = format_metrics_csv(rows);
    CHECK(text.starts_with(std::string(kMetricsHeader) + "\n"));
    CHECK(format_metrics_row(rows[1]) == "r2,exp5,4,1.000000,0.000000,0.500000,");
    CHECK(parse_metrics_csv(text) == rows);
  }

  TEST_CASE("malformed CSV names the offending line") {
    const std::string text = std::string(kMetricsHeader) + "\nr1,exp1,1,0.5,0.5,0.5,\nr2,exp1,x,0.5,0.5,0.5,\n";
    try {
      parse_metrics_csv(text);
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_metrics_csv("wrong,header\n"), ParseError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("format and parse round-trip") {
    auto cfg = tiny_config();
    cfg.loss.tmcc = 0.25;
    cfg.ablation.use_prior = false;
    cfg.run.seed = 99;
    cfg.gaussian.sigma = 2.5;
    const auto text = format_config(cfg);
    CHECK(format_config(parse_config(text)) == text);
    const auto dir = testsupport::scratch_dir("config");
    save_config(cfg, dir / "c.ini");
    CHECK(format_config(load_config(dir / "c.ini")) == text);
  }

  TEST_CASE("missing keys keep defaults") {
    const auto cfg = parse_config("[run]\nsteps = 7\n");
    CHECK(cfg.run.steps == 7);
    CHECK(cfg.model.grid == 8);
    CHECK(cfg.loss.bce == 2.0);
    CHECK(cfg.loss.dice == 4.0);
  }

  TEST_CASE("unknown sections, keys and bad values are errors") {
    CHECK_THROWS_AS(parse_config("[model]\ncolour = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[run]\nsteps = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[model]\nh = 90\n"), ConfigError);  // 90 is not divisible by 8
    CHECK_THROWS_AS(parse_config("[loss]\nksize = 4\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/anchorseg.ini"), ConfigError);
  }

  TEST_CASE("the shipped toy profile parses") {
    const auto cfg = load_config(ANCHORSEG_SOURCE_DIR "/configs/toy.ini");
    CHECK(cfg.model.h == 96);
    CHECK(cfg.tokens() == 64);
    CHECK(cfg.contextual() == 7);
    CHECK(cfg.run.steps == 2000);
    const auto g = cfg.geometry();
    CHECK(g.strides[0] * g.strides[1] * g.strides[2] == 4);
  }
}

TEST_SUITE("scenes") {
  TEST_CASE("same config and seed give byte-identical files") {
    const auto cfg = tiny_config();
    const auto dir = testsupport::scratch_dir("scenes");
    write_dataset(generate_dataset(cfg, 5), dir / "a.asg");
    write_dataset(generate_dataset(cfg, 5), dir / "b.asg");
    CHECK(slurp(dir / "a.asg") == slurp(dir / "b.asg"));
    CHECK(slurp(dir / "a.asg").starts_with("ASG1"));
    write_dataset(generate_dataset(cfg, 6), dir / "c.asg");
    CHECK(slurp(dir / "a.asg") != slurp(dir / "c.asg"));
  }

  TEST_CASE("scene i depends only on its index") {
    const auto cfg = tiny_config();
    const auto data = generate_dataset(cfg, 5);
    CHECK(generate_scene(cfg, 5, 7) == data.samples[7]);
  }

  TEST_CASE("encode and decode round-trip; corrupt input is a format error") {
    const auto data = generate_dataset(tiny_config(), 8);
    const auto bytes = encode_dataset(data);
    const auto back = decode_dataset(bytes);
    CHECK(back.samples == data.samples);
    CHECK(back.grid == data.grid);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_dataset(bad), FormatError);
    CHECK_THROWS_AS(decode_dataset(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + bytes.size() / 2)), FormatError);
    CHECK_THROWS_AS(read_dataset("/nonexistent/x.asg"), FormatError);
  }

  TEST_CASE("null fraction follows the configured rate; non-null masks are nonempty") {
    auto cfg = tiny_config();
    cfg.data.n_samples = 1000;
    cfg.data.null_fraction = 0.25;
    const auto data = generate_dataset(cfg, 11);
    std::size_t nulls = 0;
    for (const auto& s : data.samples) {
      if (s.is_null) {
        ++nulls;
        REQUIRE(s.foreground() == 0);
      } else {
        REQUIRE(s.foreground() >= 1);
      }
      REQUIRE_FALSE(s.symbols.empty());
      for (float v : s.image) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
    const double sigma = std::sqrt(1000 * 0.25 * 0.75);
    CHECK(std::abs(double(nulls) - 250.0) <= 3.0 * sigma);
  }
}

TEST_SUITE("encoders") {
  TEST_CASE("zero image yields the position code alone") {
    SceneEncoder enc(32, 32, 3, 4, 16, 7);
    const auto tokens = enc.encode<double>(std::vector<float>(32 * 32 * 3, 0.0f));
    CHECK(tokens == enc.position_code());
    // The code is the unit-amplitude sinusoid scaled down.
    const auto unit = maskdecoder::pixel_positional_encoding<double>(4, 4, 16);
    for (std::size_t i = 0; i < unit.size(); ++i)
      CHECK(tokens[i] == doctest::Approx(SceneEncoder::kPositionScale * unit[i]).epsilon(1e-14));
  }

  TEST_CASE("changing one patch changes exactly one token row") {
    SceneEncoder enc(32, 32, 3, 4, 16, 7);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0, 1);
    std::vector<float> img(32 * 32 * 3);
    for (auto& v : img) v = u(rng);
    auto other = img;
    // Patch (row 2, col 1) covers y in [16,24), x in [8,16).
    other[(17 * 32 + 9) * 3 + 1] += 0.5f;
    const auto a = enc.encode<double>(img), b = enc.encode<double>(other);
    for (std::size_t r = 0; r < 16; ++r) {
      double diff = 0.0;
      for (std::size_t k = 0; k < 16; ++k) diff += std::abs(a.at(r, k) - b.at(r, k));
      CHECK((r == 2 * 4 + 1) == (diff > 0.0));
    }
  }

  TEST_CASE("same seed gives bit-identical tokens; indivisible extents are rejected") {
    std::vector<float> img(32 * 32 * 3, 0.3f);
    CHECK(encode_scene(img, 32, 32, 3, 4, 16, 9) == encode_scene(img, 32, 32, 3, 4, 16, 9));
    CHECK_THROWS_AS(SceneEncoder(30, 32, 3, 4, 16, 7), ConfigError);
  }

  TEST_CASE("feature encoder output is non-negative and shaped [C, H, W]") {
    FeatureEncoder enc(3, 8, 8, 8, 32, 7);
    std::vector<float> img(24 * 32 * 3, 0.5f);
    const auto f = enc.encode<double>(img, 24, 32);
    CHECK(f.shape() == Shape{8, 8, 8});
    for (double v : f.data()) CHECK(v >= 0.0);
  }
}

TEST_SUITE("model") {
  TEST_CASE("untrained metrics are reproducible by seed") {
    const auto cfg = tiny_config();
    const auto data = generate_dataset(cfg, 2);
    const auto a = train(cfg, data).metrics, b = train(cfg, data).metrics;
    CHECK(a.giou == b.giou);
    CHECK(a.ciou == b.ciou);
    CHECK(a.prec05 == b.prec05);
  }

  TEST_CASE("a zero head starts every pixel at probability one half") {
    const auto cfg = tiny_config();
    const auto data = prepare_data<float>(generate_dataset(cfg, 2), cfg);
    Model<float> model(cfg, 1);
    Tape<float> tape;
    const auto r = model.forward(tape, data.train.front(), true);
    CHECK(r.logits.shape() == Shape{32, 32});
    for (float v : r.logits.value().data()) CHECK(v == 0.0f);
    REQUIRE(r.loss.has_value());
    CHECK(std::isfinite(r.loss->total.value()[0]));
  }

  TEST_CASE("short training runs are reproducible and write their artifacts") {
    auto cfg = tiny_config();
    cfg.run.steps = 4;
    cfg.run.batch = 2;
    const auto data = generate_dataset(cfg, 3);
    const auto dir = testsupport::scratch_dir("train");
    TrainOptions opts;
    opts.out_dir = dir;
    const auto a = train(cfg, data, opts);
    const auto b = train(cfg, data);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.metrics.giou == b.metrics.giou);
    for (const char* f : {"config.ini", "checkpoint.bin", "train_log.csv", "metrics.csv"}) CHECK(std::filesystem::exists(dir / f));
  }

  TEST_CASE("checkpoints round-trip every parameter") {
    const auto cfg = tiny_config();
    Model<float> a(cfg, 1), b(cfg, 2);
    const auto dir = testsupport::scratch_dir("ckpt");
    save_checkpoint(a.store(), dir / "a.bin");
    load_checkpoint(b.store(), dir / "a.bin");
    const auto pa = a.store().all(), pb = b.store().all();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    CHECK(slurp(dir / "a.bin").starts_with("ASGC"));

    auto other = cfg;
    other.model.channels = 4;
    Model<float> c(other, 1);
    CHECK_THROWS(load_checkpoint(c.store(), dir / "a.bin"));
    CHECK_THROWS(load_checkpoint(b.store(), dir / "missing.bin"));
  }

  TEST_CASE("the loss curve declines over the first 200 toy steps") {
    auto cfg = load_config(ANCHORSEG_SOURCE_DIR "/configs/toy.ini");
    cfg.data.n_samples = 80;
    cfg.run.steps = 200;
    cfg.run.eval_every = 0;
    const auto result = train(cfg, generate_dataset(cfg, 1));
    REQUIRE(result.loss_curve.size() == 200);
    for (double v : result.loss_curve) REQUIRE(std::isfinite(v));
    // Moving average over 50 steps, sampled at each non-overlapping window.
    std::vector<double> windows;
    for (std::size_t s = 0; s + 50 <= 200; s += 50) {
      double acc = 0.0;
      for (std::size_t i = s; i < s + 50; ++i) acc += result.loss_curve[i];
      windows.push_back(acc / 50.0);
    }
    for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] <= windows[i - 1]);
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("grid holds nine configurations over three seeds") {
    const auto grid = ablation_grid();
    CHECK(grid.size() * kAblationSeeds == 27);
    CHECK(grid[0].id == "nbank4");
    CHECK(grid[3].n_bank == 32);
    const auto& exp5 = grid.back();
    CHECK(exp5.id == "exp5");
    CHECK(exp5.toggles == AblationToggles{});
    const auto& exp1 = grid[4];
    CHECK(exp1.id == "exp1");
    CHECK_FALSE(exp1.toggles.use_prior);
    CHECK_FALSE(exp1.toggles.use_tmcc);
    const auto cfg = apply_ablation(tiny_config(), exp1, 42);
    CHECK(cfg.run.seed == 42);
    CHECK_FALSE(cfg.ablation.use_prior);
  }

  TEST_CASE("rows do not depend on the thread count") {
    auto cfg = tiny_config();
    cfg.run.steps = 2;
    const auto data = generate_dataset(cfg, 4);
    AblateOptions one, three;
    one.only = three.only = {"exp1", "exp3"};
    one.threads = 1;
    three.threads = 3;
    const auto a = ablate(cfg, data, one), b = ablate(cfg, data, three);
    REQUIRE(a.size() == 6);
    CHECK(format_metrics_csv(a) == format_metrics_csv(b));
    CHECK(a[0].ablation_id == "exp1");
    CHECK(a[3].seed == cfg.run.seed);
  }

  TEST_CASE("unknown ablation ids are rejected") {
    AblateOptions opts;
    opts.only = {"exp9"};
    const auto cfg = tiny_config();
    CHECK_THROWS_AS(ablate(cfg, generate_dataset(cfg, 4), opts), ConfigError);
  }

  TEST_CASE("thread count comes from the environment") {
    ::unsetenv("ANCHORSEG_THREADS");
    CHECK(threads_from_env() == 1);
    ::setenv("ANCHORSEG_THREADS", "3", 1);
    CHECK(threads_from_env() == 3);
    ::unsetenv("ANCHORSEG_THREADS");
  }
}

TEST_SUITE("report") {
  TEST_CASE("median and spread per ablation") {
    const std::vector<MetricsRow> rows{{"a", "exp1", 1, 0.4, 0.1, 0.2, std::nullopt},
                                       {"b", "exp1", 2, 0.6, 0.3, 0.2, std::nullopt},
                                       {"c", "exp1", 3, 0.5, 0.2, 0.2, std::nullopt},
                                       {"d", "exp5", 1, 0.9, 0.9, 0.9, 0.5}};
    const auto s = summarize(rows);
    REQUIRE(s.size() == 2);
    CHECK(s[0].ablation_id == "exp1");
    CHECK(s[0].runs == 3);
    CHECK(s[0].giou.median == 0.5);
    CHECK(s[0].giou.min == 0.4);
    CHECK(s[0].giou.max == 0.6);
    CHECK_FALSE(s[0].nacc.has_value());
    CHECK(s[1].giou.median == 0.9);
    CHECK(s[1].nacc.has_value());
    CHECK(spread({1.0, 4.0}).median == 2.5);
    CHECK(format_summary_table(s).find("exp5") != std::string::npos);
  }

  TEST_CASE("SVG parses as XML with one bar per ablation") {
    std::vector<MetricsRow> rows;
    for (const auto& spec : ablation_grid()) rows.push_back({"r", spec.id, 1, 0.3, 0.3, 0.3, std::nullopt});
    std::istringstream in(render_svg(summarize(rows)));
    boost::property_tree::ptree tree;
    REQUIRE_NOTHROW(boost::property_tree::read_xml(in, tree));
    std::size_t bars = 0;
    std::function<void(const boost::property_tree::ptree&)> walk = [&](const boost::property_tree::ptree& node) {
      for (const auto& [name, child] : node) {
        if (name == "rect" && child.get("<xmlattr>.class", "") == "bar") ++bars;
        walk(child);
      }
    };
    walk(tree);
    CHECK(bars == ablation_grid().size());
  }

  TEST_CASE("PGM round-trip with rounding") {
    const std::vector<double> v{0.0, 1.0, 0.5, 0.25, 1.0 / 255.0, 0.999};
    const auto img = parse_pgm(format_pgm(v, 2, 3));
    CHECK(img.h == 2);
    CHECK(img.w == 3);
    CHECK(img.pixels == std::vector<int>{0, 255, 128, 64, 1, 255});
    CHECK_THROWS(parse_pgm("P5\n1 1\n255\n0\n"));
  }

  TEST_CASE("prior dumps cover every sample") {
    const auto cfg = tiny_config();
    const auto data = prepare_data<float>(generate_dataset(cfg, 2), cfg);
    Model<float> model(cfg, 1);
    const auto dir = testsupport::scratch_dir("dump");
    const auto entries = dump_priors(model, data.eval, dir);
    REQUIRE(entries.size() == data.eval.size());
    CHECK(std::filesystem::exists(dir / "index.csv"));
    const auto grid = parse_pgm(slurp(dir / entries[0].grid_file));
    CHECK(grid.h == 4);
    const auto map = parse_pgm(slurp(dir / entries[0].map_file));
    CHECK(map.h == 32);
    CHECK(map.w == 32);
  }
}

TEST_SUITE("grad suite") {
  TEST_CASE("module cases pass and negative controls fail") {
    bool saw_control = false;
    for (const auto& module : {"tensor-engine", "imaging", "objectives"}) {
      const auto cases = run_grad_suite(module);
      REQUIRE_FALSE(cases.empty());
      for (const auto& c : cases) {
        INFO(c.module << "/" << c.name << ": " << c.result.max_rel_error);
        if (c.negative_control) {
          saw_control = true;
          CHECK(c.result.max_rel_error > 1e-1);
        } else {
          CHECK(c.result.passed(1e-4));
        }
      }
    }
    CHECK(saw_control);
    CHECK_THROWS_AS(run_grad_suite("nonsense"), ConfigError);
  }
}
