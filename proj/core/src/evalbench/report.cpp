#include "anchorseg/evalbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace anchorseg::evalbench {

Spread spread(std::vector<double> values) {
  if (values.empty()) throw ContractError("spread of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Spread s;
  s.min = values.front();
  s.max = values.back();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

std::vector<AblationSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.ablation_id) == order.end()) order.push_back(r.ablation_id);
  std::vector<AblationSummary> out;
  for (const auto& id : order) {
    std::vector<double> g, c, p, n;
    for (const auto& r : rows) {
      if (r.ablation_id != id) continue;
      g.push_back(r.giou);
      c.push_back(r.ciou);
      p.push_back(r.prec05);
      if (r.nacc) n.push_back(*r.nacc);
    }
    AblationSummary s;
    s.ablation_id = id;
    s.runs = g.size();
    s.giou = spread(g);
    s.ciou = spread(c);
    s.prec05 = spread(p);
    if (!n.empty()) s.nacc = spread(n);
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_summary_table(const std::vector<AblationSummary>& summary) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %4s  %-26s %-26s %-26s %s\n", "ablation", "runs", "gIoU med [min,max]",
                "cIoU med [min,max]", "prec@0.5 med [min,max]", "N-acc med");
  out << buf;
  auto cell = [](const Spread& s) {
    char b[64];
    std::snprintf(b, sizeof b, "%.4f [%.4f,%.4f]", s.median, s.min, s.max);
    return std::string(b);
  };
  for (const auto& s : summary) {
    std::snprintf(buf, sizeof buf, "%-10s %4zu  %-26s %-26s %-26s %s\n", s.ablation_id.c_str(), s.runs,
                  cell(s.giou).c_str(), cell(s.ciou).c_str(), cell(s.prec05).c_str(),
                  s.nacc ? std::to_string(s.nacc->median).substr(0, 6).c_str() : "n/a");
    out << buf;
  }
  return out.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<AblationSummary>& summary) {
  constexpr double kBar = 40, kGap = 20, kLeft = 50, kTop = 30, kPlot = 200;
  const double width = kLeft + static_cast<double>(summary.size()) * (kBar + kGap) + kGap;
  const double height = kTop + kPlot + 60;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "  <title>median gIoU per ablation</title>\n";
  out << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + kPlot << "\" x2=\"" << width << "\" y2=\"" << kTop + kPlot
      << "\" stroke=\"black\"/>\n";
  for (double tick : {0.0, 0.5, 1.0}) {
    const double y = kTop + kPlot * (1.0 - tick);
    out << "  <text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << tick
        << "</text>\n";
  }
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& s = summary[i];
    const double x = kLeft + kGap + static_cast<double>(i) * (kBar + kGap);
    const double h = kPlot * std::clamp(s.giou.median, 0.0, 1.0);
    char v[32];
    std::snprintf(v, sizeof v, "%.3f", s.giou.median);
    out << "  <rect class=\"bar\" x=\"" << x << "\" y=\"" << kTop + kPlot - h << "\" width=\"" << kBar
        << "\" height=\"" << h << "\" fill=\"steelblue\"><title>" << xml_escape(s.ablation_id) << ' ' << v
        << "</title></rect>\n";
    out << "  <text x=\"" << x + kBar / 2 << "\" y=\"" << kTop + kPlot + 15
        << "\" text-anchor=\"middle\" font-size=\"10\">" << xml_escape(s.ablation_id) << "</text>\n";
    out << "  <text x=\"" << x + kBar / 2 << "\" y=\"" << kTop + kPlot - h - 4
        << "\" text-anchor=\"middle\" font-size=\"9\">" << v << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string format_pgm(const std::vector<double>& values, std::size_t h, std::size_t w) {
  if (values.size() != h * w) throw DimensionError("format_pgm: " + std::to_string(values.size()) + " values for " + std::to_string(h) + "x" + std::to_string(w));
  std::ostringstream out;
  out << "P2\n" << w << ' ' << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = std::clamp(values[y * w + x], 0.0, 1.0);
      out << (x ? " " : "") << static_cast<int>(std::lround(v * 255.0));
    }
    out << '\n';
  }
  return out.str();
}

GrayImage parse_pgm(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  GrayImage img;
  int maxval = 0;
  in >> magic >> img.w >> img.h >> maxval;
  if (!in || magic != "P2" || maxval != 255) throw ParseError("not a plain PGM with maxval 255");
  img.pixels.resize(img.h * img.w);
  for (auto& p : img.pixels) {
    if (!(in >> p) || p < 0 || p > 255) throw ParseError("PGM pixel data truncated or out of range");
  }
  return img;
}

std::vector<PriorDumpEntry> dump_priors(const Model<float>& model, const std::vector<PreparedSample<float>>& samples,
                                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& m = model.config().model;
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << body;
  };
  std::vector<PriorDumpEntry> entries;
  std::ostringstream index;
  index << "sample,is_null,grid,map,mask\n";
  for (const auto& s : samples) {
    Tape<float> tape;
    auto tokens = tape.constant(s.tokens);
    auto hidden = querybank::generate_query_bank(tokens, std::span<const std::uint16_t>(s.symbols), model.reasoner());
    auto raw = grounding::spatial_responses(tokens, hidden.anchors.front());
    auto sim = grounding::similarity_map(raw, m.h, m.w, m.l_vl);
    PriorDumpEntry e;
    e.sample = s.index;
    e.is_null = s.is_null;
    const auto stem = "sample" + std::to_string(s.index);
    e.grid_file = stem + "_grid.pgm";
    e.map_file = stem + "_map.pgm";
    e.mask_file = stem + "_mask.pgm";
    const auto& g = sim.normalized.value();
    const auto& mp = sim.map.value();
    write(e.grid_file, format_pgm(std::vector<double>(g.data().begin(), g.data().end()), m.grid, m.grid));
    write(e.map_file, format_pgm(std::vector<double>(mp.data().begin(), mp.data().end()), m.h, m.w));
    write(e.mask_file, format_pgm(std::vector<double>(s.gt.begin(), s.gt.end()), m.h, m.w));
    index << e.sample << ',' << (e.is_null ? 1 : 0) << ',' << e.grid_file << ',' << e.map_file << ',' << e.mask_file << '\n';
    entries.push_back(std::move(e));
  }
  write("index.csv", index.str());
  return entries;
}

}  // namespace anchorseg::evalbench
