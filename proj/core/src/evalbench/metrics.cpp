#include "anchorseg/evalbench/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "anchorseg/tensor.hpp"

namespace anchorseg::evalbench {
namespace {

void check_pairs(const std::vector<Mask>& preds, const std::vector<Mask>& gts, const char* metric) {
  if (preds.empty()) throw ContractError(std::string(metric) + ": empty sample list");
  if (preds.size() != gts.size()) {
    throw ContractError(std::string(metric) + ": " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(gts.size()) + " ground truths");
  }
}

bool empty_mask(const Mask& m) {
  for (auto v : m)
    if (v != 0) return false;
  return true;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_fraction(const std::string& s, std::size_t line, const char* field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw ParseError("line " + std::to_string(line) + ": field " + field + " is not a fraction in [0,1]: '" + s + "'");
  }
  return v;
}

}  // namespace

double Overlap::iou() const {
  return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_);
}

Overlap overlap(const Mask& pred, const Mask& gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("mask sizes differ: " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  }
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    o.intersection += static_cast<std::size_t>(p && g);
    o.union_ += static_cast<std::size_t>(p || g);
  }
  return o;
}

double giou(const std::vector<Mask>& preds, const std::vector<Mask>& gts) {
  check_pairs(preds, gts, "giou");
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) acc += overlap(preds[i], gts[i]).iou();
  return acc / static_cast<double>(preds.size());
}

double ciou(const std::vector<Mask>& preds, const std::vector<Mask>& gts) {
  check_pairs(preds, gts, "ciou");
  Overlap total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto o = overlap(preds[i], gts[i]);
    total.intersection += o.intersection;
    total.union_ += o.union_;
  }
  return total.iou();
}

double prec_at_05(const std::vector<Mask>& preds, const std::vector<Mask>& gts, const std::vector<bool>& null_flags) {
  check_pairs(preds, gts, "prec_at_05");
  if (!null_flags.empty() && null_flags.size() != preds.size()) throw ContractError("prec_at_05: null flag count mismatch");
  std::size_t eligible = 0, hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!null_flags.empty() && null_flags[i]) continue;
    ++eligible;
    hits += static_cast<std::size_t>(overlap(preds[i], gts[i]).iou() >= 0.5);
  }
  if (eligible == 0) throw ContractError("prec_at_05: no non-null samples");
  return static_cast<double>(hits) / static_cast<double>(eligible);
}

std::optional<double> n_acc(const std::vector<Mask>& preds, const std::vector<bool>& null_flags) {
  if (preds.size() != null_flags.size()) throw ContractError("n_acc: null flag count mismatch");
  std::size_t nulls = 0, correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!null_flags[i]) continue;
    ++nulls;
    correct += static_cast<std::size_t>(empty_mask(preds[i]));
  }
  if (nulls == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(nulls);
}

MetricSet compute_metrics(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                          const std::vector<bool>& null_flags) {
  MetricSet m;
  m.giou = giou(preds, gts);
  m.ciou = ciou(preds, gts);
  m.prec05 = prec_at_05(preds, gts, null_flags);
  m.nacc = n_acc(preds, null_flags);
  return m;
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",%llu,%.6f,%.6f,%.6f,", static_cast<unsigned long long>(row.seed), row.giou,
                row.ciou, row.prec05);
  std::string out = row.run_id + "," + row.ablation_id + buf;
  if (row.nacc) {
    std::snprintf(buf, sizeof buf, "%.6f", *row.nacc);
    out += buf;
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<MetricsRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != kMetricsHeader) throw ParseError("line " + std::to_string(lineno) + ": expected header '" + kMetricsHeader + "'");
      header = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != 7) {
      throw ParseError("line " + std::to_string(lineno) + ": expected 7 fields, found " + std::to_string(f.size()));
    }
    MetricsRow r;
    r.run_id = f[0];
    r.ablation_id = f[1];
    if (r.run_id.empty() || r.ablation_id.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty identifier");
    try {
      std::size_t used = 0;
      r.seed = std::stoull(f[2], &used);
      if (used != f[2].size() || f[2].front() == '-') throw std::invalid_argument("seed");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) + ": field seed is not an unsigned integer: '" + f[2] + "'");
    }
    r.giou = parse_fraction(f[3], lineno, "giou");
    r.ciou = parse_fraction(f[4], lineno, "ciou");
    r.prec05 = parse_fraction(f[5], lineno, "prec05");
    if (!f[6].empty()) r.nacc = parse_fraction(f[6], lineno, "nacc");
    rows.push_back(std::move(r));
  }
  if (!header) throw ParseError("line 1: missing header");
  return rows;
}

}  // namespace anchorseg::evalbench
