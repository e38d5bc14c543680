// Copyright 2026 The speechbt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Report tables and charts: per-language hours, gate outcomes, WER deltas,
// and a Norm_I vs WER-delta scatter with the gate threshold drawn in. Output
// depends only on the inputs (no timestamps), so reruns are byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "speechbt/core/error.hpp"
#include "speechbt/core/io.hpp"
#include "speechbt/metrics/intelligibility.hpp"
#include "speechbt/pipeline/manifest.hpp"
#include "speechbt/pipeline/tables.hpp"
#include "speechbt/sched/plan.hpp"

namespace speechbt::pipeline {

namespace fs = std::filesystem;

struct HoursRow {
  std::string language;
  double real_hours = 0.0;
  std::optional<double> target_synth_hours;
  double synth_hours = 0.0;
  std::optional<std::size_t> utterances;

  friend bool operator==(const HoursRow&, const HoursRow&) = default;
};

struct HoursTable {
  std::vector<HoursRow> rows;
  // A published "Total" row, kept verbatim so it can be checked against sums.
  std::optional<double> declared_real_total;
  std::optional<double> declared_synth_total;

  double real_total() const {
    double s = 0;
    for (const auto& r : rows) s += r.real_hours;
    return s;
  }
  double synth_total() const {
    double s = 0;
    for (const auto& r : rows) s += r.synth_hours;
    return s;
  }
  std::optional<double> target_total() const {
    std::optional<double> s;
    for (const auto& r : rows)
      if (r.target_synth_hours) s = s.value_or(0.0) + *r.target_synth_hours;
    return s;
  }
};

inline bool is_total_label(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s == "total";
}

// Columns: language, real_hours, synthetic_hours (others ignored). A row
// labelled "Total" becomes the declared totals.
inline HoursTable load_hours_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto lang = t.column("language"), real = t.column("real_hours"), syn = t.column("synthetic_hours");
  HoursTable out;
  for (const auto& r : t.rows) {
    if (is_total_label(r[lang])) {
      out.declared_real_total = parse_number(r[real]);
      out.declared_synth_total = parse_number(r[syn]);
      continue;
    }
    HoursRow h;
    h.language = r[lang];
    h.real_hours = parse_number(r[real]);
    h.synth_hours = parse_number(r[syn]);
    out.rows.push_back(std::move(h));
  }
  return out;
}

// Plan targets become both the target column and, until a manifest says
// otherwise, zero synthesized hours.
inline HoursTable hours_from_plan(const std::vector<sched::LanguagePlan>& plan) {
  HoursTable t;
  for (const auto& p : plan) t.rows.push_back({p.language, p.real_hours, p.target_synth_hours, 0.0, std::nullopt});
  return t;
}

// Adds synthesized hours and utterance counts, summing durations in manifest
// order so a reader can reproduce the figure exactly.
inline void add_manifest(HoursTable& t, const std::vector<ManifestEntry>& manifest) {
  std::map<std::string, std::pair<double, std::size_t>> per;
  std::vector<std::string> order;
  for (const auto& e : manifest) {
    auto [it, fresh] = per.try_emplace(e.language, 0.0, 0);
    if (fresh) order.push_back(e.language);
    it->second.first += e.duration_s;
    ++it->second.second;
  }
  for (auto& r : t.rows) {
    r.utterances = 0;
    if (auto it = per.find(r.language); it != per.end()) {
      r.synth_hours = it->second.first / 3600.0;
      r.utterances = it->second.second;
    }
  }
  for (const auto& lang : order) {
    if (std::none_of(t.rows.begin(), t.rows.end(), [&](const HoursRow& r) { return r.language == lang; })) {
      const auto& [secs, n] = per[lang];
      t.rows.push_back({lang, 0.0, std::nullopt, secs / 3600.0, n});
    }
  }
}

inline std::string hours_csv(const HoursTable& t, std::vector<std::string>* warnings = nullptr) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  std::string out = csv_row({"language", "real_hours", "target_synth_hours", "synth_hours", "utterances"});
  for (const auto& r : t.rows) {
    out += csv_row({r.language, format_number(r.real_hours), opt(r.target_synth_hours), format_number(r.synth_hours),
                    r.utterances ? std::to_string(*r.utterances) : ""});
  }
  if (t.rows.empty()) return out;
  std::size_t n = 0;
  bool have_n = false;
  for (const auto& r : t.rows)
    if (r.utterances) {
      n += *r.utterances;
      have_n = true;
    }
  out += csv_row({"total", format_number(t.real_total()), opt(t.target_total()), format_number(t.synth_total()),
                  have_n ? std::to_string(n) : ""});
  if (t.declared_real_total || t.declared_synth_total) {
    out += csv_row({"total_declared", opt(t.declared_real_total), "", opt(t.declared_synth_total), ""});
    if (warnings && t.declared_real_total && *t.declared_real_total != t.real_total()) {
      warnings->push_back("declared real total " + format_number(*t.declared_real_total) +
                          " differs from the per-language sum " + format_number(t.real_total()));
    }
    if (warnings && t.declared_synth_total && *t.declared_synth_total != t.synth_total()) {
      warnings->push_back("declared synthetic total " + format_number(*t.declared_synth_total) +
                          " differs from the per-language sum " + format_number(t.synth_total()));
    }
  }
  return out;
}

struct GateRow {
  std::string checkpoint;
  metrics::IntelligibilityReport report;
};

inline std::string gate_csv(const std::vector<GateRow>& rows) {
  std::string out = csv_row({"language", "checkpoint", "wer_real", "wer_synthetic", "norm_i", "gate_threshold",
                             "accepted", "judge_id", "sample_count"});
  for (const auto& g : rows) {
    const auto& r = g.report;
    out += csv_row({r.language, g.checkpoint, format_number(r.wer_real), format_number(r.wer_synthetic),
                    format_number(r.norm_i), format_number(r.gate_threshold), r.accepted ? "true" : "false",
                    r.judge_id, std::to_string(r.sample_count)});
  }
  return out;
}

// Input columns: language, baseline_wer, augmented_wer. Delta is augmented
// minus baseline, so an improvement is negative.
inline std::string wer_delta_csv(const std::optional<CsvTable>& in) {
  std::string out = csv_row({"language", "baseline_wer", "augmented_wer", "delta_wer"});
  if (!in) return out;
  const auto l = in->column("language"), b = in->column("baseline_wer"), a = in->column("augmented_wer");
  for (const auto& r : in->rows) {
    const double base = parse_number(r[b]), aug = parse_number(r[a]);
    out += csv_row({r[l], format_number(base), format_number(aug), format_number(aug - base)});
  }
  return out;
}

struct ScatterPoint {
  double norm_i = 0.0;
  double delta_wer = 0.0;
  std::string label;
};

// Input columns: norm_i, delta_wer, optional label.
inline std::vector<ScatterPoint> load_scatter_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto x = t.column("norm_i"), y = t.column("delta_wer");
  const bool has_label = t.has_column("label");
  std::vector<ScatterPoint> out;
  for (const auto& r : t.rows) {
    ScatterPoint p{parse_number(r[x]), parse_number(r[y]), has_label ? r[t.column("label")] : ""};
    if (!(p.norm_i > 0)) throw Error(ErrorCode::kInvalidInput, "norm_i must be positive for a log axis");
    out.push_back(std::move(p));
  }
  return out;
}

inline std::string scatter_csv(const std::vector<ScatterPoint>& pts) {
  std::string out = csv_row({"norm_i", "delta_wer", "label"});
  for (const auto& p : pts) out += csv_row({format_number(p.norm_i), format_number(p.delta_wer), p.label});
  return out;
}

namespace svg {

inline std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string f2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string text(double x, double y, std::string_view s, std::string_view anchor = "middle", int size = 11) {
  return "<text x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" font-size=\"" + std::to_string(size) + "\" text-anchor=\"" +
         std::string(anchor) + "\">" + esc(s) + "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, std::string_view style) {
  return "<line x1=\"" + f2(x1) + "\" y1=\"" + f2(y1) + "\" x2=\"" + f2(x2) + "\" y2=\"" + f2(y2) + "\" " +
         std::string(style) + "/>\n";
}

inline std::string open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(w) + "\" height=\"" + f2(h) + "\" viewBox=\"0 0 " +
         f2(w) + " " + f2(h) + "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace svg

// Grouped bars, real vs synthesized hours per language.
inline std::string hours_svg(const HoursTable& t) {
  const double left = 70, top = 40, plot_h = 260, group_w = 56, bar_w = 22;
  const double w = left + 30 + group_w * static_cast<double>(std::max<std::size_t>(t.rows.size(), 1));
  const double h = top + plot_h + 60;
  double vmax = 0;
  for (const auto& r : t.rows) vmax = std::max({vmax, r.real_hours, r.synth_hours});
  if (vmax <= 0) vmax = 1;
  std::string out = svg::open(w, h);
  out += svg::text(w / 2, 20, "Hours per language", "middle", 14);
  const double base = top + plot_h;
  out += svg::line(left, top, left, base, "stroke=\"black\"");
  out += svg::line(left, base, w - 20, base, "stroke=\"black\"");
  for (int k = 0; k <= 4; ++k) {
    const double v = vmax * k / 4.0;
    const double y = base - plot_h * k / 4.0;
    out += svg::line(left - 4, y, left, y, "stroke=\"black\"");
    out += svg::text(left - 6, y + 4, format_number(std::round(v * 100) / 100), "end", 10);
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const double x0 = left + 8 + group_w * static_cast<double>(i);
    const double hr = plot_h * r.real_hours / vmax, hs = plot_h * r.synth_hours / vmax;
    out += "<rect x=\"" + svg::f2(x0) + "\" y=\"" + svg::f2(base - hr) + "\" width=\"" + svg::f2(bar_w) +
           "\" height=\"" + svg::f2(hr) + "\" fill=\"#4c72b0\"><title>" + svg::esc(r.language) + " real " +
           format_number(r.real_hours) + "</title></rect>\n";
    out += "<rect x=\"" + svg::f2(x0 + bar_w) + "\" y=\"" + svg::f2(base - hs) + "\" width=\"" + svg::f2(bar_w) +
           "\" height=\"" + svg::f2(hs) + "\" fill=\"#dd8452\"><title>" + svg::esc(r.language) + " synthetic " +
           format_number(r.synth_hours) + "</title></rect>\n";
    out += svg::text(x0 + bar_w, base + 16, r.language);
  }
  out += "<rect x=\"" + svg::f2(left) + "\" y=\"" + svg::f2(h - 22) + "\" width=\"10\" height=\"10\" fill=\"#4c72b0\"/>\n";
  out += svg::text(left + 14, h - 13, "real", "start", 10);
  out += "<rect x=\"" + svg::f2(left + 60) + "\" y=\"" + svg::f2(h - 22) + "\" width=\"10\" height=\"10\" fill=\"#dd8452\"/>\n";
  out += svg::text(left + 74, h - 13, "synthetic", "start", 10);
  out += "</svg>\n";
  return out;
}

// Log-scaled Norm_I on x, WER delta on y, and a vertical rule at the gate
// threshold.
inline std::string scatter_svg(const std::vector<ScatterPoint>& pts, double threshold) {
  const double left = 70, top = 40, pw = 420, ph = 280;
  const double w = left + pw + 30, h = top + ph + 60;
  double xmin = std::min(threshold, 1e-3), xmax = std::exp(1.0);
  double ymin = 0, ymax = 0;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.norm_i);
    xmax = std::max(xmax, p.norm_i);
    ymin = std::min(ymin, p.delta_wer);
    ymax = std::max(ymax, p.delta_wer);
  }
  const double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
  if (ymax - ymin <= 0) {
    ymin -= 1;
    ymax += 1;
  }
  const double pad = (ymax - ymin) * 0.05;
  ymin -= pad;
  ymax += pad;
  auto X = [&](double v) { return left + pw * (std::log10(v) - lx0) / (lx1 - lx0); };
  auto Y = [&](double v) { return top + ph * (ymax - v) / (ymax - ymin); };

  std::string out = svg::open(w, h);
  out += svg::text(w / 2, 20, "Norm_I vs WER delta", "middle", 14);
  out += svg::line(left, top + ph, left + pw, top + ph, "stroke=\"black\"");
  out += svg::line(left, top, left, top + ph, "stroke=\"black\"");
  for (double e = lx0; e <= lx1; e += 1) {
    const double x = X(std::pow(10.0, e));
    out += svg::line(x, top + ph, x, top + ph + 4, "stroke=\"black\"");
    out += svg::text(x, top + ph + 16, "1e" + std::to_string(static_cast<int>(e)), "middle", 10);
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    out += svg::line(left - 4, Y(v), left, Y(v), "stroke=\"black\"");
    out += svg::text(left - 6, Y(v) + 4, svg::f2(v), "end", 10);
  }
  if (ymin < 0 && ymax > 0) out += svg::line(left, Y(0), left + pw, Y(0), "stroke=\"#999\" stroke-dasharray=\"2,2\"");
  const double tx = X(threshold);
  out += svg::line(tx, top, tx, top + ph, "stroke=\"#c44e52\" stroke-dasharray=\"6,4\" stroke-width=\"1.5\"");
  out += svg::text(tx + 4, top + 12, "Norm_I = " + format_number(threshold), "start", 10);
  for (const auto& p : pts) {
    out += "<circle cx=\"" + svg::f2(X(p.norm_i)) + "\" cy=\"" + svg::f2(Y(p.delta_wer)) +
           "\" r=\"4\" fill=\"#4c72b0\"><title>" + svg::esc(p.label) + "</title></circle>\n";
  }
  out += svg::text(left + pw / 2, h - 14, "Norm_I (log scale)", "middle", 11);
  out += "</svg>\n";
  return out;
}

struct ReportImports {
  std::optional<fs::path> hours_csv;
  std::optional<fs::path> scatter_csv;
  std::optional<fs::path> wer_csv;
};

struct ReportResult {
  std::vector<std::string> warnings;
  HoursTable hours;
  std::vector<GateRow> gates;
};

inline std::vector<GateRow> load_gate_reports(const fs::path& gate_dir) {
  std::vector<GateRow> out;
  if (!fs::is_directory(gate_dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(gate_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto j = nlohmann::json::parse(io::read_file(f));
    if (j.value("schema", "") != metrics::kReportSchema) continue;
    out.push_back({j.value("checkpoint", ""), metrics::report_from_json(j)});
  }
  return out;
}

// Renders everything under out_dir. Run data (plan, gate reports, manifest)
// is read from run_dir when present; imports replace or add to it.
inline ReportResult write_report(const fs::path& run_dir, const fs::path& out_dir, const ReportImports& imports,
                                 double threshold = metrics::kDefaultGateThreshold) {
  ReportResult res;
  const fs::path plan_file = run_dir / "04-plan" / "plan.json";
  const fs::path manifest_file = run_dir / "06-synth" / "manifest.jsonl";
  const bool have_plan = fs::exists(plan_file), have_manifest = fs::exists(manifest_file);
  res.gates = load_gate_reports(run_dir / "05-gate");
  if (!have_plan && !have_manifest && res.gates.empty() && !imports.hours_csv && !imports.scatter_csv &&
      !imports.wer_csv) {
    throw Error(ErrorCode::kMissingRunData, "no plan, gate reports, manifest or imported tables under " + run_dir.string());
  }

  if (imports.hours_csv) {
    res.hours = load_hours_csv(*imports.hours_csv);
  } else {
    if (have_plan) res.hours = hours_from_plan(sched::plan_from_json(nlohmann::json::parse(io::read_file(plan_file))));
    if (have_manifest) add_manifest(res.hours, read_manifest(manifest_file));
  }
  std::optional<CsvTable> wer;
  if (imports.wer_csv) wer = read_csv(*imports.wer_csv);
  std::vector<ScatterPoint> pts;
  if (imports.scatter_csv) pts = load_scatter_csv(*imports.scatter_csv);

  io::write_file_atomic(out_dir / "hours.csv", hours_csv(res.hours, &res.warnings));
  io::write_file_atomic(out_dir / "gate.csv", gate_csv(res.gates));
  io::write_file_atomic(out_dir / "wer_delta.csv", wer_delta_csv(wer));
  io::write_file_atomic(out_dir / "scatter.csv", scatter_csv(pts));
  io::write_file_atomic(out_dir / "hours.svg", hours_svg(res.hours));
  io::write_file_atomic(out_dir / "norm_i_scatter.svg", scatter_svg(pts, threshold));
  nlohmann::json w = res.warnings;
  io::write_json(out_dir / "warnings.json", w);
  return res;
}

}  // namespace speechbt::pipeline
