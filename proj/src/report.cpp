// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "csifb/harness.hpp"

namespace csifb {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string cr_text(double cr) {
  const double inv = 1.0 / cr;
  if (std::abs(inv - std::round(inv)) < 1e-9) return "1/" + std::to_string(std::lround(inv));
  return fmt(cr, 3);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

struct Range {
  double lo, hi;
};

// Padded dB range covering all values, rounded outward to whole decibels.
Range db_range(const std::vector<double>& values) {
  double lo = 0, hi = 0;
  bool any = false;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = any ? std::min(lo, v) : v;
    hi = any ? std::max(hi, v) : v;
    any = true;
  }
  if (!any) return {-1, 0};
  lo = std::floor(lo - 1);
  hi = std::ceil(hi + 1);
  return {lo, hi};
}

class Svg {
 public:
  explicit Svg(const std::string& title) {
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(kWidth / 2 - kRight / 2 + kLeft / 2, 22, escape(title), "middle", 14);
  }
  void line(double x1, double y1, double x2, double y2, const std::string& color, double w = 1) {
    os_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\""
        << fmt(y2) << "\" stroke=\"" << color << "\" stroke-width=\"" << w << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
    os_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor
        << "\" font-size=\"" << size << "\">" << s << "</text>\n";
  }
  void circle(double x, double y, const std::string& color) {
    os_ << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& color) {
    os_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\""
        << fmt(h) << "\" fill=\"" << color << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) os_ << fmt(x) << ',' << fmt(y) << ' ';
    os_ << "\"/>\n";
  }
  // Axes frame with horizontal dB grid; returns the y mapping.
  void db_axis(Range r, const std::string& label) {
    const double plot_h = kHeight - kTop - kBottom;
    const double step = std::max(1.0, std::ceil((r.hi - r.lo) / 8));
    for (double v = r.lo; v <= r.hi + 1e-9; v += step) {
      const double y = kTop + (r.hi - v) / (r.hi - r.lo) * plot_h;
      line(kLeft, y, kWidth - kRight, y, "#dddddd");
      text(kLeft - 6, y + 4, fmt(v, 0), "end");
    }
    line(kLeft, kTop, kLeft, kHeight - kBottom, "black");
    line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, "black");
    os_ << "<text x=\"18\" y=\"" << fmt(kTop + plot_h / 2) << "\" transform=\"rotate(-90 18 "
        << fmt(kTop + plot_h / 2) << ")\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
  }
  std::string str() const { return os_.str() + "</svg>\n"; }

 private:
  std::ostringstream os_;
};

double y_of(double db, Range r) {
  return kTop + (r.hi - db) / (r.hi - r.lo) * (kHeight - kTop - kBottom);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

bool is_aug_row(const ResultRow& r) { return r.method.rfind("aug-", 0) == 0; }

std::string cr_chart(const std::vector<ResultRow>& rows, const std::string& scenario) {
  const auto axis = chart_cr_axis(rows, scenario);
  std::map<std::string, std::map<double, double>> series;  // method -> cr -> dB
  std::vector<double> values;
  for (const auto& r : rows) {
    if (r.scenario != scenario || is_aug_row(r)) continue;
    series[r.method][r.cr] = r.nmse_db;
    values.push_back(r.nmse_db);
  }
  const Range range = db_range(values);
  Svg svg("NMSE vs CR: " + scenario);
  svg.db_axis(range, "NMSE (dB)");
  const double plot_w = kWidth - kLeft - kRight;
  auto x_of = [&](double cr) {
    const auto it = std::find(axis.begin(), axis.end(), cr);
    const auto k = static_cast<double>(it - axis.begin());
    return axis.size() == 1 ? kLeft + plot_w / 2 : kLeft + 20 + k * (plot_w - 40) / static_cast<double>(axis.size() - 1);
  };
  for (double cr : axis) svg.text(x_of(cr), kHeight - kBottom + 18, cr_text(cr), "middle");
  svg.text(kLeft + plot_w / 2, kHeight - 16, "compression ratio", "middle");
  std::size_t k = 0;
  for (const auto& [method, pts] : series) {
    const std::string color = kPalette[k % std::size(kPalette)];
    std::vector<std::pair<double, double>> poly;
    for (const auto& [cr, db] : pts) {
      if (!std::isfinite(db)) continue;
      poly.emplace_back(x_of(cr), y_of(db, range));
      svg.circle(x_of(cr), y_of(db, range), color);
    }
    if (poly.size() > 1) svg.polyline(poly, color);
    const double ly = kTop + 10 + 18 * static_cast<double>(k);
    svg.line(kWidth - kRight + 12, ly, kWidth - kRight + 32, ly, color, 2);
    svg.text(kWidth - kRight + 38, ly + 4, escape(method));
    ++k;
  }
  return svg.str();
}

std::string aug_chart(const std::vector<ResultRow>& rows) {
  std::vector<const ResultRow*> bars;
  std::vector<double> values;
  for (const auto& r : rows) {
    if (!is_aug_row(r)) continue;
    bars.push_back(&r);
    values.push_back(r.nmse_db);
  }
  Range range = db_range(values);
  range.hi = std::max(range.hi, 0.0);
  Svg svg("Augmentation study (held-out NMSE)");
  svg.db_axis(range, "NMSE (dB)");
  const double plot_w = kWidth - kLeft - kRight;
  const double slot = plot_w / static_cast<double>(bars.size());
  const double zero_y = y_of(std::min(0.0, range.hi), range);
  for (std::size_t k = 0; k < bars.size(); ++k) {
    const auto& r = *bars[k];
    const double x = kLeft + slot * static_cast<double>(k) + slot * 0.15;
    const double y = std::isfinite(r.nmse_db) ? y_of(r.nmse_db, range) : zero_y;
    svg.rect(x, std::min(y, zero_y), slot * 0.7, std::abs(y - zero_y), kPalette[k % std::size(kPalette)]);
    svg.text(x + slot * 0.35, std::max(y, zero_y) + 14, fmt(r.nmse_db, 1), "middle");
    const double ly = kTop + 10 + 18 * static_cast<double>(k);
    svg.rect(kWidth - kRight + 12, ly - 6, 12, 12, kPalette[k % std::size(kPalette)]);
    svg.text(kWidth - kRight + 30, ly + 4, escape(r.method + " (CR " + cr_text(r.cr) + ")"));
  }
  return svg.str();
}

}  // namespace

std::vector<double> chart_cr_axis(const std::vector<ResultRow>& rows, const std::string& scenario) {
  std::set<double> crs;
  for (const auto& r : rows) {
    if (r.scenario == scenario && !is_aug_row(r)) crs.insert(r.cr);
  }
  return {crs.begin(), crs.end()};
}

std::string summary_table(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-8s %-18s %-20s %12s %10s %10s %10s\n", "experiment", "cr",
                "scenario", "method", "nmse", "nmse_db", "params", "time_s");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %-8s %-18s %-20s %12.5g %10.2f %10zu %10.1f\n",
                  r.experiment_id.c_str(), cr_text(r.cr).c_str(), r.scenario.c_str(), r.method.c_str(),
                  r.nmse_linear, r.nmse_db, r.params_updated, r.wall_time_s);
    os << line;
  }
  os << rows.size() << " row(s)\n";
  return os.str();
}

ReportSummary report(const std::vector<ResultRow>& rows, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  ReportSummary out;
  out.rows = rows.size();
  std::set<std::string> scenarios;
  for (const auto& r : rows) {
    if (!is_aug_row(r)) scenarios.insert(r.scenario);
  }
  for (const auto& s : scenarios) {
    const auto path = out_dir / ("nmse_vs_cr_" + safe_name(s) + ".svg");
    write_text(path, cr_chart(rows, s));
    out.charts.push_back(path);
  }
  if (std::any_of(rows.begin(), rows.end(), is_aug_row)) {
    const auto path = out_dir / "augmentation.svg";
    write_text(path, aug_chart(rows));
    out.charts.push_back(path);
  }
  out.summary = out_dir / "summary.txt";
  write_text(out.summary, summary_table(rows));
  return out;
}

ReportSummary report(const fs::path& results_csv, const fs::path& out_dir) {
  return report(read_results_csv(results_csv), out_dir);
}

}  // namespace csifb
