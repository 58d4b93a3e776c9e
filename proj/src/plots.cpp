// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/plots.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <vector>

namespace lyricsync {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
constexpr double kPlotW = kWidth - kLeft - kRight, kPlotH = kHeight - kTop - kBottom;

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string Escape(const std::string& s) {
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

// Frame, title, axis labels and tick labels for x in [x0, x1], y in [y0, y1].
void Axes(std::ostringstream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel,
          double x0, double x1, double y0, double y1) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << Escape(title)
     << "</text>\n"
     << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW << "\" height=\"" << kPlotH
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = i / 4.0;
    const double x = kLeft + fx * kPlotW, y = kTop + kPlotH - fx * kPlotH;
    os << "<text x=\"" << x << "\" y=\"" << kTop + kPlotH + 16 << "\" text-anchor=\"middle\">"
       << Num(x0 + fx * (x1 - x0)) << "</text>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << Num(y0 + fx * (y1 - y0))
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
     << Escape(xlabel) << "</text>\n"
     << "<text x=\"16\" y=\"" << kTop + kPlotH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << kTop + kPlotH / 2 << ")\">" << Escape(ylabel) << "</text>\n";
}

void Polyline(std::ostringstream& os, const std::vector<std::pair<double, double>>& pts, double x0, double x1,
              double y0, double y1, const char* color, const char* label, int legend_row) {
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : pts) {
    os << Num(kLeft + (x - x0) / (x1 - x0) * kPlotW) << ',' << Num(kTop + kPlotH - (y - y0) / (y1 - y0) * kPlotH)
       << ' ';
  }
  os << "\"/>\n";
  if (label) {
    const double ly = kTop + 14 + 16 * legend_row;
    os << "<line x1=\"" << kLeft + kPlotW - 110 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + kPlotW - 90
       << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << kLeft + kPlotW - 84 << "\" y=\"" << ly << "\">" << label << "</text>\n";
  }
}

}  // namespace

std::string HistogramSvg(const DeviationHistogram& h, const std::string& title) {
  std::ostringstream os;
  const int n = static_cast<int>(h.counts.size());
  long peak = std::max(h.underflow, h.overflow);
  for (long c : h.counts) peak = std::max(peak, c);
  peak = std::max<long>(peak, 1);
  Axes(os, title, "deviation t_pred - t_ref (s)", "words", -h.range, h.range, 0, static_cast<double>(peak));
  const double bw = n > 0 ? kPlotW / n : kPlotW;
  auto bar = [&](double x, double w, long count, const char* color) {
    const double bh = static_cast<double>(count) / peak * kPlotH;
    os << "<rect x=\"" << Num(x) << "\" y=\"" << Num(kTop + kPlotH - bh) << "\" width=\"" << Num(w) << "\" height=\""
       << Num(bh) << "\" fill=\"" << color << "\"/>\n";
  };
  for (int i = 0; i < n; ++i) bar(kLeft + i * bw, bw * 0.9, h.counts[static_cast<size_t>(i)], "steelblue");
  if (h.underflow) bar(kLeft, bw * 0.5, h.underflow, "firebrick");
  if (h.overflow) bar(kLeft + kPlotW - bw * 0.5, bw * 0.5, h.overflow, "firebrick");
  os << "</svg>\n";
  return os.str();
}

std::string ThresholdSvg(std::span<const TriageRow> rows, const std::string& title) {
  std::ostringstream os;
  double x1 = 1.0;
  for (const auto& r : rows) x1 = std::max(x1, r.threshold);
  Axes(os, title, "confidence threshold", "score", 0, x1, 0, 1);
  std::vector<std::pair<double, double>> p, r, f;
  for (const auto& row : rows) {
    p.emplace_back(row.threshold, row.precision);
    r.emplace_back(row.threshold, row.recall);
    f.emplace_back(row.threshold, row.f1);
  }
  Polyline(os, p, 0, x1, 0, 1, "steelblue", "precision", 0);
  Polyline(os, r, 0, x1, 0, 1, "darkorange", "recall", 1);
  Polyline(os, f, 0, x1, 0, 1, "forestgreen", "F1", 2);
  os << "</svg>\n";
  return os.str();
}

std::string PrCurveSvg(std::span<const TriageRow> rows, const std::string& title) {
  std::ostringstream os;
  Axes(os, title, "recall", "precision", 0, 1, 0, 1);
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : rows) pts.emplace_back(row.recall, row.precision);
  std::sort(pts.begin(), pts.end());
  Polyline(os, pts, 0, 1, 0, 1, "steelblue", nullptr, 0);
  os << "</svg>\n";
  return os.str();
}

}  // namespace lyricsync
