// Copyright 2026 The vpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "vpleak/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace vpleak {
namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 160;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void Add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void Finish() {
    if (lo > hi) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

class Canvas {
 public:
  Canvas(const PlotLabels& labels, Range x, Range y) : x_(x), y_(y) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
         << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
         << Escape(labels.title) << "</text>\n";
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    out_ << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0
         << "\" height=\"" << y0 - y1 << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double xv = x_.lo + (x_.hi - x_.lo) * i / 4.0;
      const double yv = y_.lo + (y_.hi - y_.lo) * i / 4.0;
      out_ << "<text x=\"" << Num(X(xv)) << "\" y=\"" << y0 + 18
           << "\" text-anchor=\"middle\">" << Num(xv) << "</text>\n";
      out_ << "<text x=\"" << x0 - 6 << "\" y=\"" << Num(Y(yv) + 4)
           << "\" text-anchor=\"end\">" << Num(yv) << "</text>\n";
    }
    out_ << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 18
         << "\" text-anchor=\"middle\">" << Escape(labels.x_label) << "</text>\n";
    out_ << "<text transform=\"translate(18," << (y0 + y1) / 2
         << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(labels.y_label)
         << "</text>\n";
  }

  double X(double v) const {
    return kLeft + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - kRight - kLeft);
  }
  double Y(double v) const {
    return kHeight - kBottom - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - kBottom - kTop);
  }

  std::ostringstream& out() { return out_; }

  void Legend(size_t index, const std::string& name, const char* color) {
    const double y = kTop + 16 + 18 * static_cast<double>(index);
    const double x = kWidth - kRight + 12;
    out_ << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
         << color << "\"/>\n<text x=\"" << x + 18 << "\" y=\"" << y + 1 << "\">"
         << Escape(name) << "</text>\n";
  }

  std::string Finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  Range x_, y_;
  std::ostringstream out_;
};

}  // namespace

std::string LinePlotSvg(const PlotLabels& labels, const std::vector<Series>& series) {
  Range x, y;
  for (const Series& s : series) {
    for (double v : s.x) x.Add(v);
    for (double v : s.y) y.Add(v);
  }
  x.Finish();
  y.Finish();
  Canvas canvas(labels, x, y);
  for (size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    const Series& s = series[k];
    std::string points;
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      points += Num(canvas.X(s.x[i])) + "," + Num(canvas.Y(s.y[i])) + " ";
      canvas.out() << "<circle cx=\"" << Num(canvas.X(s.x[i])) << "\" cy=\""
                   << Num(canvas.Y(s.y[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    canvas.out() << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
                 << points << "\"/>\n";
    canvas.Legend(k, s.name, color);
  }
  return canvas.Finish();
}

std::string ScatterPlotSvg(const PlotLabels& labels, const Series& points,
                           const std::string& note) {
  Range x, y;
  for (double v : points.x) x.Add(v);
  for (double v : points.y) y.Add(v);
  x.Finish();
  y.Finish();
  Canvas canvas(labels, x, y);
  for (size_t i = 0; i < points.x.size() && i < points.y.size(); ++i) {
    canvas.out() << "<circle cx=\"" << Num(canvas.X(points.x[i])) << "\" cy=\""
                 << Num(canvas.Y(points.y[i])) << "\" r=\"4\" fill=\"" << kPalette[0]
                 << "\" fill-opacity=\"0.7\"/>\n";
  }
  canvas.out() << "<text x=\"" << kWidth - kRight + 12 << "\" y=\"" << kTop + 16 << "\">"
               << Escape(note) << "</text>\n";
  return canvas.Finish();
}

std::string HeatmapSvg(const PlotLabels& labels, const std::vector<std::string>& rows,
                       const std::vector<std::string>& cols,
                       const std::vector<std::vector<double>>& cells) {
  const double cell = 64;
  const double left = 160, top = 60;
  const double width = left + cell * static_cast<double>(cols.size()) + 40;
  const double height = top + cell * static_cast<double>(rows.size()) + 60;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << Escape(labels.title) << "</text>\n";
  for (size_t r = 0; r < rows.size(); ++r) {
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * (r + 0.5) + 4
        << "\" text-anchor=\"end\">" << Escape(rows[r]) << "</text>\n";
    for (size_t c = 0; c < cols.size(); ++c) {
      const double v = r < cells.size() && c < cells[r].size() ? cells[r][c] : 0.0;
      const int shade = static_cast<int>(std::lround(255 * (1.0 - std::clamp(v, 0.0, 1.0))));
      out << "<rect x=\"" << left + cell * c << "\" y=\"" << top + cell * r << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade
          << ",255)\" stroke=\"white\"/>\n"
          << "<text x=\"" << left + cell * (c + 0.5) << "\" y=\"" << top + cell * (r + 0.5) + 4
          << "\" text-anchor=\"middle\">" << Num(100.0 * v) << "</text>\n";
    }
  }
  for (size_t c = 0; c < cols.size(); ++c) {
    out << "<text x=\"" << left + cell * (c + 0.5) << "\" y=\"" << top - 8
        << "\" text-anchor=\"middle\">" << Escape(cols[c]) << "</text>\n";
  }
  out << "<text x=\"" << left + cell * cols.size() / 2 << "\" y=\"" << height - 20
      << "\" text-anchor=\"middle\">" << Escape(labels.x_label) << " (columns), "
      << Escape(labels.y_label) << " (rows)</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace vpleak
