#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "pcil/errors.hpp"
#include "pcil/textio.hpp"

namespace pcil {

// Hand-emitted SVG line chart. Output is a pure function of the added series,
// so identical inputs give byte-identical files; that is the property the
// plotting tests pin down.
class LineChart {
 public:
  LineChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add_series(const std::string& label, std::vector<double> x, std::vector<double> y) {
    if (x.empty() || x.size() != y.size()) {
      throw DimensionError("chart series '" + label + "': x and y must be equal-length and non-empty");
    }
    for (double v : x)
      if (!std::isfinite(v)) throw NumericError("chart series '" + label + "': non-finite x");
    for (double v : y)
      if (!std::isfinite(v)) throw NumericError("chart series '" + label + "': non-finite y");
    series_.push_back({label, std::move(x), std::move(y)});
  }

  void render(std::ostream& out) const {
    if (series_.empty()) throw PreconditionError("chart has no series");
    double x_lo, x_hi, y_lo, y_hi;
    data_range(x_lo, x_hi, y_lo, y_hi);
    const auto x_ticks = nice_ticks(x_lo, x_hi);
    const auto y_ticks = nice_ticks(y_lo, y_hi);
    x_lo = std::min(x_lo, x_ticks.front());
    x_hi = std::max(x_hi, x_ticks.back());
    y_lo = std::min(y_lo, y_ticks.front());
    y_hi = std::max(y_hi, y_ticks.back());

    const double px0 = 62, px1 = 622, py0 = 30, py1 = 356;
    const auto sx = [&](double v) { return px0 + (v - x_lo) / (x_hi - x_lo) * (px1 - px0); };
    const auto sy = [&](double v) { return py1 - (v - y_lo) / (y_hi - y_lo) * (py1 - py0); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
           "viewBox=\"0 0 640 420\">\n";
    out << "<rect width=\"640\" height=\"420\" fill=\"#ffffff\"/>\n";
    out << "<text x=\"342\" y=\"18\" text-anchor=\"middle\" font-family=\"monospace\" "
           "font-size=\"14\">"
        << escape(title_) << "</text>\n";

    for (double t : y_ticks) {
      const std::string y = num(sy(t));
      out << "<line x1=\"" << num(px0) << "\" y1=\"" << y << "\" x2=\"" << num(px1) << "\" y2=\""
          << y << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
      out << "<text x=\"" << num(px0 - 6) << "\" y=\"" << num(sy(t) + 4)
          << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">"
          << tick_label(t, y_ticks) << "</text>\n";
    }
    for (double t : x_ticks) {
      const std::string x = num(sx(t));
      out << "<line x1=\"" << x << "\" y1=\"" << num(py1) << "\" x2=\"" << x << "\" y2=\""
          << num(py1 + 4) << "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
      out << "<text x=\"" << x << "\" y=\"" << num(py1 + 18)
          << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">"
          << tick_label(t, x_ticks) << "</text>\n";
    }
    out << "<rect x=\"" << num(px0) << "\" y=\"" << num(py0) << "\" width=\"" << num(px1 - px0)
        << "\" height=\"" << num(py1 - py0)
        << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    out << "<text x=\"342\" y=\"396\" text-anchor=\"middle\" font-family=\"monospace\" "
           "font-size=\"12\">"
        << escape(x_label_) << "</text>\n";
    out << "<text x=\"16\" y=\"193\" text-anchor=\"middle\" font-family=\"monospace\" "
           "font-size=\"12\" transform=\"rotate(-90 16 193)\">"
        << escape(y_label_) << "</text>\n";

    for (std::size_t s = 0; s < series_.size(); ++s) {
      const auto& sr = series_[s];
      const std::string color = kPalette[s % kPaletteSize];
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        if (i) out << ' ';
        out << num(sx(sr.x[i])) << ',' << num(sy(sr.y[i]));
      }
      out << "\"/>\n";
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        out << "<circle cx=\"" << num(sx(sr.x[i])) << "\" cy=\"" << num(sy(sr.y[i]))
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
      const double ly = py0 + 8 + 16 * static_cast<double>(s);
      out << "<line x1=\"" << num(px1 - 150) << "\" y1=\"" << num(ly) << "\" x2=\""
          << num(px1 - 126) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
          << "\" stroke-width=\"1.5\"/>\n";
      out << "<text x=\"" << num(px1 - 120) << "\" y=\"" << num(ly + 4)
          << "\" font-family=\"monospace\" font-size=\"11\">" << escape(sr.label) << "</text>\n";
    }
    out << "</svg>\n";
  }

 private:
  struct Series {
    std::string label;
    std::vector<double> x, y;
  };

  static constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                             "#ff7f0e", "#9467bd", "#8c564b"};
  static constexpr std::size_t kPaletteSize = 6;

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
  }

  // Decimals follow the tick spacing, hiding binary dust like 3 * 0.2.
  static std::string tick_label(double t, const std::vector<double>& ticks) {
    const double step = ticks.size() > 1 ? ticks[1] - ticks[0] : 1.0;
    const int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(step) + 1e-9)));
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, t);
    return buf;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '&') out += "&amp;";
      else if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '"') out += "&quot;";
      else out += c;
    }
    return out;
  }

  void data_range(double& x_lo, double& x_hi, double& y_lo, double& y_hi) const {
    x_lo = y_lo = std::numeric_limits<double>::infinity();
    x_hi = y_hi = -std::numeric_limits<double>::infinity();
    for (const auto& sr : series_) {
      for (double v : sr.x) {
        x_lo = std::min(x_lo, v);
        x_hi = std::max(x_hi, v);
      }
      for (double v : sr.y) {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
      }
    }
    if (x_lo == x_hi) {
      x_lo -= 0.5;
      x_hi += 0.5;
    }
    if (y_lo == y_hi) {
      y_lo -= 0.5;
      y_hi += 0.5;
    }
  }

  // Round tick spacing to 1/2/5 times a power of ten, covering the range with
  // at most six intervals.
  static std::vector<double> nice_ticks(double lo, double hi) {
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = 10.0 * mag;
    for (double m : {1.0, 2.0, 5.0}) {
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    }
    const double first = std::floor(lo / step) * step;
    std::vector<double> ticks;
    for (double t = first; t < hi + step * 0.5; t += step) {
      // snap values like 0.60000000000000009 back onto the grid
      ticks.push_back(std::round(t / step) * step);
    }
    return ticks;
  }
};

}  // namespace pcil
