#include "flsim/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace flsim {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#ff7f0e", "#9467bd", "#8c564b",
                                    "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// round the raw span to a 1/2/5 * 10^k tick step
double nice_step(double span, int target_ticks) {
  if (span <= 0) return 1.0;
  const double raw = span / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  double step = 10.0;
  if (r <= 1.0) step = 1.0;
  else if (r <= 2.0) step = 2.0;
  else if (r <= 5.0) step = 5.0;
  return step * mag;
}

struct Range {
  double lo, hi;
  double map(double v, double a, double b) const {
    if (hi == lo) return (a + b) / 2;
    return a + (v - lo) / (hi - lo) * (b - a);
  }
};

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series) {
  if (series.empty())
    throw std::invalid_argument("write_line_chart: no series");

  const double W = 840, H = 520;
  const double L = 70, R = 20, T = 40, B = 55;

  Range xr{1e300, -1e300}, yr{1e300, -1e300};
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      xr.lo = std::min(xr.lo, s.xs[i]);
      xr.hi = std::max(xr.hi, s.xs[i]);
      yr.lo = std::min(yr.lo, s.ys[i]);
      yr.hi = std::max(yr.hi, s.ys[i]);
    }
  if (xr.lo > xr.hi) { xr = {0, 1}; yr = {0, 1}; }
  if (yr.lo == yr.hi) { yr.lo -= 0.5; yr.hi += 0.5; }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n";

  out << "<!-- data\n";
  for (const auto& s : series) {
    out << "# " << s.label << "\n";
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      out << num(s.xs[i]) << "\t" << num(s.ys[i]) << "\n";
  }
  out << "-->\n";

  out << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

  // axes
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";

  const double xstep = nice_step(xr.hi - xr.lo, 8);
  for (double v = std::ceil(xr.lo / xstep) * xstep; v <= xr.hi + 1e-9;
       v += xstep) {
    const double px = xr.map(v, L, W - R);
    out << "<line x1=\"" << num(px) << "\" y1=\"" << H - B << "\" x2=\""
        << num(px) << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(px) << "\" y=\"" << H - B + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(v) << "</text>\n";
  }
  const double ystep = nice_step(yr.hi - yr.lo, 6);
  for (double v = std::ceil(yr.lo / ystep) * ystep; v <= yr.hi + 1e-9;
       v += ystep) {
    const double py = yr.map(v, H - B, T);
    out << "<line x1=\"" << L - 5 << "\" y1=\"" << num(py) << "\" x2=\"" << L
        << "\" y2=\"" << num(py) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << num(py) << "\" x2=\"" << W - R
        << "\" y2=\"" << num(py)
        << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    out << "<text x=\"" << L - 8 << "\" y=\"" << num(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(v) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << xlabel << "</text>\n";
  out << "<text x=\"18\" y=\"" << (T + H - B) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % kPaletteSize];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      out << num(xr.map(s.xs[i], L, W - R)) << ","
          << num(yr.map(s.ys[i], H - B, T)) << " ";
    }
    out << "\"/>\n";
    // legend
    const double ly = T + 16 + 18 * static_cast<double>(si);
    out << "<line x1=\"" << W - R - 150 << "\" y1=\"" << ly << "\" x2=\""
        << W - R - 125 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R - 120 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

void write_heatmap(const std::string& path, const std::string& title,
                   const Eigen::MatrixXd& values) {
  const int n = static_cast<int>(values.rows());
  if (n == 0 || values.cols() != n)
    throw std::invalid_argument("write_heatmap: need a square matrix");

  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::isfinite(values(i, j))) {
        lo = std::min(lo, values(i, j));
        hi = std::max(hi, values(i, j));
      }
  if (lo > hi) { lo = 0; hi = 1; }
  if (lo == hi) hi = lo + 1;

  const double cell = std::max(12.0, 480.0 / n);
  const double L = 60, T = 50;
  const double W = L + n * cell + 110, H = T + n * cell + 40;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n";
  out << "<!-- data\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out << num(values(i, j)) << (j + 1 < n ? "\t" : "");
    out << "\n";
  }
  out << "-->\n";
  out << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::string fill = "#bbbbbb";
      if (std::isfinite(values(i, j))) {
        const double f = (values(i, j) - lo) / (hi - lo);
        // white -> dark blue ramp
        const int r = static_cast<int>(255 - 200 * f);
        const int g = static_cast<int>(255 - 170 * f);
        const int b = 255;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
        fill = buf;
      }
      out << "<rect x=\"" << num(L + j * cell) << "\" y=\""
          << num(T + i * cell) << "\" width=\"" << num(cell) << "\" height=\""
          << num(cell) << "\" fill=\"" << fill
          << "\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>\n";
    }
  for (int i = 0; i < n; ++i) {
    out << "<text x=\"" << L - 6 << "\" y=\"" << num(T + (i + 0.65) * cell)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << i << "</text>\n";
    out << "<text x=\"" << num(L + (i + 0.5) * cell) << "\" y=\"" << T - 6
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << i << "</text>\n";
  }
  // color scale
  const double bx = L + n * cell + 20;
  for (int s = 0; s < 100; ++s) {
    const double f = 1.0 - s / 99.0;
    const int r = static_cast<int>(255 - 200 * f);
    const int g = static_cast<int>(255 - 170 * f);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02xff", r, g);
    out << "<rect x=\"" << num(bx) << "\" y=\"" << num(T + s * n * cell / 100)
        << "\" width=\"16\" height=\"" << num(n * cell / 100 + 0.5)
        << "\" fill=\"" << buf << "\"/>\n";
  }
  out << "<text x=\"" << num(bx + 22) << "\" y=\"" << T + 10
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << num(hi)
      << "</text>\n";
  out << "<text x=\"" << num(bx + 22) << "\" y=\"" << num(T + n * cell)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << num(lo)
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace flsim
