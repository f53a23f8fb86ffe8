#include <algorithm>
#include <cstdio>
#include <ostream>

#include "isoface/metrics.hpp"

namespace isoface {

namespace {

constexpr int kW = 480, kH = 360, kPad = 40;

void header(std::ostream& os) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << ' ' << kH
     << "\">\n"
     << "<rect width=\"" << kW << "\" height=\"" << kH
     << "\" fill=\"white\"/>\n"
     << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\""
     << kW - 2 * kPad << "\" height=\"" << kH - 2 * kPad
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
}

double px(double t) { return kPad + t * (kW - 2 * kPad); }
double py(double t) { return kH - kPad - t * (kH - 2 * kPad); }

void fmt(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  os << buf;
}

}  // namespace

void roc_svg(const RocCurve& curve, std::ostream& os) {
  header(os);
  os << "<polyline fill=\"none\" stroke=\"#bbb\" stroke-dasharray=\"4\" "
        "points=\"";
  fmt(os, px(0));
  os << ',';
  fmt(os, py(0));
  os << ' ';
  fmt(os, px(1));
  os << ',';
  fmt(os, py(1));
  os << "\"/>\n<polyline fill=\"none\" stroke=\"#c00\" stroke-width=\"2\" "
        "points=\"";
  for (const auto& p : curve.points) {
    fmt(os, px(p.far));
    os << ',';
    fmt(os, py(p.tar));
    os << ' ';
  }
  os << "\"/>\n<text x=\"" << kW / 2 << "\" y=\"" << kH - 8
     << "\" text-anchor=\"middle\" font-size=\"14\">FAR</text>\n"
     << "<text x=\"14\" y=\"" << kH / 2
     << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 "
        "14 "
     << kH / 2 << ")\">TAR</text>\n</svg>\n";
}

void histogram_svg(const ScoreHistogram& h, std::ostream& os) {
  header(os);
  const std::size_t n = h.genuine.size();
  double peak = 1e-12;
  for (std::size_t i = 0; i < n; ++i)
    peak = std::max({peak, h.genuine[i], h.impostor[i]});

  auto bars = [&](const std::vector<double>& v, const char* color,
                  double shift) {
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] <= 0.0) continue;
      const double x0 = px(double(i) / double(n)) + shift;
      const double w = (px(1.0 / double(n)) - px(0.0)) * 0.42;
      const double y1 = py(v[i] / peak);
      os << "<rect x=\"";
      fmt(os, x0);
      os << "\" y=\"";
      fmt(os, y1);
      os << "\" width=\"";
      fmt(os, std::max(w, 1.0));
      os << "\" height=\"";
      fmt(os, py(0.0) - y1);
      os << "\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
    }
  };
  bars(h.genuine, "#2a7", 0.0);
  bars(h.impostor, "#c33", (px(1.0 / double(n)) - px(0.0)) * 0.45);
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8
     << "\" text-anchor=\"middle\" font-size=\"14\">anomaly score (";
  fmt(os, h.lo);
  os << " to ";
  fmt(os, h.hi);
  os << ")</text>\n</svg>\n";
}

void histogram_csv(const ScoreHistogram& h, std::ostream& os) {
  os << "bin_lo,bin_hi,genuine,impostor\n";
  const std::size_t n = h.genuine.size();
  const double width = n > 0 && h.hi > h.lo ? (h.hi - h.lo) / double(n) : 0.0;
  char buf[128];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n",
                  h.lo + width * double(i), h.lo + width * double(i + 1),
                  h.genuine[i], h.impostor[i]);
    os << buf;
  }
}

}  // namespace isoface
