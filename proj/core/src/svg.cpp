#include "ibnn/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ibnn::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // "-0.00" and "0.00" must not differ between runs.
  if (std::string(buf) == "-0.00") return "0.00";
  return buf;
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

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  void pad(double frac) {
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double d = (hi - lo) * frac;
    lo -= d;
    hi += d;
  }
};

/// Maps data coordinates to a panel rectangle (y axis flipped).
struct Frame {
  double left, top, width, height;
  Range xr, yr;

  double px(double x) const { return left + (x - xr.lo) / (xr.hi - xr.lo) * width; }
  double py(double y) const { return top + height - (y - yr.lo) / (yr.hi - yr.lo) * height; }
};

void axes(std::ostringstream& out, const Frame& f, const std::string& title) {
  out << "<rect x=\"" << num(f.left) << "\" y=\"" << num(f.top) << "\" width=\"" << num(f.width)
      << "\" height=\"" << num(f.height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << num(f.left + f.width / 2) << "\" y=\"" << num(f.top - 8)
      << "\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.xr.lo + (f.xr.hi - f.xr.lo) * i / 4.0;
    const double yv = f.yr.lo + (f.yr.hi - f.yr.lo) * i / 4.0;
    out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(f.top + f.height + 16)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << num(xv) << "</text>\n";
    out << "<text x=\"" << num(f.left - 6) << "\" y=\"" << num(f.py(yv) + 3)
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(yv) << "</text>\n";
  }
}

std::string header(double width, double height) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height)
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out.str();
}

}  // namespace

std::string band_plot(const std::vector<Band>& bands, const Vector& train_x,
                      const Vector& train_y) {
  const double panel_w = 320, panel_h = 240, margin = 50;
  Range xr{1e300, -1e300}, yr{1e300, -1e300};
  for (const auto& b : bands) {
    if (b.x.size() == 0) continue;
    xr.lo = std::min(xr.lo, b.x.minCoeff());
    xr.hi = std::max(xr.hi, b.x.maxCoeff());
    yr.lo = std::min(yr.lo, (b.mean - 2.0 * b.std).minCoeff());
    yr.hi = std::max(yr.hi, (b.mean + 2.0 * b.std).maxCoeff());
  }
  if (train_y.size() > 0) {
    yr.lo = std::min(yr.lo, train_y.minCoeff());
    yr.hi = std::max(yr.hi, train_y.maxCoeff());
  }
  if (xr.lo > xr.hi) xr = {0.0, 1.0};
  if (yr.lo > yr.hi) yr = {0.0, 1.0};
  yr.pad(0.05);

  const double width = margin + bands.size() * (panel_w + margin);
  std::ostringstream out;
  out << header(std::max(width, 2 * margin), panel_h + 2 * margin);
  for (std::size_t k = 0; k < bands.size(); ++k) {
    const auto& b = bands[k];
    const Frame f{margin + k * (panel_w + margin), margin, panel_w, panel_h, xr, yr};
    axes(out, f, b.label);
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<path fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\" d=\"";
    for (Eigen::Index i = 0; i < b.x.size(); ++i) {
      out << (i == 0 ? 'M' : 'L') << num(f.px(b.x[i])) << ',' << num(f.py(b.mean[i] + 2 * b.std[i]));
    }
    for (Eigen::Index i = b.x.size(); i-- > 0;) {
      out << 'L' << num(f.px(b.x[i])) << ',' << num(f.py(b.mean[i] - 2 * b.std[i]));
    }
    out << "Z\"/>\n<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" d=\"";
    for (Eigen::Index i = 0; i < b.x.size(); ++i) {
      out << (i == 0 ? 'M' : 'L') << num(f.px(b.x[i])) << ',' << num(f.py(b.mean[i]));
    }
    out << "\"/>\n";
    for (Eigen::Index i = 0; i < train_x.size(); ++i) {
      if (train_x[i] < xr.lo || train_x[i] > xr.hi) continue;
      out << "<circle cx=\"" << num(f.px(train_x[i])) << "\" cy=\"" << num(f.py(train_y[i]))
          << "\" r=\"1.8\" fill=\"black\"/>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string pair_plot(const std::string& label_a, const std::string& label_b,
                      const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("pair_plot: series lengths differ");
  const double panel = 260, margin = 55;
  Range r{1e300, -1e300};
  for (std::size_t i = 0; i < a.size(); ++i) {
    r.lo = std::min({r.lo, a[i], b[i]});
    r.hi = std::max({r.hi, a[i], b[i]});
  }
  if (a.empty()) r = {0.0, 1.0};
  r.pad(0.05);

  std::ostringstream out;
  out << header(3 * margin + 2 * panel, panel + 2 * margin);
  const Frame sc{margin, margin, panel, panel, r, r};
  axes(out, sc, label_b + " vs " + label_a);
  out << "<line x1=\"" << num(sc.px(r.lo)) << "\" y1=\"" << num(sc.py(r.lo)) << "\" x2=\""
      << num(sc.px(r.hi)) << "\" y2=\"" << num(sc.py(r.hi))
      << "\" stroke=\"#888\" stroke-dasharray=\"4,3\"/>\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    out << "<circle cx=\"" << num(sc.px(a[i])) << "\" cy=\"" << num(sc.py(b[i]))
        << "\" r=\"3\" fill=\"" << kPalette[0] << "\"/>\n";
  }

  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = b[i] - a[i];
  Range dr{0.0, 0.0};
  if (!diff.empty()) {
    dr.lo = *std::min_element(diff.begin(), diff.end());
    dr.hi = *std::max_element(diff.begin(), diff.end());
  }
  if (!(dr.hi > dr.lo)) {
    dr.lo -= 0.5;
    dr.hi += 0.5;
  }
  constexpr int kBins = 12;
  std::vector<int> counts(kBins, 0);
  for (double d : diff) {
    int bin = static_cast<int>((d - dr.lo) / (dr.hi - dr.lo) * kBins);
    counts[static_cast<std::size_t>(std::clamp(bin, 0, kBins - 1))]++;
  }
  const int top = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const Frame hist{2 * margin + panel, margin, panel, panel, dr,
                   Range{0.0, static_cast<double>(top)}};
  axes(out, hist, label_b + " − " + label_a);
  for (int k = 0; k < kBins; ++k) {
    const double x0 = dr.lo + (dr.hi - dr.lo) * k / kBins;
    const double x1 = dr.lo + (dr.hi - dr.lo) * (k + 1) / kBins;
    const double y = counts[static_cast<std::size_t>(k)];
    out << "<rect x=\"" << num(hist.px(x0)) << "\" y=\"" << num(hist.py(y)) << "\" width=\""
        << num(hist.px(x1) - hist.px(x0)) << "\" height=\"" << num(hist.py(0) - hist.py(y))
        << "\" fill=\"" << kPalette[1] << "\" stroke=\"white\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string bar_plot(const std::string& title, const std::vector<std::string>& categories,
                     const std::vector<BarGroup>& groups) {
  const double margin = 60, group_w = 40.0 * std::max<std::size_t>(categories.size(), 1) + 30,
               height = 260;
  Range r{0.0, 0.0};
  for (const auto& g : groups) {
    if (g.mean.size() != categories.size() || g.stderr_.size() != categories.size()) {
      throw DimensionMismatch("bar_plot: group size does not match categories");
    }
    for (std::size_t i = 0; i < g.mean.size(); ++i) {
      if (!std::isfinite(g.mean[i])) continue;
      r.lo = std::min(r.lo, g.mean[i] - g.stderr_[i]);
      r.hi = std::max(r.hi, g.mean[i] + g.stderr_[i]);
    }
  }
  r.pad(0.05);
  const double width = 2 * margin + groups.size() * group_w + 120;
  std::ostringstream out;
  out << header(width, height + 2 * margin);
  const Frame f{margin, margin, groups.size() * group_w, height, Range{0.0, 1.0}, r};
  axes(out, f, title);
  out << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.py(0)) << "\" x2=\""
      << num(f.left + f.width) << "\" y2=\"" << num(f.py(0)) << "\" stroke=\"#444\"/>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = f.left + g * group_w + 15;
    out << "<text x=\"" << num(gx + (group_w - 30) / 2) << "\" y=\""
        << num(f.top + f.height + 32) << "\" text-anchor=\"middle\" font-size=\"11\">"
        << escape(groups[g].label) << "</text>\n";
    for (std::size_t c = 0; c < categories.size(); ++c) {
      const double m = groups[g].mean[c];
      if (!std::isfinite(m)) continue;
      const double x = gx + 40.0 * c;
      const double y0 = f.py(std::max(m, 0.0)), y1 = f.py(std::min(m, 0.0));
      out << "<rect x=\"" << num(x) << "\" y=\"" << num(y0) << "\" width=\"32\" height=\""
          << num(y1 - y0) << "\" fill=\"" << kPalette[c % std::size(kPalette)] << "\"/>\n";
      const double se = groups[g].stderr_[c];
      out << "<line x1=\"" << num(x + 16) << "\" y1=\"" << num(f.py(m - se)) << "\" x2=\""
          << num(x + 16) << "\" y2=\"" << num(f.py(m + se)) << "\" stroke=\"black\"/>\n";
    }
  }
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double ly = f.top + 14.0 * c;
    out << "<rect x=\"" << num(f.left + f.width + 20) << "\" y=\"" << num(ly)
        << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[c % std::size(kPalette)]
        << "\"/>\n<text x=\"" << num(f.left + f.width + 35) << "\" y=\"" << num(ly + 9)
        << "\" font-size=\"11\">" << escape(categories[c]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace ibnn::svg
