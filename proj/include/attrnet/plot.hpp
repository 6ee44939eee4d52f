#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "attrnet/report.hpp"

namespace attrnet {

struct PlotOptions {
  int width = 640;
  int height = 400;
  std::string title = "Loss history";
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

/// Train and validation loss per epoch as a standalone SVG document.
/// Output depends only on the history and options.
inline std::string loss_plot_svg(const LossHistory& h, const PlotOptions& opt = {}) {
  using detail::fmt;
  if (h.empty()) throw ContractError("cannot plot an empty loss history");
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& e : h.epochs) {
    lo = std::min({lo, e.train_loss, e.val_loss});
    hi = std::max({hi, e.train_loss, e.val_loss});
  }
  lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double first = static_cast<double>(h.epochs.front().epoch);
  const double last = static_cast<double>(h.epochs.back().epoch);
  const double span = last > first ? last - first : 1.0;
  auto sx = [&](double epoch) { return left + (h.size() == 1 ? pw / 2 : (epoch - first) / span * pw); };
  auto sy = [&](double v) { return top + (hi - v) / (hi - lo) * ph; };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) + "\" height=\"" +
       std::to_string(opt.height) + "\" viewBox=\"0 0 " + std::to_string(opt.width) + " " + std::to_string(opt.height) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "  <text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::xml_escape(opt.title) + "</text>\n";
  // axes
  s += "  <g stroke=\"black\" stroke-width=\"1\">\n";
  s += "    <line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top + ph) + "\" x2=\"" + fmt("%.1f", left + pw) +
       "\" y2=\"" + fmt("%.1f", top + ph) + "\"/>\n";
  s += "    <line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top) + "\" x2=\"" + fmt("%.1f", left) + "\" y2=\"" +
       fmt("%.1f", top + ph) + "\"/>\n";
  s += "  </g>\n";
  // ticks
  s += "  <g fill=\"black\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    s += "    <text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", sy(v) + 4) + "\" text-anchor=\"end\">" +
         fmt("%.3g", v) + "</text>\n";
  }
  const std::size_t n = h.size();
  const std::size_t xticks = std::min<std::size_t>(n, 5);
  for (std::size_t i = 0; i < xticks; ++i) {
    const std::size_t idx = xticks == 1 ? 0 : i * (n - 1) / (xticks - 1);
    const double ep = static_cast<double>(h.epochs[idx].epoch);
    s += "    <text x=\"" + fmt("%.1f", sx(ep)) + "\" y=\"" + fmt("%.1f", top + ph + 16) + "\" text-anchor=\"middle\">" +
         std::to_string(h.epochs[idx].epoch) + "</text>\n";
  }
  s += "    <text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", top + ph + 38) +
       "\" text-anchor=\"middle\">Epoch</text>\n";
  s += "    <text x=\"18\" y=\"" + fmt("%.1f", top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt("%.1f", top + ph / 2) + ")\">Loss</text>\n";
  s += "  </g>\n";
  // series
  auto series = [&](const char* id, const char* color, auto get) {
    std::string pts;
    for (const auto& e : h.epochs) {
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.2f", sx(static_cast<double>(e.epoch))) + "," + fmt("%.2f", sy(get(e)));
    }
    return "  <polyline id=\"" + std::string(id) + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" +
           pts + "\"/>\n";
  };
  s += series("train_loss", "#1f77b4", [](const EpochRecord& e) { return e.train_loss; });
  s += series("val_loss", "#d62728", [](const EpochRecord& e) { return e.val_loss; });
  // legend
  const double lx = left + pw - 140, ly = top + 8;
  s += "  <g id=\"legend\">\n";
  s += "    <rect x=\"" + fmt("%.1f", lx) + "\" y=\"" + fmt("%.1f", ly) +
       "\" width=\"130\" height=\"44\" fill=\"white\" stroke=\"#999\"/>\n";
  s += "    <line x1=\"" + fmt("%.1f", lx + 8) + "\" y1=\"" + fmt("%.1f", ly + 14) + "\" x2=\"" + fmt("%.1f", lx + 32) +
       "\" y2=\"" + fmt("%.1f", ly + 14) + "\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  s += "    <text x=\"" + fmt("%.1f", lx + 38) + "\" y=\"" + fmt("%.1f", ly + 18) + "\">train loss</text>\n";
  s += "    <line x1=\"" + fmt("%.1f", lx + 8) + "\" y1=\"" + fmt("%.1f", ly + 32) + "\" x2=\"" + fmt("%.1f", lx + 32) +
       "\" y2=\"" + fmt("%.1f", ly + 32) + "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  s += "    <text x=\"" + fmt("%.1f", lx + 38) + "\" y=\"" + fmt("%.1f", ly + 36) + "\">validation loss</text>\n";
  s += "  </g>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace attrnet
