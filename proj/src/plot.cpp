#include "graphids/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "graphids/error.hpp"

namespace graphids {

PlotKind parse_plot_kind(std::string_view s) {
  if (s == "pr") return PlotKind::PrCurve;
  if (s == "score-hist") return PlotKind::ScoreHistogram;
  throw Error("unknown plot kind '" + std::string(s) + "' (expected pr|score-hist)");
}

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel,
          const std::vector<std::pair<double, std::string>>& xticks,
          const std::vector<std::pair<double, std::string>>& yticks) {
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
     << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& [v, label] : xticks)
    os << "<text x=\"" << f.px(v) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">" << label
       << "</text>\n";
  for (const auto& [v, label] : yticks)
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(v) + 4 << "\" text-anchor=\"end\">" << label << "</text>\n";
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 18 << "\" text-anchor=\"middle\">"
     << escape(xlabel) << "</text>\n"
     << "<text transform=\"translate(18," << (kTop + kHeight - kBottom) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
}

std::vector<std::pair<double, std::string>> unit_ticks() {
  std::vector<std::pair<double, std::string>> t;
  for (int i = 0; i <= 5; ++i) t.emplace_back(i / 5.0, fmt("%.1f", i / 5.0));
  return t;
}

}  // namespace

std::string pr_curve_svg(const EvalReport& report) {
  std::ostringstream os;
  open_svg(os, "Precision-recall curve (PR-AUC " + fmt("%.4f", report.pr_auc) + ")");
  const Frame f{0, 1, 0, 1.02};
  axes(os, f, "Recall", "Precision", unit_ticks(), unit_ticks());
  os << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"2\" points=\"";
  for (const auto& p : report.pr_curve) os << fmt("%.2f", f.px(p.recall)) << ',' << fmt("%.2f", f.py(p.precision)) << ' ';
  os << "\"/>\n";
  os << "<line x1=\"" << f.px(0) << "\" x2=\"" << f.px(1) << "\" y1=\"" << f.py(report.anomaly_ratio) << "\" y2=\""
     << f.py(report.anomaly_ratio) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n"
     << "<text x=\"" << f.px(1) - 4 << "\" y=\"" << f.py(report.anomaly_ratio) - 4
     << "\" text-anchor=\"end\" fill=\"gray\">random scorer</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string score_histogram_svg(const EvalReport& report) {
  const ScoreHistogram& h = report.histogram;
  if (h.edges.size() < 2) throw Error("report has no score histogram");
  std::ostringstream os;
  open_svg(os, "Anomaly score distribution by traffic type");
  const double lx0 = std::log10(h.edges.front()), lx1 = std::log10(h.edges.back());
  // Densities: each type's counts normalised to unit area in log10 space.
  std::vector<std::vector<double>> density(h.types.size());
  double ymax = 0.0;
  for (std::size_t t = 0; t < h.types.size(); ++t) {
    double total = 0.0;
    for (const auto c : h.counts[t]) total += static_cast<double>(c);
    for (std::size_t b = 0; b < h.counts[t].size(); ++b) {
      const double width = std::log10(h.edges[b + 1]) - std::log10(h.edges[b]);
      density[t].push_back(total > 0 ? static_cast<double>(h.counts[t][b]) / total / width : 0.0);
      ymax = std::max(ymax, density[t].back());
    }
  }
  if (ymax <= 0.0) ymax = 1.0;
  const Frame f{lx0, lx1, 0, ymax * 1.05};
  std::vector<std::pair<double, std::string>> xt, yt;
  for (int e = static_cast<int>(std::ceil(lx0)); e <= static_cast<int>(std::floor(lx1)); ++e)
    xt.emplace_back(e, "1e" + std::to_string(e));
  for (int i = 0; i <= 4; ++i) yt.emplace_back(ymax * i / 4.0, fmt("%.2g", ymax * i / 4.0));
  axes(os, f, "Anomaly score (log scale)", "Density", xt, yt);
  for (std::size_t t = 0; t < h.types.size(); ++t) {
    const char* color = kPalette[t % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t b = 0; b < density[t].size(); ++b) {
      const double a = std::log10(h.edges[b]), z = std::log10(h.edges[b + 1]);
      os << fmt("%.2f", f.px(a)) << ',' << fmt("%.2f", f.py(density[t][b])) << ' ' << fmt("%.2f", f.px(z)) << ','
         << fmt("%.2f", f.py(density[t][b])) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 8 << "\" y=\"" << kTop + 16 + 15 * static_cast<double>(t)
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(h.types[t]) << "</text>\n";
  }
  if (std::isfinite(report.threshold) && report.threshold > 0.0) {
    const double lt = std::clamp(std::log10(report.threshold), lx0, lx1);
    os << "<line id=\"threshold\" x1=\"" << f.px(lt) << "\" x2=\"" << f.px(lt) << "\" y1=\"" << f.py(0) << "\" y2=\""
       << f.py(ymax * 1.05) << "\" stroke=\"black\" stroke-dasharray=\"6 4\" stroke-width=\"1.5\"/>\n"
       << "<text x=\"" << f.px(lt) + 4 << "\" y=\"" << kTop + 14 << "\">threshold " << fmt("%.4g", report.threshold)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string score_histogram_csv(const EvalReport& report) {
  const ScoreHistogram& h = report.histogram;
  std::ostringstream os;
  os.precision(10);
  os << "# threshold=" << report.threshold << '\n' << "bin_lo,bin_hi";
  for (const auto& t : h.types) os << ',' << t;
  os << '\n';
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    os << h.edges[b] << ',' << h.edges[b + 1];
    for (std::size_t t = 0; t < h.types.size(); ++t) os << ',' << h.counts[t][b];
    os << '\n';
  }
  return os.str();
}

std::string pr_curve_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(10);
  write_pr_curve_csv(os, report);
  return os.str();
}

std::filesystem::path write_plot(const EvalReport& report, PlotKind kind, const std::filesystem::path& stem) {
  std::filesystem::path svg = stem, csv = stem;
  svg += ".svg";
  csv += ".csv";
  if (kind == PlotKind::PrCurve) {
    write_text_file(svg, pr_curve_svg(report));
    write_text_file(csv, pr_curve_csv(report));
  } else {
    write_text_file(svg, score_histogram_svg(report));
    write_text_file(csv, score_histogram_csv(report));
  }
  return svg;
}

}  // namespace graphids
