#include "stepuq/report.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace stepuq::report {

namespace {

std::string num(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : "NA"; }

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};

}  // namespace

std::vector<metrics::CurvePoint> display_points(const metrics::EstimatorMetrics& e,
                                                std::vector<double>* stds) {
  std::vector<metrics::CurvePoint> out;
  for (const double cov : metrics::display_grid()) {
    for (std::size_t k = 0; k < e.curve.size(); ++k) {
      if (std::abs(e.curve[k].coverage - cov) < 1e-9) {
        out.push_back(e.curve[k]);
        if (stds) stds->push_back(k < e.curve_std.size() ? e.curve_std[k] : 0.0);
        break;
      }
    }
  }
  return out;
}

std::string render_csv(const metrics::EvalReport& r) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& e : r.estimators) {
    const auto name = to_string(e.estimator);
    const std::pair<const char*, const metrics::Stat*> rows[] = {
        {"auroc", &e.auroc}, {"auprc", &e.auprc}, {"au_f1c", &e.au_f1c}};
    for (const auto& [metric, stat] : rows) {
      out += fmt::format("{},{},,{},{:.6f},{}\n", name, metric, num(stat->mean), stat->stddev, e.n_scored);
    }
  }
  for (const auto& e : r.estimators) {
    std::vector<double> stds;
    const auto pts = display_points(e, &stds);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out += fmt::format("{},rejection_f1,{:.2f},{:.6f},{:.6f},{}\n", to_string(e.estimator),
                         pts[i].coverage, pts[i].f1, stds[i], pts[i].n_retained);
    }
  }
  return out;
}

std::string render_svg(const metrics::EvalReport& r) {
  constexpr double kW = 720, kH = 440, kLeft = 60, kRight = 180, kTop = 30, kBottom = 50;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;

  double y_lo = 1.0, y_hi = 0.0;
  for (const auto& e : r.estimators) {
    for (const auto& p : display_points(e)) {
      y_lo = std::min(y_lo, p.f1);
      y_hi = std::max(y_hi, p.f1);
    }
  }
  if (y_lo > y_hi) y_lo = 0.0, y_hi = 1.0;
  y_lo = std::max(0.0, std::floor(y_lo * 20.0) / 20.0);
  y_hi = std::min(1.0, std::ceil(y_hi * 20.0) / 20.0);
  if (y_hi - y_lo < 0.05) y_hi = std::min(1.0, y_lo + 0.05), y_lo = y_hi - 0.05;

  auto x_of = [&](double cov) { return kLeft + (cov - 0.6) / 0.4 * plot_w; };
  auto y_of = [&](double f1) { return kTop + (y_hi - f1) / (y_hi - y_lo) * plot_h; };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kW, kH);
  s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"black\"/>\n",
                   kLeft, kTop, plot_w, plot_h);
  for (const double cov : metrics::display_grid()) {
    const double x = x_of(cov);
    s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#ddd\"/>\n", x, kTop,
                     kTop + plot_h);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.0f}</text>\n", x,
                     kTop + plot_h + 16, cov * 100.0);
  }
  for (int i = 0; i <= 4; ++i) {
    const double f1 = y_lo + (y_hi - y_lo) * i / 4.0;
    const double y = y_of(f1);
    s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                     kLeft + plot_w);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3f}</text>\n", kLeft - 6, y + 4, f1);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">Retained steps (%)</text>\n",
                   kLeft + plot_w / 2, kH - 12);
  s += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">Rejection-F1</text>\n",
      kTop + plot_h / 2, kTop + plot_h / 2);

  std::size_t idx = 0;
  for (const auto& e : r.estimators) {
    const char* color = kPalette[idx % std::size(kPalette)];
    std::string pts;
    for (const auto& p : display_points(e)) pts += fmt::format("{:.1f},{:.1f} ", x_of(p.coverage), y_of(p.f1));
    if (!pts.empty()) pts.pop_back();
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, pts);
    const double ly = kTop + 14 + 18.0 * static_cast<double>(idx);
    s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                     kW - kRight + 12, ly, kW - kRight + 36, color);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", kW - kRight + 42, ly + 4, to_string(e.estimator));
    ++idx;
  }
  s += "</svg>\n";
  return s;
}

std::string render_text(const metrics::EvalReport& r) {
  std::string s = fmt::format(
      "steps evaluated: {} (failed: {})\n"
      "verification accuracy: {:.3f}  F1: {:.3f}  positive rate: {:.3f}\n"
      "predicting all 0s: F1 {:.3f} acc {:.3f}; all 1s: F1 {:.3f} acc {:.3f}\n\n",
      r.n_steps, r.n_failed, r.verification_accuracy, r.verification_f1, r.positive_rate,
      r.all_zeros.f1, r.all_zeros.accuracy, r.all_ones.f1, r.all_ones.accuracy);
  s += fmt::format("{:<22}{:>18}{:>18}{:>18}\n", "method", "AUROC", "AUPRC", "AU-F1C");
  auto cell = [](const metrics::Stat& st) {
    return st.mean ? fmt::format("{:.3f} ± {:.3f}", *st.mean, st.stddev) : std::string("n/a");
  };
  for (const auto& e : r.estimators) {
    s += fmt::format("{:<22}{:>18}{:>18}{:>18}\n", to_string(e.estimator), cell(e.auroc), cell(e.auprc),
                     cell(e.au_f1c));
  }
  return s;
}

}  // namespace stepuq::report
