#pragma once

#include <string>
#include <vector>

#include "stepuq/metrics.hpp"

namespace stepuq::report {

inline constexpr const char* kCsvHeader = "estimator,metric,coverage,mean,std,n";

/// Table-shaped CSV: one row per estimator x {auroc, auprc, au_f1c}, then one
/// row per estimator x display-grid coverage point. Undefined values are NA.
std::string render_csv(const metrics::EvalReport& r);

/// Rejection-F1 curves over the display grid as a standalone SVG.
std::string render_svg(const metrics::EvalReport& r);

/// Plain-text summary for the terminal.
std::string render_text(const metrics::EvalReport& r);

/// Display-grid subset of an estimator's curve.
std::vector<metrics::CurvePoint> display_points(const metrics::EstimatorMetrics& e,
                                                std::vector<double>* stds = nullptr);

}  // namespace stepuq::report
