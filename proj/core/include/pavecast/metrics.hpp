#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pavecast {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when Var(y) = 0 so R^2 is undefined; RMSE/MAE are still carried.
struct UndefinedR2Error : MetricError {
    double rmse;
    double mae;
    UndefinedR2Error(double rmse_, double mae_)
        : MetricError("R^2 is undefined for a constant target vector"), rmse(rmse_), mae(mae_) {}
};

struct MetricTriple {
    double r2 = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
};

// R^2 = 1 - SS_res/SS_tot (SS_tot around the evaluation-set mean),
// RMSE = sqrt(mean squared residual), MAE = mean absolute residual.
MetricTriple compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat);

struct ReportRow {
    std::string model;
    MetricTriple metrics;
};

struct EvaluationReport {
    std::string target;  // "skid" or "macrotexture"
    std::vector<ReportRow> rows;  // sorted descending by r2
    std::string split_descriptor;
    std::uint64_t seed = 0;
};

// One row per (model name, predictions) pair, sorted descending by R^2.
EvaluationReport compare(const std::vector<std::pair<std::string, std::vector<double>>>& predictions,
                         const std::vector<double>& y, const std::string& target,
                         const std::string& split_descriptor, std::uint64_t seed);

std::string report_to_csv(const EvaluationReport& report);
// Aligned plain-text table; the best value in each column is marked with '*'.
std::string report_to_text(const EvaluationReport& report);
// Horizontal bar chart of R^2 per model.
std::string report_to_svg(const EvaluationReport& report);

EvaluationReport report_from_csv(const std::string& csv, const std::string& target);

}  // namespace pavecast
