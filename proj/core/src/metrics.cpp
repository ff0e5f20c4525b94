#include "pavecast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "pavecast/data.hpp"

namespace pavecast {

MetricTriple compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.empty() || y.size() != y_hat.size()) {
        throw MetricError("compute_metrics needs equal non-zero lengths (got " +
                          std::to_string(y.size()) + " and " + std::to_string(y_hat.size()) + ")");
    }
    const double n = static_cast<double>(y.size());
    double mean = 0.0;
    for (const double v : y) mean += v;
    mean /= n;
    double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - y_hat[i];
        ss_res += r * r;
        abs_sum += std::abs(r);
        const double c = y[i] - mean;
        ss_tot += c * c;
    }
    const double rmse = std::sqrt(ss_res / n);
    const double mae = abs_sum / n;
    if (ss_tot == 0.0) throw UndefinedR2Error(rmse, mae);
    return {1.0 - ss_res / ss_tot, rmse, mae};
}

EvaluationReport compare(const std::vector<std::pair<std::string, std::vector<double>>>& predictions,
                         const std::vector<double>& y, const std::string& target,
                         const std::string& split_descriptor, std::uint64_t seed) {
    if (y.empty()) throw MetricError("compare requires a non-empty test set");
    EvaluationReport report;
    report.target = target;
    report.split_descriptor = split_descriptor;
    report.seed = seed;
    for (const auto& [name, y_hat] : predictions) {
        report.rows.push_back({name, compute_metrics(y, y_hat)});
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const ReportRow& a, const ReportRow& b) {
                         return a.metrics.r2 > b.metrics.r2;
                     });
    return report;
}

std::string report_to_csv(const EvaluationReport& report) {
    std::ostringstream out;
    out << "model,r2,rmse,mae\n";
    for (const ReportRow& row : report.rows) {
        out << row.model << ',' << format_g9(row.metrics.r2) << ',' << format_g9(row.metrics.rmse)
            << ',' << format_g9(row.metrics.mae) << '\n';
    }
    return out.str();
}

std::string report_to_text(const EvaluationReport& report) {
    double best_r2 = -1e300, best_rmse = 1e300, best_mae = 1e300;
    std::size_t width = 5;
    for (const ReportRow& row : report.rows) {
        best_r2 = std::max(best_r2, row.metrics.r2);
        best_rmse = std::min(best_rmse, row.metrics.rmse);
        best_mae = std::min(best_mae, row.metrics.mae);
        width = std::max(width, row.model.size());
    }
    std::ostringstream out;
    out << "Prediction results for " << report.target << " (" << report.split_descriptor
        << ", seed " << report.seed << ")\n";
    out << std::left << std::setw(static_cast<int>(width + 2)) << "Model"
        << std::right << std::setw(12) << "R2" << std::setw(12) << "RMSE" << std::setw(12)
        << "MAE" << "\n";
    const auto cell = [](double v, bool best) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(4) << v << (best ? "*" : " ");
        return c.str();
    };
    for (const ReportRow& row : report.rows) {
        out << std::left << std::setw(static_cast<int>(width + 2)) << row.model << std::right
            << std::setw(12) << cell(row.metrics.r2, row.metrics.r2 == best_r2)
            << std::setw(12) << cell(row.metrics.rmse, row.metrics.rmse == best_rmse)
            << std::setw(12) << cell(row.metrics.mae, row.metrics.mae == best_mae) << "\n";
    }
    return out.str();
}

std::string report_to_svg(const EvaluationReport& report) {
    const int bar_height = 22;
    const int gap = 6;
    const int label_width = 220;
    const int chart_width = 420;
    const int height = static_cast<int>(report.rows.size()) * (bar_height + gap) + 40;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << label_width + chart_width + 80
        << "\" height=\"" << height << "\">\n";
    out << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">R2 by model ("
        << report.target << ")</text>\n";
    int y = 34;
    for (const ReportRow& row : report.rows) {
        const double r2 = std::max(0.0, std::min(1.0, row.metrics.r2));
        const int w = static_cast<int>(r2 * chart_width);
        out << "<text x=\"10\" y=\"" << y + 15 << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << row.model << "</text>\n";
        out << "<rect x=\"" << label_width << "\" y=\"" << y << "\" width=\"" << w
            << "\" height=\"" << bar_height << "\" fill=\"#4878a8\"/>\n";
        out << "<text x=\"" << label_width + w + 6 << "\" y=\"" << y + 15
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << format_g9(row.metrics.r2)
            << "</text>\n";
        y += bar_height + gap;
    }
    out << "</svg>\n";
    return out.str();
}

EvaluationReport report_from_csv(const std::string& csv, const std::string& target) {
    EvaluationReport report;
    report.target = target;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "model,r2,rmse,mae") {
        throw MetricError("unexpected report CSV header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string model, r2, rmse, mae;
        std::getline(row, model, ',');
        std::getline(row, r2, ',');
        std::getline(row, rmse, ',');
        std::getline(row, mae, ',');
        report.rows.push_back({model, {std::stod(r2), std::stod(rmse), std::stod(mae)}});
    }
    return report;
}

}  // namespace pavecast
