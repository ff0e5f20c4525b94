#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pavecast/data.hpp"
#include "pavecast/tensor.hpp"

namespace pavecast {

struct SplitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Task { skid, macrotexture };
enum class SplitMode { rows, sections };

// Chronologically ordered records of one section; the unit windows are cut from.
struct SectionSeries {
    std::string section_id;
    std::vector<InspectionRecord> records;  // sorted ascending by month
};

// One (sequence, target) training pair: an L x d_x feature matrix plus the
// next-inspection target scalar.
struct WindowSample {
    std::string section_id;
    Matrix window;  // L x d_x
    int target_month = 0;
    double target = 0.0;
    bool padded = false;
};

// Per-feature z-score statistics fitted on training rows only. Binary-coded
// columns pass through unscaled; targets are never scaled.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;          // floored at 1e-8
    std::vector<bool> passthrough;    // binary columns

    bool operator==(const Scaler&) const = default;
};

// Feature vector layout of one window row (all covariates + month + both
// current measurements).
constexpr int kFeatureCount = 12;
extern const char* const kFeatureNames[kFeatureCount];

std::vector<double> record_features(const InspectionRecord& r);

std::vector<SectionSeries> build_series(const RecordSet& rs);

std::vector<WindowSample> make_windows(const SectionSeries& series, int window_length, Task task,
                                       bool allow_padding);
std::vector<WindowSample> make_windows(const std::vector<SectionSeries>& all, int window_length,
                                       Task task, bool allow_padding);

struct SplitResult {
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;
};

SplitResult split(const std::vector<WindowSample>& samples, double ratio, SplitMode mode,
                  std::uint64_t seed);

Scaler fit_scaler(const std::vector<WindowSample>& train);
std::vector<WindowSample> apply_scaler(const Scaler& scaler, std::vector<WindowSample> samples);

// Row-major flatten of the L x d_x window to a length L*d_x vector, and the
// inverse (the feature view baselines consume).
std::vector<double> flatten_window(const Matrix& window);
Matrix unflatten_window(const std::vector<double>& flat, int window_length, int feature_count);

// Window-set CSV: section_id, target_month, padded, f0..f_{L*d_x-1}, target.
std::string windows_to_csv(const std::vector<WindowSample>& samples);
void save_windows(const std::vector<WindowSample>& samples, const std::string& path);
std::vector<WindowSample> load_windows(const std::string& path);

}  // namespace pavecast
