#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pavecast {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DuplicationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One lane-segment observation at one month: milling covariates (constant
// per section) plus the two measured targets.
struct InspectionRecord {
    std::string section_id;
    int climatic_zone = 0;  // 0 = dry-freeze, 1 = dry-non-freeze
    double depth_in = 0.0;
    int drum = 0;  // 0 = fine drum (300 teeth), 1 = standard drum (150 teeth)
    double speed_fpm = 0.0;
    int surface_type = 0;  // 0 = HMA, 1 = seal coat
    int month = 0;
    double skid_before = 0.0;
    double skid_after = 0.0;
    double macro_before_mm = 0.0;
    double macro_after_mm = 0.0;
    double skid_number = 0.0;
    double macro_mm = 0.0;

    bool operator==(const InspectionRecord&) const = default;
};

enum class Provenance { loaded, synthetic };

struct RecordSet {
    std::vector<InspectionRecord> records;
    Provenance provenance = Provenance::loaded;
    std::optional<std::uint64_t> seed;

    bool operator==(const RecordSet&) const = default;
};

// Closed range used as a validation default; every real-valued field has one.
struct FieldRange {
    double min;
    double max;
};

// Validation defaults per field; all overridable.
struct ValidationSchema {
    FieldRange depth_in{0.20, 0.50};
    FieldRange speed_fpm{30.0, 100.0};
    FieldRange skid_before{9.0, 35.0};
    FieldRange skid_after{15.0, 58.0};
    FieldRange macro_before_mm{0.16, 1.73};
    FieldRange macro_after_mm{0.48, 3.58};
    FieldRange skid_number{10.5, 47.0};
    FieldRange macro_mm{0.28, 2.89};
    std::vector<int> allowed_months{0, 3, 6, 12, 18};
};

struct Violation {
    std::string section_id;
    int month = 0;
    std::size_t record_index = 0;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Per-variable sampling statistics (Table-1-style marginals).
struct VariableStats {
    double mean;
    double std;
    double min;
    double max;
};

// Deterioration curve parameters for one surface family. The time-varying
// target follows value(t) = after - (after - asymptote) * (1 - e^{-lambda t}),
// i.e. exponential decay from the post-milling level toward the pre-milling
// level.
struct DecayParams {
    double initial_jump = 0.0;     // additive offset on the post-milling level
    double skid_lambda = 0.0;      // per-month decay rate for skid number
    double macro_lambda = 0.0;     // per-month decay rate for macrotexture
    double lambda_jitter = 0.0;    // lognormal sigma on per-section lambda
    double noise_std_skid = 0.0;   // measurement noise, months > 0
    double noise_std_macro = 0.0;
    // Late-life divergence: after the first year, sections where the drum
    // choice is mismatched with the climatic zone shed extra friction.
    // Ramps in past month 12, so it never touches the within-window
    // history and trajectories stay non-increasing.
    double late_drop_skid = 0.0;
    double late_drop_macro = 0.0;
};

struct SyntheticConfig {
    int n_sections = 0;
    std::vector<int> months{0, 3, 6, 12, 18};

    // Marginals for the per-section covariates (binary codes use mean as the
    // Bernoulli rate).
    double climatic_zone_rate = 0.40;
    double drum_rate = 0.70;
    double surface_type_rate = 0.59;
    VariableStats depth_in{0.46, 0.11, 0.20, 0.50};
    VariableStats speed_fpm{68.52, 17.81, 30.0, 100.0};
    VariableStats skid_before{15.70, 8.00, 9.0, 35.0};
    VariableStats skid_after{42.37, 12.15, 15.0, 58.0};
    VariableStats macro_before_mm{0.68, 0.32, 0.16, 1.73};
    VariableStats macro_after_mm{2.37, 0.59, 0.48, 3.58};
    FieldRange skid_number{10.5, 47.0};
    FieldRange macro_mm{0.28, 2.89};

    // Seal coat decays faster than HMA.
    DecayParams hma{0.0, 0.036, 0.075, 0.35, 0.9, 0.05, 9.0, 0.15};
    DecayParams seal{0.0, 0.12, 0.21, 0.35, 0.9, 0.05, 9.0, 0.15};

    void check() const;  // throws ConfigError on invalid settings
};

RecordSet load_records(const std::string& path,
                       const std::optional<ValidationSchema>& schema_overrides = std::nullopt);
void save_records(const RecordSet& rs, const std::string& path);
std::string records_to_csv(const RecordSet& rs);

ValidationReport validate(const RecordSet& rs, const ValidationSchema& schema = {});

RecordSet generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// Formats a double with 9 significant digits (the on-disk CSV convention).
std::string format_g9(double v);

}  // namespace pavecast
