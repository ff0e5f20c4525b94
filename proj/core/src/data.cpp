#include "pavecast/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pavecast/rng.hpp"

namespace pavecast {

namespace {

const std::vector<std::string> kColumns = {
    "section_id",   "climatic_zone", "depth_in",        "drum",
    "speed_fpm",    "surface_type",  "month",           "skid_before",
    "skid_after",   "macro_before_mm", "macro_after_mm", "skid_number",
    "macro_mm"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& col, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw RowError("line " + std::to_string(line_no) + ": unparseable " + col + " value \"" + s + "\"");
    }
    return v;
}

int parse_binary(const std::string& s, const std::string& col, std::size_t line_no) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw RowError("line " + std::to_string(line_no) + ": " + col + " out of {0,1}, got \"" + s + "\"");
}

int parse_int(const std::string& s, const std::string& col, std::size_t line_no) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
        throw RowError("line " + std::to_string(line_no) + ": unparseable " + col + " value \"" + s + "\"");
    }
    return static_cast<int>(v);
}

void check_range(std::vector<Violation>& out, const InspectionRecord& r, std::size_t idx,
                 const char* field, double value, const FieldRange& range) {
    if (value < range.min || value > range.max) {
        std::ostringstream msg;
        msg << field << " outside [" << format_g9(range.min) << ", " << format_g9(range.max)
            << "], got " << format_g9(value);
        out.push_back({r.section_id, r.month, idx, msg.str()});
    }
}

}  // namespace

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void SyntheticConfig::check() const {
    if (n_sections <= 0) throw ConfigError("n_sections must be positive");
    if (months.empty()) throw ConfigError("months must be non-empty");
    for (std::size_t i = 1; i < months.size(); ++i) {
        if (months[i] <= months[i - 1]) throw ConfigError("months must be strictly increasing");
    }
    const auto check_stats = [](const char* name, const VariableStats& s) {
        if (!(s.min <= s.mean && s.mean <= s.max)) {
            throw ConfigError(std::string(name) + ": requires min <= mean <= max");
        }
        if (s.std < 0.0) throw ConfigError(std::string(name) + ": std must be >= 0");
    };
    check_stats("depth_in", depth_in);
    check_stats("speed_fpm", speed_fpm);
    check_stats("skid_before", skid_before);
    check_stats("skid_after", skid_after);
    check_stats("macro_before_mm", macro_before_mm);
    check_stats("macro_after_mm", macro_after_mm);
    for (const DecayParams* d : {&hma, &seal}) {
        if (d->skid_lambda < 0.0 || d->macro_lambda < 0.0 || d->lambda_jitter < 0.0 ||
            d->noise_std_skid < 0.0 || d->noise_std_macro < 0.0 ||
            d->late_drop_skid < 0.0 || d->late_drop_macro < 0.0) {
            throw ConfigError("decay parameters must be non-negative");
        }
    }
}

RecordSet load_records(const std::string& path, const std::optional<ValidationSchema>&) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw SchemaError("empty file: " + path);
    const std::vector<std::string> names = split_csv_line(header);
    std::map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < names.size(); ++i) col_index[names[i]] = i;
    for (const std::string& col : kColumns) {
        if (!col_index.count(col)) throw SchemaError("missing column: " + col);
    }

    RecordSet rs;
    rs.provenance = Provenance::loaded;
    std::set<std::pair<std::string, int>> seen;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() < names.size()) {
            throw RowError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(names.size()) + " cells, got " + std::to_string(cells.size()));
        }
        const auto cell = [&](const std::string& col) -> const std::string& {
            return cells[col_index.at(col)];
        };
        InspectionRecord r;
        r.section_id = cell("section_id");
        r.climatic_zone = parse_binary(cell("climatic_zone"), "climatic_zone", line_no);
        r.depth_in = parse_double(cell("depth_in"), "depth_in", line_no);
        r.drum = parse_binary(cell("drum"), "drum", line_no);
        r.speed_fpm = parse_double(cell("speed_fpm"), "speed_fpm", line_no);
        r.surface_type = parse_binary(cell("surface_type"), "surface_type", line_no);
        r.month = parse_int(cell("month"), "month", line_no);
        r.skid_before = parse_double(cell("skid_before"), "skid_before", line_no);
        r.skid_after = parse_double(cell("skid_after"), "skid_after", line_no);
        r.macro_before_mm = parse_double(cell("macro_before_mm"), "macro_before_mm", line_no);
        r.macro_after_mm = parse_double(cell("macro_after_mm"), "macro_after_mm", line_no);
        r.skid_number = parse_double(cell("skid_number"), "skid_number", line_no);
        r.macro_mm = parse_double(cell("macro_mm"), "macro_mm", line_no);
        if (!seen.insert({r.section_id, r.month}).second) {
            throw DuplicationError("duplicate (section_id=" + r.section_id + ", month=" +
                                   std::to_string(r.month) + ") at line " + std::to_string(line_no));
        }
        rs.records.push_back(std::move(r));
    }
    return rs;
}

std::string records_to_csv(const RecordSet& rs) {
    std::ostringstream out;
    for (std::size_t i = 0; i < kColumns.size(); ++i) {
        if (i) out << ',';
        out << kColumns[i];
    }
    out << '\n';
    for (const InspectionRecord& r : rs.records) {
        out << r.section_id << ',' << r.climatic_zone << ',' << format_g9(r.depth_in) << ','
            << r.drum << ',' << format_g9(r.speed_fpm) << ',' << r.surface_type << ','
            << r.month << ',' << format_g9(r.skid_before) << ',' << format_g9(r.skid_after) << ','
            << format_g9(r.macro_before_mm) << ',' << format_g9(r.macro_after_mm) << ','
            << format_g9(r.skid_number) << ',' << format_g9(r.macro_mm) << '\n';
    }
    return out.str();
}

void save_records(const RecordSet& rs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot open file for writing: " + path);
    out << records_to_csv(rs);
}

ValidationReport validate(const RecordSet& rs, const ValidationSchema& schema) {
    ValidationReport report;
    std::set<std::pair<std::string, int>> seen;
    // First pass: per-record checks.
    for (std::size_t i = 0; i < rs.records.size(); ++i) {
        const InspectionRecord& r = rs.records[i];
        const auto flag = [&](const std::string& msg) {
            report.violations.push_back({r.section_id, r.month, i, msg});
        };
        if (r.climatic_zone != 0 && r.climatic_zone != 1) flag("climatic_zone out of {0,1}");
        if (r.drum != 0 && r.drum != 1) flag("drum out of {0,1}");
        if (r.surface_type != 0 && r.surface_type != 1) flag("surface_type out of {0,1}");
        check_range(report.violations, r, i, "depth_in", r.depth_in, schema.depth_in);
        check_range(report.violations, r, i, "speed_fpm", r.speed_fpm, schema.speed_fpm);
        check_range(report.violations, r, i, "skid_before", r.skid_before, schema.skid_before);
        check_range(report.violations, r, i, "skid_after", r.skid_after, schema.skid_after);
        check_range(report.violations, r, i, "macro_before_mm", r.macro_before_mm, schema.macro_before_mm);
        check_range(report.violations, r, i, "macro_after_mm", r.macro_after_mm, schema.macro_after_mm);
        check_range(report.violations, r, i, "skid_number", r.skid_number, schema.skid_number);
        check_range(report.violations, r, i, "macro_mm", r.macro_mm, schema.macro_mm);
        if (!schema.allowed_months.empty() &&
            std::find(schema.allowed_months.begin(), schema.allowed_months.end(), r.month) ==
                schema.allowed_months.end()) {
            flag("month not in allowed set");
        }
        if (!seen.insert({r.section_id, r.month}).second) {
            flag("duplicate (section_id, month)");
        }
    }
    // Second pass: per-section constancy of the milling covariates.
    std::map<std::string, std::size_t> first_of_section;
    for (std::size_t i = 0; i < rs.records.size(); ++i) {
        const InspectionRecord& r = rs.records[i];
        const auto [it, inserted] = first_of_section.insert({r.section_id, i});
        if (inserted) continue;
        const InspectionRecord& f = rs.records[it->second];
        const auto flag = [&](const char* field) {
            report.violations.push_back(
                {r.section_id, r.month, i, std::string(field) + " differs within section"});
        };
        if (r.skid_before != f.skid_before) flag("skid_before");
        if (r.skid_after != f.skid_after) flag("skid_after");
        if (r.macro_before_mm != f.macro_before_mm) flag("macro_before_mm");
        if (r.macro_after_mm != f.macro_after_mm) flag("macro_after_mm");
    }
    return report;
}

RecordSet generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.check();
    RecordSet rs;
    rs.provenance = Provenance::synthetic;
    rs.seed = seed;

    const auto clip = [](double v, double lo, double hi) {
        return v < lo ? lo : (v > hi ? hi : v);
    };

    for (int s = 0; s < cfg.n_sections; ++s) {
        Rng rng(derive_seed(seed, "synthetic-section", static_cast<std::uint64_t>(s)));
        char id[16];
        std::snprintf(id, sizeof(id), "S%04d", s + 1);

        InspectionRecord base;
        base.section_id = id;
        base.climatic_zone = rng.uniform() < cfg.climatic_zone_rate ? 1 : 0;
        base.drum = rng.uniform() < cfg.drum_rate ? 1 : 0;
        base.surface_type = rng.uniform() < cfg.surface_type_rate ? 1 : 0;
        base.depth_in = rng.truncated_normal(cfg.depth_in.mean, cfg.depth_in.std,
                                             cfg.depth_in.min, cfg.depth_in.max);
        base.speed_fpm = rng.truncated_normal(cfg.speed_fpm.mean, cfg.speed_fpm.std,
                                              cfg.speed_fpm.min, cfg.speed_fpm.max);
        base.skid_before = rng.truncated_normal(cfg.skid_before.mean, cfg.skid_before.std,
                                                cfg.skid_before.min, cfg.skid_before.max);
        base.skid_after = rng.truncated_normal(cfg.skid_after.mean, cfg.skid_after.std,
                                               cfg.skid_after.min, cfg.skid_after.max);
        base.macro_before_mm = rng.truncated_normal(cfg.macro_before_mm.mean, cfg.macro_before_mm.std,
                                                    cfg.macro_before_mm.min, cfg.macro_before_mm.max);
        base.macro_after_mm = rng.truncated_normal(cfg.macro_after_mm.mean, cfg.macro_after_mm.std,
                                                   cfg.macro_after_mm.min, cfg.macro_after_mm.max);

        const DecayParams& decay = base.surface_type == 1 ? cfg.seal : cfg.hma;
        const double skid_top = base.skid_after + decay.initial_jump;
        const double macro_top = base.macro_after_mm + decay.initial_jump;
        const double skid_floor = std::min(base.skid_before, skid_top);
        const double macro_floor = std::min(base.macro_before_mm, macro_top);

        // Per-section decay rates: jittered, and modulated by the milling
        // covariates so the trajectory depends on them non-additively.
        const double jitter = std::exp(decay.lambda_jitter * rng.normal());
        const double drum_factor = base.drum == 1 ? 1.35 : 0.80;
        const double speed_factor = std::pow(cfg.speed_fpm.mean / std::max(base.speed_fpm, 1.0), 0.6);
        const double climate_factor = base.climatic_zone == 1 ? 0.85 : 1.15;
        const double skid_lambda = decay.skid_lambda * jitter * drum_factor * speed_factor * climate_factor;
        const double macro_lambda = decay.macro_lambda * jitter * drum_factor * speed_factor * climate_factor;

        for (const int month : cfg.months) {
            InspectionRecord r = base;
            r.month = month;
            if (month == 0) {
                // The immediately-after-milling measurement, folded in as t=0.
                r.skid_number = clip(base.skid_after, cfg.skid_number.min, cfg.skid_number.max);
                r.macro_mm = clip(base.macro_after_mm, cfg.macro_mm.min, cfg.macro_mm.max);
            } else {
                const double t = static_cast<double>(month);
                double skid = skid_top - (skid_top - skid_floor) * (1.0 - std::exp(-skid_lambda * t));
                double macro = macro_top - (macro_top - macro_floor) * (1.0 - std::exp(-macro_lambda * t));
                // Late-life divergence keyed on the drum/climate pairing:
                // mismatched sections shed extra friction after the first
                // year. One-sided so trajectories stay non-increasing.
                const double ramp = std::min(std::max((t - 12.0) / 6.0, 0.0), 1.0);
                if (base.drum != base.climatic_zone) {
                    skid -= decay.late_drop_skid * ramp;
                    macro -= decay.late_drop_macro * ramp;
                }
                if (decay.noise_std_skid > 0.0) skid += decay.noise_std_skid * rng.normal();
                if (decay.noise_std_macro > 0.0) macro += decay.noise_std_macro * rng.normal();
                r.skid_number = clip(skid, cfg.skid_number.min, cfg.skid_number.max);
                r.macro_mm = clip(macro, cfg.macro_mm.min, cfg.macro_mm.max);
            }
            rs.records.push_back(std::move(r));
        }
    }
    return rs;
}

}  // namespace pavecast
