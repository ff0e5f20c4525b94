#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pavecast/data.hpp"

using namespace pavecast;

namespace {

const char* kHeader =
    "section_id,climatic_zone,depth_in,drum,speed_fpm,surface_type,month,"
    "skid_before,skid_after,macro_before_mm,macro_after_mm,skid_number,macro_mm";

std::string write_temp(const std::string& body) {
    std::string path = std::string(std::tmpnam(nullptr)) + ".csv";
    std::ofstream out(path);
    out << body;
    return path;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("load_records round-trips a single valid row") {
    std::string path = write_temp(std::string(kHeader) +
                                  "\nS1,0,0.30,1,65.5,0,3,20.0,45.0,0.60,2.20,40.0,1.90\n");
    RecordSet rs = load_records(path);
    REQUIRE(rs.records.size() == 1);
    const InspectionRecord& r = rs.records[0];
    CHECK(r.section_id == "S1");
    CHECK(r.drum == 1);
    CHECK(r.month == 3);
    CHECK(r.skid_number == 40.0);

    // save -> load reproduces the set (9-significant-digit formatting).
    std::string path2 = write_temp("");
    save_records(rs, path2);
    RecordSet rs2 = load_records(path2);
    CHECK(records_to_csv(rs) == records_to_csv(rs2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("load_records rejects a non-binary drum cell") {
    std::string path = write_temp(std::string(kHeader) +
                                  "\nS1,0,0.30,2,65.5,0,3,20.0,45.0,0.60,2.20,40.0,1.90\n");
    CHECK_THROWS_WITH_AS(load_records(path), doctest::Contains("drum out of {0,1}"), RowError);
    std::remove(path.c_str());
}

TEST_CASE("load_records rejects duplicate (section_id, month)") {
    std::string path = write_temp(std::string(kHeader) +
                                  "\nS1,0,0.30,1,65.5,0,3,20.0,45.0,0.60,2.20,40.0,1.90"
                                  "\nS1,0,0.30,1,65.5,0,3,20.0,45.0,0.60,2.20,39.0,1.80\n");
    CHECK_THROWS_AS(load_records(path), DuplicationError);
    std::remove(path.c_str());
}

TEST_CASE("load_records reports a missing column") {
    std::string path = write_temp("section_id,climatic_zone\nS1,0\n");
    CHECK_THROWS_AS(load_records(path), SchemaError);
    std::remove(path.c_str());
}

TEST_CASE("validate passes every synthetic RecordSet") {
    SyntheticConfig cfg;
    cfg.n_sections = 60;
    RecordSet rs = generate_synthetic(cfg, 99);
    CHECK(validate(rs).ok());
}

TEST_CASE("validate flags out-of-range and inconsistent fields") {
    SyntheticConfig cfg;
    cfg.n_sections = 1;
    RecordSet rs = generate_synthetic(cfg, 3);

    SUBCASE("depth_in out of range") {
        for (auto& r : rs.records) r.depth_in = 0.7;
        ValidationReport report = validate(rs);
        REQUIRE(!report.ok());
        CHECK(report.violations[0].message.find("depth_in outside") != std::string::npos);
    }

    SUBCASE("per-section constancy of skid_after") {
        // Deviating records (all but the first) each get flagged.
        for (std::size_t i = 1; i < rs.records.size(); ++i) rs.records[i].skid_after += 1.0;
        ValidationReport report = validate(rs);
        CHECK(report.violations.size() == rs.records.size() - 1);
    }

    SUBCASE("month outside the allowed set") {
        rs.records[1].month = 7;
        CHECK(!validate(rs).ok());
    }
}

TEST_CASE("generate_synthetic is bitwise deterministic") {
    SyntheticConfig cfg;
    cfg.n_sections = 25;
    RecordSet a = generate_synthetic(cfg, 7);
    RecordSet b = generate_synthetic(cfg, 7);
    CHECK(a == b);
    CHECK(records_to_csv(a) == records_to_csv(b));

    RecordSet c = generate_synthetic(cfg, 8);
    CHECK(records_to_csv(a) != records_to_csv(c));
}

TEST_CASE("zero lambda and zero noise freeze the series at the post-milling level") {
    SyntheticConfig cfg;
    cfg.n_sections = 10;
    for (DecayParams* d : {&cfg.hma, &cfg.seal}) {
        d->skid_lambda = 0.0;
        d->macro_lambda = 0.0;
        d->lambda_jitter = 0.0;
        d->noise_std_skid = 0.0;
        d->noise_std_macro = 0.0;
        d->late_drop_skid = 0.0;
        d->late_drop_macro = 0.0;
    }
    // Widen the measurement ranges so clipping never engages.
    cfg.skid_number = {0.0, 100.0};
    cfg.macro_mm = {0.0, 10.0};
    RecordSet rs = generate_synthetic(cfg, 4);
    for (const auto& r : rs.records) {
        CHECK(r.skid_number == r.skid_after);
        CHECK(r.macro_mm == r.macro_after_mm);
    }
}

TEST_CASE("noise-free trajectories are non-increasing in month") {
    SyntheticConfig cfg;
    cfg.n_sections = 40;
    cfg.hma.noise_std_skid = cfg.seal.noise_std_skid = 0.0;
    cfg.hma.noise_std_macro = cfg.seal.noise_std_macro = 0.0;
    RecordSet rs = generate_synthetic(cfg, 12);

    std::map<std::string, std::vector<const InspectionRecord*>> by_section;
    for (const auto& r : rs.records) by_section[r.section_id].push_back(&r);
    for (auto& [id, recs] : by_section) {
        std::sort(recs.begin(), recs.end(),
                  [](const auto* a, const auto* b) { return a->month < b->month; });
        for (std::size_t i = 1; i < recs.size(); ++i) {
            CHECK(recs[i]->skid_number <= recs[i - 1]->skid_number + 1e-12);
        }
    }
}

TEST_CASE("generated marginals match the calibration targets") {
    SyntheticConfig cfg;
    cfg.n_sections = 500;
    RecordSet rs = generate_synthetic(cfg, 7);
    std::vector<double> skid, macro;
    for (const auto& r : rs.records) {
        skid.push_back(r.skid_number);
        macro.push_back(r.macro_mm);
    }
    CHECK(std::abs(mean_of(skid) - 29.91) <= 1.5);
    CHECK(std::abs(stddev_of(skid) - 9.59) <= 1.5);
    CHECK(std::abs(mean_of(macro) - 1.44) <= 0.25);
}

TEST_CASE("generated values respect every configured range") {
    SyntheticConfig cfg;
    cfg.n_sections = 120;
    RecordSet rs = generate_synthetic(cfg, 21);
    for (const auto& r : rs.records) {
        CHECK(r.depth_in >= cfg.depth_in.min);
        CHECK(r.depth_in <= cfg.depth_in.max);
        CHECK(r.speed_fpm >= cfg.speed_fpm.min);
        CHECK(r.speed_fpm <= cfg.speed_fpm.max);
        CHECK(r.skid_number >= cfg.skid_number.min);
        CHECK(r.skid_number <= cfg.skid_number.max);
        CHECK(r.macro_mm >= cfg.macro_mm.min);
        CHECK(r.macro_mm <= cfg.macro_mm.max);
        CHECK((r.climatic_zone == 0 || r.climatic_zone == 1));
        CHECK((r.drum == 0 || r.drum == 1));
        CHECK((r.surface_type == 0 || r.surface_type == 1));
    }
}

TEST_CASE("empty synthetic config is rejected") {
    SyntheticConfig cfg;
    cfg.n_sections = 0;
    CHECK_THROWS_AS(generate_synthetic(cfg, 1), ConfigError);
}
