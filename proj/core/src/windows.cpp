#include "pavecast/windows.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pavecast/rng.hpp"

namespace pavecast {

const char* const kFeatureNames[kFeatureCount] = {
    "climatic_zone", "depth_in",       "drum",          "speed_fpm",
    "surface_type",  "month",          "skid_before",   "skid_after",
    "macro_before_mm", "macro_after_mm", "skid_number",  "macro_mm"};

std::vector<double> record_features(const InspectionRecord& r) {
    return {static_cast<double>(r.climatic_zone),
            r.depth_in,
            static_cast<double>(r.drum),
            r.speed_fpm,
            static_cast<double>(r.surface_type),
            static_cast<double>(r.month),
            r.skid_before,
            r.skid_after,
            r.macro_before_mm,
            r.macro_after_mm,
            r.skid_number,
            r.macro_mm};
}

std::vector<SectionSeries> build_series(const RecordSet& rs) {
    std::vector<SectionSeries> out;
    std::map<std::string, std::size_t> index;
    for (const InspectionRecord& r : rs.records) {
        const auto [it, inserted] = index.insert({r.section_id, out.size()});
        if (inserted) out.push_back({r.section_id, {}});
        out[it->second].records.push_back(r);
    }
    for (SectionSeries& s : out) {
        std::stable_sort(s.records.begin(), s.records.end(),
                         [](const InspectionRecord& a, const InspectionRecord& b) {
                             return a.month < b.month;
                         });
    }
    return out;
}

namespace {

WindowSample sample_from_rows(const SectionSeries& series,
                              const std::vector<const InspectionRecord*>& rows,
                              const InspectionRecord& target_record, Task task, bool padded) {
    WindowSample s;
    s.section_id = series.section_id;
    s.window = Matrix(static_cast<int>(rows.size()), kFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::vector<double> f = record_features(*rows[i]);
        for (int j = 0; j < kFeatureCount; ++j) s.window.at(static_cast<int>(i), j) = f[j];
    }
    s.target_month = target_record.month;
    s.target = task == Task::skid ? target_record.skid_number : target_record.macro_mm;
    s.padded = padded;
    return s;
}

}  // namespace

std::vector<WindowSample> make_windows(const SectionSeries& series, int window_length, Task task,
                                       bool allow_padding) {
    if (window_length < 1) throw ConfigError("window length must be >= 1");
    std::vector<WindowSample> out;
    const int n = static_cast<int>(series.records.size());
    const int L = window_length;
    if (n >= L + 1) {
        for (int start = 0; start + L < n; ++start) {
            std::vector<const InspectionRecord*> rows;
            rows.reserve(L);
            for (int i = 0; i < L; ++i) rows.push_back(&series.records[start + i]);
            out.push_back(sample_from_rows(series, rows, series.records[start + L], task, false));
        }
    } else if (allow_padding && n >= 2) {
        // Left-pad by repeating the earliest record; the last record becomes
        // the target.
        std::vector<const InspectionRecord*> rows;
        for (int i = 0; i < L - (n - 1); ++i) rows.push_back(&series.records.front());
        for (int i = 0; i < n - 1; ++i) rows.push_back(&series.records[i]);
        out.push_back(sample_from_rows(series, rows, series.records.back(), task, true));
    }
    return out;
}

std::vector<WindowSample> make_windows(const std::vector<SectionSeries>& all, int window_length,
                                       Task task, bool allow_padding) {
    std::vector<WindowSample> out;
    for (const SectionSeries& s : all) {
        std::vector<WindowSample> w = make_windows(s, window_length, task, allow_padding);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

SplitResult split(const std::vector<WindowSample>& samples, double ratio, SplitMode mode,
                  std::uint64_t seed) {
    if (samples.size() < 2) throw SplitError("need at least 2 samples to split");
    if (!(ratio > 0.0 && ratio < 1.0)) throw SplitError("split ratio must be in (0,1)");
    SplitResult res;
    Rng rng(derive_seed(seed, "split"));
    if (mode == SplitMode::rows) {
        std::vector<std::size_t> idx(samples.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        const std::size_t n_train = static_cast<std::size_t>(ratio * static_cast<double>(samples.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? res.train : res.test).push_back(samples[idx[i]]);
        }
    } else {
        // Whole-section assignment: shuffle distinct section ids and add
        // sections to train until the train fraction first reaches ratio.
        // The boundary section goes to train.
        std::vector<std::string> sections;
        std::map<std::string, std::size_t> counts;
        for (const WindowSample& s : samples) {
            if (counts.insert({s.section_id, 0}).second) sections.push_back(s.section_id);
            ++counts[s.section_id];
        }
        if (sections.size() < 2) throw SplitError("sections split requires at least 2 distinct sections");
        rng.shuffle(sections);
        std::set<std::string> train_ids;
        std::size_t train_count = 0;
        const double total = static_cast<double>(samples.size());
        for (const std::string& id : sections) {
            if (static_cast<double>(train_count) / total >= ratio) break;
            train_ids.insert(id);
            train_count += counts[id];
        }
        for (const WindowSample& s : samples) {
            (train_ids.count(s.section_id) ? res.train : res.test).push_back(s);
        }
    }
    return res;
}

Scaler fit_scaler(const std::vector<WindowSample>& train) {
    if (train.empty()) throw ConfigError("fit_scaler requires a non-empty training set");
    const int d = train.front().window.cols;
    Scaler sc;
    sc.mean.assign(d, 0.0);
    sc.std.assign(d, 0.0);
    sc.passthrough.assign(d, true);
    std::size_t n = 0;
    for (const WindowSample& s : train) {
        for (int i = 0; i < s.window.rows; ++i) {
            ++n;
            for (int j = 0; j < d; ++j) {
                const double v = s.window.at(i, j);
                sc.mean[j] += v;
                if (v != 0.0 && v != 1.0) sc.passthrough[j] = false;
            }
        }
    }
    for (int j = 0; j < d; ++j) sc.mean[j] /= static_cast<double>(n);
    for (const WindowSample& s : train) {
        for (int i = 0; i < s.window.rows; ++i) {
            for (int j = 0; j < d; ++j) {
                const double c = s.window.at(i, j) - sc.mean[j];
                sc.std[j] += c * c;
            }
        }
    }
    for (int j = 0; j < d; ++j) {
        sc.std[j] = std::max(std::sqrt(sc.std[j] / static_cast<double>(n)), 1e-8);
    }
    return sc;
}

std::vector<WindowSample> apply_scaler(const Scaler& scaler, std::vector<WindowSample> samples) {
    for (WindowSample& s : samples) {
        if (s.window.cols != static_cast<int>(scaler.mean.size())) {
            throw ShapeError("scaler width " + std::to_string(scaler.mean.size()) +
                             " does not match window width " + std::to_string(s.window.cols));
        }
        for (int i = 0; i < s.window.rows; ++i) {
            for (int j = 0; j < s.window.cols; ++j) {
                if (scaler.passthrough[j]) continue;
                s.window.at(i, j) = (s.window.at(i, j) - scaler.mean[j]) / scaler.std[j];
            }
        }
    }
    return samples;
}

std::vector<double> flatten_window(const Matrix& window) {
    return window.data;
}

Matrix unflatten_window(const std::vector<double>& flat, int window_length, int feature_count) {
    return Matrix(window_length, feature_count, flat);
}

std::string windows_to_csv(const std::vector<WindowSample>& samples) {
    std::ostringstream out;
    out << "section_id,target_month,padded";
    const int width = samples.empty() ? 0 : static_cast<int>(samples.front().window.size());
    for (int i = 0; i < width; ++i) out << ",f" << i;
    out << ",target\n";
    for (const WindowSample& s : samples) {
        out << s.section_id << ',' << s.target_month << ',' << (s.padded ? 1 : 0);
        for (const double v : s.window.data) out << ',' << format_g9(v);
        out << ',' << format_g9(s.target) << '\n';
    }
    return out.str();
}

void save_windows(const std::vector<WindowSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot open file for writing: " + path);
    out << windows_to_csv(samples);
}

std::vector<WindowSample> load_windows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw SchemaError("empty windows file: " + path);
    std::vector<std::string> cols;
    {
        std::string cur;
        for (const char c : header) {
            if (c == ',') {
                cols.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        cols.push_back(cur);
    }
    if (cols.size() < 4 || cols[0] != "section_id" || cols[1] != "target_month" ||
        cols[2] != "padded" || cols.back() != "target") {
        throw SchemaError("unexpected windows CSV header in " + path);
    }
    const int width = static_cast<int>(cols.size()) - 4;
    if (width % kFeatureCount != 0) {
        throw SchemaError("windows CSV feature width " + std::to_string(width) +
                          " is not a multiple of " + std::to_string(kFeatureCount));
    }
    const int L = width / kFeatureCount;
    std::vector<WindowSample> out;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells;
        std::string cur;
        for (const char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        if (cells.size() != cols.size()) {
            throw RowError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(cols.size()) + " cells");
        }
        WindowSample s;
        s.section_id = cells[0];
        s.target_month = std::stoi(cells[1]);
        s.padded = cells[2] == "1";
        std::vector<double> flat(width);
        for (int i = 0; i < width; ++i) flat[i] = std::stod(cells[3 + i]);
        s.window = unflatten_window(flat, L, kFeatureCount);
        s.target = std::stod(cells.back());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace pavecast
