#include "pavecast/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pavecast/checkpoint.hpp"
#include "pavecast/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace pavecast {

std::string task_name(Task task) {
    return task == Task::skid ? "skid" : "macrotexture";
}

std::string model_display_name(const std::string& key) {
    if (key == "transformer") return "Sequence-to-One Transformer";
    if (key == "linear") return "Linear Regression";
    if (key == "ridge") return "Ridge Regression";
    if (key == "lasso") return "Lasso Regression";
    if (key == "knn") return "k-Nearest Neighbors";
    if (key == "tree") return "Decision Tree";
    if (key == "forest") return "Random Forest";
    if (key == "gbt") return "Gradient Boosted Trees";
    if (key == "mlp") return "MLP Regressor";
    throw ConfigError("unknown model: " + key);
}

std::string digest_hex(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::check() const {
    if (window_length < 1) throw ConfigError("window length must be >= 1");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split ratio must be in (0,1)");
    if (tasks.empty()) throw ConfigError("at least one task is required");
    if (models.empty()) throw ConfigError("at least one model is required");
    for (const std::string& m : models) model_display_name(m);  // throws on unknown
    if (!data_path && !synthetic) throw ConfigError("either a data path or a synthetic spec is required");
    if (synthetic) synthetic->check();
}

namespace {

struct FileWriter {
    fs::path dir;
    std::vector<std::string>* written;

    void write(const std::string& rel, const std::string& content) const {
        const fs::path p = dir / rel;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw StageError("write", "cannot open " + p.string());
        out << content;
        written->push_back(rel);
    }
};

DesignMatrix to_design(const std::vector<WindowSample>& samples) {
    DesignMatrix d;
    const int p = static_cast<int>(samples.front().window.size());
    d.x = Matrix(static_cast<int>(samples.size()), p);
    d.y.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::vector<double> flat = flatten_window(samples[i].window);
        for (int j = 0; j < p; ++j) d.x.at(static_cast<int>(i), j) = flat[j];
        d.y.push_back(samples[i].target);
    }
    return d;
}

// The flattened-window design is exactly rank-deficient: per-section
// covariates repeat across the L rows, and with a shared inspection
// schedule the month columns are constant (collinear with the intercept).
// Plain least squares therefore runs on a reduced design with constant and
// duplicate columns removed; coefficients are re-expanded with zeros so the
// model still consumes the full flattened width.
LinearModel fit_ols_reduced(const DesignMatrix& d) {
    std::vector<int> kept;
    for (int j = 0; j < d.x.cols; ++j) {
        bool constant = true;
        for (int i = 1; i < d.x.rows && constant; ++i) constant = d.x.at(i, j) == d.x.at(0, j);
        if (constant) continue;
        bool duplicate = false;
        for (const int k : kept) {
            bool same = true;
            for (int i = 0; i < d.x.rows && same; ++i) same = d.x.at(i, j) == d.x.at(i, k);
            if (same) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) kept.push_back(j);
    }
    DesignMatrix reduced;
    reduced.x = Matrix(d.x.rows, static_cast<int>(kept.size()));
    reduced.y = d.y;
    for (int i = 0; i < d.x.rows; ++i)
        for (std::size_t j = 0; j < kept.size(); ++j)
            reduced.x.at(i, static_cast<int>(j)) = d.x.at(i, kept[j]);
    const LinearModel m = fit_linear(LinearKind::ols, reduced);
    LinearModel full;
    full.intercept = m.intercept;
    full.coef.assign(d.x.cols, 0.0);
    for (std::size_t j = 0; j < kept.size(); ++j) full.coef[kept[j]] = m.coef[j];
    return full;
}

std::string predictions_csv(const std::vector<WindowSample>& train,
                            const std::vector<double>& train_pred,
                            const std::vector<WindowSample>& test,
                            const std::vector<double>& test_pred) {
    std::ostringstream out;
    out << "section_id,target_month,split,prediction\n";
    for (std::size_t i = 0; i < train.size(); ++i) {
        out << train[i].section_id << ',' << train[i].target_month << ",train,"
            << format_g9(train_pred[i]) << '\n';
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
        out << test[i].section_id << ',' << test[i].target_month << ",test,"
            << format_g9(test_pred[i]) << '\n';
    }
    return out.str();
}

std::string training_log_jsonl(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    for (const EpochLog& e : log) {
        json line;
        line["epoch"] = e.epoch;
        line["train_loss"] = e.train_loss;
        line["val_loss"] = e.val_loss;
        out << line.dump() << '\n';
    }
    return out.str();
}

}  // namespace

RunArtifacts run_pipeline(const RunConfig& cfg) {
    cfg.check();

    RunArtifacts artifacts;
    const fs::path out_dir(cfg.out_dir);
    const fs::path partial = out_dir.string() + ".partial";
    std::error_code ec;
    fs::remove_all(partial, ec);
    fs::create_directories(partial);
    FileWriter files{partial, &artifacts.written_files};

    try {
        // Stage: load or generate.
        RecordSet rs;
        try {
            rs = cfg.data_path ? load_records(*cfg.data_path)
                               : generate_synthetic(*cfg.synthetic, cfg.seed);
        } catch (const std::exception& e) {
            throw StageError("load", e.what());
        }
        const std::string data_csv = records_to_csv(rs);
        files.write("data.csv", data_csv);

        // Stage: validate.
        {
            const ValidationReport vr = validate(rs);
            if (!vr.ok()) {
                std::ostringstream msg;
                msg << vr.violations.size() << " validation violation(s); first: "
                    << vr.violations.front().message << " (section " << vr.violations.front().section_id
                    << ", month " << vr.violations.front().month << ")";
                throw ValidationFailure(msg.str());
            }
        }

        // Stage: series.
        std::vector<SectionSeries> series;
        try {
            series = build_series(rs);
        } catch (const std::exception& e) {
            throw StageError("build_series", e.what());
        }

        json manifest;
        manifest["seed"] = cfg.seed;
        manifest["data_digest"] = digest_hex(data_csv);
        manifest["data_source"] = cfg.data_path ? json(*cfg.data_path) : json("synthetic");
        if (cfg.synthetic) {
            manifest["synthetic"] = {{"n_sections", cfg.synthetic->n_sections},
                                     {"months", cfg.synthetic->months}};
        }
        manifest["window_length"] = cfg.window_length;
        manifest["split_ratio"] = cfg.split_ratio;
        manifest["split_mode"] = cfg.split_mode == SplitMode::sections ? "sections" : "rows";
        manifest["models"] = cfg.models;
        json task_entries = json::array();

        for (const Task task : cfg.tasks) {
            const std::string tname = task_name(task);
            TaskResult result;
            result.task = task;

            // Stage: windows + split + scale.
            SplitResult parts;
            Scaler scaler;
            std::vector<WindowSample> train_scaled, test_scaled;
            try {
                const std::vector<WindowSample> windows =
                    make_windows(series, cfg.window_length, task, cfg.allow_padding);
                parts = split(windows, cfg.split_ratio, cfg.split_mode, cfg.seed);
                scaler = fit_scaler(parts.train);
                train_scaled = apply_scaler(scaler, parts.train);
                test_scaled = apply_scaler(scaler, parts.test);
            } catch (const std::exception& e) {
                throw StageError("windows", e.what());
            }
            result.train_windows = parts.train;
            result.test_windows = parts.test;

            const std::string train_csv = windows_to_csv(parts.train);
            const std::string test_csv = windows_to_csv(parts.test);
            files.write("windows_" + tname + "_train.csv", train_csv);
            files.write("windows_" + tname + "_test.csv", test_csv);

            // Inner validation split for early stopping (carved from train).
            SplitResult inner;
            try {
                inner = split(train_scaled, 0.8, SplitMode::rows,
                              derive_seed(cfg.seed, "validation-" + tname));
            } catch (const std::exception& e) {
                throw StageError("validation_split", e.what());
            }

            std::vector<double> y_test;
            for (const WindowSample& s : parts.test) y_test.push_back(s.target);

            std::vector<std::pair<std::string, std::vector<double>>> predictions;
            for (const std::string& model : cfg.models) {
                const std::uint64_t model_seed = derive_seed(cfg.seed, "model-" + model + "-" + tname);
                Checkpoint cp;
                std::vector<EpochLog> log;
                try {
                    if (model == "transformer") {
                        TransformerConfig tc = cfg.transformer;
                        tc.d_x = kFeatureCount;
                        tc.window_length = cfg.window_length;
                        tc.seed = model_seed;
                        TrainResult tr = train(inner.train, inner.test, tc);
                        log = tr.log;
                        cp = checkpoint_transformer(tc, tr.params, scaler);
                    } else {
                        const DesignMatrix d = to_design(train_scaled);
                        const int L = cfg.window_length;
                        if (model == "linear") {
                            cp = checkpoint_linear("linear", fit_ols_reduced(d), scaler, L);
                        } else if (model == "ridge") {
                            cp = checkpoint_linear(
                                "ridge", fit_linear(LinearKind::ridge, d, cfg.ridge_lambda), scaler, L);
                        } else if (model == "lasso") {
                            cp = checkpoint_linear(
                                "lasso", fit_linear(LinearKind::lasso, d, cfg.lasso_lambda), scaler, L);
                        } else if (model == "knn") {
                            cp = checkpoint_knn(fit_knn(d, cfg.knn_k), scaler, L);
                        } else if (model == "tree") {
                            cp = checkpoint_tree(*fit_tree(d, cfg.tree), scaler, L, kFeatureCount);
                        } else if (model == "forest") {
                            ForestConfig fc = cfg.forest;
                            fc.seed = model_seed;
                            cp = checkpoint_forest(fit_forest(d, fc), scaler, L, kFeatureCount);
                        } else if (model == "gbt") {
                            cp = checkpoint_gbt(fit_gbt(d, cfg.gbt), scaler, L, kFeatureCount);
                        } else {
                            MlpConfig mc = cfg.mlp;
                            mc.seed = model_seed;
                            cp = checkpoint_mlp(fit_mlp(d, mc), scaler, L);
                        }
                    }
                } catch (const StageError&) {
                    throw;
                } catch (const std::exception& e) {
                    throw StageError("train:" + model + ":" + tname, e.what());
                }

                const SavedModel saved{cp};
                const std::vector<double> train_pred = saved.predict(parts.train);
                const std::vector<double> test_pred = saved.predict(parts.test);
                predictions.push_back({model_display_name(model), test_pred});

                files.write("checkpoint_" + model + "_" + tname + ".ckpt", cp.serialize());
                files.write("predictions_" + model + "_" + tname + ".csv",
                            predictions_csv(parts.train, train_pred, parts.test, test_pred));
                if (!log.empty()) {
                    files.write("train_log_" + model + "_" + tname + ".jsonl", training_log_jsonl(log));
                }
            }

            // Stage: compare.
            std::ostringstream split_desc;
            split_desc << (cfg.split_mode == SplitMode::sections ? "sections" : "rows") << " "
                       << format_g9(cfg.split_ratio) << "/" << format_g9(1.0 - cfg.split_ratio)
                       << ", L=" << cfg.window_length;
            try {
                result.report = compare(predictions, y_test, tname, split_desc.str(), cfg.seed);
            } catch (const std::exception& e) {
                throw StageError("compare", e.what());
            }
            files.write("report_" + tname + ".csv", report_to_csv(result.report));
            files.write("report_" + tname + ".txt", report_to_text(result.report));
            if (cfg.emit_svg) {
                files.write("report_" + tname + ".svg", report_to_svg(result.report));
            }

            json entry;
            entry["task"] = tname;
            entry["train_windows"] = parts.train.size();
            entry["test_windows"] = parts.test.size();
            entry["train_digest"] = digest_hex(train_csv);
            entry["test_digest"] = digest_hex(test_csv);
            task_entries.push_back(entry);

            artifacts.results.push_back(std::move(result));
        }

        manifest["tasks"] = task_entries;
        artifacts.manifest_json = manifest.dump(2) + "\n";
        files.write("manifest.json", artifacts.manifest_json);
    } catch (...) {
        fs::remove_all(partial, ec);
        throw;
    }

    fs::remove_all(out_dir, ec);
    fs::rename(partial, out_dir);
    return artifacts;
}

}  // namespace pavecast
