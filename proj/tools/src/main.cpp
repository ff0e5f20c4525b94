// pavecast: forecasts post-maintenance pavement skid resistance and
// macrotexture with a sequence-to-one transformer and eight baseline
// regressors, on loaded or synthesized inspection data.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pavecast/checkpoint.hpp"
#include "pavecast/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

pavecast::Task parse_task(const std::string& s) {
    if (s == "skid") return pavecast::Task::skid;
    if (s == "macrotexture") return pavecast::Task::macrotexture;
    throw pavecast::ConfigError("unknown task: " + s + " (expected skid or macrotexture)");
}

struct PipelineFlags {
    std::string data;
    int synthetic_sections = 0;
    std::uint64_t seed = 7;
    int window_length = 4;
    double split_ratio = 0.8;
    std::string split_mode = "sections";
    std::vector<std::string> tasks;
    std::vector<std::string> models;
    std::string out = "out";
    bool svg = false;
    bool allow_padding = false;

    double ridge_lambda = 1.0;
    double lasso_lambda = 1.0;
    int knn_k = 5;
    int tree_depth = 8;
    int forest_trees = 200;
    int gbt_rounds = 200;
    double gbt_shrinkage = 0.1;
    int mlp_hidden = 64;
    int epochs = 500;
    int patience = 25;
    double learning_rate = 1e-3;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--data", f.data, "CSV file of inspection records");
    cmd->add_option("--synthetic", f.synthetic_sections,
                    "generate this many synthetic sections instead of loading --data");
    cmd->add_option("--seed", f.seed, "master seed; all randomness derives from it");
    cmd->add_option("--window-length", f.window_length, "sliding window length L");
    cmd->add_option("--split-ratio", f.split_ratio, "train fraction in (0,1)");
    cmd->add_option("--split-mode", f.split_mode, "rows | sections")
        ->check(CLI::IsMember({"rows", "sections"}));
    cmd->add_option("--task", f.tasks, "skid, macrotexture, or both");
    cmd->add_option("--models", f.models, "model subset to run")->delimiter(',');
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_flag("--svg", f.svg, "also render an R2 bar chart per report");
    cmd->add_flag("--allow-padding", f.allow_padding, "left-pad short series");
    cmd->add_option("--ridge-lambda", f.ridge_lambda);
    cmd->add_option("--lasso-lambda", f.lasso_lambda);
    cmd->add_option("--knn-k", f.knn_k);
    cmd->add_option("--tree-depth", f.tree_depth);
    cmd->add_option("--forest-trees", f.forest_trees);
    cmd->add_option("--gbt-rounds", f.gbt_rounds);
    cmd->add_option("--gbt-shrinkage", f.gbt_shrinkage);
    cmd->add_option("--mlp-hidden", f.mlp_hidden);
    cmd->add_option("--epochs", f.epochs, "max training epochs (transformer and MLP)");
    cmd->add_option("--patience", f.patience, "early-stop patience (transformer)");
    cmd->add_option("--learning-rate", f.learning_rate);
}

pavecast::RunConfig to_run_config(const PipelineFlags& f) {
    pavecast::RunConfig cfg;
    if (!f.data.empty()) {
        cfg.data_path = f.data;
    } else {
        pavecast::SyntheticConfig sc;
        sc.n_sections = f.synthetic_sections > 0 ? f.synthetic_sections : 500;
        cfg.synthetic = sc;
    }
    cfg.seed = f.seed;
    cfg.window_length = f.window_length;
    cfg.split_ratio = f.split_ratio;
    cfg.split_mode = f.split_mode == "rows" ? pavecast::SplitMode::rows : pavecast::SplitMode::sections;
    if (!f.tasks.empty()) {
        cfg.tasks.clear();
        for (const std::string& t : f.tasks) cfg.tasks.push_back(parse_task(t));
    }
    if (!f.models.empty()) cfg.models = f.models;
    cfg.out_dir = f.out;
    cfg.emit_svg = f.svg;
    cfg.allow_padding = f.allow_padding;
    cfg.ridge_lambda = f.ridge_lambda;
    cfg.lasso_lambda = f.lasso_lambda;
    cfg.knn_k = f.knn_k;
    cfg.tree.max_depth = f.tree_depth;
    cfg.forest.n_trees = f.forest_trees;
    cfg.gbt.n_rounds = f.gbt_rounds;
    cfg.gbt.shrinkage = f.gbt_shrinkage;
    cfg.mlp.hidden = f.mlp_hidden;
    cfg.mlp.epochs = f.epochs;
    cfg.mlp.learning_rate = f.learning_rate;
    cfg.transformer.max_epochs = f.epochs;
    cfg.transformer.patience = f.patience;
    cfg.transformer.learning_rate = f.learning_rate;
    return cfg;
}

int run_and_report(const pavecast::RunConfig& cfg) {
    const pavecast::RunArtifacts artifacts = pavecast::run_pipeline(cfg);
    for (const pavecast::TaskResult& r : artifacts.results) {
        std::cout << pavecast::report_to_text(r.report) << "\n";
    }
    std::cout << "artifacts written to " << cfg.out_dir << " ("
              << artifacts.written_files.size() << " files)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pavement skid resistance and macrotexture forecasting toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; command-line flags win");
    app.allow_config_extras(CLI::config_extras_mode::ignore_all);

    // generate
    auto* generate = app.add_subcommand("generate", "write a synthetic inspection CSV");
    int gen_sections = 500;
    std::uint64_t gen_seed = 7;
    std::string gen_out = "data.csv";
    std::vector<int> gen_months;
    generate->add_option("--sections", gen_sections, "number of sections");
    generate->add_option("--seed", gen_seed);
    generate->add_option("--out", gen_out, "output CSV path")->required();
    generate->add_option("--months", gen_months, "inspection months (strictly increasing)");

    // validate
    auto* validate_cmd = app.add_subcommand("validate", "check a CSV against the record schema");
    std::string val_data;
    validate_cmd->add_option("--data", val_data)->required();

    // train / compare / reproduce share the pipeline flags
    PipelineFlags train_flags, compare_flags, reproduce_flags;
    auto* train_cmd = app.add_subcommand("train", "train one model and write its checkpoint");
    std::string train_model = "transformer";
    train_cmd->add_option("--model", train_model, "model to train");
    add_pipeline_flags(train_cmd, train_flags);

    auto* compare_cmd = app.add_subcommand("compare", "train a model set and emit comparison reports");
    add_pipeline_flags(compare_cmd, compare_flags);

    auto* reproduce_cmd = app.add_subcommand(
        "reproduce", "full benchmark: all nine models, both targets, synthetic data");
    add_pipeline_flags(reproduce_cmd, reproduce_flags);

    // evaluate
    auto* evaluate_cmd = app.add_subcommand("evaluate", "metrics of a checkpoint on a window CSV");
    std::string eval_checkpoint, eval_windows;
    evaluate_cmd->add_option("--checkpoint", eval_checkpoint)->required();
    evaluate_cmd->add_option("--windows", eval_windows)->required();

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "predictions of a checkpoint on a window CSV");
    std::string pred_checkpoint, pred_windows, pred_out;
    predict_cmd->add_option("--checkpoint", pred_checkpoint)->required();
    predict_cmd->add_option("--windows", pred_windows)->required();
    predict_cmd->add_option("--out", pred_out, "output CSV path (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*generate) {
            pavecast::SyntheticConfig cfg;
            cfg.n_sections = gen_sections;
            if (!gen_months.empty()) cfg.months = gen_months;
            const pavecast::RecordSet rs = pavecast::generate_synthetic(cfg, gen_seed);
            pavecast::save_records(rs, gen_out);
            std::cout << "wrote " << rs.records.size() << " records to " << gen_out << "\n";
            return kExitOk;
        }
        if (*validate_cmd) {
            const pavecast::RecordSet rs = pavecast::load_records(val_data);
            const pavecast::ValidationReport report = pavecast::validate(rs);
            for (const pavecast::Violation& v : report.violations) {
                std::cout << "section " << v.section_id << " month " << v.month << ": "
                          << v.message << "\n";
            }
            if (!report.ok()) {
                std::cout << report.violations.size() << " violation(s)\n";
                return kExitValidation;
            }
            std::cout << rs.records.size() << " records, no violations\n";
            return kExitOk;
        }
        if (*train_cmd) {
            pavecast::RunConfig cfg = to_run_config(train_flags);
            cfg.models = {train_model};
            if (train_flags.tasks.empty()) cfg.tasks = {pavecast::Task::skid};
            return run_and_report(cfg);
        }
        if (*compare_cmd) {
            return run_and_report(to_run_config(compare_flags));
        }
        if (*reproduce_cmd) {
            return run_and_report(to_run_config(reproduce_flags));
        }
        if (*evaluate_cmd) {
            const pavecast::SavedModel model{pavecast::Checkpoint::load(eval_checkpoint)};
            const std::vector<pavecast::WindowSample> windows = pavecast::load_windows(eval_windows);
            std::vector<double> y;
            for (const pavecast::WindowSample& w : windows) y.push_back(w.target);
            const pavecast::MetricTriple m = pavecast::compute_metrics(y, model.predict(windows));
            std::cout << "r2 " << pavecast::format_g9(m.r2) << "\nrmse "
                      << pavecast::format_g9(m.rmse) << "\nmae " << pavecast::format_g9(m.mae)
                      << "\n";
            return kExitOk;
        }
        if (*predict_cmd) {
            const pavecast::SavedModel model{pavecast::Checkpoint::load(pred_checkpoint)};
            const std::vector<pavecast::WindowSample> windows = pavecast::load_windows(pred_windows);
            if (!windows.empty() && windows.front().window.rows != model.window_length()) {
                throw pavecast::CheckpointError(
                    "window length mismatch: checkpoint expects L=" +
                    std::to_string(model.window_length()) + ", windows file has L=" +
                    std::to_string(windows.front().window.rows));
            }
            const std::vector<double> pred = model.predict(windows);
            std::ostringstream out;
            out << "section_id,target_month,prediction\n";
            for (std::size_t i = 0; i < windows.size(); ++i) {
                out << windows[i].section_id << ',' << windows[i].target_month << ','
                    << pavecast::format_g9(pred[i]) << '\n';
            }
            if (pred_out.empty()) {
                std::cout << out.str();
            } else {
                std::ofstream f(pred_out, std::ios::binary);
                f << out.str();
            }
            return kExitOk;
        }
    } catch (const pavecast::ValidationFailure& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return kExitValidation;
    } catch (const pavecast::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pavecast::SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const pavecast::RowError& e) {
        std::cerr << "row error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const pavecast::DuplicationError& e) {
        std::cerr << "duplication error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const pavecast::ParameterError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pavecast::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitConfig;
}
