#include "pavecast/checkpoint.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

namespace pavecast {

namespace {

constexpr const char* kMagic = "pavecast-checkpoint v1";

std::string hex_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hex_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw CheckpointError("bad double literal: " + s);
    return v;
}

// Flattens a tree into parallel arrays: feature, threshold, left, right,
// prediction. Leaves have feature = -1 and child indices -1.
Matrix tree_to_matrix(const TreeNode& root) {
    std::vector<std::array<double, 5>> rows;
    const std::function<int(const TreeNode&)> visit = [&](const TreeNode& n) -> int {
        const int my = static_cast<int>(rows.size());
        rows.push_back({-1.0, 0.0, -1.0, -1.0, n.prediction});
        if (!n.is_leaf) {
            rows[my][0] = static_cast<double>(n.feature);
            rows[my][1] = n.threshold;
            const int l = visit(*n.left);
            const int r = visit(*n.right);
            rows[my][2] = static_cast<double>(l);
            rows[my][3] = static_cast<double>(r);
        }
        return my;
    };
    visit(root);
    Matrix m(static_cast<int>(rows.size()), 5);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < 5; ++j) m.at(static_cast<int>(i), j) = rows[i][j];
    return m;
}

std::unique_ptr<TreeNode> matrix_to_tree(const Matrix& m, int row = 0) {
    auto node = std::make_unique<TreeNode>();
    node->prediction = m.at(row, 4);
    const int feature = static_cast<int>(m.at(row, 0));
    if (feature >= 0) {
        node->is_leaf = false;
        node->feature = feature;
        node->threshold = m.at(row, 1);
        node->left = matrix_to_tree(m, static_cast<int>(m.at(row, 2)));
        node->right = matrix_to_tree(m, static_cast<int>(m.at(row, 3)));
    }
    return node;
}

void put_scaler(Checkpoint& cp, const Scaler& scaler) {
    const int d = static_cast<int>(scaler.mean.size());
    Matrix m(3, d);
    for (int j = 0; j < d; ++j) {
        m.at(0, j) = scaler.mean[j];
        m.at(1, j) = scaler.std[j];
        m.at(2, j) = scaler.passthrough[j] ? 1.0 : 0.0;
    }
    cp.matrices.push_back({"scaler", std::move(m)});
}

Matrix flatten_samples(const std::vector<WindowSample>& windows, const Scaler& scaler) {
    std::vector<WindowSample> scaled = apply_scaler(scaler, windows);
    if (scaled.empty()) return Matrix(0, 0);
    const int p = static_cast<int>(scaled.front().window.size());
    Matrix x(static_cast<int>(scaled.size()), p);
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        const std::vector<double> flat = flatten_window(scaled[i].window);
        for (int j = 0; j < p; ++j) x.at(static_cast<int>(i), j) = flat[j];
    }
    return x;
}

}  // namespace

const Matrix& Checkpoint::matrix(const std::string& name) const {
    for (const auto& [n, m] : matrices) {
        if (n == name) return m;
    }
    throw CheckpointError("checkpoint has no matrix named " + name);
}

double Checkpoint::scalar(const std::string& name) const {
    const auto it = scalars.find(name);
    if (it == scalars.end()) throw CheckpointError("checkpoint has no scalar named " + name);
    return it->second;
}

std::string Checkpoint::serialize() const {
    std::ostringstream out;
    out << kMagic << '\n';
    out << "kind " << kind << '\n';
    for (const auto& [k, v] : strings) out << "string " << k << ' ' << v << '\n';
    for (const auto& [k, v] : scalars) out << "scalar " << k << ' ' << hex_double(v) << '\n';
    for (const auto& [name, m] : matrices) {
        out << "matrix " << name << ' ' << m.rows << ' ' << m.cols << '\n';
        for (int i = 0; i < m.rows; ++i) {
            for (int j = 0; j < m.cols; ++j) {
                if (j) out << ' ';
                out << hex_double(m.at(i, j));
            }
            out << '\n';
        }
    }
    return out.str();
}

Checkpoint Checkpoint::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw CheckpointError("not a pavecast checkpoint (bad magic line)");
    }
    Checkpoint cp;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "kind") {
            ls >> cp.kind;
        } else if (tag == "string") {
            std::string k, v;
            ls >> k;
            std::getline(ls, v);
            if (!v.empty() && v.front() == ' ') v.erase(v.begin());
            cp.strings[k] = v;
        } else if (tag == "scalar") {
            std::string k, v;
            ls >> k >> v;
            cp.scalars[k] = parse_hex_double(v);
        } else if (tag == "matrix") {
            std::string name;
            int rows = 0, cols = 0;
            ls >> name >> rows >> cols;
            Matrix m(rows, cols);
            for (int i = 0; i < rows; ++i) {
                if (!std::getline(in, line)) throw CheckpointError("truncated matrix " + name);
                std::istringstream row(line);
                std::string cell;
                for (int j = 0; j < cols; ++j) {
                    if (!(row >> cell)) throw CheckpointError("short row in matrix " + name);
                    m.at(i, j) = parse_hex_double(cell);
                }
            }
            cp.matrices.push_back({name, std::move(m)});
        } else {
            throw CheckpointError("unknown checkpoint line tag: " + tag);
        }
    }
    if (cp.kind.empty()) throw CheckpointError("checkpoint is missing its kind tag");
    return cp;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out << serialize();
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

Scaler restore_scaler(const Checkpoint& cp) {
    const Matrix& m = cp.matrix("scaler");
    Scaler sc;
    sc.mean.resize(m.cols);
    sc.std.resize(m.cols);
    sc.passthrough.resize(m.cols);
    for (int j = 0; j < m.cols; ++j) {
        sc.mean[j] = m.at(0, j);
        sc.std[j] = m.at(1, j);
        sc.passthrough[j] = m.at(2, j) != 0.0;
    }
    return sc;
}

Checkpoint checkpoint_transformer(const TransformerConfig& cfg, const TransformerParams& params,
                                  const Scaler& scaler) {
    Checkpoint cp;
    cp.kind = "transformer";
    cp.scalars["d_x"] = cfg.d_x;
    cp.scalars["d_model"] = cfg.d_model;
    cp.scalars["n_heads"] = cfg.n_heads;
    cp.scalars["d_k"] = cfg.d_k;
    cp.scalars["n_layers"] = cfg.n_layers;
    cp.scalars["d_ff"] = cfg.d_ff;
    cp.scalars["d_head"] = cfg.d_head;
    cp.scalars["window_length"] = cfg.window_length;
    put_scaler(cp, scaler);
    const std::vector<const Matrix*> mats = params.matrices();
    const std::vector<std::string> names = params.matrix_names(cfg);
    for (std::size_t i = 0; i < mats.size(); ++i) cp.matrices.push_back({names[i], *mats[i]});
    return cp;
}

void restore_transformer(const Checkpoint& cp, TransformerConfig& cfg, TransformerParams& params) {
    if (cp.kind != "transformer") throw CheckpointError("checkpoint kind is not transformer");
    cfg.d_x = static_cast<int>(cp.scalar("d_x"));
    cfg.d_model = static_cast<int>(cp.scalar("d_model"));
    cfg.n_heads = static_cast<int>(cp.scalar("n_heads"));
    cfg.d_k = static_cast<int>(cp.scalar("d_k"));
    cfg.n_layers = static_cast<int>(cp.scalar("n_layers"));
    cfg.d_ff = static_cast<int>(cp.scalar("d_ff"));
    cfg.d_head = static_cast<int>(cp.scalar("d_head"));
    cfg.window_length = static_cast<int>(cp.scalar("window_length"));
    params = TransformerParams{};
    params.layers.resize(cfg.n_layers);
    for (TransformerParams::Layer& l : params.layers) {
        l.wq.resize(cfg.n_heads);
        l.wk.resize(cfg.n_heads);
        l.wv.resize(cfg.n_heads);
    }
    const std::vector<Matrix*> mats = params.matrices();
    const std::vector<std::string> names = params.matrix_names(cfg);
    for (std::size_t i = 0; i < mats.size(); ++i) {
        *mats[i] = cp.matrix(names[i]);
    }
}

Checkpoint checkpoint_linear(const std::string& kind_tag, const LinearModel& model,
                             const Scaler& scaler, int window_length) {
    Checkpoint cp;
    cp.kind = kind_tag;
    cp.scalars["intercept"] = model.intercept;
    cp.scalars["window_length"] = window_length;
    put_scaler(cp, scaler);
    cp.matrices.push_back({"coef", Matrix::row_vector(model.coef)});
    return cp;
}

Checkpoint checkpoint_knn(const KnnModel& model, const Scaler& scaler, int window_length) {
    Checkpoint cp;
    cp.kind = "knn";
    cp.scalars["k"] = model.k;
    cp.scalars["window_length"] = window_length;
    put_scaler(cp, scaler);
    cp.matrices.push_back({"x", model.x});
    cp.matrices.push_back({"y", Matrix::row_vector(model.y)});
    return cp;
}

Checkpoint checkpoint_tree(const TreeNode& root, const Scaler& scaler, int window_length,
                           int feature_count) {
    Checkpoint cp;
    cp.kind = "tree";
    cp.scalars["window_length"] = window_length;
    cp.scalars["feature_count"] = feature_count;
    put_scaler(cp, scaler);
    cp.matrices.push_back({"nodes", tree_to_matrix(root)});
    return cp;
}

Checkpoint checkpoint_forest(const Forest& forest, const Scaler& scaler, int window_length,
                             int feature_count) {
    Checkpoint cp;
    cp.kind = "forest";
    cp.scalars["n_trees"] = static_cast<double>(forest.trees.size());
    cp.scalars["window_length"] = window_length;
    cp.scalars["feature_count"] = feature_count;
    put_scaler(cp, scaler);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        cp.matrices.push_back({"tree" + std::to_string(t), tree_to_matrix(*forest.trees[t])});
    }
    return cp;
}

Checkpoint checkpoint_gbt(const BoostedModel& model, const Scaler& scaler, int window_length,
                          int feature_count) {
    Checkpoint cp;
    cp.kind = "gbt";
    cp.scalars["f0"] = model.f0;
    cp.scalars["shrinkage"] = model.shrinkage;
    cp.scalars["n_rounds"] = static_cast<double>(model.trees.size());
    cp.scalars["window_length"] = window_length;
    cp.scalars["feature_count"] = feature_count;
    put_scaler(cp, scaler);
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        cp.matrices.push_back({"tree" + std::to_string(t), tree_to_matrix(*model.trees[t])});
    }
    return cp;
}

Checkpoint checkpoint_mlp(const MlpModel& model, const Scaler& scaler, int window_length) {
    Checkpoint cp;
    cp.kind = "mlp";
    cp.scalars["window_length"] = window_length;
    put_scaler(cp, scaler);
    cp.matrices.push_back({"w1", model.w1});
    cp.matrices.push_back({"b1", model.b1});
    cp.matrices.push_back({"w2", model.w2});
    cp.matrices.push_back({"b2", model.b2});
    return cp;
}

int SavedModel::feature_count() const {
    return static_cast<int>(checkpoint.matrix("scaler").cols);
}

int SavedModel::window_length() const {
    return static_cast<int>(checkpoint.scalar("window_length"));
}

std::vector<double> SavedModel::predict(const std::vector<WindowSample>& windows) const {
    const Scaler scaler = restore_scaler(checkpoint);
    for (const WindowSample& w : windows) {
        if (w.window.rows != window_length()) {
            throw CheckpointError("window length mismatch: checkpoint expects " +
                                  std::to_string(window_length()) + ", got " +
                                  std::to_string(w.window.rows));
        }
    }
    if (checkpoint.kind == "transformer") {
        TransformerConfig cfg;
        TransformerParams params;
        restore_transformer(checkpoint, cfg, params);
        for (const WindowSample& w : windows) {
            if (w.window.cols != cfg.d_x) {
                throw CheckpointError("feature width mismatch: checkpoint expects d_x=" +
                                      std::to_string(cfg.d_x) + ", got " +
                                      std::to_string(w.window.cols));
            }
        }
        return pavecast::predict(params, cfg, apply_scaler(scaler, windows));
    }

    const Matrix x = flatten_samples(windows, scaler);
    if (x.rows == 0) return {};
    if (checkpoint.kind == "linear" || checkpoint.kind == "ridge" || checkpoint.kind == "lasso") {
        LinearModel m;
        m.intercept = checkpoint.scalar("intercept");
        m.coef = checkpoint.matrix("coef").data;
        if (static_cast<int>(m.coef.size()) != x.cols) {
            throw CheckpointError("flattened feature width mismatch for linear model");
        }
        return m.predict(x);
    }
    if (checkpoint.kind == "knn") {
        KnnModel m;
        m.x = checkpoint.matrix("x");
        m.y = checkpoint.matrix("y").data;
        m.k = static_cast<int>(checkpoint.scalar("k"));
        if (m.x.cols != x.cols) throw CheckpointError("flattened feature width mismatch for knn");
        return m.predict(x);
    }
    if (checkpoint.kind == "tree") {
        const std::unique_ptr<TreeNode> root = matrix_to_tree(checkpoint.matrix("nodes"));
        return predict_tree(*root, x);
    }
    if (checkpoint.kind == "forest") {
        Forest f;
        const int n_trees = static_cast<int>(checkpoint.scalar("n_trees"));
        for (int t = 0; t < n_trees; ++t) {
            f.trees.push_back(matrix_to_tree(checkpoint.matrix("tree" + std::to_string(t))));
        }
        return f.predict(x);
    }
    if (checkpoint.kind == "gbt") {
        BoostedModel m;
        m.f0 = checkpoint.scalar("f0");
        m.shrinkage = checkpoint.scalar("shrinkage");
        const int n_rounds = static_cast<int>(checkpoint.scalar("n_rounds"));
        for (int t = 0; t < n_rounds; ++t) {
            m.trees.push_back(matrix_to_tree(checkpoint.matrix("tree" + std::to_string(t))));
        }
        return m.predict(x);
    }
    if (checkpoint.kind == "mlp") {
        MlpModel m;
        m.w1 = checkpoint.matrix("w1");
        m.b1 = checkpoint.matrix("b1");
        m.w2 = checkpoint.matrix("w2");
        m.b2 = checkpoint.matrix("b2");
        if (m.w1.cols != x.cols) throw CheckpointError("flattened feature width mismatch for mlp");
        return m.predict(x);
    }
    throw CheckpointError("unknown model kind: " + checkpoint.kind);
}

}  // namespace pavecast
