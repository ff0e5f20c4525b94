#include "pavecast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pavecast/rng.hpp"
#include "pavecast/transformer.hpp"

namespace pavecast {

void DesignMatrix::check() const {
    if (x.rows < 1) throw ParameterError("design matrix needs at least one row");
    if (static_cast<int>(y.size()) != x.rows) {
        throw ShapeError("design matrix rows (" + std::to_string(x.rows) + ") do not match target count (" +
                         std::to_string(y.size()) + ")");
    }
    if (!x.all_finite()) throw NumericError("design matrix contains non-finite entries");
    for (const double v : y) {
        if (!std::isfinite(v)) throw NumericError("target vector contains non-finite entries");
    }
}

std::vector<double> matrix_row(const Matrix& m, int r) {
    std::vector<double> out(m.cols);
    for (int j = 0; j < m.cols; ++j) out[j] = m.at(r, j);
    return out;
}

namespace {

// Gaussian elimination with partial pivoting.
std::vector<double> solve_linear_system(Matrix a, std::vector<double> b) {
    const int n = a.rows;
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        }
        if (std::abs(a.at(pivot, col)) < 1e-12) {
            throw SingularityError(
                "normal equations are singular (rank-deficient design); consider ridge regression");
        }
        if (pivot != col) {
            for (int j = 0; j < n; ++j) std::swap(a.at(col, j), a.at(pivot, j));
            std::swap(b[col], b[pivot]);
        }
        for (int r = col + 1; r < n; ++r) {
            const double f = a.at(r, col) / a.at(col, col);
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a.at(r, j) -= f * a.at(col, j);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int j = r + 1; j < n; ++j) s -= a.at(r, j) * x[j];
        x[r] = s / a.at(r, r);
    }
    return x;
}

LinearModel fit_lasso(const DesignMatrix& d, double lambda) {
    const int n = d.x.rows;
    const int p = d.x.cols;
    // Cyclic coordinate descent on 1/2 ||y - b0 - X beta||^2 + lambda ||beta||_1.
    // With this objective an orthonormal design reduces each update to the
    // soft-threshold of the OLS coefficient at exactly lambda.
    std::vector<double> beta(p, 0.0);
    double intercept = std::accumulate(d.y.begin(), d.y.end(), 0.0) / n;
    std::vector<double> residual(n);
    for (int i = 0; i < n; ++i) residual[i] = d.y[i] - intercept;
    std::vector<double> col_sq(p, 0.0);
    for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) col_sq[j] += d.x.at(i, j) * d.x.at(i, j);
    }
    const double tol = 1e-8;
    for (int iter = 0; iter < 100000; ++iter) {
        double max_change = 0.0;
        for (int j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            double rho = 0.0;
            for (int i = 0; i < n; ++i) rho += d.x.at(i, j) * residual[i];
            rho += col_sq[j] * beta[j];
            const double old = beta[j];
            const double st = std::abs(rho) > lambda ? (rho > 0 ? rho - lambda : rho + lambda) : 0.0;
            beta[j] = st / col_sq[j];
            if (beta[j] != old) {
                const double delta = beta[j] - old;
                for (int i = 0; i < n; ++i) residual[i] -= delta * d.x.at(i, j);
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        // Unpenalized intercept: absorb the mean residual.
        double mean_res = std::accumulate(residual.begin(), residual.end(), 0.0) / n;
        if (mean_res != 0.0) {
            intercept += mean_res;
            for (double& r : residual) r -= mean_res;
            max_change = std::max(max_change, std::abs(mean_res));
        }
        if (max_change < tol) break;
    }
    LinearModel m;
    m.intercept = intercept;
    m.coef = std::move(beta);
    return m;
}

struct TreeData {
    const Matrix& x;
    const std::vector<double>& y;
};

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

double mean_of(const TreeData& d, const std::vector<int>& idx) {
    double s = 0.0;
    for (const int i : idx) s += d.y[i];
    return s / static_cast<double>(idx.size());
}

// Exhaustive scan over (feature, midpoint threshold) pairs, minimizing the
// child SSE sum. Ties break toward the lower feature index, then the lower
// threshold, which makes fitting fully deterministic.
SplitChoice best_split(const TreeData& d, const std::vector<int>& idx,
                       const std::vector<int>& features, int min_samples_leaf) {
    SplitChoice best;
    const int n = static_cast<int>(idx.size());
    std::vector<std::pair<double, double>> vals(n);  // (feature value, target)
    for (const int f : features) {
        for (int i = 0; i < n; ++i) vals[i] = {d.x.at(idx[i], f), d.y[idx[i]]};
        std::sort(vals.begin(), vals.end());
        // Prefix sums over the sorted order.
        double left_sum = 0.0, left_sq = 0.0;
        double total_sum = 0.0, total_sq = 0.0;
        for (const auto& [xv, yv] : vals) {
            total_sum += yv;
            total_sq += yv * yv;
        }
        for (int i = 0; i < n - 1; ++i) {
            left_sum += vals[i].second;
            left_sq += vals[i].second * vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;  // no distinct boundary
            const int nl = i + 1;
            const int nr = n - nl;
            if (nl < min_samples_leaf || nr < min_samples_leaf) continue;
            const double right_sum = total_sum - left_sum;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / nl) +
                               (right_sq - right_sum * right_sum / nr);
            const double threshold = 0.5 * (vals[i].first + vals[i + 1].first);
            // Features and thresholds are scanned in ascending order, so the
            // strict comparison keeps the lowest (feature, threshold) on ties.
            if (sse + 1e-12 < best.sse) {
                best.found = true;
                best.feature = f;
                best.threshold = threshold;
                best.sse = sse;
            }
        }
    }
    return best;
}

std::unique_ptr<TreeNode> build_tree(const TreeData& d, std::vector<int> idx, int depth,
                                     const TreeConfig& cfg, Rng* feature_rng, int n_sub_features) {
    auto node = std::make_unique<TreeNode>();
    node->prediction = mean_of(d, idx);

    // Zero-variance stop, checked as exact equality so a constant target
    // yields a single leaf even when the accumulated mean is off by an ulp.
    bool constant_target = true;
    for (const int i : idx) {
        if (d.y[i] != d.y[idx.front()]) {
            constant_target = false;
            break;
        }
    }
    if (constant_target) node->prediction = d.y[idx.front()];
    if (depth >= cfg.max_depth || constant_target ||
        static_cast<int>(idx.size()) < 2 * cfg.min_samples_leaf) {
        return node;
    }

    std::vector<int> features(d.x.cols);
    std::iota(features.begin(), features.end(), 0);
    if (feature_rng != nullptr && n_sub_features < d.x.cols) {
        feature_rng->shuffle(features);
        features.resize(n_sub_features);
        std::sort(features.begin(), features.end());
    }

    const SplitChoice split = best_split(d, idx, features, cfg.min_samples_leaf);
    if (!split.found) return node;

    std::vector<int> left_idx, right_idx;
    for (const int i : idx) {
        (d.x.at(i, split.feature) <= split.threshold ? left_idx : right_idx).push_back(i);
    }
    node->is_leaf = false;
    node->feature = split.feature;
    node->threshold = split.threshold;
    node->left = build_tree(d, std::move(left_idx), depth + 1, cfg, feature_rng, n_sub_features);
    node->right = build_tree(d, std::move(right_idx), depth + 1, cfg, feature_rng, n_sub_features);
    return node;
}

}  // namespace

double LinearModel::predict_one(const std::vector<double>& row) const {
    double s = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) s += coef[j] * row[j];
    return s;
}

std::vector<double> LinearModel::predict(const Matrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows);
    for (int i = 0; i < x.rows; ++i) out.push_back(predict_one(matrix_row(x, i)));
    return out;
}

LinearModel fit_linear(LinearKind kind, const DesignMatrix& d, double lambda) {
    d.check();
    if (lambda < 0.0) throw ParameterError("lambda must be non-negative");
    if (kind == LinearKind::lasso) return fit_lasso(d, lambda);

    const int n = d.x.rows;
    const int p = d.x.cols;
    // Augmented system with the intercept in column 0, unpenalized.
    Matrix xtx(p + 1, p + 1);
    std::vector<double> xty(p + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        xtx.at(0, 0) += 1.0;
        xty[0] += d.y[i];
        for (int j = 0; j < p; ++j) {
            const double xij = d.x.at(i, j);
            xtx.at(0, j + 1) += xij;
            xtx.at(j + 1, 0) += xij;
            xty[j + 1] += xij * d.y[i];
            for (int k2 = j; k2 < p; ++k2) {
                xtx.at(j + 1, k2 + 1) += xij * d.x.at(i, k2);
            }
        }
    }
    for (int j = 1; j <= p; ++j)
        for (int k2 = 0; k2 < j; ++k2) xtx.at(j, k2 + 1) = xtx.at(k2 + 1, j);
    if (kind == LinearKind::ridge) {
        for (int j = 1; j <= p; ++j) xtx.at(j, j) += lambda;
    }
    const std::vector<double> beta = solve_linear_system(std::move(xtx), std::move(xty));
    LinearModel m;
    m.intercept = beta[0];
    m.coef.assign(beta.begin() + 1, beta.end());
    return m;
}

double KnnModel::predict_one(const std::vector<double>& row) const {
    // Partial sort over (distance, index); ties break toward the lower row index.
    std::vector<std::pair<double, int>> dist;
    dist.reserve(x.rows);
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double c = x.at(i, j) - row[j];
            s += c * c;
        }
        dist.push_back({s, i});
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += y[dist[i].second];
    return sum / static_cast<double>(k);
}

std::vector<double> KnnModel::predict(const Matrix& queries) const {
    std::vector<double> out;
    out.reserve(queries.rows);
    for (int i = 0; i < queries.rows; ++i) out.push_back(predict_one(matrix_row(queries, i)));
    return out;
}

KnnModel fit_knn(const DesignMatrix& d, int k) {
    d.check();
    if (k < 1 || k > d.x.rows) {
        throw ParameterError("k must be in [1, n]; got k=" + std::to_string(k) + ", n=" +
                             std::to_string(d.x.rows));
    }
    return KnnModel{d.x, d.y, k};
}

double TreeNode::predict_one(const std::vector<double>& row) const {
    const TreeNode* node = this;
    while (!node->is_leaf) {
        node = row[node->feature] <= node->threshold ? node->left.get() : node->right.get();
    }
    return node->prediction;
}

std::unique_ptr<TreeNode> fit_tree(const DesignMatrix& d, const TreeConfig& cfg) {
    d.check();
    if (cfg.max_depth < 0) throw ParameterError("max_depth must be >= 0");
    if (cfg.min_samples_leaf < 1) throw ParameterError("min_samples_leaf must be >= 1");
    std::vector<int> idx(d.x.rows);
    std::iota(idx.begin(), idx.end(), 0);
    TreeData data{d.x, d.y};
    return build_tree(data, std::move(idx), 0, cfg, nullptr, d.x.cols);
}

std::vector<double> predict_tree(const TreeNode& root, const Matrix& x) {
    std::vector<double> out;
    out.reserve(x.rows);
    for (int i = 0; i < x.rows; ++i) out.push_back(root.predict_one(matrix_row(x, i)));
    return out;
}

std::vector<double> Forest::tree_predictions(const std::vector<double>& row) const {
    std::vector<double> out;
    out.reserve(trees.size());
    for (const auto& t : trees) out.push_back(t->predict_one(row));
    return out;
}

double Forest::predict_one(const std::vector<double>& row) const {
    double s = 0.0;
    for (const auto& t : trees) s += t->predict_one(row);
    return s / static_cast<double>(trees.size());
}

std::vector<double> Forest::predict(const Matrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows);
    for (int i = 0; i < x.rows; ++i) out.push_back(predict_one(matrix_row(x, i)));
    return out;
}

Forest fit_forest(const DesignMatrix& d, const ForestConfig& cfg) {
    d.check();
    if (cfg.n_trees < 1) throw ParameterError("n_trees must be >= 1");
    if (!(cfg.feature_fraction > 0.0 && cfg.feature_fraction <= 1.0)) {
        throw ParameterError("feature_fraction must be in (0, 1]");
    }
    const int n = d.x.rows;
    const int n_sub = static_cast<int>(std::ceil(cfg.feature_fraction * d.x.cols));
    Forest forest;
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(derive_seed(cfg.seed, "forest-tree", static_cast<std::uint64_t>(t)));
        std::vector<int> idx;
        idx.reserve(n);
        if (cfg.bootstrap) {
            for (int i = 0; i < n; ++i) idx.push_back(static_cast<int>(rng.index(n)));
        } else {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), 0);
        }
        TreeData data{d.x, d.y};
        Rng* feature_rng = n_sub < d.x.cols ? &rng : nullptr;
        forest.trees.push_back(build_tree(data, std::move(idx), 0, cfg.tree, feature_rng, n_sub));
    }
    return forest;
}

double BoostedModel::predict_one(const std::vector<double>& row) const {
    double s = f0;
    for (const auto& t : trees) s += shrinkage * t->predict_one(row);
    return s;
}

std::vector<double> BoostedModel::predict(const Matrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows);
    for (int i = 0; i < x.rows; ++i) out.push_back(predict_one(matrix_row(x, i)));
    return out;
}

BoostedModel fit_gbt(const DesignMatrix& d, const GbtConfig& cfg) {
    d.check();
    if (cfg.n_rounds < 1) throw ParameterError("n_rounds must be >= 1");
    if (!(cfg.shrinkage > 0.0 && cfg.shrinkage <= 1.0)) {
        throw ParameterError("shrinkage must be in (0, 1]");
    }
    const int n = d.x.rows;
    BoostedModel model;
    model.shrinkage = cfg.shrinkage;
    model.f0 = std::accumulate(d.y.begin(), d.y.end(), 0.0) / n;
    std::vector<double> current(n, model.f0);
    std::vector<double> residual(n);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int round = 0; round < cfg.n_rounds; ++round) {
        for (int i = 0; i < n; ++i) residual[i] = d.y[i] - current[i];
        DesignMatrix rd{d.x, residual};
        TreeData data{rd.x, rd.y};
        auto tree = build_tree(data, idx, 0, cfg.tree, nullptr, d.x.cols);
        double mse = 0.0;
        for (int i = 0; i < n; ++i) {
            current[i] += cfg.shrinkage * tree->predict_one(matrix_row(d.x, i));
            const double r = d.y[i] - current[i];
            mse += r * r;
        }
        model.trees.push_back(std::move(tree));
        model.train_mse.push_back(mse / n);
    }
    return model;
}

double MlpModel::predict_one(const std::vector<double>& row) const {
    double out = b2.at(0, 0);
    for (int h = 0; h < w1.rows; ++h) {
        double a = b1.at(0, h);
        for (int j = 0; j < w1.cols; ++j) a += w1.at(h, j) * row[j];
        if (a > 0.0) out += a * w2.at(h, 0);
    }
    return out;
}

std::vector<double> MlpModel::predict(const Matrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows);
    for (int i = 0; i < x.rows; ++i) out.push_back(predict_one(matrix_row(x, i)));
    return out;
}

MlpModel fit_mlp(const DesignMatrix& d, const MlpConfig& cfg) {
    d.check();
    if (cfg.hidden < 1) throw ParameterError("hidden width must be >= 1");
    const int p = d.x.cols;
    Rng rng(derive_seed(cfg.seed, "mlp-init"));
    MlpModel model;
    model.w1 = Matrix(cfg.hidden, p);
    glorot_init(model.w1, p, cfg.hidden, rng);
    model.b1 = Matrix(1, cfg.hidden);
    model.w2 = Matrix(cfg.hidden, 1);
    glorot_init(model.w2, cfg.hidden, 1, rng);
    model.b2 = Matrix(1, 1);

    std::vector<Matrix*> params = {&model.w1, &model.b1, &model.w2, &model.b2};
    AdamState adam;
    adam.init(params);

    std::vector<std::size_t> order(d.x.rows);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch_size = static_cast<std::size_t>(std::max(cfg.batch_size, 1));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "mlp-epoch", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            Matrix xb(static_cast<int>(end - start), p);
            std::vector<double> yb;
            for (std::size_t i = start; i < end; ++i) {
                for (int j = 0; j < p; ++j) xb.at(static_cast<int>(i - start), j) = d.x.at(static_cast<int>(order[i]), j);
                yb.push_back(d.y[order[i]]);
            }
            Tape tape;
            const Tape::NodeId w1 = tape.leaf(model.w1);
            const Tape::NodeId b1 = tape.leaf(model.b1);
            const Tape::NodeId w2 = tape.leaf(model.w2);
            const Tape::NodeId b2 = tape.leaf(model.b2);
            const Tape::NodeId x = tape.leaf(xb);
            const Tape::NodeId hidden =
                tape.relu(tape.add_row_broadcast(tape.matmul(x, tape.transpose(w1)), b1));
            const Tape::NodeId pred = tape.add_row_broadcast(tape.matmul(hidden, w2), b2);
            const Tape::NodeId loss = tape.mean_squared_error_column(pred, yb);
            if (!std::isfinite(tape.value(loss).at(0, 0))) {
                throw TrainingError("MLP training diverged at epoch " + std::to_string(epoch));
            }
            tape.backward(loss);
            const std::vector<Matrix> grads = {tape.grad(w1), tape.grad(b1), tape.grad(w2),
                                               tape.grad(b2)};
            adam.update(params, grads, cfg.learning_rate);
        }
    }
    return model;
}

}  // namespace pavecast
