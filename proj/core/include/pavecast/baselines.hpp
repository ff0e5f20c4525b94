#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pavecast/tensor.hpp"

namespace pavecast {

struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flattened-window design: X is n x p, y the n targets.
struct DesignMatrix {
    Matrix x;
    std::vector<double> y;

    void check() const;
};

enum class LinearKind { ols, ridge, lasso };

struct LinearModel {
    double intercept = 0.0;
    std::vector<double> coef;

    double predict_one(const std::vector<double>& row) const;
    std::vector<double> predict(const Matrix& x) const;
};

// ols/ridge via the (regularized) normal equations with an unpenalized
// intercept; lasso via cyclic coordinate descent with soft-thresholding,
// converged when the max coefficient change drops below 1e-8.
LinearModel fit_linear(LinearKind kind, const DesignMatrix& d, double lambda = 0.0);

struct KnnModel {
    Matrix x;
    std::vector<double> y;
    int k = 5;

    double predict_one(const std::vector<double>& row) const;
    std::vector<double> predict(const Matrix& queries) const;
};

KnnModel fit_knn(const DesignMatrix& d, int k);

// CART node: either a leaf carrying the mean target, or a split on a
// midpoint threshold.
struct TreeNode {
    bool is_leaf = true;
    double prediction = 0.0;
    int feature = -1;
    double threshold = 0.0;
    std::unique_ptr<TreeNode> left, right;

    double predict_one(const std::vector<double>& row) const;
};

struct TreeConfig {
    int max_depth = 8;
    int min_samples_leaf = 2;
};

std::unique_ptr<TreeNode> fit_tree(const DesignMatrix& d, const TreeConfig& cfg);
std::vector<double> predict_tree(const TreeNode& root, const Matrix& x);

struct ForestConfig {
    int n_trees = 200;
    double feature_fraction = 1.0 / 3.0;
    bool bootstrap = true;
    TreeConfig tree;
    std::uint64_t seed = 0;
};

struct Forest {
    std::vector<std::unique_ptr<TreeNode>> trees;

    double predict_one(const std::vector<double>& row) const;
    std::vector<double> predict(const Matrix& x) const;
    // Per-tree outputs, exposed so the ensemble mean can be checked directly.
    std::vector<double> tree_predictions(const std::vector<double>& row) const;
};

Forest fit_forest(const DesignMatrix& d, const ForestConfig& cfg);

struct GbtConfig {
    int n_rounds = 200;
    double shrinkage = 0.1;
    TreeConfig tree{3, 2};
};

// Gradient-boosted CART with squared-error loss: F_0 = mean(y), each round
// fits a tree to the residuals.
struct BoostedModel {
    double f0 = 0.0;
    double shrinkage = 0.1;
    std::vector<std::unique_ptr<TreeNode>> trees;
    std::vector<double> train_mse;  // after each round

    double predict_one(const std::vector<double>& row) const;
    std::vector<double> predict(const Matrix& x) const;
};

BoostedModel fit_gbt(const DesignMatrix& d, const GbtConfig& cfg);

struct MlpConfig {
    int hidden = 64;
    double learning_rate = 1e-3;
    int epochs = 500;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

// One hidden ReLU layer, linear output, trained with the same adaptive
// optimizer and seeded initialization as the transformer.
struct MlpModel {
    Matrix w1;  // hidden x p
    Matrix b1;  // 1 x hidden
    Matrix w2;  // hidden x 1
    Matrix b2;  // 1 x 1

    double predict_one(const std::vector<double>& row) const;
    std::vector<double> predict(const Matrix& x) const;
};

MlpModel fit_mlp(const DesignMatrix& d, const MlpConfig& cfg);

std::vector<double> matrix_row(const Matrix& m, int r);

}  // namespace pavecast
