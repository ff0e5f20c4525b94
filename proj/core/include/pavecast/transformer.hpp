#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pavecast/tensor.hpp"
#include "pavecast/windows.hpp"

namespace pavecast {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransformerConfig {
    int d_x = kFeatureCount;  // input feature width
    int d_model = 32;         // embedding width
    int n_heads = 4;          // H
    int d_k = 8;              // per-head width; n_heads * d_k == d_model
    int n_layers = 2;         // N stacked encoder layers
    int d_ff = 64;            // FFN hidden width
    int d_head = 32;          // regression-head hidden width (defaults to d_model)
    int window_length = 4;    // L
    double learning_rate = 1e-3;
    int max_epochs = 500;
    int patience = 25;        // early-stop epochs without validation improvement
    int batch_size = 16;
    std::uint64_t seed = 0;

    void check() const;  // throws ConfigError
};

// All learned matrices, grouped per encoder layer. The flat parameter list
// (see `matrices`) is the optimizer's and the checkpoint's view.
struct TransformerParams {
    struct Layer {
        std::vector<Matrix> wq, wk, wv;  // per head, d_model x d_k
        Matrix wo;                       // (H*d_k) x d_model
        Matrix w1, b1, w2, b2;           // FFN
        Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    };
    Matrix embed;  // d_model x d_x
    std::vector<Layer> layers;
    Matrix head_w1, head_b1, head_w2, head_b2;  // regression head; head_b2 is 1x1

    std::vector<Matrix*> matrices();
    std::vector<const Matrix*> matrices() const;
    std::vector<std::string> matrix_names(const TransformerConfig& cfg) const;
};

// Sinusoidal positional table: row t in 0..L-1, column 2k = sin(t / 10000^{2k/d_model}),
// column 2k+1 the matching cos; an odd final column carries its sin term.
Matrix positional_encoding(int window_length, int d_model);

TransformerParams init_params(const TransformerConfig& cfg);

// Order-aware embedding: row t of the output is E * x_t + p_t.
Matrix embed(const Matrix& window, const TransformerParams& params, const Matrix& positional);

// One post-norm encoder layer (untaped path).
Matrix encoder_layer(const Matrix& h, const TransformerParams::Layer& layer, int d_k);

// Full forward pass to the scalar prediction (untaped path).
double forward(const Matrix& window, const TransformerParams& params, const TransformerConfig& cfg);

std::vector<double> predict(const TransformerParams& params, const TransformerConfig& cfg,
                            const std::vector<WindowSample>& windows);

// Taped batch loss: builds the forward graph for every sample on `tape`
// against parameter leaves `param_nodes` (one per entry of
// TransformerParams::matrices(), same order) and returns the MSE node.
Tape::NodeId mse_loss_graph(Tape& tape, const std::vector<Tape::NodeId>& param_nodes,
                            const std::vector<WindowSample>& batch, const TransformerConfig& cfg);

// Convenience: untaped batch MSE.
double mse_loss(const std::vector<WindowSample>& batch, const TransformerParams& params,
                const TransformerConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    TransformerParams params;  // best-validation-epoch parameters
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

TrainResult train(const std::vector<WindowSample>& train_set,
                  const std::vector<WindowSample>& validation_set, const TransformerConfig& cfg);

// Adam step shared with the MLP baseline.
struct AdamState {
    std::vector<Matrix> m, v;
    int step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(const std::vector<Matrix*>& params);
    void update(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr);
};

// Seeded uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Matrix& m, int fan_in, int fan_out, class Rng& rng);

}  // namespace pavecast
