#include "pavecast/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pavecast/rng.hpp"

namespace pavecast {

void TransformerConfig::check() const {
    if (d_x < 1 || d_model < 1 || n_heads < 1 || d_k < 1 || n_layers < 0 || d_ff < 1 ||
        d_head < 1 || window_length < 1) {
        throw ConfigError("transformer dimensions must be >= 1");
    }
    if (n_heads * d_k != d_model) {
        throw ConfigError("n_heads * d_k must equal d_model (got " + std::to_string(n_heads) +
                          "*" + std::to_string(d_k) + " != " + std::to_string(d_model) + ")");
    }
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

std::vector<Matrix*> TransformerParams::matrices() {
    std::vector<Matrix*> out;
    out.push_back(&embed);
    for (Layer& l : layers) {
        for (Matrix& m : l.wq) out.push_back(&m);
        for (Matrix& m : l.wk) out.push_back(&m);
        for (Matrix& m : l.wv) out.push_back(&m);
        out.push_back(&l.wo);
        out.push_back(&l.w1);
        out.push_back(&l.b1);
        out.push_back(&l.w2);
        out.push_back(&l.b2);
        out.push_back(&l.ln1_gain);
        out.push_back(&l.ln1_bias);
        out.push_back(&l.ln2_gain);
        out.push_back(&l.ln2_bias);
    }
    out.push_back(&head_w1);
    out.push_back(&head_b1);
    out.push_back(&head_w2);
    out.push_back(&head_b2);
    return out;
}

std::vector<const Matrix*> TransformerParams::matrices() const {
    std::vector<const Matrix*> out;
    for (Matrix* m : const_cast<TransformerParams*>(this)->matrices()) out.push_back(m);
    return out;
}

std::vector<std::string> TransformerParams::matrix_names(const TransformerConfig& cfg) const {
    std::vector<std::string> out;
    out.push_back("embed");
    for (int l = 0; l < static_cast<int>(layers.size()); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        for (int h = 0; h < cfg.n_heads; ++h) out.push_back(p + "wq" + std::to_string(h));
        for (int h = 0; h < cfg.n_heads; ++h) out.push_back(p + "wk" + std::to_string(h));
        for (int h = 0; h < cfg.n_heads; ++h) out.push_back(p + "wv" + std::to_string(h));
        for (const char* n : {"wo", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2", "ln1_gain", "ln1_bias",
                              "ln2_gain", "ln2_bias"}) {
            out.push_back(p + n);
        }
    }
    for (const char* n : {"head_w1", "head_b1", "head_w2", "head_b2"}) out.push_back(n);
    return out;
}

Matrix positional_encoding(int window_length, int d_model) {
    if (window_length < 1 || d_model < 1) throw ConfigError("positional_encoding dims must be >= 1");
    Matrix p(window_length, d_model);
    for (int t = 0; t < window_length; ++t) {
        for (int j = 0; j < d_model; ++j) {
            const int k = j / 2;
            const double angle = t / std::pow(10000.0, 2.0 * k / d_model);
            p.at(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return p;
}

void glorot_init(Matrix& m, int fan_in, int fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : m.data) v = rng.uniform(-s, s);
}

TransformerParams init_params(const TransformerConfig& cfg) {
    cfg.check();
    Rng rng(derive_seed(cfg.seed, "transformer-init"));
    TransformerParams p;
    p.embed = Matrix(cfg.d_model, cfg.d_x);
    glorot_init(p.embed, cfg.d_x, cfg.d_model, rng);
    p.layers.resize(cfg.n_layers);
    for (TransformerParams::Layer& l : p.layers) {
        l.wq.resize(cfg.n_heads);
        l.wk.resize(cfg.n_heads);
        l.wv.resize(cfg.n_heads);
        for (int h = 0; h < cfg.n_heads; ++h) {
            l.wq[h] = Matrix(cfg.d_model, cfg.d_k);
            l.wk[h] = Matrix(cfg.d_model, cfg.d_k);
            l.wv[h] = Matrix(cfg.d_model, cfg.d_k);
            glorot_init(l.wq[h], cfg.d_model, cfg.d_k, rng);
            glorot_init(l.wk[h], cfg.d_model, cfg.d_k, rng);
            glorot_init(l.wv[h], cfg.d_model, cfg.d_k, rng);
        }
        l.wo = Matrix(cfg.n_heads * cfg.d_k, cfg.d_model);
        glorot_init(l.wo, cfg.n_heads * cfg.d_k, cfg.d_model, rng);
        l.w1 = Matrix(cfg.d_model, cfg.d_ff);
        glorot_init(l.w1, cfg.d_model, cfg.d_ff, rng);
        l.b1 = Matrix(1, cfg.d_ff);
        l.w2 = Matrix(cfg.d_ff, cfg.d_model);
        glorot_init(l.w2, cfg.d_ff, cfg.d_model, rng);
        l.b2 = Matrix(1, cfg.d_model);
        l.ln1_gain = Matrix::filled(1, cfg.d_model, 1.0);
        l.ln1_bias = Matrix(1, cfg.d_model);
        l.ln2_gain = Matrix::filled(1, cfg.d_model, 1.0);
        l.ln2_bias = Matrix(1, cfg.d_model);
    }
    p.head_w1 = Matrix(cfg.d_head, cfg.d_model);
    glorot_init(p.head_w1, cfg.d_model, cfg.d_head, rng);
    p.head_b1 = Matrix(1, cfg.d_head);
    p.head_w2 = Matrix(cfg.d_head, 1);
    glorot_init(p.head_w2, cfg.d_head, 1, rng);
    p.head_b2 = Matrix(1, 1);
    return p;
}

Matrix embed(const Matrix& window, const TransformerParams& params, const Matrix& positional) {
    if (window.cols != params.embed.cols) {
        throw ShapeError("embed: window width " + std::to_string(window.cols) +
                         " does not match embedding input width " + std::to_string(params.embed.cols));
    }
    if (positional.rows != window.rows || positional.cols != params.embed.rows) {
        throw ShapeError("embed: positional table is " + shape_str(positional) + ", expected " +
                         std::to_string(window.rows) + "x" + std::to_string(params.embed.rows));
    }
    // Row t of the output is E * x_t, i.e. window * E^T, plus the positional row.
    return add(matmul(window, transpose(params.embed)), positional);
}

Matrix encoder_layer(const Matrix& h, const TransformerParams::Layer& layer, int d_k) {
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    std::vector<Matrix> heads;
    heads.reserve(layer.wq.size());
    for (std::size_t head = 0; head < layer.wq.size(); ++head) {
        const Matrix q = matmul(h, layer.wq[head]);
        const Matrix k = matmul(h, layer.wk[head]);
        const Matrix v = matmul(h, layer.wv[head]);
        const Matrix a = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dk));
        heads.push_back(matmul(a, v));
    }
    Matrix concat(h.rows, static_cast<int>(heads.size()) * heads.front().cols);
    int off = 0;
    for (const Matrix& hd : heads) {
        for (int i = 0; i < hd.rows; ++i)
            for (int j = 0; j < hd.cols; ++j) concat.at(i, off + j) = hd.at(i, j);
        off += hd.cols;
    }
    const Matrix mha = matmul(concat, layer.wo);
    const Matrix after_attn = layer_norm(add(h, mha), layer.ln1_gain, layer.ln1_bias);

    Matrix ffn = matmul(after_attn, layer.w1);
    for (int i = 0; i < ffn.rows; ++i)
        for (int j = 0; j < ffn.cols; ++j) {
            double v = ffn.at(i, j) + layer.b1.at(0, j);
            ffn.at(i, j) = v > 0.0 ? v : 0.0;
        }
    Matrix ffn_out = matmul(ffn, layer.w2);
    for (int i = 0; i < ffn_out.rows; ++i)
        for (int j = 0; j < ffn_out.cols; ++j) ffn_out.at(i, j) += layer.b2.at(0, j);
    return layer_norm(add(after_attn, ffn_out), layer.ln2_gain, layer.ln2_bias);
}

double forward(const Matrix& window, const TransformerParams& params, const TransformerConfig& cfg) {
    const Matrix positional = positional_encoding(window.rows, cfg.d_model);
    Matrix h = embed(window, params, positional);
    for (int l = 0; l < static_cast<int>(params.layers.size()); ++l) {
        h = encoder_layer(h, params.layers[l], cfg.d_k);
        if (!h.all_finite()) {
            throw NumericError("non-finite values after encoder layer " + std::to_string(l));
        }
    }
    // Regression head on the final time-step embedding.
    Matrix h_last(1, h.cols);
    for (int j = 0; j < h.cols; ++j) h_last.at(0, j) = h.at(h.rows - 1, j);
    Matrix hidden = matmul(h_last, transpose(params.head_w1));
    for (int j = 0; j < hidden.cols; ++j) {
        double v = hidden.at(0, j) + params.head_b1.at(0, j);
        hidden.at(0, j) = v > 0.0 ? v : 0.0;
    }
    const Matrix out = matmul(hidden, params.head_w2);
    const double y = out.at(0, 0) + params.head_b2.at(0, 0);
    if (!std::isfinite(y)) throw NumericError("non-finite prediction in regression head");
    return y;
}

std::vector<double> predict(const TransformerParams& params, const TransformerConfig& cfg,
                            const std::vector<WindowSample>& windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const WindowSample& w : windows) {
        if (w.window.cols != cfg.d_x) {
            throw ShapeError("predict: window width " + std::to_string(w.window.cols) +
                             " does not match d_x " + std::to_string(cfg.d_x));
        }
        out.push_back(forward(w.window, params, cfg));
    }
    return out;
}

namespace {

// Parameter-node layout mirrors TransformerParams::matrices().
struct ParamNodes {
    Tape::NodeId embed;
    struct Layer {
        std::vector<Tape::NodeId> wq, wk, wv;
        Tape::NodeId wo, w1, b1, w2, b2, ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    };
    std::vector<Layer> layers;
    Tape::NodeId head_w1, head_b1, head_w2, head_b2;
};

ParamNodes unpack_param_nodes(const std::vector<Tape::NodeId>& flat, const TransformerConfig& cfg) {
    ParamNodes p;
    std::size_t i = 0;
    p.embed = flat[i++];
    p.layers.resize(cfg.n_layers);
    for (ParamNodes::Layer& l : p.layers) {
        for (int h = 0; h < cfg.n_heads; ++h) l.wq.push_back(flat[i++]);
        for (int h = 0; h < cfg.n_heads; ++h) l.wk.push_back(flat[i++]);
        for (int h = 0; h < cfg.n_heads; ++h) l.wv.push_back(flat[i++]);
        l.wo = flat[i++];
        l.w1 = flat[i++];
        l.b1 = flat[i++];
        l.w2 = flat[i++];
        l.b2 = flat[i++];
        l.ln1_gain = flat[i++];
        l.ln1_bias = flat[i++];
        l.ln2_gain = flat[i++];
        l.ln2_bias = flat[i++];
    }
    p.head_w1 = flat[i++];
    p.head_b1 = flat[i++];
    p.head_w2 = flat[i++];
    p.head_b2 = flat[i++];
    return p;
}

Tape::NodeId forward_graph(Tape& tape, const ParamNodes& p, const Matrix& window,
                           const Matrix& positional, const TransformerConfig& cfg) {
    const Tape::NodeId x = tape.leaf(window);
    const Tape::NodeId pos = tape.leaf(positional);
    Tape::NodeId h = tape.add(tape.matmul(x, tape.transpose(p.embed)), pos);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
    for (const ParamNodes::Layer& l : p.layers) {
        std::vector<Tape::NodeId> heads;
        for (int head = 0; head < cfg.n_heads; ++head) {
            const Tape::NodeId q = tape.matmul(h, l.wq[head]);
            const Tape::NodeId k = tape.matmul(h, l.wk[head]);
            const Tape::NodeId v = tape.matmul(h, l.wv[head]);
            const Tape::NodeId a =
                tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk));
            heads.push_back(tape.matmul(a, v));
        }
        const Tape::NodeId mha = tape.matmul(tape.concat_cols(heads), l.wo);
        const Tape::NodeId after_attn =
            tape.layer_norm_rows(tape.add(h, mha), l.ln1_gain, l.ln1_bias);
        const Tape::NodeId ffn = tape.add_row_broadcast(
            tape.matmul(tape.relu(tape.add_row_broadcast(tape.matmul(after_attn, l.w1), l.b1)),
                        l.w2),
            l.b2);
        h = tape.layer_norm_rows(tape.add(after_attn, ffn), l.ln2_gain, l.ln2_bias);
    }
    const Tape::NodeId h_last = tape.select_row(h, window.rows - 1);
    const Tape::NodeId hidden =
        tape.relu(tape.add_row_broadcast(tape.matmul(h_last, tape.transpose(p.head_w1)), p.head_b1));
    return tape.add(tape.matmul(hidden, p.head_w2), p.head_b2);
}

}  // namespace

Tape::NodeId mse_loss_graph(Tape& tape, const std::vector<Tape::NodeId>& param_nodes,
                            const std::vector<WindowSample>& batch, const TransformerConfig& cfg) {
    if (batch.empty()) throw ConfigError("mse_loss over an empty batch");
    const ParamNodes p = unpack_param_nodes(param_nodes, cfg);
    const Matrix positional = positional_encoding(cfg.window_length, cfg.d_model);
    std::vector<Tape::NodeId> preds;
    std::vector<double> targets;
    preds.reserve(batch.size());
    for (const WindowSample& s : batch) {
        preds.push_back(forward_graph(tape, p, s.window, positional, cfg));
        targets.push_back(s.target);
    }
    return tape.mean_squared_error(preds, targets);
}

double mse_loss(const std::vector<WindowSample>& batch, const TransformerParams& params,
                const TransformerConfig& cfg) {
    if (batch.empty()) throw ConfigError("mse_loss over an empty batch");
    double loss = 0.0;
    for (const WindowSample& s : batch) {
        const double r = forward(s.window, params, cfg) - s.target;
        loss += r * r;
    }
    return loss / static_cast<double>(batch.size());
}

void AdamState::init(const std::vector<Matrix*>& params) {
    m.clear();
    v.clear();
    for (const Matrix* p : params) {
        m.push_back(Matrix::zeros(p->rows, p->cols));
        v.push_back(Matrix::zeros(p->rows, p->cols));
    }
    step = 0;
}

void AdamState::update(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
                       double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& w = *params[p];
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            const double g = grads[p].data[i];
            m[p].data[i] = beta1 * m[p].data[i] + (1.0 - beta1) * g;
            v[p].data[i] = beta2 * v[p].data[i] + (1.0 - beta2) * g * g;
            const double mhat = m[p].data[i] / bc1;
            const double vhat = v[p].data[i] / bc2;
            w.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

TrainResult train(const std::vector<WindowSample>& train_set,
                  const std::vector<WindowSample>& validation_set, const TransformerConfig& cfg) {
    cfg.check();
    if (train_set.empty() || validation_set.empty()) {
        throw ConfigError("train requires non-empty training and validation sets");
    }
    TransformerParams params = init_params(cfg);
    std::vector<Matrix*> mats = params.matrices();
    AdamState adam;
    adam.init(mats);

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_without_improvement = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "transformer-epoch", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<WindowSample> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
                batch.push_back(train_set[order[i]]);
            }
            Tape tape;
            std::vector<Tape::NodeId> param_nodes;
            param_nodes.reserve(mats.size());
            for (const Matrix* m : mats) param_nodes.push_back(tape.leaf(*m));
            const Tape::NodeId loss = mse_loss_graph(tape, param_nodes, batch, cfg);
            const double loss_value = tape.value(loss).at(0, 0);
            if (!std::isfinite(loss_value)) {
                throw TrainingError("training diverged (non-finite loss) at epoch " +
                                    std::to_string(epoch));
            }
            tape.backward(loss);
            std::vector<Matrix> grads;
            grads.reserve(param_nodes.size());
            for (const Tape::NodeId id : param_nodes) grads.push_back(tape.grad(id));
            adam.update(mats, grads, cfg.learning_rate);
            epoch_loss += loss_value;
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        const double val_loss = mse_loss(validation_set, params, cfg);
        if (!std::isfinite(val_loss)) {
            throw TrainingError("validation loss is non-finite at epoch " + std::to_string(epoch));
        }
        result.log.push_back({epoch, epoch_loss, val_loss});

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.params = params;
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= cfg.patience) break;
        }
    }
    return result;
}

}  // namespace pavecast
