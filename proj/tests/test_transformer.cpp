#include <doctest.h>

#include <cmath>
#include <vector>

#include "pavecast/data.hpp"
#include "pavecast/rng.hpp"
#include "pavecast/transformer.hpp"
#include "pavecast/windows.hpp"

using namespace pavecast;

namespace {

TransformerConfig tiny_config() {
    TransformerConfig cfg;
    cfg.d_x = 2;
    cfg.d_model = 2;
    cfg.n_heads = 1;
    cfg.d_k = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 2;
    cfg.d_head = 2;
    cfg.window_length = 2;
    return cfg;
}

// Fills every weight matrix with `w`, every bias with zero.
TransformerParams constant_params(const TransformerConfig& cfg, double w) {
    TransformerParams p = init_params(cfg);
    auto fill = [&](Matrix& m, double v) {
        for (double& x : m.data) x = v;
    };
    fill(p.embed, w);
    for (auto& l : p.layers) {
        for (auto& m : l.wq) fill(m, w);
        for (auto& m : l.wk) fill(m, w);
        for (auto& m : l.wv) fill(m, w);
        fill(l.wo, w);
        fill(l.w1, w);
        fill(l.w2, w);
        fill(l.b1, 0.0);
        fill(l.b2, 0.0);
        fill(l.ln1_gain, w);
        fill(l.ln1_bias, 0.0);
        fill(l.ln2_gain, w);
        fill(l.ln2_bias, 0.0);
    }
    fill(p.head_w1, w);
    fill(p.head_b1, 0.0);
    fill(p.head_w2, w);
    fill(p.head_b2, 0.0);
    return p;
}

// Independent straight-line evaluation of the tiny fixed-weight forward pass
// (d_x = d_model = d_k = d_ff = d_head = 2, H = 1, N = 1, L = 2, weights w,
// biases 0), written with plain arrays and loops only.
double tiny_forward_oracle(const double x[2][2], double w) {
    const double eps = 1e-5;
    // Positional rows: t=0 -> [sin 0, cos 0]; t=1 -> [sin 1, cos 1].
    double p[2][2] = {{0.0, 1.0}, {std::sin(1.0), std::cos(1.0)}};
    // Embedding: every entry of E is w, so (E x_t)_i = w * (x_t0 + x_t1).
    double h[2][2];
    for (int t = 0; t < 2; ++t) {
        double s = x[t][0] + x[t][1];
        for (int i = 0; i < 2; ++i) h[t][i] = w * s + p[t][i];
    }
    // Single head: q_t = k_t = v_t = w * (h_t0 + h_t1) in both coordinates.
    double qkv[2];
    for (int t = 0; t < 2; ++t) qkv[t] = w * (h[t][0] + h[t][1]);
    double scores[2][2], attn[2][2];
    for (int t = 0; t < 2; ++t)
        for (int u = 0; u < 2; ++u) scores[t][u] = 2.0 * qkv[t] * qkv[u] / std::sqrt(2.0);
    for (int t = 0; t < 2; ++t) {
        double mx = scores[t][0] > scores[t][1] ? scores[t][0] : scores[t][1];
        double e0 = std::exp(scores[t][0] - mx), e1 = std::exp(scores[t][1] - mx);
        attn[t][0] = e0 / (e0 + e1);
        attn[t][1] = e1 / (e0 + e1);
    }
    // Head output rows, then the w-filled output projection.
    double mha[2][2];
    for (int t = 0; t < 2; ++t) {
        double head[2];
        for (int i = 0; i < 2; ++i) head[i] = attn[t][0] * qkv[0] + attn[t][1] * qkv[1];
        for (int i = 0; i < 2; ++i) mha[t][i] = w * (head[0] + head[1]);
    }
    // Residual + layer norm (population variance, gain w, bias 0).
    auto norm_row = [&](double* row) {
        double mean = (row[0] + row[1]) / 2.0;
        double var = ((row[0] - mean) * (row[0] - mean) + (row[1] - mean) * (row[1] - mean)) / 2.0;
        for (int i = 0; i < 2; ++i) row[i] = w * (row[i] - mean) / std::sqrt(var + eps);
    };
    double a1[2][2];
    for (int t = 0; t < 2; ++t) {
        for (int i = 0; i < 2; ++i) a1[t][i] = h[t][i] + mha[t][i];
        norm_row(a1[t]);
    }
    // Position-wise FFN with ReLU, then the second residual + norm.
    double out[2][2];
    for (int t = 0; t < 2; ++t) {
        double pre = w * (a1[t][0] + a1[t][1]);
        double act = pre > 0.0 ? pre : 0.0;
        double ffn = w * (act + act);
        for (int i = 0; i < 2; ++i) out[t][i] = a1[t][i] + ffn;
        norm_row(out[t]);
    }
    // Regression head on the last row.
    double y = 0.0;
    for (int j = 0; j < 2; ++j) {
        double pre = w * (out[1][0] + out[1][1]);
        double act = pre > 0.0 ? pre : 0.0;
        y += w * act;
    }
    return y;
}

std::vector<WindowSample> toy_samples(int n_sections, std::uint64_t seed) {
    SyntheticConfig scfg;
    scfg.n_sections = n_sections;
    RecordSet rs = generate_synthetic(scfg, seed);
    auto samples = make_windows(build_series(rs), 4, Task::skid, false);
    return apply_scaler(fit_scaler(samples), samples);
}

}  // namespace

TEST_CASE("positional encoding matches the sinusoid definition") {
    Matrix p2 = positional_encoding(2, 2);
    CHECK(p2.at(0, 0) == 0.0);
    CHECK(p2.at(0, 1) == 1.0);
    CHECK(p2.at(1, 0) == doctest::Approx(0.841470985).epsilon(1e-9));
    CHECK(p2.at(1, 1) == doctest::Approx(0.540302306).epsilon(1e-9));

    Matrix p4 = positional_encoding(3, 4);
    // Row t=2: [sin 2, cos 2, sin(2/100), cos(2/100)] (10000^{2/4} = 100).
    CHECK(p4.at(2, 0) == doctest::Approx(std::sin(2.0)).epsilon(1e-12));
    CHECK(p4.at(2, 1) == doctest::Approx(std::cos(2.0)).epsilon(1e-12));
    CHECK(p4.at(2, 2) == doctest::Approx(std::sin(0.02)).epsilon(1e-12));
    CHECK(p4.at(2, 3) == doctest::Approx(std::cos(0.02)).epsilon(1e-12));

    // Row 0 is [sin 0, cos 0, ...] = alternating 0, 1 for any width.
    Matrix p8 = positional_encoding(1, 8);
    for (int j = 0; j < 8; ++j)
        CHECK(p8.at(0, j) == (j % 2 == 0 ? 0.0 : 1.0));

    // Odd width: the unpaired final column carries its sin term.
    Matrix p3 = positional_encoding(2, 3);
    CHECK(p3.at(1, 2) ==
          doctest::Approx(std::sin(1.0 / std::pow(10000.0, 2.0 / 3.0))).epsilon(1e-12));

    for (double v : positional_encoding(6, 10).data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("embed adds E x_t and the positional row") {
    TransformerConfig cfg = tiny_config();
    cfg.d_x = 3;
    cfg.d_model = 4;
    cfg.n_heads = 1;
    cfg.d_k = 4;
    cfg.window_length = 4;
    TransformerParams p = init_params(cfg);
    Matrix positional = positional_encoding(4, 4);

    // E = 0 reduces the embedding to the positional table.
    Matrix zero_e = p.embed;
    for (double& v : zero_e.data) v = 0.0;
    TransformerParams pz = p;
    pz.embed = zero_e;
    Rng rng(3);
    Matrix window(4, 3);
    for (double& v : window.data) v = rng.normal();
    CHECK(embed(window, pz, positional) == positional);

    // Identical rows with zero positional table stay identical.
    Matrix same_rows(4, 3);
    for (int t = 0; t < 4; ++t)
        for (int j = 0; j < 3; ++j) same_rows.at(t, j) = window.at(0, j);
    Matrix h0 = embed(same_rows, p, Matrix::zeros(4, 4));
    for (int t = 1; t < 4; ++t)
        for (int j = 0; j < 4; ++j) CHECK(h0.at(t, j) == h0.at(0, j));

    // Row 2 equals the hand-computed E x_2 + p_2.
    Matrix h = embed(window, p, positional);
    for (int i = 0; i < 4; ++i) {
        double expect = positional.at(2, i);
        for (int j = 0; j < 3; ++j) expect += p.embed.at(i, j) * window.at(2, j);
        CHECK(h.at(2, i) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("encoder layer degenerate and symmetry cases") {
    TransformerConfig cfg = tiny_config();
    cfg.d_x = 2;
    cfg.window_length = 1;
    TransformerParams p = init_params(cfg);

    // L=1: the attention matrix is [[1]], so MHA = V row times W_O.
    Matrix h1(1, 2, {0.4, -0.9});
    Matrix v = matmul(h1, p.layers[0].wv[0]);
    Matrix mha = matmul(v, p.layers[0].wo);
    Matrix expected = layer_norm(add(h1, mha), p.layers[0].ln1_gain, p.layers[0].ln1_bias);
    Matrix ffn = matmul(expected, p.layers[0].w1);
    for (int j = 0; j < ffn.cols; ++j) {
        double x = ffn.at(0, j) + p.layers[0].b1.at(0, j);
        ffn.at(0, j) = x > 0.0 ? x : 0.0;
    }
    Matrix ffn_out = matmul(ffn, p.layers[0].w2);
    for (int j = 0; j < ffn_out.cols; ++j) ffn_out.at(0, j) += p.layers[0].b2.at(0, j);
    Matrix full = layer_norm(add(expected, ffn_out), p.layers[0].ln2_gain, p.layers[0].ln2_bias);
    Matrix got = encoder_layer(h1, p.layers[0], cfg.d_k);
    for (int j = 0; j < 2; ++j) CHECK(got.at(0, j) == doctest::Approx(full.at(0, j)).epsilon(1e-14));

    // Two identical input rows produce identical output rows.
    Matrix h2(2, 2, {0.3, 1.1, 0.3, 1.1});
    Matrix out2 = encoder_layer(h2, p.layers[0], cfg.d_k);
    for (int j = 0; j < 2; ++j) CHECK(out2.at(0, j) == out2.at(1, j));
}

TEST_CASE("encoder layer with zero sublayer weights is LayerNorm twice") {
    TransformerConfig cfg = tiny_config();
    cfg.d_model = 4;
    cfg.d_k = 4;
    cfg.d_ff = 4;
    cfg.d_x = 4;
    TransformerParams p = init_params(cfg);
    auto& l = p.layers[0];
    for (auto* m : {&l.wo, &l.w2}) {
        for (double& v : m->data) v = 0.0;
    }
    Matrix h(2, 4, {0.5, -1.0, 2.0, 0.25, 1.5, 0.75, -0.5, 3.0});
    Matrix direct = layer_norm(layer_norm(h, l.ln1_gain, l.ln1_bias), l.ln2_gain, l.ln2_bias);
    Matrix got = encoder_layer(h, l, cfg.d_k);
    for (std::size_t i = 0; i < got.data.size(); ++i)
        CHECK(got.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-14));
}

TEST_CASE("forward with zero head weights is the constant b2") {
    TransformerConfig cfg = tiny_config();
    TransformerParams p = init_params(cfg);
    for (double& v : p.head_w2.data) v = 0.0;
    p.head_b2.at(0, 0) = 5.0;
    Matrix w1(2, 2, {0.1, -0.7, 1.3, 0.2});
    Matrix w2(2, 2, {2.0, 0.0, -1.0, 0.5});
    CHECK(forward(w1, p, cfg) == 5.0);
    CHECK(forward(w2, p, cfg) == 5.0);
}

TEST_CASE("zero encoder layers apply the head to the embedding directly") {
    TransformerConfig cfg = tiny_config();
    cfg.n_layers = 0;
    TransformerParams p = init_params(cfg);
    Matrix window(2, 2, {0.3, -0.7, 1.1, 0.25});
    Matrix h = embed(window, p, positional_encoding(2, 2));
    Matrix h_last(1, 2, {h.at(1, 0), h.at(1, 1)});
    Matrix hidden = matmul(h_last, transpose(p.head_w1));
    for (int j = 0; j < hidden.cols; ++j) {
        double v = hidden.at(0, j) + p.head_b1.at(0, j);
        hidden.at(0, j) = v > 0.0 ? v : 0.0;
    }
    double expected = matmul(hidden, p.head_w2).at(0, 0) + p.head_b2.at(0, 0);
    CHECK(forward(window, p, cfg) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("tiny fixed-weight forward pass matches the independent oracle") {
    TransformerConfig cfg = tiny_config();
    TransformerParams p = constant_params(cfg, 0.1);
    double x[2][2] = {{0.3, -0.7}, {1.1, 0.25}};
    Matrix window(2, 2, {x[0][0], x[0][1], x[1][0], x[1][1]});
    double got = forward(window, p, cfg);
    double expected = tiny_forward_oracle(x, 0.1);
    CHECK(std::abs(got - expected) <= 1e-10);
}

TEST_CASE("mse_loss values") {
    TransformerConfig cfg = tiny_config();
    TransformerParams p = constant_params(cfg, 0.1);
    Matrix window(2, 2, {0.3, -0.7, 1.1, 0.25});
    double yhat = forward(window, p, cfg);

    WindowSample s;
    s.window = window;
    s.target = yhat;
    CHECK(mse_loss({s}, p, cfg) == 0.0);

    s.target = yhat + 2.0;
    CHECK(mse_loss({s}, p, cfg) == doctest::Approx(4.0).epsilon(1e-12));

    WindowSample s2 = s;
    s2.target = yhat + 1.0;
    CHECK(mse_loss({s, s2}, p, cfg) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("taped loss gradient agrees with finite differences on a small config") {
    TransformerConfig cfg;
    cfg.d_x = 3;
    cfg.d_model = 4;
    cfg.n_heads = 2;
    cfg.d_k = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 6;
    cfg.d_head = 4;
    cfg.window_length = 3;
    cfg.seed = 5;
    TransformerParams init = init_params(cfg);

    Rng rng(77);
    std::vector<WindowSample> batch(2);
    for (auto& s : batch) {
        s.window = Matrix(3, 3);
        for (double& v : s.window.data) v = rng.normal();
        s.target = rng.normal();
    }

    std::vector<Matrix> flat;
    for (const Matrix* m : static_cast<const TransformerParams&>(init).matrices())
        flat.push_back(*m);

    auto f = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        TransformerParams p = init;
        auto ptrs = p.matrices();
        for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = params[i];
        Tape tape;
        std::vector<Tape::NodeId> leaves;
        for (Matrix* m : p.matrices()) leaves.push_back(tape.leaf(*m));
        Tape::NodeId loss = mse_loss_graph(tape, leaves, batch, cfg);
        tape.backward(loss);
        if (grads) {
            grads->clear();
            for (Tape::NodeId id : leaves) grads->push_back(tape.grad(id));
        }
        return tape.value(loss).at(0, 0);
    };
    CHECK(grad_check(f, flat) <= 1e-4);
}

TEST_CASE("training fits a constant target and is deterministic") {
    auto samples = toy_samples(12, 31);
    for (auto& s : samples) s.target = 3.5;
    std::vector<WindowSample> val(samples.begin(), samples.begin() + 4);
    std::vector<WindowSample> tr(samples.begin() + 4, samples.end());

    TransformerConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_k = 4;
    cfg.n_layers = 1;
    cfg.d_ff = 16;
    cfg.d_head = 8;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.batch_size = 8;
    cfg.seed = 3;

    TrainResult a = train(tr, val, cfg);
    CHECK(a.log.back().train_loss <= 0.01 * a.log.front().train_loss);

    TrainResult b = train(tr, val, cfg);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].val_loss == b.log[i].val_loss);
    }
}

TEST_CASE("early stopping returns the best validation epoch") {
    auto samples = toy_samples(10, 37);
    std::vector<WindowSample> val(samples.begin(), samples.begin() + 3);
    std::vector<WindowSample> tr(samples.begin() + 3, samples.end());

    TransformerConfig cfg;
    cfg.d_model = 4;
    cfg.n_heads = 1;
    cfg.d_k = 4;
    cfg.n_layers = 1;
    cfg.d_ff = 8;
    cfg.d_head = 4;
    cfg.max_epochs = 400;
    cfg.patience = 3;
    cfg.batch_size = 8;
    cfg.seed = 9;
    // A deliberately hot learning rate makes the validation loss oscillate,
    // so patience is guaranteed to fire well before max_epochs.
    cfg.learning_rate = 0.2;

    TrainResult r = train(tr, val, cfg);
    CHECK(r.log.size() < 400);  // patience fired
    double min_val = r.log.front().val_loss;
    for (const auto& e : r.log) min_val = std::min(min_val, e.val_loss);
    CHECK(r.best_val_loss == min_val);
    // Returned parameters reproduce the best validation loss.
    CHECK(mse_loss(val, r.params, cfg) == doctest::Approx(r.best_val_loss).epsilon(1e-12));
}

TEST_CASE("predict is elementwise forward, order-preserving, stateless") {
    TransformerConfig cfg = tiny_config();
    TransformerParams p = constant_params(cfg, 0.1);
    CHECK(predict(p, cfg, {}).empty());

    WindowSample s;
    s.window = Matrix(2, 2, {0.3, -0.7, 1.1, 0.25});
    s.target = 0.0;
    auto one = predict(p, cfg, {s});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == forward(s.window, p, cfg));

    std::vector<WindowSample> k(5, s);
    auto many = predict(p, cfg, k);
    for (double v : many) CHECK(v == one[0]);
}

TEST_CASE("permuting window rows changes the prediction in general") {
    TransformerConfig cfg = tiny_config();
    cfg.seed = 15;
    TransformerParams p = init_params(cfg);
    Matrix window(2, 2, {0.3, -0.7, 1.1, 0.25});
    Matrix swapped(2, 2, {1.1, 0.25, 0.3, -0.7});
    CHECK(forward(window, p, cfg) != forward(swapped, p, cfg));
}
