#include <doctest.h>

#include <cmath>
#include <vector>

#include "pavecast/rng.hpp"
#include "pavecast/tensor.hpp"

using namespace pavecast;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

double sum_all(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v;
    return s;
}

// Runs grad_check on a scalar function of a single matrix built with taped ops.
double check_unary(const Matrix& x, const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& build) {
    auto f = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        Tape tape;
        Tape::NodeId in = tape.leaf(params[0]);
        Tape::NodeId mid = build(tape, in);
        // Reduce to a scalar via a fixed quadratic so the output gradient is
        // non-trivial: s = sum(mid .* w) with w_ij = 1 + 0.1*(i + 2j), then s^2.
        const Matrix& mv = tape.value(mid);
        Matrix weights(mv.rows, mv.cols);
        for (int i = 0; i < mv.rows; ++i)
            for (int j = 0; j < mv.cols; ++j) weights.at(i, j) = 1.0 + 0.1 * (i + 2 * j);
        Tape::NodeId wnode = tape.leaf(weights);
        // sum(mid .* w) = sum over entries of (mid^T w) diagonal; use matmul
        // against a column of ones after elementwise trick: mid * w^T traced
        // via transpose+matmul gives sum on the diagonal. Simpler: flatten by
        // matmul with ones vectors.
        Tape::NodeId prod = tape.matmul(mid, tape.transpose(wnode));  // rows x rows
        // trace(prod) = sum(mid .* w); extract via select_row and matmul with unit columns.
        Tape::NodeId acc = tape.mean_squared_error_column(
            tape.matmul(prod, tape.leaf(Matrix::filled(mv.rows, 1, 1.0))),
            std::vector<double>(static_cast<std::size_t>(mv.rows), 0.0));
        tape.backward(acc);
        if (grads) {
            grads->clear();
            grads->push_back(tape.grad(in));
        }
        return tape.value(acc).at(0, 0);
    };
    return grad_check(f, {x});
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
    Rng rng(11);
    Matrix m = random_matrix(3, 3, rng);
    CHECK(matmul(Matrix::identity(3), m) == m);
    CHECK(matmul(m, Matrix::identity(3)) == m);

    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 1, {5, 6});
    Matrix p = matmul(a, b);
    CHECK(p.rows == 2);
    CHECK(p.cols == 1);
    CHECK(p.at(0, 0) == 17);
    CHECK(p.at(1, 0) == 39);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Matrix a(2, 3), b(2, 2);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a = random_matrix(4, 3, rng);
        Matrix b = random_matrix(3, 5, rng);
        Matrix c = random_matrix(5, 2, rng);
        Matrix lhs = matmul(matmul(a, b), c);
        Matrix rhs = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < lhs.data.size(); ++i) {
            double denom = std::max(1.0, std::abs(lhs.data[i]));
            CHECK(std::abs(lhs.data[i] - rhs.data[i]) / denom <= 1e-9);
        }
    }
}

TEST_CASE("gradient of sum(A*B) w.r.t. A equals ones*B^T") {
    Rng rng(17);
    Matrix a = random_matrix(3, 4, rng);
    Matrix b = random_matrix(4, 2, rng);
    auto f = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        Tape tape;
        Tape::NodeId an = tape.leaf(params[0]);
        Tape::NodeId bn = tape.leaf(b);
        Tape::NodeId prod = tape.matmul(an, bn);
        // sum of entries: multiply by ones on both sides.
        Tape::NodeId left = tape.matmul(tape.leaf(Matrix::filled(1, 3, 1.0)), prod);
        Tape::NodeId total = tape.matmul(left, tape.leaf(Matrix::filled(2, 1, 1.0)));
        tape.backward(total);
        if (grads) *grads = {tape.grad(an)};
        return tape.value(total).at(0, 0);
    };
    CHECK(grad_check(f, {a}) <= 1e-6);

    // The analytic gradient itself: ones(3x2) * B^T.
    std::vector<Matrix> grads;
    f({a}, &grads);
    Matrix expected = matmul(Matrix::filled(3, 2, 1.0), transpose(b));
    for (std::size_t i = 0; i < grads[0].data.size(); ++i)
        CHECK(grads[0].data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
}

TEST_CASE("softmax_rows examples") {
    Matrix uniform(1, 3, {0, 0, 0});
    Matrix s = softmax_rows(uniform);
    for (int j = 0; j < 3; ++j) CHECK(s.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Matrix big(1, 2, {1000, 0});
    Matrix sb = softmax_rows(big);
    CHECK(sb.all_finite());
    CHECK(sb.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sb.at(0, 1) <= 1e-300);

    Matrix logs(1, 3, {std::log(1.0), std::log(2.0), std::log(3.0)});
    Matrix sl = softmax_rows(logs);
    CHECK(sl.at(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(sl.at(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(sl.at(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax_rows rows sum to 1 within 1e-12") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = random_matrix(5, 7, rng, 10.0);
        Matrix s = softmax_rows(m);
        for (int i = 0; i < s.rows; ++i) {
            double total = 0.0;
            for (int j = 0; j < s.cols; ++j) {
                CHECK(s.at(i, j) > 0.0);
                total += s.at(i, j);
            }
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("layer_norm examples") {
    Matrix gain = Matrix::filled(1, 3, 1.0);
    Matrix bias = Matrix::zeros(1, 3);
    Matrix constant(1, 3, {2, 2, 2});
    Matrix out = layer_norm(constant, gain, bias);
    for (int j = 0; j < 3; ++j) CHECK(out.at(0, j) == 0.0);

    Matrix two(1, 2, {1, 3});
    Matrix out2 = layer_norm(two, Matrix::filled(1, 2, 1.0), Matrix::zeros(1, 2), 1e-12);
    CHECK(out2.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(out2.at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm output statistics with unit gain") {
    Rng rng(31);
    Matrix x = random_matrix(1, 16, rng, 3.0);
    Matrix out = layer_norm(x, Matrix::filled(1, 16, 1.0), Matrix::zeros(1, 16));
    double mean = sum_all(out) / 16.0;
    CHECK(std::abs(mean) <= 1e-9);
    double var = 0.0;
    for (double v : out.data) var += (v - mean) * (v - mean);
    var /= 16.0;
    CHECK(std::abs(var - 1.0) <= 1e-4);
}

TEST_CASE("grad_check on quadratic and linear-model MSE") {
    // f(theta) = theta^T theta: the central difference of a quadratic is exact
    // up to rounding.
    auto quadratic = [](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        Tape tape;
        Tape::NodeId t = tape.leaf(params[0]);
        Tape::NodeId sq = tape.matmul(t, tape.transpose(t));
        tape.backward(sq);
        if (grads) *grads = {tape.grad(t)};
        return tape.value(sq).at(0, 0);
    };
    Matrix theta(1, 5, {0.3, -1.2, 0.7, 2.1, -0.4});
    CHECK(grad_check(quadratic, {theta}) <= 1e-8);

    // MSE of a linear model on 3 fixed points; closed form 2 X^T (X theta - y) / N.
    Matrix x(3, 2, {1.0, 0.5, -0.3, 2.0, 0.8, -1.1});
    std::vector<double> y = {0.7, -0.2, 1.4};
    auto linear_mse = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        Tape tape;
        Tape::NodeId t = tape.leaf(params[0]);  // 2 x 1
        Tape::NodeId preds = tape.matmul(tape.leaf(x), t);
        Tape::NodeId loss = tape.mean_squared_error_column(preds, y);
        tape.backward(loss);
        if (grads) *grads = {tape.grad(t)};
        return tape.value(loss).at(0, 0);
    };
    Matrix coef(2, 1, {0.25, -0.75});
    CHECK(grad_check(linear_mse, {coef}) <= 1e-7);
}

TEST_CASE("every taped primitive passes an isolated gradient check") {
    Rng rng(41);
    Matrix x = random_matrix(3, 4, rng);
    // Keep ReLU inputs away from the kink.
    for (double& v : x.data) {
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    }

    CHECK(check_unary(x, [](Tape& t, Tape::NodeId in) { return t.scale(in, 1.7); }) <= 1e-6);
    CHECK(check_unary(x, [](Tape& t, Tape::NodeId in) { return t.relu(in); }) <= 1e-6);
    CHECK(check_unary(x, [](Tape& t, Tape::NodeId in) {
              return t.transpose(t.transpose(in));
          }) <= 1e-6);
    CHECK(check_unary(x, [](Tape& t, Tape::NodeId in) { return t.softmax_rows(in); }) <= 1e-6);
    CHECK(check_unary(x, [&](Tape& t, Tape::NodeId in) {
              return t.add(in, t.leaf(Matrix::filled(3, 4, 0.5)));
          }) <= 1e-6);
    CHECK(check_unary(x, [&](Tape& t, Tape::NodeId in) {
              Matrix b(1, 4, {0.1, -0.2, 0.3, -0.4});
              return t.add_row_broadcast(in, t.leaf(b));
          }) <= 1e-6);
    CHECK(check_unary(x, [&](Tape& t, Tape::NodeId in) {
              return t.layer_norm_rows(in, t.leaf(Matrix::filled(1, 4, 1.3)),
                                       t.leaf(Matrix::filled(1, 4, -0.2)));
          }) <= 1e-6);
    CHECK(check_unary(x, [](Tape& t, Tape::NodeId in) {
              return t.concat_cols({in, t.scale(in, 0.5)});
          }) <= 1e-6);
    CHECK(check_unary(x, [](Tape& t, Tape::NodeId in) { return t.select_row(in, 1); }) <= 1e-6);

    // Gradients flow through both bias and gain of layer_norm_rows.
    auto ln_params = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        Tape tape;
        Tape::NodeId g = tape.leaf(params[0]);
        Tape::NodeId b = tape.leaf(params[1]);
        Tape::NodeId out = tape.layer_norm_rows(tape.leaf(x), g, b);
        Tape::NodeId loss = tape.mean_squared_error_column(
            tape.matmul(out, tape.leaf(Matrix::filled(4, 1, 1.0))), {0.0, 0.0, 0.0});
        tape.backward(loss);
        if (grads) *grads = {tape.grad(g), tape.grad(b)};
        return tape.value(loss).at(0, 0);
    };
    CHECK(grad_check(ln_params, {Matrix::filled(1, 4, 1.1), Matrix::filled(1, 4, 0.2)}) <= 1e-6);

    // mean_squared_error over scalar prediction nodes.
    auto mse_scalar = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        Tape tape;
        Tape::NodeId t = tape.leaf(params[0]);  // 1 x 3
        std::vector<Tape::NodeId> preds;
        for (int j = 0; j < 3; ++j)
            preds.push_back(tape.matmul(tape.select_row(tape.transpose(t), j),
                                        tape.leaf(Matrix::filled(1, 1, 1.0))));
        Tape::NodeId loss = tape.mean_squared_error(preds, {0.5, -1.0, 2.0});
        tape.backward(loss);
        if (grads) *grads = {tape.grad(t)};
        return tape.value(loss).at(0, 0);
    };
    CHECK(grad_check(mse_scalar, {Matrix(1, 3, {0.2, 0.4, -0.6})}) <= 1e-6);
}

TEST_CASE("mean_squared_error values") {
    Tape tape;
    std::vector<Tape::NodeId> preds = {tape.leaf(Matrix::filled(1, 1, 1.0)),
                                       tape.leaf(Matrix::filled(1, 1, 2.0))};
    Tape::NodeId loss = tape.mean_squared_error(preds, {2.0, 4.0});
    CHECK(tape.value(loss).at(0, 0) == doctest::Approx(2.5).epsilon(1e-15));
}
