#include "pavecast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace pavecast {

Matrix::Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(r) * c) {
        throw ShapeError("matrix data length " + std::to_string(data.size()) + " does not match " +
                         std::to_string(r) + "x" + std::to_string(c));
    }
}

Matrix Matrix::filled(int r, int c, double v) {
    Matrix m(r, c);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::row_vector(std::vector<double> d) {
    const int n = static_cast<int>(d.size());
    return Matrix(1, n, std::move(d));
}

bool Matrix::all_finite() const {
    for (const double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul shape mismatch: " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add shape mismatch: " + shape_str(a) + " + " + shape_str(b));
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("subtract shape mismatch: " + shape_str(a) + " - " + shape_str(b));
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data) v *= s;
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        double mx = m.at(i, 0);
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            const double e = std::exp(m.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < m.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps) {
    if (gain.cols != x.cols || bias.cols != x.cols || gain.rows != 1 || bias.rows != 1) {
        throw ShapeError("layer_norm gain/bias must be 1x" + std::to_string(x.cols));
    }
    Matrix out(x.rows, x.cols);
    const double d = static_cast<double>(x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double c = x.at(i, j) - mean;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < x.cols; ++j) {
            out.at(i, j) = (x.at(i, j) - mean) * inv * gain.at(0, j) + bias.at(0, j);
        }
    }
    return out;
}

Tape::NodeId Tape::push(Matrix value, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(backward)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Matrix value) {
    return push(std::move(value));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    Matrix out = pavecast::matmul(nodes_[a].value, nodes_[b].value);
    const NodeId id = push(std::move(out));
    nodes_[id].backward = [this, id, a, b] {
        const Matrix& g = nodes_[id].grad;
        nodes_[a].grad = pavecast::add(nodes_[a].grad, pavecast::matmul(g, pavecast::transpose(nodes_[b].value)));
        nodes_[b].grad = pavecast::add(nodes_[b].grad, pavecast::matmul(pavecast::transpose(nodes_[a].value), g));
    };
    return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    Matrix out = pavecast::add(nodes_[a].value, nodes_[b].value);
    const NodeId id = push(std::move(out));
    nodes_[id].backward = [this, id, a, b] {
        nodes_[a].grad = pavecast::add(nodes_[a].grad, nodes_[id].grad);
        nodes_[b].grad = pavecast::add(nodes_[b].grad, nodes_[id].grad);
    };
    return id;
}

Tape::NodeId Tape::add_row_broadcast(NodeId m, NodeId bias) {
    const Matrix& mv = nodes_[m].value;
    const Matrix& bv = nodes_[bias].value;
    if (bv.rows != 1 || bv.cols != mv.cols) {
        throw ShapeError("broadcast bias must be 1x" + std::to_string(mv.cols) + ", got " + shape_str(bv));
    }
    Matrix out = mv;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += bv.at(0, j);
    const NodeId id = push(std::move(out));
    nodes_[id].backward = [this, id, m, bias] {
        const Matrix& g = nodes_[id].grad;
        nodes_[m].grad = pavecast::add(nodes_[m].grad, g);
        Matrix& bg = nodes_[bias].grad;
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) bg.at(0, j) += g.at(i, j);
    };
    return id;
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    const NodeId id = push(pavecast::scale(nodes_[a].value, s));
    nodes_[id].backward = [this, id, a, s] {
        nodes_[a].grad = pavecast::add(nodes_[a].grad, pavecast::scale(nodes_[id].grad, s));
    };
    return id;
}

Tape::NodeId Tape::relu(NodeId a) {
    Matrix out = nodes_[a].value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const NodeId id = push(std::move(out));
    nodes_[id].backward = [this, id, a] {
        const Matrix& g = nodes_[id].grad;
        const Matrix& x = nodes_[a].value;
        Matrix& ag = nodes_[a].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (x.data[i] > 0.0) ag.data[i] += g.data[i];
        }
    };
    return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
    const NodeId id = push(pavecast::transpose(nodes_[a].value));
    nodes_[id].backward = [this, id, a] {
        nodes_[a].grad = pavecast::add(nodes_[a].grad, pavecast::transpose(nodes_[id].grad));
    };
    return id;
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
    const NodeId id = push(pavecast::softmax_rows(nodes_[a].value));
    nodes_[id].backward = [this, id, a] {
        const Matrix& y = nodes_[id].value;
        const Matrix& g = nodes_[id].grad;
        Matrix& ag = nodes_[a].grad;
        for (int i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < y.cols; ++j) ag.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    };
    return id;
}

Tape::NodeId Tape::layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Matrix& xv = nodes_[x].value;
    const Matrix& gv = nodes_[gain].value;
    const Matrix& bv = nodes_[bias].value;
    const NodeId id = push(pavecast::layer_norm(xv, gv, bv, eps));
    nodes_[id].backward = [this, id, x, gain, bias, eps] {
        const Matrix& xv2 = nodes_[x].value;
        const Matrix& gv2 = nodes_[gain].value;
        const Matrix& g = nodes_[id].grad;
        Matrix& xg = nodes_[x].grad;
        Matrix& gg = nodes_[gain].grad;
        Matrix& bg = nodes_[bias].grad;
        const double d = static_cast<double>(xv2.cols);
        for (int i = 0; i < xv2.rows; ++i) {
            double mean = 0.0;
            for (int j = 0; j < xv2.cols; ++j) mean += xv2.at(i, j);
            mean /= d;
            double var = 0.0;
            for (int j = 0; j < xv2.cols; ++j) {
                const double c = xv2.at(i, j) - mean;
                var += c * c;
            }
            var /= d;
            const double inv = 1.0 / std::sqrt(var + eps);
            // xhat_j and dxhat_j, then the standard layer-norm input gradient.
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (int j = 0; j < xv2.cols; ++j) {
                const double xhat = (xv2.at(i, j) - mean) * inv;
                const double dxhat = g.at(i, j) * gv2.at(0, j);
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat;
                gg.at(0, j) += g.at(i, j) * xhat;
                bg.at(0, j) += g.at(i, j);
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            for (int j = 0; j < xv2.cols; ++j) {
                const double xhat = (xv2.at(i, j) - mean) * inv;
                const double dxhat = g.at(i, j) * gv2.at(0, j);
                xg.at(i, j) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
            }
        }
    };
    return id;
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of zero parts");
    const int rows = nodes_[parts[0]].value.rows;
    int total = 0;
    for (const NodeId p : parts) {
        if (nodes_[p].value.rows != rows) {
            throw ShapeError("concat_cols row mismatch");
        }
        total += nodes_[p].value.cols;
    }
    Matrix out(rows, total);
    int off = 0;
    for (const NodeId p : parts) {
        const Matrix& v = nodes_[p].value;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < v.cols; ++j) out.at(i, off + j) = v.at(i, j);
        off += v.cols;
    }
    const NodeId id = push(std::move(out));
    std::vector<NodeId> ps = parts;
    nodes_[id].backward = [this, id, ps] {
        const Matrix& g = nodes_[id].grad;
        int off2 = 0;
        for (const NodeId p : ps) {
            Matrix& pg = nodes_[p].grad;
            for (int i = 0; i < pg.rows; ++i)
                for (int j = 0; j < pg.cols; ++j) pg.at(i, j) += g.at(i, off2 + j);
            off2 += pg.cols;
        }
    };
    return id;
}

Tape::NodeId Tape::select_row(NodeId a, int r) {
    const Matrix& v = nodes_[a].value;
    Matrix out(1, v.cols);
    for (int j = 0; j < v.cols; ++j) out.at(0, j) = v.at(r, j);
    const NodeId id = push(std::move(out));
    nodes_[id].backward = [this, id, a, r] {
        const Matrix& g = nodes_[id].grad;
        Matrix& ag = nodes_[a].grad;
        for (int j = 0; j < g.cols; ++j) ag.at(r, j) += g.at(0, j);
    };
    return id;
}

Tape::NodeId Tape::mean_squared_error(const std::vector<NodeId>& predictions,
                                      const std::vector<double>& targets) {
    if (predictions.empty() || predictions.size() != targets.size()) {
        throw ShapeError("mean_squared_error needs equal non-zero prediction/target counts");
    }
    const double n = static_cast<double>(predictions.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Matrix& p = nodes_[predictions[i]].value;
        if (p.rows != 1 || p.cols != 1) throw ShapeError("prediction node must be 1x1");
        const double r = p.at(0, 0) - targets[i];
        loss += r * r;
    }
    Matrix out(1, 1);
    out.at(0, 0) = loss / n;
    const NodeId id = push(std::move(out));
    std::vector<NodeId> preds = predictions;
    std::vector<double> ys = targets;
    nodes_[id].backward = [this, id, preds, ys, n] {
        const double g = nodes_[id].grad.at(0, 0);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double r = nodes_[preds[i]].value.at(0, 0) - ys[i];
            nodes_[preds[i]].grad.at(0, 0) += g * 2.0 * r / n;
        }
    };
    return id;
}

Tape::NodeId Tape::mean_squared_error_column(NodeId predictions, const std::vector<double>& targets) {
    const Matrix& p = nodes_[predictions].value;
    if (p.cols != 1 || p.rows != static_cast<int>(targets.size()) || targets.empty()) {
        throw ShapeError("mean_squared_error_column needs an n x 1 prediction column matching targets");
    }
    const double n = static_cast<double>(targets.size());
    double loss = 0.0;
    for (int i = 0; i < p.rows; ++i) {
        const double r = p.at(i, 0) - targets[i];
        loss += r * r;
    }
    Matrix out(1, 1);
    out.at(0, 0) = loss / n;
    const NodeId id = push(std::move(out));
    std::vector<double> ys = targets;
    nodes_[id].backward = [this, id, predictions, ys, n] {
        const double g = nodes_[id].grad.at(0, 0);
        const Matrix& pv = nodes_[predictions].value;
        Matrix& pg = nodes_[predictions].grad;
        for (int i = 0; i < pv.rows; ++i) {
            pg.at(i, 0) += g * 2.0 * (pv.at(i, 0) - ys[i]) / n;
        }
    };
    return id;
}

void Tape::backward(NodeId output) {
    if (nodes_[output].value.rows != 1 || nodes_[output].value.cols != 1) {
        throw ShapeError("backward output must be 1x1, got " + shape_str(nodes_[output].value));
    }
    for (Node& n : nodes_) {
        n.grad = Matrix::zeros(n.value.rows, n.value.cols);
    }
    nodes_[output].grad.at(0, 0) = 1.0;
    for (NodeId i = output; i >= 0; --i) {
        if (nodes_[i].backward) nodes_[i].backward();
    }
}

double grad_check(
    const std::function<double(const std::vector<Matrix>&, std::vector<Matrix>*)>& f,
    std::vector<Matrix> params, double h) {
    std::vector<Matrix> grads;
    const double base = f(params, &grads);
    if (!std::isfinite(base)) throw NumericError("grad_check: function value is not finite");
    double max_err = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].data.size(); ++i) {
            const double orig = params[p].data[i];
            params[p].data[i] = orig + h;
            const double fp = f(params, nullptr);
            params[p].data[i] = orig - h;
            const double fm = f(params, nullptr);
            params[p].data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("grad_check: perturbed function value is not finite");
            }
            const double g_fd = (fp - fm) / (2.0 * h);
            const double g_ad = grads[p].data[i];
            const double denom = std::max({1.0, std::abs(g_fd), std::abs(g_ad)});
            max_err = std::max(max_err, std::abs(g_fd - g_ad) / denom);
        }
    }
    return max_err;
}

}  // namespace pavecast
