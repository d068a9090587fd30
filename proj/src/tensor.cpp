#include "tempo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tempo::ad {

namespace {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

void require_2d(const Tensor& t, const char* op) {
    if (t->shape.size() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(t));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a->shape != b->shape) {
        throw DimensionError(std::string(op) + ": shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    }
}

} // namespace

int Node::rows() const {
    if (shape.size() != 2) throw ContractError("rows(): tensor is not 2-d: " + shape_str(shape));
    return shape[0];
}

int Node::cols() const {
    if (shape.size() != 2) throw ContractError("cols(): tensor is not 2-d: " + shape_str(shape));
    return shape[1];
}

double Node::scalar_value() const {
    if (!is_scalar()) throw ContractError("scalar_value(): tensor has " + shape_str(shape));
    return data[0];
}

void Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t->shape); }

Tensor tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad, std::string name) {
    const size_t n = shape_numel(shape);
    if (n != data.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " wants " + std::to_string(n) +
                             " values, got " + std::to_string(data.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->name = std::move(name);
    return node;
}

Tensor full(std::vector<int> shape, double value, bool requires_grad) {
    const size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor zeros(std::vector<int> shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor scalar(double value, bool requires_grad) { return tensor({1, 1}, {value}, requires_grad); }

void zero_grad(const std::vector<Tensor>& params) {
    for (const auto& p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

Tensor Tape::make_out(std::vector<int> shape, bool requires_grad) {
    auto node = std::make_shared<Node>();
    const size_t n = shape_numel(shape);
    node->shape = std::move(shape);
    node->data.assign(n, 0.0);
    node->requires_grad = requires_grad;
    return node;
}

bool Tape::wants_grad(std::initializer_list<Tensor> inputs) const {
    if (!grad_enabled_) return false;
    for (const auto& t : inputs) {
        if (t->requires_grad) return true;
    }
    return false;
}

void Tape::record(std::function<void()> backfn, std::initializer_list<Tensor> touched) {
    ops_.push_back(std::move(backfn));
    for (const auto& t : touched) touched_.push_back(t);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a->rows(), k = a->cols(), n = b->cols();
    if (k != b->rows()) {
        throw DimensionError("matmul: inner dimensions differ: " + shape_str(a) + " vs " + shape_str(b));
    }
    auto out = make_out({m, n}, wants_grad({a, b}));
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    double* od = out->data.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    if (out->requires_grad) {
        record(
            [a, b, out, m, k, n]() {
                const double* g = out->grad.data();
                if (a->requires_grad) {
                    a->ensure_grad();
                    double* da = a->grad.data();
                    const double* bd2 = b->data.data();
                    for (int i = 0; i < m; ++i) {
                        for (int p = 0; p < k; ++p) {
                            double acc = 0.0;
                            const double* grow = g + i * n;
                            const double* brow = bd2 + p * n;
                            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                            da[i * k + p] += acc;
                        }
                    }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    double* db = b->grad.data();
                    const double* ad2 = a->data.data();
                    for (int i = 0; i < m; ++i) {
                        const double* grow = g + i * n;
                        for (int p = 0; p < k; ++p) {
                            const double aip = ad2[i * k + p];
                            if (aip == 0.0) continue;
                            double* dbrow = db + p * n;
                            for (int j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
                        }
                    }
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int m = a->rows(), n = a->cols();
    auto out = make_out({n, m}, wants_grad({a}));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[j * m + i] = a->data[i * n + j];
    if (out->requires_grad) {
        record(
            [a, out, m, n]() {
                a->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j * m + i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out = make_out(a->shape, wants_grad({a, b}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        record(
            [a, b, out]() {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::add_bias_row(const Tensor& a, const Tensor& bias) {
    require_2d(a, "add_bias_row");
    require_2d(bias, "add_bias_row");
    const int m = a->rows(), n = a->cols();
    if (bias->rows() != 1 || bias->cols() != n) {
        throw DimensionError("add_bias_row: " + shape_str(a) + " vs bias " + shape_str(bias));
    }
    auto out = make_out({m, n}, wants_grad({a, bias}));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[i * n + j] = a->data[i * n + j] + bias->data[j];
    if (out->requires_grad) {
        record(
            [a, bias, out, m, n]() {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
                }
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) bias->grad[j] += out->grad[i * n + j];
                }
            },
            {a, bias, out});
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out = make_out(a->shape, wants_grad({a, b}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        record(
            [a, b, out]() {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
    auto out = make_out(a->shape, wants_grad({a}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = c * a->data[i];
    if (out->requires_grad) {
        record(
            [a, out, c]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] += c * out->grad[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int m = parts[0]->rows();
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p->rows() != m) {
            throw DimensionError("concat_cols: row mismatch: " + shape_str(parts[0]) + " vs " + shape_str(p));
        }
        total += p->cols();
        rg = rg || p->requires_grad;
    }
    auto out = make_out({m, total}, grad_enabled_ && rg);
    int off = 0;
    for (const auto& p : parts) {
        const int n = p->cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out->data[i * total + off + j] = p->data[i * n + j];
        off += n;
    }
    if (out->requires_grad) {
        auto parts_copy = parts;
        record(
            [parts_copy, out, m, total]() {
                int off2 = 0;
                for (const auto& p : parts_copy) {
                    const int n = p->cols();
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) p->grad[i * n + j] += out->grad[i * total + off2 + j];
                    }
                    off2 += n;
                }
            },
            {out});
        for (const auto& p : parts) touched_.push_back(p);
    }
    return out;
}

Tensor Tape::slice(const Tensor& a, int r0, int r1, int c0, int c1) {
    require_2d(a, "slice");
    const int m = a->rows(), n = a->cols();
    if (r0 < 0 || r1 > m || r0 >= r1 || c0 < 0 || c1 > n || c0 >= c1) {
        throw DimensionError("slice: window [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
                             std::to_string(c0) + "," + std::to_string(c1) + ") out of " + shape_str(a));
    }
    const int mr = r1 - r0, nc = c1 - c0;
    auto out = make_out({mr, nc}, wants_grad({a}));
    for (int i = 0; i < mr; ++i)
        for (int j = 0; j < nc; ++j) out->data[i * nc + j] = a->data[(r0 + i) * n + c0 + j];
    if (out->requires_grad) {
        record(
            [a, out, r0, c0, n, mr, nc]() {
                a->ensure_grad();
                for (int i = 0; i < mr; ++i)
                    for (int j = 0; j < nc; ++j) a->grad[(r0 + i) * n + c0 + j] += out->grad[i * nc + j];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::interleave_cols(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "interleave_cols");
    require_2d(a, "interleave_cols");
    const int m = a->rows(), n = a->cols();
    auto out = make_out({m, 2 * n}, wants_grad({a, b}));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out->data[i * 2 * n + 2 * j] = a->data[i * n + j];
            out->data[i * 2 * n + 2 * j + 1] = b->data[i * n + j];
        }
    }
    if (out->requires_grad) {
        record(
            [a, b, out, m, n]() {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[i * 2 * n + 2 * j];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) b->grad[i * n + j] += out->grad[i * 2 * n + 2 * j + 1];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::sin(const Tensor& a) {
    auto out = make_out(a->shape, wants_grad({a}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = std::sin(a->data[i]);
    if (out->requires_grad) {
        record(
            [a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * std::cos(a->data[i]);
            },
            {a, out});
    }
    return out;
}

Tensor Tape::cos(const Tensor& a) {
    auto out = make_out(a->shape, wants_grad({a}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = std::cos(a->data[i]);
    if (out->requires_grad) {
        record(
            [a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] -= out->grad[i] * std::sin(a->data[i]);
            },
            {a, out});
    }
    return out;
}

Tensor Tape::exp(const Tensor& a) {
    auto out = make_out(a->shape, wants_grad({a}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = std::exp(a->data[i]);
    if (out->requires_grad) {
        record(
            [a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * out->data[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::log(const Tensor& a) {
    auto out = make_out(a->shape, wants_grad({a}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = std::log(a->data[i]);
    if (out->requires_grad) {
        record(
            [a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] / a->data[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::relu(const Tensor& a) {
    auto out = make_out(a->shape, wants_grad({a}));
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
    if (out->requires_grad) {
        record(
            [a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->size(); ++i) {
                    if (a->data[i] > 0.0) a->grad[i] += out->grad[i];
                }
            },
            {a, out});
    }
    return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
    require_2d(a, "softmax_rows");
    const int m = a->rows(), n = a->cols();
    for (double v : a->data) {
        if (!std::isfinite(v)) throw InputError("softmax_rows: non-finite entry");
    }
    auto out = make_out({m, n}, wants_grad({a}));
    for (int i = 0; i < m; ++i) {
        const double* row = a->data.data() + i * n;
        double* orow = out->data.data() + i * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= denom;
    }
    if (out->requires_grad) {
        record(
            [a, out, m, n]() {
                a->ensure_grad();
                for (int i = 0; i < m; ++i) {
                    const double* s = out->data.data() + i * n;
                    const double* g = out->grad.data() + i * n;
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) dot += g[j] * s[j];
                    double* da = a->grad.data() + i * n;
                    for (int j = 0; j < n; ++j) da[j] += s[j] * (g[j] - dot);
                }
            },
            {a, out});
    }
    return out;
}

Tensor Tape::causal_softmax_rows(const Tensor& a) {
    require_2d(a, "causal_softmax_rows");
    const int n = a->cols();
    if (a->rows() != n) {
        throw DimensionError("causal_softmax_rows: expected square input, got " + shape_str(a));
    }
    auto out = make_out({n, n}, wants_grad({a}));
    for (int i = 0; i < n; ++i) {
        const double* row = a->data.data() + i * n;
        double* orow = out->data.data() + i * n;
        double mx = row[0];
        for (int j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j <= i; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (int j = 0; j <= i; ++j) orow[j] /= denom;
        // columns j > i stay exactly zero
    }
    if (out->requires_grad) {
        record(
            [a, out, n]() {
                a->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const double* s = out->data.data() + i * n;
                    const double* g = out->grad.data() + i * n;
                    double dot = 0.0;
                    for (int j = 0; j <= i; ++j) dot += g[j] * s[j];
                    double* da = a->grad.data() + i * n;
                    for (int j = 0; j <= i; ++j) da[j] += s[j] * (g[j] - dot);
                }
            },
            {a, out});
    }
    return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
    require_2d(table, "gather_rows");
    const int rows = table->rows(), n = table->cols();
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw InputError("gather_rows: row id " + std::to_string(id) + " out of range [0," +
                             std::to_string(rows) + ")");
        }
    }
    const int m = static_cast<int>(ids.size());
    auto out = make_out({m, n}, wants_grad({table}));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[i * n + j] = table->data[ids[i] * n + j];
    if (out->requires_grad) {
        auto ids_copy = ids;
        record(
            [table, out, ids_copy, n]() {
                table->ensure_grad();
                for (size_t i = 0; i < ids_copy.size(); ++i)
                    for (int j = 0; j < n; ++j)
                        table->grad[ids_copy[i] * n + j] += out->grad[i * n + j];
            },
            {table, out});
    }
    return out;
}

Tensor Tape::sum(const Tensor& a) {
    auto out = make_out({1, 1}, wants_grad({a}));
    double acc = 0.0;
    for (double v : a->data) acc += v;
    out->data[0] = acc;
    if (out->requires_grad) {
        record(
            [a, out]() {
                a->ensure_grad();
                const double g = out->grad[0];
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
            },
            {a, out});
    }
    return out;
}

Tensor Tape::mean(const Tensor& a) {
    auto out = make_out({1, 1}, wants_grad({a}));
    double acc = 0.0;
    for (double v : a->data) acc += v;
    const double inv = 1.0 / static_cast<double>(a->size());
    out->data[0] = acc * inv;
    if (out->requires_grad) {
        record(
            [a, out, inv]() {
                a->ensure_grad();
                const double g = out->grad[0] * inv;
                for (size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
            },
            {a, out});
    }
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (!loss->is_scalar()) {
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss));
    }
    if (backward_done_) {
        throw StateError("backward: tape already replayed; call reset() first");
    }
    backward_done_ = true;
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::reset() {
    for (auto& t : touched_) std::fill(t->grad.begin(), t->grad.end(), 0.0);
    backward_done_ = false;
}

} // namespace tempo::ad
