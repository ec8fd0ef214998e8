#include "rpcate/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rpcate {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw ShapeError("tensor shape must have 1 to 4 axes, got " + shape_string(shape));
    }
    std::size_t total = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw ShapeError("tensor axes must be positive, got " + shape_string(shape));
        }
        total *= static_cast<std::size_t>(d);
    }
    return total;
}

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
    int m = static_cast<int>(values.size());
    return Tensor({m, 1}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

int Tensor::rows() const {
    if (ndim() != 2) throw ShapeError("rows() needs a 2-axis tensor, got " + shape_string(shape_));
    return shape_[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw ShapeError("cols() needs a 2-axis tensor, got " + shape_string(shape_));
    return shape_[1];
}

double& Tensor::at(int i, int j) {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
}

double Tensor::at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
}

double& Tensor::at(int i, int j, int k, int l) {
    std::size_t idx = ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
    return data_[idx];
}

double Tensor::at(int i, int j, int k, int l) const {
    std::size_t idx = ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
    return data_[idx];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Tape

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw std::logic_error("invalid tape variable");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
    return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Tape::Var Tape::record(Node n, const char* opname) {
    if (!n.value.all_finite()) {
        throw NumericError(std::string(opname) + " produced a non-finite value");
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::input(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return record(std::move(n), "input");
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    if (ta.same_shape(tb)) {
        n.value = ta;
        for (std::size_t i = 0; i < tb.size(); ++i) n.value[i] += tb[i];
    } else if (ta.ndim() == 2 && tb.ndim() == 2 && tb.dim(0) == 1 && ta.dim(1) == tb.dim(1)) {
        // row bias broadcast: m x n + 1 x n
        n.value = ta;
        int m = ta.dim(0), cols = ta.dim(1);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < cols; ++j) n.value.at(i, j) += tb.at(0, j);
    } else {
        throw ShapeError("add: incompatible shapes " + shape_string(ta.shape()) +
                         " and " + shape_string(tb.shape()));
    }
    return record(std::move(n), "add");
}

Tape::Var Tape::sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
        throw ShapeError("sub: incompatible shapes " + shape_string(ta.shape()) +
                         " and " + shape_string(tb.shape()));
    }
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = ta;
    for (std::size_t i = 0; i < tb.size(); ++i) n.value[i] -= tb[i];
    return record(std::move(n), "sub");
}

Tape::Var Tape::hadamard(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
        throw ShapeError("hadamard: incompatible shapes " + shape_string(ta.shape()) +
                         " and " + shape_string(tb.shape()));
    }
    Node n;
    n.op = Op::Hadamard;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = ta;
    for (std::size_t i = 0; i < tb.size(); ++i) n.value[i] *= tb[i];
    return record(std::move(n), "hadamard");
}

Tape::Var Tape::scale(Var a, double factor) {
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.factor = factor;
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= factor;
    return record(std::move(n), "scale");
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.ndim() != 2 || tb.ndim() != 2) {
        throw ShapeError("matmul: operands must be 2-axis, got " + shape_string(ta.shape()) +
                         " and " + shape_string(tb.shape()));
    }
    if (ta.dim(1) != tb.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_string(ta.shape()) +
                         " x " + shape_string(tb.shape()));
    }
    int p = ta.dim(0), q = ta.dim(1), r = tb.dim(1);
    Node n;
    n.op = Op::Matmul;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = Tensor({p, r});
    for (int i = 0; i < p; ++i) {
        for (int k = 0; k < q; ++k) {
            double aik = ta.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < r; ++j) n.value.at(i, j) += aik * tb.at(k, j);
        }
    }
    return record(std::move(n), "matmul");
}

Tape::Var Tape::sigmoid(Var a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = 1.0 / (1.0 + std::exp(-n.value[i]));
    }
    return record(std::move(n), "sigmoid");
}

Tape::Var Tape::relu(Var a) {
    Node n;
    n.op = Op::Relu;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        if (n.value[i] < 0.0) n.value[i] = 0.0;
    }
    return record(std::move(n), "relu");
}

Tape::Var Tape::softmax_lastaxis(Var a) {
    const Tensor& ta = value(a);
    if (ta.ndim() != 2) {
        throw ShapeError("softmax_lastaxis: needs a 2-axis tensor, got " + shape_string(ta.shape()));
    }
    int m = ta.dim(0), cols = ta.dim(1);
    Node n;
    n.op = Op::Softmax;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = Tensor({m, cols});
    for (int i = 0; i < m; ++i) {
        double mx = ta.at(i, 0);
        for (int j = 1; j < cols; ++j) mx = std::max(mx, ta.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) {
            double e = std::exp(ta.at(i, j) - mx);
            n.value.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < cols; ++j) n.value.at(i, j) /= denom;
    }
    return record(std::move(n), "softmax_lastaxis");
}

Tape::Var Tape::pool_spatial(Var a, Pool mode) {
    const Tensor& ta = value(a);
    if (ta.ndim() != 4) {
        throw ShapeError("pool_spatial: needs a 4-axis tensor, got " + shape_string(ta.shape()));
    }
    if (ta.dim(1) != ta.dim(2)) {
        throw ShapeError("pool_spatial: spatial axes must be square, got " + shape_string(ta.shape()));
    }
    int m = ta.dim(0), k = ta.dim(1), chans = ta.dim(3);
    Node n;
    n.op = (mode == Pool::Max) ? Op::PoolMax : Op::PoolAvg;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = Tensor({m, chans});
    if (mode == Pool::Max) n.indices.resize(static_cast<std::size_t>(m) * chans);
    for (int i = 0; i < m; ++i) {
        for (int c = 0; c < chans; ++c) {
            if (mode == Pool::Max) {
                double best = ta.at(i, 0, 0, c);
                int best_flat = 0;
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        double x = ta.at(i, u, v, c);
                        if (x > best) {  // strict: first row-major argmax wins ties
                            best = x;
                            best_flat = u * k + v;
                        }
                    }
                }
                n.value.at(i, c) = best;
                n.indices[static_cast<std::size_t>(i) * chans + c] = best_flat;
            } else {
                double acc = 0.0;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v) acc += ta.at(i, u, v, c);
                n.value.at(i, c) = acc / (static_cast<double>(k) * k);
            }
        }
    }
    return record(std::move(n), "pool_spatial");
}

Tape::Var Tape::gather_rows(Var a, std::vector<int> indices) {
    const Tensor& ta = value(a);
    if (ta.ndim() != 2) {
        throw ShapeError("gather_rows: needs a 2-axis tensor, got " + shape_string(ta.shape()));
    }
    int m = ta.dim(0), cols = ta.dim(1);
    for (int idx : indices) {
        if (idx < 0 || idx >= m) {
            throw ShapeError("gather_rows: index " + std::to_string(idx) +
                             " out of range for " + std::to_string(m) + " rows");
        }
    }
    Node n;
    n.op = Op::Gather;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = Tensor({static_cast<int>(indices.size()), cols});
    for (std::size_t j = 0; j < indices.size(); ++j) {
        for (int c = 0; c < cols; ++c) {
            n.value.at(static_cast<int>(j), c) = ta.at(indices[j], c);
        }
    }
    n.indices = std::move(indices);
    return record(std::move(n), "gather_rows");
}

Tape::Var Tape::reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = value(a);
    Node n;
    n.op = Op::Reshape;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = Tensor(std::move(shape), std::vector<double>(ta.data().begin(), ta.data().end()));
    return record(std::move(n), "reshape");
}

Tape::Var Tape::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no operands");
    int cols = value(parts[0]).cols();
    int total = 0;
    Node n;
    n.op = Op::Concat;
    for (Var p : parts) {
        const Tensor& tp = value(p);
        if (tp.ndim() != 2 || tp.dim(1) != cols) {
            throw ShapeError("concat_rows: column counts disagree");
        }
        total += tp.dim(0);
        n.many.push_back(p.id);
        n.requires_grad = n.requires_grad || requires_grad(p);
    }
    n.value = Tensor({total, cols});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& tp = value(p);
        std::copy(tp.data().begin(), tp.data().end(), n.value.data().begin() + off);
        off += tp.size();
    }
    return record(std::move(n), "concat_rows");
}

Tape::Var Tape::sum(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double v : ta.data()) acc += v;
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = Tensor({1, 1}, {acc});
    return record(std::move(n), "sum");
}

Tape::Var Tape::l2_norm(std::span<const Var> vars) {
    if (vars.empty()) throw ShapeError("l2_norm: no operands");
    Node n;
    n.op = Op::L2Norm;
    double acc = 0.0;
    for (Var v : vars) {
        n.many.push_back(v.id);
        n.requires_grad = n.requires_grad || requires_grad(v);
        for (double x : value(v).data()) acc += x * x;
    }
    n.factor = std::sqrt(acc);
    n.value = Tensor({1, 1}, {n.factor});
    return record(std::move(n), "l2_norm");
}

Tensor& Tape::grad_buffer(int id) {
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    if (!nd.grad_live) {
        nd.grad = Tensor(nd.value.shape());
        nd.grad_live = true;
    }
    return nd.grad;
}

void Tape::backward(Var loss) {
    if (backward_done_) throw std::logic_error("backward already ran on this tape");
    if (value(loss).size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_string(value(loss).shape()));
    }
    grad_buffer(loss.id)[0] = 1.0;
    // Single pass over the recorded order, reversed: each op visited exactly once.
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        if (nd.op == Op::Leaf || !nd.requires_grad || !nd.grad_live) continue;
        backward_node(id);
    }
    backward_done_ = true;
}

void Tape::backward_node(int id) {
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = nd.grad;
    auto want = [&](int in) { return nodes_[static_cast<std::size_t>(in)].requires_grad; };

    switch (nd.op) {
        case Op::Add: {
            const Tensor& ta = nodes_[nd.a].value;
            const Tensor& tb = nodes_[nd.b].value;
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (want(nd.b)) {
                Tensor& db = grad_buffer(nd.b);
                if (ta.same_shape(tb)) {
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                } else {  // row bias: sum over rows
                    int m = ta.dim(0), cols = ta.dim(1);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < cols; ++j) db.at(0, j) += g.at(i, j);
                }
            }
            break;
        }
        case Op::Sub: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (want(nd.b)) {
                Tensor& db = grad_buffer(nd.b);
                for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
            break;
        }
        case Op::Hadamard: {
            const Tensor& ta = nodes_[nd.a].value;
            const Tensor& tb = nodes_[nd.b].value;
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * tb[i];
            }
            if (want(nd.b)) {
                Tensor& db = grad_buffer(nd.b);
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ta[i];
            }
            break;
        }
        case Op::Scale: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * nd.factor;
            }
            break;
        }
        case Op::Matmul: {
            const Tensor& ta = nodes_[nd.a].value;
            const Tensor& tb = nodes_[nd.b].value;
            int p = ta.dim(0), q = ta.dim(1), r = tb.dim(1);
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < r; ++j) {
                        double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (int k = 0; k < q; ++k) da.at(i, k) += gij * tb.at(k, j);
                    }
            }
            if (want(nd.b)) {
                Tensor& db = grad_buffer(nd.b);
                for (int i = 0; i < p; ++i)
                    for (int k = 0; k < q; ++k) {
                        double aik = ta.at(i, k);
                        if (aik == 0.0) continue;
                        for (int j = 0; j < r; ++j) db.at(k, j) += aik * g.at(i, j);
                    }
            }
            break;
        }
        case Op::Sigmoid: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double s = nd.value[i];
                    da[i] += g[i] * s * (1.0 - s);
                }
            }
            break;
        }
        case Op::Relu: {
            if (want(nd.a)) {
                const Tensor& ta = nodes_[nd.a].value;
                Tensor& da = grad_buffer(nd.a);
                // relu'(0) = 0 by convention
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (ta[i] > 0.0) da[i] += g[i];
                }
            }
            break;
        }
        case Op::Softmax: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                int m = nd.value.dim(0), cols = nd.value.dim(1);
                for (int i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < cols; ++j) dot += g.at(i, j) * nd.value.at(i, j);
                    for (int j = 0; j < cols; ++j) {
                        da.at(i, j) += nd.value.at(i, j) * (g.at(i, j) - dot);
                    }
                }
            }
            break;
        }
        case Op::PoolMax: {
            if (want(nd.a)) {
                const Tensor& ta = nodes_[nd.a].value;
                Tensor& da = grad_buffer(nd.a);
                int m = ta.dim(0), k = ta.dim(1), chans = ta.dim(3);
                for (int i = 0; i < m; ++i) {
                    for (int c = 0; c < chans; ++c) {
                        int flat = nd.indices[static_cast<std::size_t>(i) * chans + c];
                        da.at(i, flat / k, flat % k, c) += g.at(i, c);
                    }
                }
            }
            break;
        }
        case Op::PoolAvg: {
            if (want(nd.a)) {
                const Tensor& ta = nodes_[nd.a].value;
                Tensor& da = grad_buffer(nd.a);
                int m = ta.dim(0), k = ta.dim(1), chans = ta.dim(3);
                double inv = 1.0 / (static_cast<double>(k) * k);
                for (int i = 0; i < m; ++i)
                    for (int c = 0; c < chans; ++c) {
                        double share = g.at(i, c) * inv;
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) da.at(i, u, v, c) += share;
                    }
            }
            break;
        }
        case Op::Gather: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                int cols = nd.value.dim(1);
                for (std::size_t j = 0; j < nd.indices.size(); ++j) {
                    for (int c = 0; c < cols; ++c) {
                        da.at(nd.indices[j], c) += g.at(static_cast<int>(j), c);
                    }
                }
            }
            break;
        }
        case Op::Reshape: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            break;
        }
        case Op::Concat: {
            std::size_t off = 0;
            for (int in : nd.many) {
                const Tensor& tin = nodes_[static_cast<std::size_t>(in)].value;
                if (want(in)) {
                    Tensor& din = grad_buffer(in);
                    for (std::size_t i = 0; i < tin.size(); ++i) din[i] += g[off + i];
                }
                off += tin.size();
            }
            break;
        }
        case Op::Sum: {
            if (want(nd.a)) {
                Tensor& da = grad_buffer(nd.a);
                for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
            }
            break;
        }
        case Op::L2Norm: {
            // d||theta||/dx = x / ||theta||, defined as 0 at the origin
            if (nd.factor > 0.0) {
                for (int in : nd.many) {
                    if (!want(in)) continue;
                    const Tensor& tin = nodes_[static_cast<std::size_t>(in)].value;
                    Tensor& din = grad_buffer(in);
                    for (std::size_t i = 0; i < tin.size(); ++i) {
                        din[i] += g[0] * tin[i] / nd.factor;
                    }
                }
            }
            break;
        }
        case Op::Leaf:
            break;
    }
}

const Tensor& Tape::grad(Var v) {
    Node& nd = node(v);
    if (!nd.grad_live) {
        nd.grad = Tensor(nd.value.shape());
        nd.grad_live = true;
    }
    return nd.grad;
}

}  // namespace rpcate
