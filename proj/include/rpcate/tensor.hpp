#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpcate {

/// Shape or dimension mismatch between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A forward operation produced NaN or Inf.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major tensor of doubles, up to 4 axes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor full(std::vector<int> shape, double value);
    static Tensor row(std::vector<double> values);     // 1 x n
    static Tensor column(std::vector<double> values);  // m x 1
    static Tensor matrix(int rows, int cols, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    int rows() const;
    int cols() const;
    std::size_t size() const { return data_.size(); }

    double& at(int i, int j);
    double at(int i, int j) const;
    double& at(int i, int j, int k, int l);
    double at(int i, int j, int k, int l) const;
    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

enum class Pool { Max, Avg };

/// Records forward operations in execution order; backward() replays them in
/// reverse exactly once, accumulating per-tensor gradients.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    /// Register a leaf tensor. Trainable leaves pass requires_grad = true.
    Var input(Tensor value, bool requires_grad = false);

    Var add(Var a, Var b);          // equal shapes, or row bias 1 x n onto m x n
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double factor);
    Var matmul(Var a, Var b);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var softmax_lastaxis(Var a);
    Var pool_spatial(Var a, Pool mode);              // m x k x k x n -> m x n
    Var gather_rows(Var a, std::vector<int> indices);
    Var reshape(Var a, std::vector<int> shape);
    Var concat_rows(std::span<const Var> parts);
    Var sum(Var a);                                  // reduce to 1 x 1
    Var l2_norm(std::span<const Var> vars);          // Euclidean norm, 1 x 1

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t num_nodes() const { return nodes_.size(); }

    /// Backpropagate from a scalar loss. May be called once per tape.
    void backward(Var loss);
    bool backward_done() const { return backward_done_; }

    /// Gradient of the loss w.r.t. v; zeros when v is unreachable from the loss.
    const Tensor& grad(Var v);

private:
    enum class Op {
        Leaf, Add, Sub, Hadamard, Scale, Matmul, Sigmoid, Relu,
        Softmax, PoolMax, PoolAvg, Gather, Reshape, Concat, Sum, L2Norm
    };

    struct Node {
        Op op = Op::Leaf;
        int a = -1;
        int b = -1;
        std::vector<int> many;      // Concat / L2Norm operand ids
        std::vector<int> indices;   // Gather map or PoolMax argmax per output cell
        double factor = 0.0;        // Scale constant or cached L2 norm value
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    const Node& node(Var v) const;
    Node& node(Var v);
    Var record(Node n, const char* opname);
    Tensor& grad_buffer(int id);
    void backward_node(int id);
};

}  // namespace rpcate
