#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "strgode/tensor.hpp"

namespace strgode::ad {

// Thrown when a forward evaluation produces a NaN or infinity.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

using Bindings = std::unordered_map<std::string, Tensor>;

// Reverse-mode tape over 2-D tensors. The graph is built dynamically (node
// order is a topological order by construction), evaluated with forward()
// against leaf bindings, and differentiated with backward(). Leaves are
// either named inputs, named parameters (gradients reported), or baked-in
// constants. A tape may be re-evaluated against new bindings as long as the
// topology is unchanged, which is how training reuses one graph across
// windows and how grad_check perturbs parameters.
class Graph {
public:
    enum class Op {
        Input,
        Param,
        Constant,
        MatMul,
        Add,      // same shape, or second operand 1 x k broadcast across rows
        Sub,      // same shape
        Mul,      // elementwise, same shape
        ConcatCols,
        SliceCols,
        Relu,
        Sigmoid,
        Tanh,
        Affine,   // a * x + b, scalar constants
        MeanAbs,  // mean of |x| over all entries -> 1 x 1
    };

    Var input(const std::string& name, std::size_t rows, std::size_t cols) {
        return add_leaf(Op::Input, name, rows, cols, /*requires_grad=*/false);
    }

    Var param(const std::string& name, std::size_t rows, std::size_t cols) {
        Var v = add_leaf(Op::Param, name, rows, cols, /*requires_grad=*/true);
        param_ids_.push_back(v.id);
        return v;
    }

    Var constant(Tensor value, const std::string& name = "") {
        Node n;
        n.op = Op::Constant;
        n.name = name.empty() ? auto_name("const") : name;
        n.rows = value.rows();
        n.cols = value.cols();
        n.value = std::move(value);
        n.requires_grad = false;
        if (!n.value.all_finite())
            throw NonFiniteError("non-finite constant in node " + n.name);
        return push(std::move(n));
    }

    Var matmul(Var a, Var b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (na.cols != nb.rows)
            shape_error("matmul", {a, b});
        Node n = make_op(Op::MatMul, {a, b}, na.rows, nb.cols);
        return push(std::move(n));
    }

    Var add(Var a, Var b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        const bool same = na.rows == nb.rows && na.cols == nb.cols;
        const bool bcast = nb.rows == 1 && na.cols == nb.cols;
        if (!same && !bcast) shape_error("add", {a, b});
        return push(make_op(Op::Add, {a, b}, na.rows, na.cols));
    }

    Var sub(Var a, Var b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (!(na.rows == nb.rows && na.cols == nb.cols)) shape_error("sub", {a, b});
        return push(make_op(Op::Sub, {a, b}, na.rows, na.cols));
    }

    Var mul(Var a, Var b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (!(na.rows == nb.rows && na.cols == nb.cols)) shape_error("mul", {a, b});
        return push(make_op(Op::Mul, {a, b}, na.rows, na.cols));
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
        const std::size_t rows = node(parts[0]).rows;
        std::size_t cols = 0;
        for (Var p : parts) {
            if (node(p).rows != rows) shape_error("concat_cols", parts);
            cols += node(p).cols;
        }
        return push(make_op(Op::ConcatCols, parts, rows, cols));
    }

    Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
        const Node& na = node(a);
        if (!(c0 < c1 && c1 <= na.cols))
            throw std::invalid_argument("slice_cols: bad range on node " + na.name);
        Node n = make_op(Op::SliceCols, {a}, na.rows, c1 - c0);
        n.i0 = c0;
        n.i1 = c1;
        return push(std::move(n));
    }

    Var relu(Var a) { return unary(Op::Relu, a); }
    Var sigmoid(Var a) { return unary(Op::Sigmoid, a); }
    Var tanh(Var a) { return unary(Op::Tanh, a); }

    Var affine(Var a, double scale, double shift) {
        Node n = make_op(Op::Affine, {a}, node(a).rows, node(a).cols);
        n.a = scale;
        n.b = shift;
        return push(std::move(n));
    }

    Var mean_abs(Var a) { return push(make_op(Op::MeanAbs, {a}, 1, 1)); }

    // Evaluates every node in topological order. All named leaves must be
    // bound; shapes are checked against declarations and any non-finite
    // result is rejected with the offending node named.
    void forward(const Bindings& bindings) {
        for (Node& n : nodes_) {
            switch (n.op) {
            case Op::Input:
            case Op::Param: {
                auto it = bindings.find(n.name);
                if (it == bindings.end())
                    throw std::invalid_argument("forward: missing binding for leaf " + n.name);
                if (it->second.rows() != n.rows || it->second.cols() != n.cols)
                    throw std::invalid_argument("forward: shape mismatch binding leaf " + n.name);
                n.value = it->second;
                break;
            }
            case Op::Constant:
                break;
            default:
                eval(n);
            }
            if (!n.value.all_finite())
                throw NonFiniteError("forward: non-finite value in node " + n.name);
        }
        evaluated_ = true;
    }

    // Gradients of a scalar loss for every gradient-requiring node.
    // Parameters untouched by the loss keep an all-zero gradient.
    void backward(Var loss) {
        const Node& ln = node(loss);
        if (ln.rows != 1 || ln.cols != 1)
            throw std::invalid_argument("backward: loss node " + ln.name + " is not scalar");
        if (!evaluated_)
            throw std::logic_error("backward: forward() has not been run");
        for (Node& n : nodes_) {
            if (n.requires_grad) {
                n.grad = Tensor(n.rows, n.cols);
            } else {
                n.grad = Tensor();
            }
        }
        if (!nodes_[loss.id].requires_grad)
            nodes_[loss.id].grad = Tensor(1, 1);
        nodes_[loss.id].grad(0, 0) = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.grad.empty()) continue;
            accumulate(n);
        }
    }

    const Tensor& value(Var v) const { return node(v).value; }

    // Zero tensor for nodes the loss never reached.
    Tensor gradient(Var v) const {
        const Node& n = node(v);
        if (n.grad.empty()) return Tensor(n.rows, n.cols);
        return n.grad;
    }

    std::map<std::string, Tensor> parameter_gradients() const {
        std::map<std::string, Tensor> out;
        for (int id : param_ids_) {
            const Node& n = nodes_[id];
            out[n.name] = n.grad.empty() ? Tensor(n.rows, n.cols) : n.grad;
        }
        return out;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> out;
        for (int id : param_ids_) out.push_back(nodes_[id].name);
        return out;
    }

    std::map<std::string, Tensor> named_values() const {
        std::map<std::string, Tensor> out;
        for (const Node& n : nodes_)
            if (!n.value.empty()) out[n.name] = n.value;
        return out;
    }

    const std::string& name_of(Var v) const { return node(v).name; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::Constant;
        std::string name;
        std::vector<int> inputs;
        std::size_t rows = 0, cols = 0;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        double a = 1.0, b = 0.0;      // Affine
        std::size_t i0 = 0, i1 = 0;   // SliceCols
    };

    std::vector<Node> nodes_;
    std::vector<int> param_ids_;
    bool evaluated_ = false;

    const Node& node(Var v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw std::invalid_argument("invalid graph variable");
        return nodes_[v.id];
    }

    std::string auto_name(const char* op) {
        return std::string(op) + "#" + std::to_string(nodes_.size());
    }

    Var add_leaf(Op op, const std::string& name, std::size_t rows, std::size_t cols,
                 bool requires_grad) {
        if (name.empty()) throw std::invalid_argument("leaf needs a name");
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("leaf " + name + ": dimensions must be positive");
        Node n;
        n.op = op;
        n.name = name;
        n.rows = rows;
        n.cols = cols;
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    Node make_op(Op op, const std::vector<Var>& inputs, std::size_t rows, std::size_t cols) {
        Node n;
        n.op = op;
        n.rows = rows;
        n.cols = cols;
        for (Var v : inputs) {
            n.inputs.push_back(v.id);
            if (node(v).requires_grad) n.requires_grad = true;
        }
        switch (op) {
        case Op::MatMul: n.name = auto_name("matmul"); break;
        case Op::Add: n.name = auto_name("add"); break;
        case Op::Sub: n.name = auto_name("sub"); break;
        case Op::Mul: n.name = auto_name("mul"); break;
        case Op::ConcatCols: n.name = auto_name("concat"); break;
        case Op::SliceCols: n.name = auto_name("slice"); break;
        case Op::Relu: n.name = auto_name("relu"); break;
        case Op::Sigmoid: n.name = auto_name("sigmoid"); break;
        case Op::Tanh: n.name = auto_name("tanh"); break;
        case Op::Affine: n.name = auto_name("affine"); break;
        case Op::MeanAbs: n.name = auto_name("mean_abs"); break;
        default: n.name = auto_name("op"); break;
        }
        return n;
    }

    Var unary(Op op, Var a) { return push(make_op(op, {a}, node(a).rows, node(a).cols)); }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    [[noreturn]] void shape_error(const char* op, const std::vector<Var>& vs) {
        std::string msg = std::string(op) + ": incompatible shapes (";
        for (std::size_t i = 0; i < vs.size(); ++i) {
            const Node& n = node(vs[i]);
            if (i) msg += ", ";
            msg += n.name + " " + std::to_string(n.rows) + "x" + std::to_string(n.cols);
        }
        msg += ")";
        throw std::invalid_argument(msg);
    }

    static double sigmoid_scalar(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    }

    void eval(Node& n) {
        switch (n.op) {
        case Op::MatMul: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            const Tensor& B = nodes_[n.inputs[1]].value;
            Tensor C(n.rows, n.cols);
            matmul_into(A, B, C, false, false, false);
            n.value = std::move(C);
            break;
        }
        case Op::Add: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            const Tensor& B = nodes_[n.inputs[1]].value;
            Tensor C(n.rows, n.cols);
            if (B.rows() == 1 && A.rows() != 1) {
                for (std::size_t i = 0; i < A.rows(); ++i)
                    for (std::size_t j = 0; j < A.cols(); ++j)
                        C(i, j) = A(i, j) + B(0, j);
            } else {
                for (std::size_t k = 0; k < A.numel(); ++k)
                    C.vec()[k] = A.vec()[k] + B.vec()[k];
            }
            n.value = std::move(C);
            break;
        }
        case Op::Sub: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            const Tensor& B = nodes_[n.inputs[1]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t k = 0; k < A.numel(); ++k)
                C.vec()[k] = A.vec()[k] - B.vec()[k];
            n.value = std::move(C);
            break;
        }
        case Op::Mul: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            const Tensor& B = nodes_[n.inputs[1]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t k = 0; k < A.numel(); ++k)
                C.vec()[k] = A.vec()[k] * B.vec()[k];
            n.value = std::move(C);
            break;
        }
        case Op::ConcatCols: {
            Tensor C(n.rows, n.cols);
            std::size_t off = 0;
            for (int id : n.inputs) {
                const Tensor& P = nodes_[id].value;
                for (std::size_t i = 0; i < P.rows(); ++i)
                    for (std::size_t j = 0; j < P.cols(); ++j)
                        C(i, off + j) = P(i, j);
                off += P.cols();
            }
            n.value = std::move(C);
            break;
        }
        case Op::SliceCols: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t i = 0; i < n.rows; ++i)
                for (std::size_t j = 0; j < n.cols; ++j)
                    C(i, j) = A(i, n.i0 + j);
            n.value = std::move(C);
            break;
        }
        case Op::Relu: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t k = 0; k < A.numel(); ++k)
                C.vec()[k] = A.vec()[k] > 0.0 ? A.vec()[k] : 0.0;
            n.value = std::move(C);
            break;
        }
        case Op::Sigmoid: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t k = 0; k < A.numel(); ++k)
                C.vec()[k] = sigmoid_scalar(A.vec()[k]);
            n.value = std::move(C);
            break;
        }
        case Op::Tanh: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t k = 0; k < A.numel(); ++k)
                C.vec()[k] = std::tanh(A.vec()[k]);
            n.value = std::move(C);
            break;
        }
        case Op::Affine: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            Tensor C(n.rows, n.cols);
            for (std::size_t k = 0; k < A.numel(); ++k)
                C.vec()[k] = n.a * A.vec()[k] + n.b;
            n.value = std::move(C);
            break;
        }
        case Op::MeanAbs: {
            const Tensor& A = nodes_[n.inputs[0]].value;
            double s = 0.0;
            for (double v : A.vec()) s += std::abs(v);
            n.value = Tensor::scalar(s / static_cast<double>(A.numel()));
            break;
        }
        default:
            throw std::logic_error("eval: unexpected op");
        }
    }

    // C (+)= op(A) x op(B); transposition handled by index swizzling.
    static void matmul_into(const Tensor& A, const Tensor& B, Tensor& C,
                            bool transpose_a, bool transpose_b, bool accumulate_into) {
        const std::size_t n = transpose_a ? A.cols() : A.rows();
        const std::size_t k = transpose_a ? A.rows() : A.cols();
        const std::size_t m = transpose_b ? B.rows() : B.cols();
        if (!accumulate_into)
            for (auto& x : C.vec()) x = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double a = transpose_a ? A(p, i) : A(i, p);
                if (a == 0.0) continue;
                double* crow = C.data() + i * m;
                if (!transpose_b) {
                    const double* brow = B.data() + p * m;
                    for (std::size_t j = 0; j < m; ++j) crow[j] += a * brow[j];
                } else {
                    for (std::size_t j = 0; j < m; ++j) crow[j] += a * B(j, p);
                }
            }
        }
    }

    void add_grad(int id, const Tensor& g) {
        Node& n = nodes_[id];
        if (n.grad.empty()) return;
        for (std::size_t k = 0; k < g.numel(); ++k) n.grad.vec()[k] += g.vec()[k];
    }

    void accumulate(Node& n) {
        const Tensor& G = n.grad;
        switch (n.op) {
        case Op::Input:
        case Op::Param:
        case Op::Constant:
            break;
        case Op::MatMul: {
            Node& A = nodes_[n.inputs[0]];
            Node& B = nodes_[n.inputs[1]];
            if (!A.grad.empty()) matmul_into(G, B.value, A.grad, false, true, true);
            if (!B.grad.empty()) matmul_into(A.value, G, B.grad, true, false, true);
            break;
        }
        case Op::Add: {
            Node& A = nodes_[n.inputs[0]];
            Node& B = nodes_[n.inputs[1]];
            if (!A.grad.empty()) add_grad(n.inputs[0], G);
            if (!B.grad.empty()) {
                if (B.rows == 1 && n.rows != 1) {
                    for (std::size_t i = 0; i < n.rows; ++i)
                        for (std::size_t j = 0; j < n.cols; ++j)
                            B.grad(0, j) += G(i, j);
                } else {
                    add_grad(n.inputs[1], G);
                }
            }
            break;
        }
        case Op::Sub: {
            Node& A = nodes_[n.inputs[0]];
            Node& B = nodes_[n.inputs[1]];
            if (!A.grad.empty()) add_grad(n.inputs[0], G);
            if (!B.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k)
                    B.grad.vec()[k] -= G.vec()[k];
            break;
        }
        case Op::Mul: {
            Node& A = nodes_[n.inputs[0]];
            Node& B = nodes_[n.inputs[1]];
            if (!A.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k)
                    A.grad.vec()[k] += G.vec()[k] * B.value.vec()[k];
            if (!B.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k)
                    B.grad.vec()[k] += G.vec()[k] * A.value.vec()[k];
            break;
        }
        case Op::ConcatCols: {
            std::size_t off = 0;
            for (int id : n.inputs) {
                Node& P = nodes_[id];
                if (!P.grad.empty()) {
                    for (std::size_t i = 0; i < P.rows; ++i)
                        for (std::size_t j = 0; j < P.cols; ++j)
                            P.grad(i, j) += G(i, off + j);
                }
                off += P.cols;
            }
            break;
        }
        case Op::SliceCols: {
            Node& A = nodes_[n.inputs[0]];
            if (!A.grad.empty())
                for (std::size_t i = 0; i < n.rows; ++i)
                    for (std::size_t j = 0; j < n.cols; ++j)
                        A.grad(i, n.i0 + j) += G(i, j);
            break;
        }
        case Op::Relu: {
            Node& A = nodes_[n.inputs[0]];
            if (!A.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k)
                    A.grad.vec()[k] += A.value.vec()[k] > 0.0 ? G.vec()[k] : 0.0;
            break;
        }
        case Op::Sigmoid: {
            Node& A = nodes_[n.inputs[0]];
            if (!A.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k) {
                    const double s = n.value.vec()[k];
                    A.grad.vec()[k] += G.vec()[k] * s * (1.0 - s);
                }
            break;
        }
        case Op::Tanh: {
            Node& A = nodes_[n.inputs[0]];
            if (!A.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k) {
                    const double t = n.value.vec()[k];
                    A.grad.vec()[k] += G.vec()[k] * (1.0 - t * t);
                }
            break;
        }
        case Op::Affine: {
            Node& A = nodes_[n.inputs[0]];
            if (!A.grad.empty())
                for (std::size_t k = 0; k < G.numel(); ++k)
                    A.grad.vec()[k] += n.a * G.vec()[k];
            break;
        }
        case Op::MeanAbs: {
            Node& A = nodes_[n.inputs[0]];
            if (!A.grad.empty()) {
                const double g = G(0, 0) / static_cast<double>(A.value.numel());
                for (std::size_t k = 0; k < A.value.numel(); ++k) {
                    const double v = A.value.vec()[k];
                    // subgradient 0 at 0
                    A.grad.vec()[k] += v > 0.0 ? g : (v < 0.0 ? -g : 0.0);
                }
            }
            break;
        }
        default:
            throw std::logic_error("accumulate: unexpected op");
        }
    }
};

// Central finite differences over every parameter entry; returns the worst
// relative error against backward(). Relative error is
// |a - b| / max(|a|, |b|, 1e-8).
inline double grad_check(Graph& graph, Bindings bindings, Var loss, double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");
    graph.forward(bindings);
    graph.backward(loss);
    const auto analytic = graph.parameter_gradients();
    double worst = 0.0;
    for (const auto& [name, grad] : analytic) {
        auto it = bindings.find(name);
        if (it == bindings.end())
            throw std::invalid_argument("grad_check: missing binding for parameter " + name);
        Tensor& p = it->second;
        for (std::size_t k = 0; k < p.numel(); ++k) {
            const double orig = p.vec()[k];
            p.vec()[k] = orig + epsilon;
            graph.forward(bindings);
            const double fp = graph.value(loss)(0, 0);
            p.vec()[k] = orig - epsilon;
            graph.forward(bindings);
            const double fm = graph.value(loss)(0, 0);
            p.vec()[k] = orig;
            const double fd = (fp - fm) / (2.0 * epsilon);
            const double a = grad.vec()[k];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    graph.forward(bindings);
    return worst;
}

} // namespace strgode::ad
