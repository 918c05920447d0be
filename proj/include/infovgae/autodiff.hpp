#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"

namespace infovgae {

// Reverse-mode automatic differentiation over a fixed op set, on a tape.
// Nodes are appended in topological order (operands before results), so the
// backward pass is a single reverse sweep over creation indices. Parameters
// are leaves created before Tape::freeze(); Tape::reset() then retires the
// per-step graph while the parameter leaves survive. Retired node storage is
// kept and reused by later pushes, so a loop that rebuilds the same graph
// every step stops allocating after its first iteration.

enum class Op {
    leaf,
    matmul,
    spmm,
    add,
    elementwise_mul,
    scalar_mul,
    relu,
    sigmoid_stable,
    exp_clamped,
    log_clamped,
    sum,
    slice_rows,
    concat_rows,
    transpose,
    max_with_zero,
};

inline constexpr double kSigmoidEps = 1e-7;  // sigmoid outputs clamped to [eps, 1-eps]
inline constexpr double kLogFloor = 1e-12;   // log computed as log(max(x, floor))
inline constexpr double kExpCeiling = 700.0; // exp argument ceiling, keeps results finite

// The scalar kernel behind Op::sigmoid_stable; exposed so probability lookups
// outside the tape reproduce decoder outputs bitwise.
inline double sigmoid_stable_value(double x) {
    double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    if (s < kSigmoidEps) s = kSigmoidEps;
    if (s > 1.0 - kSigmoidEps) s = 1.0 - kSigmoidEps;
    return s;
}

struct Node {
    DenseMatrix value;
    DenseMatrix gradient; // allocated lazily; always value-shaped once touched
    Op op = Op::leaf;
    std::vector<std::size_t> parents;
    bool requires_grad = false; // leaves: parameter flag; else true iff any parent needs gradient

    // op payloads
    double scalar = 0.0;                   // scalar_mul
    const SparseMatrix* sparse = nullptr;  // spmm lhs; must outlive the node
    std::size_t row_begin = 0, row_end = 0; // slice_rows

    DenseMatrix& grad() {
        if (gradient.data.empty() && value.size() > 0) reshape_zero(gradient, value.rows, value.cols);
        return gradient;
    }
    bool has_grad() const { return !gradient.data.empty(); }
};

class Tape;

// Lightweight handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    std::size_t index = 0;

    const DenseMatrix& value() const;
    DenseMatrix& grad() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }
};

class Tape {
public:
    Var leaf(DenseMatrix v, bool requires_grad = true) {
        check_finite(v, "leaf");
        Node& n = claim(Op::leaf, {});
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        return seal(n);
    }

    // Constant input: no gradient is ever accumulated or propagated into it.
    Var constant(DenseMatrix v) { return leaf(std::move(v), false); }

    Var scalar_constant(double v) { return constant(DenseMatrix(1, 1, v)); }

    // Marks the current prefix (parameter leaves) as persistent.
    void freeze() { frozen_ = live_; }

    // Retires every node created after freeze(); parameter leaves survive and
    // retired slots keep their buffers for reuse.
    void reset() { live_ = frozen_; }

    std::size_t size() const { return live_; }
    Node& node(std::size_t i) { return nodes_[i]; }
    const Node& node(std::size_t i) const { return nodes_[i]; }

    // ---- ops ----

    Var matmul(Var a, Var b) {
        Node& n = claim(Op::matmul, {a.index, b.index});
        matmul_into(nodes_[a.index].value, nodes_[b.index].value, n.value);
        return seal(n);
    }

    // `a` is a constant structure matrix; gradient flows to `b` only.
    // The sparse matrix must stay alive for the lifetime of this node.
    Var spmm(const SparseMatrix& a, Var b) {
        Node& n = claim(Op::spmm, {b.index});
        spmm_into(a, nodes_[b.index].value, n.value);
        n.sparse = &a;
        return seal(n);
    }

    Var add(Var a, Var b) {
        const Node &na = nodes_[a.index], &nb = nodes_[b.index];
        if (!na.value.same_shape(nb.value)) throw DimensionError("add: shape mismatch");
        Node& n = claim(Op::add, {a.index, b.index});
        copy_value(n, na.value);
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += nb.value.data[i];
        return seal(n);
    }

    Var elementwise_mul(Var a, Var b) {
        const Node &na = nodes_[a.index], &nb = nodes_[b.index];
        if (!na.value.same_shape(nb.value)) throw DimensionError("elementwise_mul: shape mismatch");
        Node& n = claim(Op::elementwise_mul, {a.index, b.index});
        copy_value(n, na.value);
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= nb.value.data[i];
        return seal(n);
    }

    Var scalar_mul(Var a, double c) {
        Node& n = claim(Op::scalar_mul, {a.index});
        copy_value(n, nodes_[a.index].value);
        for (double& v : n.value.data) v *= c;
        n.scalar = c;
        return seal(n);
    }

    Var relu(Var a) { return unary(a, Op::relu); }
    Var max_with_zero(Var a) { return unary(a, Op::max_with_zero); }
    Var sigmoid_stable(Var a) { return unary(a, Op::sigmoid_stable); }
    Var exp(Var a) { return unary(a, Op::exp_clamped); }
    Var log_clamped(Var a) { return unary(a, Op::log_clamped); }

    Var sum(Var a) {
        double s = 0.0;
        for (double v : nodes_[a.index].value.data) s += v;
        Node& n = claim(Op::sum, {a.index});
        reshape(n.value, 1, 1);
        n.value.data[0] = s;
        return seal(n);
    }

    Var slice_rows(Var a, std::size_t begin, std::size_t end) {
        const Node& na = nodes_[a.index];
        if (begin > end || end > na.value.rows) throw DimensionError("slice_rows: bad range");
        Node& n = claim(Op::slice_rows, {a.index});
        reshape(n.value, end - begin, na.value.cols);
        std::copy(na.value.data.begin() + static_cast<std::ptrdiff_t>(begin * na.value.cols),
                  na.value.data.begin() + static_cast<std::ptrdiff_t>(end * na.value.cols),
                  n.value.data.begin());
        n.row_begin = begin;
        n.row_end = end;
        return seal(n);
    }

    Var concat_rows(Var a, Var b) {
        const Node &na = nodes_[a.index], &nb = nodes_[b.index];
        if (na.value.cols != nb.value.cols) throw DimensionError("concat_rows: column mismatch");
        Node& n = claim(Op::concat_rows, {a.index, b.index});
        reshape(n.value, na.value.rows + nb.value.rows, na.value.cols);
        std::copy(na.value.data.begin(), na.value.data.end(), n.value.data.begin());
        std::copy(nb.value.data.begin(), nb.value.data.end(),
                  n.value.data.begin() + static_cast<std::ptrdiff_t>(na.value.size()));
        return seal(n);
    }

    Var transpose(Var a) {
        Node& n = claim(Op::transpose, {a.index});
        transpose_into(nodes_[a.index].value, n.value);
        return seal(n);
    }

    // ---- backward ----

    // Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
    // gradient. Non-leaf gradients are scratch and re-zeroed per call; leaf
    // gradients accumulate across calls until explicitly zeroed.
    void backward(Var loss) {
        Node& ln = nodes_[loss.index];
        if (ln.value.rows != 1 || ln.value.cols != 1)
            throw ContractError("backward: loss must be 1x1");

        std::vector<bool> reachable(live_, false);
        std::vector<std::size_t> stack{loss.index};
        reachable[loss.index] = true;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t p : nodes_[i].parents) {
                if (!reachable[p] && nodes_[p].requires_grad) {
                    reachable[p] = true;
                    stack.push_back(p);
                }
            }
        }

        for (std::size_t i = 0; i < live_; ++i) {
            if (!reachable[i]) continue;
            Node& n = nodes_[i];
            if (n.op != Op::leaf) {
                n.grad();
                std::fill(n.gradient.data.begin(), n.gradient.data.end(), 0.0);
            } else {
                n.grad(); // allocate, keep accumulated contents
            }
        }

        if (ln.op == Op::leaf && !ln.requires_grad) return;
        ln.grad().data[0] += 1.0;

        for (std::size_t i = live_; i-- > 0;) {
            if (!reachable[i]) continue;
            propagate(i);
        }
    }

    void zero_grad(Var v) {
        Node& n = nodes_[v.index];
        if (n.has_grad()) std::fill(n.gradient.data.begin(), n.gradient.data.end(), 0.0);
    }

private:
    Var unary(Var a, Op op) {
        const Node& na = nodes_[a.index];
        Node& n = claim(op, {a.index});
        reshape(n.value, na.value.rows, na.value.cols);
        switch (op) {
        case Op::relu:
        case Op::max_with_zero:
            for (std::size_t i = 0; i < n.value.size(); ++i)
                n.value.data[i] = na.value.data[i] > 0.0 ? na.value.data[i] : 0.0;
            break;
        case Op::sigmoid_stable:
            for (std::size_t i = 0; i < n.value.size(); ++i)
                n.value.data[i] = sigmoid_stable_value(na.value.data[i]);
            break;
        case Op::exp_clamped:
            for (std::size_t i = 0; i < n.value.size(); ++i) {
                double x = na.value.data[i];
                n.value.data[i] = std::exp(x < kExpCeiling ? x : kExpCeiling);
            }
            break;
        case Op::log_clamped:
            for (std::size_t i = 0; i < n.value.size(); ++i) {
                double x = na.value.data[i];
                n.value.data[i] = std::log(x > kLogFloor ? x : kLogFloor);
            }
            break;
        default:
            throw ContractError("unary: bad op");
        }
        return seal(n);
    }

    // Next slot in creation order, reusing a retired node's buffers when one
    // is present. Payload fields are reset; value and gradient keep their
    // allocations (the gradient is cleared to shapeless so grad() re-sizes it
    // against the new value).
    Node& claim(Op op, std::initializer_list<std::size_t> parents) {
        if (live_ == nodes_.size()) nodes_.emplace_back();
        Node& n = nodes_[live_];
        n.op = op;
        n.parents.assign(parents.begin(), parents.end());
        n.requires_grad = false;
        n.scalar = 0.0;
        n.sparse = nullptr;
        n.row_begin = 0;
        n.row_end = 0;
        n.gradient.rows = 0;
        n.gradient.cols = 0;
        n.gradient.data.clear();
        return n;
    }

    Var seal(Node& n) {
        if (n.op != Op::leaf) {
            bool needs = false;
            for (std::size_t p : n.parents) needs = needs || nodes_[p].requires_grad;
            n.requires_grad = needs;
            check_finite(n.value, op_name(n.op));
        }
        return Var{this, live_++};
    }

    static void copy_value(Node& n, const DenseMatrix& src) {
        n.value.rows = src.rows;
        n.value.cols = src.cols;
        n.value.data.assign(src.data.begin(), src.data.end());
    }

    static const char* op_name(Op op) {
        switch (op) {
        case Op::leaf: return "leaf";
        case Op::matmul: return "matmul";
        case Op::spmm: return "spmm";
        case Op::add: return "add";
        case Op::elementwise_mul: return "elementwise_mul";
        case Op::scalar_mul: return "scalar_mul";
        case Op::relu: return "relu";
        case Op::sigmoid_stable: return "sigmoid_stable";
        case Op::exp_clamped: return "exp";
        case Op::log_clamped: return "log_clamped";
        case Op::sum: return "sum";
        case Op::slice_rows: return "slice_rows";
        case Op::concat_rows: return "concat_rows";
        case Op::transpose: return "transpose";
        case Op::max_with_zero: return "max_with_zero";
        }
        return "?";
    }

    void propagate(std::size_t i) {
        Node& n = nodes_[i];
        if (n.op == Op::leaf || !n.has_grad()) return;
        const DenseMatrix& g = n.gradient;

        auto parent = [&](std::size_t slot) -> Node& { return nodes_[n.parents[slot]]; };
        auto wants = [&](std::size_t slot) { return nodes_[n.parents[slot]].requires_grad; };

        switch (n.op) {
        case Op::matmul: {
            Node &a = parent(0), &b = parent(1);
            if (wants(0)) { // dA += G * B^T
                DenseMatrix& da = a.grad();
                for (std::size_t r = 0; r < a.value.rows; ++r)
                    for (std::size_t k = 0; k < b.value.cols; ++k) {
                        double gik = g(r, k);
                        if (gik == 0.0) continue;
                        for (std::size_t c = 0; c < a.value.cols; ++c)
                            da(r, c) += gik * b.value(c, k);
                    }
            }
            if (wants(1)) { // dB += A^T * G
                DenseMatrix& db = b.grad();
                for (std::size_t r = 0; r < a.value.rows; ++r)
                    for (std::size_t c = 0; c < a.value.cols; ++c) {
                        double arc = a.value(r, c);
                        if (arc == 0.0) continue;
                        for (std::size_t k = 0; k < g.cols; ++k)
                            db(c, k) += arc * g(r, k);
                    }
            }
            break;
        }
        case Op::spmm:
            if (wants(0)) spmm_transpose_accumulate(*n.sparse, g, parent(0).grad());
            break;
        case Op::add:
            for (std::size_t slot = 0; slot < 2; ++slot)
                if (wants(slot)) {
                    DenseMatrix& d = parent(slot).grad();
                    for (std::size_t k = 0; k < g.size(); ++k) d.data[k] += g.data[k];
                }
            break;
        case Op::elementwise_mul:
            for (std::size_t slot = 0; slot < 2; ++slot)
                if (wants(slot)) {
                    const DenseMatrix& other = parent(1 - slot).value;
                    DenseMatrix& d = parent(slot).grad();
                    for (std::size_t k = 0; k < g.size(); ++k)
                        d.data[k] += g.data[k] * other.data[k];
                }
            break;
        case Op::scalar_mul:
            if (wants(0)) {
                DenseMatrix& d = parent(0).grad();
                for (std::size_t k = 0; k < g.size(); ++k) d.data[k] += n.scalar * g.data[k];
            }
            break;
        case Op::relu:
        case Op::max_with_zero:
            if (wants(0)) {
                Node& a = parent(0);
                DenseMatrix& d = a.grad();
                // subgradient at the kink (x == 0) is 0
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (a.value.data[k] > 0.0) d.data[k] += g.data[k];
            }
            break;
        case Op::sigmoid_stable:
            if (wants(0)) {
                DenseMatrix& d = parent(0).grad();
                for (std::size_t k = 0; k < g.size(); ++k) {
                    double s = n.value.data[k];
                    d.data[k] += g.data[k] * s * (1.0 - s);
                }
            }
            break;
        case Op::exp_clamped:
            if (wants(0)) {
                Node& a = parent(0);
                DenseMatrix& d = a.grad();
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (a.value.data[k] < kExpCeiling) d.data[k] += g.data[k] * n.value.data[k];
            }
            break;
        case Op::log_clamped:
            if (wants(0)) {
                Node& a = parent(0);
                DenseMatrix& d = a.grad();
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (a.value.data[k] > kLogFloor) d.data[k] += g.data[k] / a.value.data[k];
            }
            break;
        case Op::sum:
            if (wants(0)) {
                DenseMatrix& d = parent(0).grad();
                double s = g.data[0];
                for (double& v : d.data) v += s;
            }
            break;
        case Op::slice_rows:
            if (wants(0)) {
                DenseMatrix& d = parent(0).grad();
                std::size_t off = n.row_begin * d.cols;
                for (std::size_t k = 0; k < g.size(); ++k) d.data[off + k] += g.data[k];
            }
            break;
        case Op::concat_rows: {
            std::size_t top = parent(0).value.size();
            if (wants(0)) {
                DenseMatrix& d = parent(0).grad();
                for (std::size_t k = 0; k < top; ++k) d.data[k] += g.data[k];
            }
            if (wants(1)) {
                DenseMatrix& d = parent(1).grad();
                for (std::size_t k = 0; k < d.size(); ++k) d.data[k] += g.data[top + k];
            }
            break;
        }
        case Op::transpose:
            if (wants(0)) {
                DenseMatrix& d = parent(0).grad();
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) d(c, r) += g(r, c);
            }
            break;
        case Op::leaf:
            break;
        }
    }

    std::deque<Node> nodes_; // deque: references stay valid while slots append
    std::size_t frozen_ = 0;
    std::size_t live_ = 0;   // nodes_[live_, size) are retired slots held for reuse
};

inline const DenseMatrix& Var::value() const { return tape->node(index).value; }
inline DenseMatrix& Var::grad() const { return tape->node(index).grad(); }

// ---- free-function op spellings ----

inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var spmm(const SparseMatrix& a, Var b) { return b.tape->spmm(a, b); }
inline Var add(Var a, Var b) { return a.tape->add(a, b); }
inline Var elementwise_mul(Var a, Var b) { return a.tape->elementwise_mul(a, b); }
inline Var scalar_mul(Var a, double c) { return a.tape->scalar_mul(a, c); }
inline Var relu(Var a) { return a.tape->relu(a); }
inline Var max_with_zero(Var a) { return a.tape->max_with_zero(a); }
inline Var sigmoid_stable(Var a) { return a.tape->sigmoid_stable(a); }
inline Var exp(Var a) { return a.tape->exp(a); }
inline Var log_clamped(Var a) { return a.tape->log_clamped(a); }
inline Var sum(Var a) { return a.tape->sum(a); }
inline Var slice_rows(Var a, std::size_t b, std::size_t e) { return a.tape->slice_rows(a, b, e); }
inline Var concat_rows(Var a, Var b) { return a.tape->concat_rows(a, b); }
inline Var transpose(Var a) { return a.tape->transpose(a); }

// ---- compositions over the fixed op set ----

inline Var sub(Var a, Var b) { return add(a, scalar_mul(b, -1.0)); }

inline Var mean(Var a) {
    return scalar_mul(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// max(slope*x, x); gradient at x == 0 is `slope` by the relu kink convention.
inline Var leaky_relu(Var a, double slope) {
    return add(scalar_mul(a, slope), scalar_mul(relu(a), 1.0 - slope));
}

// Clamp to [lo, hi] as lo + relu(x - lo) - relu(x - hi); pass-through gradient
// inside the interval, zero outside.
inline Var clamp(Var a, double lo, double hi) {
    Tape& t = *a.tape;
    Var clo = t.constant(DenseMatrix(a.rows(), a.cols(), lo));
    Var chi = t.constant(DenseMatrix(a.rows(), a.cols(), hi));
    return add(clo, sub(relu(sub(a, clo)), relu(sub(a, chi))));
}

} // namespace infovgae
