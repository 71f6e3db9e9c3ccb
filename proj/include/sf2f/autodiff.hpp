#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sf2f/tensor.hpp"

namespace sf2f {

template <typename T>
class Graph;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::function<void(const Tensor<T>&)> backward;
};

/// Shared handle to a value in the computation. Leaves (parameters, inputs)
/// are created with `Var::leaf`; everything else comes out of a Graph op.
template <typename T>
class Var {
public:
    Var() = default;

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        Var v;
        v.node_ = std::make_shared<Node<T>>();
        v.node_->value = std::move(value);
        v.node_->requires_grad = requires_grad;
        return v;
    }

    explicit operator bool() const noexcept { return static_cast<bool>(node_); }

    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }

    bool has_grad() const { return !node_->grad.empty(); }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& mutable_grad() { return node_->grad; }

    /// Grad buffer, zero-initialized on first use.
    Tensor<T>& ensure_grad() {
        if (node_->grad.empty()) node_->grad = Tensor<T>(node_->value.shape());
        return node_->grad;
    }

    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.fill(T{0});
    }

    Node<T>* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }

private:
    friend class Graph<T>;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    std::shared_ptr<Node<T>> node_;
};

/// Tape of executed ops. Backward closures capture their inputs, so the tape
/// order is a topological order by construction. A graph can be replayed
/// backward exactly once.
template <typename T>
class Graph {
public:
    explicit Graph(bool enable_grad = true) : enabled_(enable_grad) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const noexcept { return enabled_; }

    /// Records an op result. `fn` receives the gradient w.r.t. the result and
    /// must accumulate into its inputs. Nothing is recorded when gradients are
    /// disabled or no input requires them.
    Var<T> record(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                  std::function<void(const Tensor<T>&)> fn);
    Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs,
                  std::function<void(const Tensor<T>&)> fn);

    /// Seeds d(loss)/d(loss) = 1 and propagates through the tape. Gradients
    /// accumulate into leaves; zero them beforehand.
    void backward(const Var<T>& loss);

    std::size_t size() const noexcept { return tape_.size(); }

private:
    Var<T> push(Tensor<T> value, bool needs_grad, std::function<void(const Tensor<T>&)> fn);

    std::vector<std::shared_ptr<Node<T>>> tape_;
    bool enabled_;
    bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Shapes follow the row-major conventions of Tensor.

template <typename T> Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(Graph<T>& g, const Var<T>& x, T factor);

/// x[..., D] + bias[D], broadcast over leading axes.
template <typename T> Var<T> add_bias(Graph<T>& g, const Var<T>& x, const Var<T>& bias);

template <typename T> Var<T> sum(Graph<T>& g, const Var<T>& x);
template <typename T> Var<T> mean(Graph<T>& g, const Var<T>& x);

/// [.., m, k] x [.., k, n]. Either side may be rank 2, in which case it is
/// shared across the other side's batch.
template <typename T> Var<T> matmul(Graph<T>& g, const Var<T>& a, const Var<T>& b);

/// Swaps the last two axes of a rank-2 tensor.
template <typename T> Var<T> transpose(Graph<T>& g, const Var<T>& x);

/// x[N, in] * W[in, out] + b[out]. `bias` may be empty.
template <typename T> Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> layer_norm(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

/// Exact x * Phi(x) with Phi the standard normal CDF.
template <typename T> Var<T> gelu(Graph<T>& g, const Var<T>& x);

template <typename T> Var<T> softmax(Graph<T>& g, const Var<T>& x, std::size_t axis);

/// Mean over rows of -log softmax(logits[b])[labels[b]].
template <typename T>
Var<T> cross_entropy(Graph<T>& g, const Var<T>& logits, std::span<const int> labels);

template <typename T> Var<T> reshape(Graph<T>& g, const Var<T>& x, Shape shape);

/// Columns [start, start+len) of a rank-2 tensor.
template <typename T> Var<T> slice_cols(Graph<T>& g, const Var<T>& x, std::size_t start, std::size_t len);

/// Concatenation along the last axis; all parts share their leading shape.
template <typename T> Var<T> concat_last(Graph<T>& g, std::span<const Var<T>> parts);

/// Concatenation along axis 0 of rank-2 tensors with equal column counts.
template <typename T> Var<T> concat_rows(Graph<T>& g, const Var<T>& top, const Var<T>& bottom);

/// Row `index` of a rank-2 tensor, as a rank-1 tensor.
template <typename T> Var<T> select_row(Graph<T>& g, const Var<T>& x, std::size_t index);

/// Stacks equal-shape rank-1 tensors into [count, n].
template <typename T> Var<T> stack_rows(Graph<T>& g, std::span<const Var<T>> rows);

/// [N, D] -> [D], averaged over N.
template <typename T> Var<T> mean_rows(Graph<T>& g, const Var<T>& x);

}  // namespace sf2f
