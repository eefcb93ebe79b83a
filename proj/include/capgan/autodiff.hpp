#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "capgan/kernels.hpp"
#include "capgan/tensor.hpp"

namespace capgan::ad {

struct Node;
using NodeP = std::shared_ptr<Node>;

class Var;

// Given the op's inputs, its output and the upstream adjoint, return one
// adjoint Var per input. The returned adjoints are built from ad:: ops
// themselves, so differentiating a gradient (double backprop) works the same
// way as differentiating a forward pass.
using VjpFn = std::function<std::vector<Var>(const std::vector<Var>& inputs,
                                             const Var& output, const Var& g)>;

struct Node {
    Tensor value;
    std::vector<NodeP> inputs;
    VjpFn vjp;
    bool requires_grad = false;
    std::uint64_t id = 0;
};

class Var {
public:
    Var() = default;
    explicit Var(NodeP n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    NodeP node() const { return node_; }

    // In-place parameter update; only valid on leaves (no inputs).
    Tensor& mutable_value() { return node_->value; }

    Var detach() const;

private:
    NodeP node_;
};

Var constant(Tensor v);
Var leaf(Tensor v);  // trainable leaf, requires_grad = true
Var scalar(double v);

// Adjoints of `output` (a scalar) with respect to `wrt`. Entries whose leaf
// does not reach `output` come back as zero constants. The returned Vars are
// full graph nodes and may be differentiated again.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt);

// Convenience: adjoint values only.
std::vector<Tensor> gradients(const Var& output, const std::vector<Var>& wrt);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var clamp(const Var& a, double lo, double hi);

// ---- linear algebra / structure ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var concat_cols(const Var& a, const Var& b);               // [N,p] ++ [N,q] -> [N,p+q]
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
Var rowsum(const Var& a);                                  // [N,M] -> [N]
Var colsum(const Var& a);                                  // [N,M] -> [M]
Var sum_all(const Var& a);                                 // -> [1]
Var mean_all(const Var& a);                                // -> [1]
Var broadcast_cols(const Var& v, std::size_t m);           // [N] -> [N,M]
Var broadcast_rows(const Var& v, std::size_t n);           // [M] -> [N,M]
Var broadcast_full(const Var& s, std::vector<std::size_t> shape);  // [1] -> shape
Var add_rowvec(const Var& x, const Var& b);                // [N,M] + [M]
Var chan_sum(const Var& x);                                // [N,C,H,W] -> [C]
Var add_chan_bias(const Var& x, const Var& b);             // [N,C,H,W] + [C]
Var gather_rows(const Var& table, std::vector<int> idx);   // [K,D] -> [n,D]
Var scatter_rows(const Var& rows, std::vector<int> idx, std::size_t k);

// ---- convolution family (all bilinear in their two tensor arguments) ----
Var conv2d(const Var& x, const Var& w, const kernels::ConvGeom& g);
Var conv2d_dgrad(const Var& gy, const Var& w, const kernels::ConvGeom& g);
Var conv2d_wgrad(const Var& x, const Var& gy, const kernels::ConvGeom& g);

// ---- classifier head (first-order only) ----
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

}  // namespace capgan::ad
