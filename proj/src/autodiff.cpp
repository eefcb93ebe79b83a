#include "capgan/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace capgan::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

Var make_node(Tensor value, std::vector<NodeP> inputs, VjpFn vjp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->id = g_next_id.fetch_add(1);
    for (const auto& in : n->inputs)
        if (in && in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->vjp = std::move(vjp);
    return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a.shape()) + " vs " +
                                    Tensor::shape_str(b.shape()));
}

Tensor ew(const Tensor& a, const Tensor& b, double (*f)(double, double)) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

Tensor map(const Tensor& a, double (*f)(double)) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
    return out;
}

}  // namespace

Var Var::detach() const { return constant(node_->value); }

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->id = g_next_id.fetch_add(1);
    return Var(std::move(n));
}

Var leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->id = g_next_id.fetch_add(1);
    return Var(std::move(n));
}

Var scalar(double v) { return constant(Tensor::scalar(v)); }

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt) {
    if (output.value().numel() != 1)
        throw std::invalid_argument("grad: output must be a scalar");

    // Reachable differentiable subgraph, then reverse creation order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::unordered_map<Node*, NodeP> keep;
    std::vector<NodeP> stack{output.node()};
    while (!stack.empty()) {
        NodeP n = stack.back();
        stack.pop_back();
        if (!n || !n->requires_grad || !seen.insert(n.get()).second) continue;
        order.push_back(n.get());
        keep[n.get()] = n;
        for (const auto& in : n->inputs) stack.push_back(in);
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->id > b->id; });

    std::unordered_map<Node*, Var> adj;
    if (output.requires_grad())
        adj[output.node().get()] = constant(Tensor::full_like(output.value(), 1.0));

    for (Node* n : order) {
        auto it = adj.find(n);
        if (it == adj.end() || !n->vjp) continue;
        std::vector<Var> inputs;
        inputs.reserve(n->inputs.size());
        for (const auto& in : n->inputs) inputs.emplace_back(in);
        Var out_var(keep[n]);
        std::vector<Var> gs = n->vjp(inputs, out_var, it->second);
        for (std::size_t i = 0; i < n->inputs.size(); ++i) {
            const NodeP& in = n->inputs[i];
            if (!in || !in->requires_grad || !gs[i].defined()) continue;
            auto jt = adj.find(in.get());
            if (jt == adj.end())
                adj[in.get()] = gs[i];
            else
                jt->second = add(jt->second, gs[i]);
        }
    }

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto it = adj.find(w.node().get());
        result.push_back(it != adj.end() ? it->second
                                         : constant(Tensor::zeros_like(w.value())));
    }
    return result;
}

std::vector<Tensor> gradients(const Var& output, const std::vector<Var>& wrt) {
    std::vector<Tensor> out;
    for (const Var& g : grad(output, wrt)) out.push_back(g.value());
    return out;
}

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make_node(ew(a.value(), b.value(), [](double x, double y) { return x + y; }),
                     {a.node(), b.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{g, g};
                     });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make_node(ew(a.value(), b.value(), [](double x, double y) { return x - y; }),
                     {a.node(), b.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{g, neg(g)};
                     });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make_node(ew(a.value(), b.value(), [](double x, double y) { return x * y; }),
                     {a.node(), b.node()},
                     [](const std::vector<Var>& in, const Var&, const Var& g) {
                         return std::vector<Var>{mul(g, in[1]), mul(g, in[0])};
                     });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    return make_node(ew(a.value(), b.value(), [](double x, double y) { return x / y; }),
                     {a.node(), b.node()},
                     [](const std::vector<Var>& in, const Var& out, const Var& g) {
                         Var ga = div(g, in[1]);
                         Var gb = neg(div(mul(g, out), in[1]));
                         return std::vector<Var>{ga, gb};
                     });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
    Tensor out(a.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * c;
    return make_node(std::move(out), {a.node()},
                     [c](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{scale(g, c)};
                     });
}

Var add_scalar(const Var& a, double c) {
    Tensor out(a.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + c;
    return make_node(std::move(out), {a.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{g};
                     });
}

Var exp(const Var& a) {
    return make_node(map(a.value(), [](double x) { return std::exp(x); }), {a.node()},
                     [](const std::vector<Var>&, const Var& out, const Var& g) {
                         return std::vector<Var>{mul(g, out)};
                     });
}

Var log(const Var& a) {
    return make_node(map(a.value(), [](double x) { return std::log(x); }), {a.node()},
                     [](const std::vector<Var>& in, const Var&, const Var& g) {
                         return std::vector<Var>{div(g, in[0])};
                     });
}

Var sqrt(const Var& a) {
    return make_node(map(a.value(), [](double x) { return std::sqrt(x); }), {a.node()},
                     [](const std::vector<Var>&, const Var& out, const Var& g) {
                         return std::vector<Var>{scale(div(g, out), 0.5)};
                     });
}

Var square(const Var& a) {
    return make_node(map(a.value(), [](double x) { return x * x; }), {a.node()},
                     [](const std::vector<Var>& in, const Var&, const Var& g) {
                         return std::vector<Var>{scale(mul(g, in[0]), 2.0)};
                     });
}

Var sigmoid(const Var& a) {
    return make_node(map(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }),
                     {a.node()},
                     [](const std::vector<Var>&, const Var& out, const Var& g) {
                         Var one_minus = add_scalar(neg(out), 1.0);
                         return std::vector<Var>{mul(g, mul(out, one_minus))};
                     });
}

Var softplus(const Var& a) {
    // log(1 + exp(x)), computed in its overflow-safe form.
    return make_node(map(a.value(),
                         [](double x) {
                             return x > 0 ? x + std::log1p(std::exp(-x))
                                          : std::log1p(std::exp(x));
                         }),
                     {a.node()},
                     [](const std::vector<Var>& in, const Var&, const Var& g) {
                         return std::vector<Var>{mul(g, sigmoid(in[0]))};
                     });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor mask(a.value().shape());
    Tensor out(a.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double x = a.value()[i];
        mask[i] = x > 0 ? 1.0 : slope;
        out[i] = x * mask[i];
    }
    Var mask_c = constant(std::move(mask));
    return make_node(std::move(out), {a.node()},
                     [mask_c](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{mul(g, mask_c)};
                     });
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor mask(a.value().shape());
    Tensor out(a.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double x = a.value()[i];
        const bool inside = x > lo && x < hi;
        mask[i] = inside ? 1.0 : 0.0;
        out[i] = std::min(hi, std::max(lo, x));
    }
    Var mask_c = constant(std::move(mask));
    return make_node(std::move(out), {a.node()},
                     [mask_c](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{mul(g, mask_c)};
                     });
}

// ---- linear algebra / structure ----

Var matmul(const Var& a, const Var& b) {
    return make_node(kernels::matmul(a.value(), b.value()), {a.node(), b.node()},
                     [](const std::vector<Var>& in, const Var&, const Var& g) {
                         Var ga = matmul(g, transpose(in[1]));
                         Var gb = matmul(transpose(in[0]), g);
                         return std::vector<Var>{ga, gb};
                     });
}

Var transpose(const Var& a) {
    const std::size_t n = a.value().dim(0), m = a.value().dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at2(j, i) = a.value().at2(i, j);
    return make_node(std::move(out), {a.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{transpose(g)};
                     });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    std::vector<std::size_t> orig = a.value().shape();
    return make_node(a.value().reshaped(std::move(shape)), {a.node()},
                     [orig](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{reshape(g, orig)};
                     });
}

Var concat_cols(const Var& a, const Var& b) {
    const std::size_t n = a.value().dim(0), p = a.value().dim(1), q = b.value().dim(1);
    if (b.value().dim(0) != n) throw std::invalid_argument("concat_cols: row mismatch");
    Tensor out({n, p + q});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) out.at2(i, j) = a.value().at2(i, j);
        for (std::size_t j = 0; j < q; ++j) out.at2(i, p + j) = b.value().at2(i, j);
    }
    return make_node(std::move(out), {a.node(), b.node()},
                     [p, q](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{slice_cols(g, 0, p), slice_cols(g, p, p + q)};
                     });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    const std::size_t n = a.value().dim(0), m = a.value().dim(1);
    if (c1 > m || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Tensor out({n, c1 - c0});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = c0; j < c1; ++j) out.at2(i, j - c0) = a.value().at2(i, j);
    return make_node(std::move(out), {a.node()},
                     [c0, m](const std::vector<Var>&, const Var&, const Var& g) {
                         // Zero-pad back to [n,m] with concat so the adjoint
                         // stays differentiable.
                         const std::size_t n2 = g.value().dim(0), w = g.value().dim(1);
                         Var res = g;
                         if (c0 > 0) res = concat_cols(constant(Tensor({n2, c0})), res);
                         if (c0 + w < m)
                             res = concat_cols(res, constant(Tensor({n2, m - c0 - w})));
                         return std::vector<Var>{res};
                     });
}

Var rowsum(const Var& a) {
    const std::size_t n = a.value().dim(0), m = a.value().dim(1);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += a.value().at2(i, j);
        out[i] = acc;
    }
    return make_node(std::move(out), {a.node()},
                     [m](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{broadcast_cols(g, m)};
                     });
}

Var colsum(const Var& a) {
    const std::size_t n = a.value().dim(0), m = a.value().dim(1);
    Tensor out({m});
    for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a.value().at2(i, j);
        out[j] = acc;
    }
    return make_node(std::move(out), {a.node()},
                     [n](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{broadcast_rows(g, n)};
                     });
}

Var sum_all(const Var& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
    std::vector<std::size_t> shape = a.value().shape();
    return make_node(Tensor::scalar(acc), {a.node()},
                     [shape](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{broadcast_full(g, shape)};
                     });
}

Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / double(a.value().numel()));
}

Var broadcast_cols(const Var& v, std::size_t m) {
    const std::size_t n = v.value().dim(0);
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at2(i, j) = v.value()[i];
    return make_node(std::move(out), {v.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{rowsum(g)};
                     });
}

Var broadcast_rows(const Var& v, std::size_t n) {
    const std::size_t m = v.value().dim(0);
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at2(i, j) = v.value()[j];
    return make_node(std::move(out), {v.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{colsum(g)};
                     });
}

Var broadcast_full(const Var& s, std::vector<std::size_t> shape) {
    Tensor out(shape, s.value()[0]);
    return make_node(std::move(out), {s.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{sum_all(g)};
                     });
}

Var add_rowvec(const Var& x, const Var& b) {
    const std::size_t n = x.value().dim(0), m = x.value().dim(1);
    if (b.value().numel() != m) throw std::invalid_argument("add_rowvec: size mismatch");
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at2(i, j) = x.value().at2(i, j) + b.value()[j];
    return make_node(std::move(out), {x.node(), b.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{g, colsum(g)};
                     });
}

Var expand_chan(const Var& v, const std::vector<std::size_t>& shape);

Var chan_sum(const Var& x) {
    const auto& s = x.value().shape();
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3];
    Tensor out({C});
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) acc += x.value().at4(n, c, h, w);
        out[c] = acc;
    }
    std::vector<std::size_t> shape = s;
    return make_node(std::move(out), {x.node()},
                     [shape](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{expand_chan(g, shape)};
                     });
}

// [C] broadcast over N,H,W; adjoint pair of chan_sum.
Var expand_chan(const Var& v, const std::vector<std::size_t>& shape) {
    const std::size_t N = shape[0], C = shape[1], H = shape[2], W = shape[3];
    Tensor out(shape);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) out.at4(n, c, h, w) = v.value()[c];
    return make_node(std::move(out), {v.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{chan_sum(g)};
                     });
}

Var add_chan_bias(const Var& x, const Var& b) {
    const auto& s = x.value().shape();
    if (b.value().numel() != s[1]) throw std::invalid_argument("add_chan_bias: size mismatch");
    Tensor out(s);
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3];
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    out.at4(n, c, h, w) = x.value().at4(n, c, h, w) + b.value()[c];
    return make_node(std::move(out), {x.node(), b.node()},
                     [](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{g, chan_sum(g)};
                     });
}

Var gather_rows(const Var& table, std::vector<int> idx) {
    const std::size_t k = table.value().dim(0), d = table.value().dim(1);
    Tensor out({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || std::size_t(idx[i]) >= k)
            throw std::out_of_range("gather_rows: index out of range");
        for (std::size_t j = 0; j < d; ++j) out.at2(i, j) = table.value().at2(idx[i], j);
    }
    return make_node(std::move(out), {table.node()},
                     [idx, k](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{scatter_rows(g, idx, k)};
                     });
}

Var scatter_rows(const Var& rows, std::vector<int> idx, std::size_t k) {
    const std::size_t d = rows.value().dim(1);
    Tensor out({k, d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) out.at2(idx[i], j) += rows.value().at2(i, j);
    return make_node(std::move(out), {rows.node()},
                     [idx](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{gather_rows(g, idx)};
                     });
}

// ---- convolution family ----
//
// With C(x,w) the forward convolution, Dx(g,w) its adjoint in x and Dw(x,g)
// its adjoint in w, the three ops close under differentiation:
//   d<u, C(x,w)>   : dx = Dx(u,w),  dw = Dw(x,u)
//   d<u, Dx(g,w)>  : dg = C(u,w),   dw = Dw(u,g)
//   d<u, Dw(x,g)>  : dx = Dx(g,u),  dg = C(x,u)

Var conv2d(const Var& x, const Var& w, const kernels::ConvGeom& g) {
    return make_node(kernels::conv_fwd(x.value(), w.value(), g), {x.node(), w.node()},
                     [g](const std::vector<Var>& in, const Var&, const Var& u) {
                         return std::vector<Var>{conv2d_dgrad(u, in[1], g),
                                                 conv2d_wgrad(in[0], u, g)};
                     });
}

Var conv2d_dgrad(const Var& gy, const Var& w, const kernels::ConvGeom& g) {
    return make_node(kernels::conv_dgrad(gy.value(), w.value(), g), {gy.node(), w.node()},
                     [g](const std::vector<Var>& in, const Var&, const Var& u) {
                         return std::vector<Var>{conv2d(u, in[1], g),
                                                 conv2d_wgrad(u, in[0], g)};
                     });
}

Var conv2d_wgrad(const Var& x, const Var& gy, const kernels::ConvGeom& g) {
    return make_node(kernels::conv_wgrad(x.value(), gy.value(), g), {x.node(), gy.node()},
                     [g](const std::vector<Var>& in, const Var&, const Var& u) {
                         return std::vector<Var>{conv2d_dgrad(in[1], u, g),
                                                 conv2d(in[0], u, g)};
                     });
}

// ---- classifier head ----

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.value().dim(0), k = logits.value().dim(1);
    if (labels.size() != n)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    Tensor soft({n, k});
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.value().at2(i, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.value().at2(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(logits.value().at2(i, j) - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < k; ++j)
            soft.at2(i, j) = std::exp(logits.value().at2(i, j) - lse);
        loss += lse - logits.value().at2(i, labels[i]);
    }
    loss /= double(n);

    Tensor dlogits({n, k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            dlogits.at2(i, j) =
                (soft.at2(i, j) - (labels[i] == int(j) ? 1.0 : 0.0)) / double(n);
    Var dl = constant(std::move(dlogits));
    std::vector<std::size_t> shape = logits.value().shape();
    return make_node(Tensor::scalar(loss), {logits.node()},
                     [dl, shape](const std::vector<Var>&, const Var&, const Var& g) {
                         return std::vector<Var>{mul(broadcast_full(g, shape), dl)};
                     });
}

}  // namespace capgan::ad
