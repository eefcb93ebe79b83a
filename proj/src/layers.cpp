#include "capgan/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace capgan::nn {

void load_params(const NamedArrayArchive& arc, const ParamList& params) {
    for (const auto& p : params) {
        if (!arc.has(p.name))
            throw std::runtime_error("weight transfer: archive missing '" + p.name + "'");
        const Tensor& src = arc.get(p.name);
        if (!src.same_shape(p.var.value()))
            throw std::runtime_error("weight transfer: shape mismatch at '" + p.name +
                                     "': archive " + Tensor::shape_str(src.shape()) +
                                     " vs model " +
                                     Tensor::shape_str(p.var.value().shape()));
        const_cast<ad::Var&>(p.var).mutable_value() = src;
    }
}

void save_params(NamedArrayArchive& arc, const ParamList& params) {
    for (const auto& p : params) arc.put(p.name, p.var.value());
}

Dense Dense::init(std::size_t in, std::size_t out, Rng& rng) {
    const double std = std::sqrt(2.0 / double(in));
    Dense d;
    d.W = ad::leaf(rng.normal_tensor({in, out}, 0.0, std));
    d.b = ad::leaf(Tensor({out}));
    return d;
}

ad::Var Dense::forward(const ad::Var& x) const {
    return ad::add_rowvec(ad::matmul(x, W), b);
}

ParamList Dense::params(const std::string& prefix) const {
    return {{prefix + ".W", W}, {prefix + ".b", b}};
}

Conv2d Conv2d::init(const kernels::ConvGeom& g, Rng& rng) {
    const double fan_in = double(g.in_channels * g.kernel * g.kernel);
    const double std = std::sqrt(2.0 / fan_in);
    Conv2d c;
    c.geom = g;
    c.W = ad::leaf(rng.normal_tensor({g.out_channels, g.in_channels, g.kernel, g.kernel},
                                     0.0, std));
    c.b = ad::leaf(Tensor({g.out_channels}));
    return c;
}

ad::Var Conv2d::forward(const ad::Var& x) const {
    return ad::add_chan_bias(ad::conv2d(x, W, geom), b);
}

ParamList Conv2d::params(const std::string& prefix) const {
    return {{prefix + ".W", W}, {prefix + ".b", b}};
}

ConvTranspose2d ConvTranspose2d::init(const kernels::ConvGeom& g, Rng& rng) {
    const double fan_in = double(g.out_channels * g.kernel * g.kernel);
    const double std = std::sqrt(2.0 / fan_in);
    ConvTranspose2d c;
    c.geom = g;
    c.W = ad::leaf(rng.normal_tensor({g.out_channels, g.in_channels, g.kernel, g.kernel},
                                     0.0, std));
    c.b = ad::leaf(Tensor({g.in_channels}));
    return c;
}

ad::Var ConvTranspose2d::forward(const ad::Var& x) const {
    return ad::add_chan_bias(ad::conv2d_dgrad(x, W, geom), b);
}

ParamList ConvTranspose2d::params(const std::string& prefix) const {
    return {{prefix + ".W", W}, {prefix + ".b", b}};
}

Embedding Embedding::init(std::size_t num_classes, std::size_t dim, Rng& rng) {
    Embedding e;
    // Centered near 1 so the multiplicative label modulation starts close to
    // the identity.
    e.table = ad::leaf(rng.normal_tensor({num_classes, dim}, 1.0, 0.1));
    return e;
}

ad::Var Embedding::forward(const std::vector<int>& ids) const {
    return ad::gather_rows(table, ids);
}

ParamList Embedding::params(const std::string& prefix) const {
    return {{prefix + ".table", table}};
}

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(Tensor::zeros_like(p.var.value()));
        v_.emplace_back(Tensor::zeros_like(p.var.value()));
    }
}

void Adam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size())
        throw std::invalid_argument("Adam: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& w = params_[i].var.mutable_value();
        const Tensor& g = grads[i];
        if (!g.same_shape(w)) throw std::invalid_argument("Adam: gradient shape mismatch");
        for (std::size_t j = 0; j < w.numel(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::save_state(NamedArrayArchive& arc, const std::string& prefix) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        arc.put(prefix + ".m." + params_[i].name, m_[i]);
        arc.put(prefix + ".v." + params_[i].name, v_[i]);
    }
    arc.put_ints(prefix + ".t", {t_});
}

void Adam::load_state(const NamedArrayArchive& arc, const std::string& prefix) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i] = arc.get(prefix + ".m." + params_[i].name);
        v_[i] = arc.get(prefix + ".v." + params_[i].name);
    }
    t_ = arc.get_ints(prefix + ".t").at(0);
}

}  // namespace capgan::nn
