#pragma once

#include <string>
#include <vector>

#include "capgan/archive.hpp"
#include "capgan/autodiff.hpp"
#include "capgan/rng.hpp"

namespace capgan::nn {

struct ParamRef {
    std::string name;
    ad::Var var;
};
using ParamList = std::vector<ParamRef>;

// Copy archive arrays into the given leaves. Throws on a missing name or a
// shape mismatch, naming the first offending parameter.
void load_params(const NamedArrayArchive& arc, const ParamList& params);
void save_params(NamedArrayArchive& arc, const ParamList& params);

struct Dense {
    ad::Var W;  // [in, out]
    ad::Var b;  // [out]

    static Dense init(std::size_t in, std::size_t out, Rng& rng);
    ad::Var forward(const ad::Var& x) const;  // [N,in] -> [N,out]
    ParamList params(const std::string& prefix) const;
};

struct Conv2d {
    ad::Var W;  // [F, C, k, k]
    ad::Var b;  // [F]
    kernels::ConvGeom geom;

    static Conv2d init(const kernels::ConvGeom& g, Rng& rng);
    ad::Var forward(const ad::Var& x) const;  // [N,C,H,W] -> [N,F,Ho,Wo]
    ParamList params(const std::string& prefix) const;
};

// Transposed convolution; `geom` describes the virtual forward convolution
// running in the opposite direction, so W is [in_of_virtual=out_channels_here,
// ...] exactly as a Conv2d with swapped roles would store it.
struct ConvTranspose2d {
    ad::Var W;  // [geom.out_channels = input channels here, geom.in_channels, k, k]
    ad::Var b;  // [geom.in_channels = output channels here]
    kernels::ConvGeom geom;

    static ConvTranspose2d init(const kernels::ConvGeom& g, Rng& rng);
    ad::Var forward(const ad::Var& x) const;  // [N,F,Ho,Wo] -> [N,C,H,W]
    ParamList params(const std::string& prefix) const;
};

struct Embedding {
    ad::Var table;  // [num_classes, dim]

    static Embedding init(std::size_t num_classes, std::size_t dim, Rng& rng);
    ad::Var forward(const std::vector<int>& ids) const;  // -> [n, dim]
    ParamList params(const std::string& prefix) const;
};

// Adam with configurable first-moment coefficient.
class Adam {
public:
    Adam(ParamList params, double lr, double beta1, double beta2 = 0.999,
         double eps = 1e-8);

    // grads must align with the constructor's param order.
    void step(const std::vector<Tensor>& grads);

    std::int64_t step_count() const { return t_; }

    void save_state(NamedArrayArchive& arc, const std::string& prefix) const;
    void load_state(const NamedArrayArchive& arc, const std::string& prefix);

private:
    ParamList params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

}  // namespace capgan::nn
