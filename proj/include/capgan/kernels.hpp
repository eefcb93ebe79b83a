#pragma once

#include <cstddef>

#include "capgan/tensor.hpp"

namespace capgan::kernels {

// Geometry of a forward convolution mapping [N,C,H,W] -> [N,F,Ho,Wo].
// The transposed-convolution layer reuses conv_dgrad with the roles of the
// two spatial shapes swapped, so every conv-family layer is described by the
// geometry of its "virtual" forward convolution.
struct ConvGeom {
    std::size_t in_channels = 0;   // C
    std::size_t out_channels = 0;  // F
    std::size_t kernel = 0;        // square kernel k x k
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t in_h = 0, in_w = 0;

    std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

enum class Backend { Serial, Parallel };

// Process-wide kernel backend. Defaults to Parallel; the CAPGAN_BACKEND
// environment variable ("serial"/"parallel") overrides at startup.
Backend backend();
void set_backend(Backend b);

// Every kernel computes each output element with a serial inner accumulation,
// so the parallel variants are bit-identical to the serial references for any
// thread count.

namespace serial {
void matmul(const Tensor& a, const Tensor& b, Tensor& out);                 // [n,k]x[k,m]
void conv_fwd(const Tensor& x, const Tensor& w, Tensor& y, const ConvGeom& g);
void conv_dgrad(const Tensor& gy, const Tensor& w, Tensor& gx, const ConvGeom& g);
void conv_wgrad(const Tensor& x, const Tensor& gy, Tensor& gw, const ConvGeom& g);
}  // namespace serial

namespace parallel {
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
void conv_fwd(const Tensor& x, const Tensor& w, Tensor& y, const ConvGeom& g);
void conv_dgrad(const Tensor& gy, const Tensor& w, Tensor& gx, const ConvGeom& g);
void conv_wgrad(const Tensor& x, const Tensor& gy, Tensor& gw, const ConvGeom& g);
}  // namespace parallel

// Dispatch through the active backend.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv_fwd(const Tensor& x, const Tensor& w, const ConvGeom& g);
Tensor conv_dgrad(const Tensor& gy, const Tensor& w, const ConvGeom& g);
Tensor conv_wgrad(const Tensor& x, const Tensor& gy, const ConvGeom& g);

}  // namespace capgan::kernels
