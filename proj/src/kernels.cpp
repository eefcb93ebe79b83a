#include "capgan/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "capgan/tensor.hpp"

namespace capgan {

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace kernels {

namespace {
Backend g_backend = [] {
    if (const char* e = std::getenv("CAPGAN_BACKEND")) {
        if (std::strcmp(e, "serial") == 0) return Backend::Serial;
    }
    return Backend::Parallel;
}();

void check_matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " +
                                    Tensor::shape_str(a.shape()) + " x " +
                                    Tensor::shape_str(b.shape()));
}
}  // namespace

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

namespace serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
    check_matmul(a, b);
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * m + j];
            po[i * m + j] = acc;
        }
}

void conv_fwd(const Tensor& x, const Tensor& w, Tensor& y, const ConvGeom& g) {
    const std::size_t N = x.dim(0), Ho = g.out_h(), Wo = g.out_w();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < g.out_channels; ++f)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < g.in_channels; ++c)
                        for (std::size_t ki = 0; ki < g.kernel; ++ki)
                            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                                const long ih = long(oh * g.stride + ki) - long(g.pad);
                                const long iw = long(ow * g.stride + kj) - long(g.pad);
                                if (ih < 0 || iw < 0 || ih >= long(g.in_h) || iw >= long(g.in_w))
                                    continue;
                                acc += x.at4(n, c, ih, iw) * w.at4(f, c, ki, kj);
                            }
                    y.at4(n, f, oh, ow) = acc;
                }
}

void conv_dgrad(const Tensor& gy, const Tensor& w, Tensor& gx, const ConvGeom& g) {
    const std::size_t N = gy.dim(0), Ho = g.out_h(), Wo = g.out_w();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ih = 0; ih < g.in_h; ++ih)
                for (std::size_t iw = 0; iw < g.in_w; ++iw) {
                    double acc = 0.0;
                    for (std::size_t f = 0; f < g.out_channels; ++f)
                        for (std::size_t ki = 0; ki < g.kernel; ++ki)
                            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                                const long num_h = long(ih + g.pad) - long(ki);
                                const long num_w = long(iw + g.pad) - long(kj);
                                if (num_h < 0 || num_w < 0) continue;
                                if (num_h % long(g.stride) || num_w % long(g.stride)) continue;
                                const std::size_t oh = std::size_t(num_h) / g.stride;
                                const std::size_t ow = std::size_t(num_w) / g.stride;
                                if (oh >= Ho || ow >= Wo) continue;
                                acc += gy.at4(n, f, oh, ow) * w.at4(f, c, ki, kj);
                            }
                    gx.at4(n, c, ih, iw) = acc;
                }
}

void conv_wgrad(const Tensor& x, const Tensor& gy, Tensor& gw, const ConvGeom& g) {
    const std::size_t N = x.dim(0), Ho = g.out_h(), Wo = g.out_w();
    for (std::size_t f = 0; f < g.out_channels; ++f)
        for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ki = 0; ki < g.kernel; ++ki)
                for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t oh = 0; oh < Ho; ++oh)
                            for (std::size_t ow = 0; ow < Wo; ++ow) {
                                const long ih = long(oh * g.stride + ki) - long(g.pad);
                                const long iw = long(ow * g.stride + kj) - long(g.pad);
                                if (ih < 0 || iw < 0 || ih >= long(g.in_h) || iw >= long(g.in_w))
                                    continue;
                                acc += x.at4(n, c, ih, iw) * gy.at4(n, f, oh, ow);
                            }
                    gw.at4(f, c, ki, kj) = acc;
                }
}

}  // namespace serial

namespace parallel {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
    check_matmul(a, b);
    const long n = long(a.dim(0)), k = long(a.dim(1)), m = long(b.dim(1));
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < m; ++j) {
            double acc = 0.0;
            for (long t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * m + j];
            po[i * m + j] = acc;
        }
}

void conv_fwd(const Tensor& x, const Tensor& w, Tensor& y, const ConvGeom& g) {
    const long N = long(x.dim(0)), F = long(g.out_channels);
    const long Ho = long(g.out_h()), Wo = long(g.out_w());
#pragma omp parallel for collapse(2) schedule(static)
    for (long n = 0; n < N; ++n)
        for (long f = 0; f < F; ++f)
            for (long oh = 0; oh < Ho; ++oh)
                for (long ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < g.in_channels; ++c)
                        for (std::size_t ki = 0; ki < g.kernel; ++ki)
                            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                                const long ih = oh * long(g.stride) + long(ki) - long(g.pad);
                                const long iw = ow * long(g.stride) + long(kj) - long(g.pad);
                                if (ih < 0 || iw < 0 || ih >= long(g.in_h) || iw >= long(g.in_w))
                                    continue;
                                acc += x.at4(n, c, ih, iw) * w.at4(f, c, ki, kj);
                            }
                    y.at4(n, f, oh, ow) = acc;
                }
}

void conv_dgrad(const Tensor& gy, const Tensor& w, Tensor& gx, const ConvGeom& g) {
    const long N = long(gy.dim(0)), C = long(g.in_channels);
    const long H = long(g.in_h), W = long(g.in_w);
    const long Ho = long(g.out_h()), Wo = long(g.out_w());
#pragma omp parallel for collapse(2) schedule(static)
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c)
            for (long ih = 0; ih < H; ++ih)
                for (long iw = 0; iw < W; ++iw) {
                    double acc = 0.0;
                    for (std::size_t f = 0; f < g.out_channels; ++f)
                        for (std::size_t ki = 0; ki < g.kernel; ++ki)
                            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                                const long num_h = ih + long(g.pad) - long(ki);
                                const long num_w = iw + long(g.pad) - long(kj);
                                if (num_h < 0 || num_w < 0) continue;
                                if (num_h % long(g.stride) || num_w % long(g.stride)) continue;
                                const long oh = num_h / long(g.stride);
                                const long ow = num_w / long(g.stride);
                                if (oh >= Ho || ow >= Wo) continue;
                                acc += gy.at4(n, f, oh, ow) * w.at4(f, c, ki, kj);
                            }
                    gx.at4(n, c, ih, iw) = acc;
                }
}

void conv_wgrad(const Tensor& x, const Tensor& gy, Tensor& gw, const ConvGeom& g) {
    const long F = long(g.out_channels), C = long(g.in_channels);
    const long K = long(g.kernel);
    const std::size_t N = x.dim(0), Ho = g.out_h(), Wo = g.out_w();
#pragma omp parallel for collapse(2) schedule(static)
    for (long f = 0; f < F; ++f)
        for (long c = 0; c < C; ++c)
            for (long ki = 0; ki < K; ++ki)
                for (long kj = 0; kj < K; ++kj) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t oh = 0; oh < Ho; ++oh)
                            for (std::size_t ow = 0; ow < Wo; ++ow) {
                                const long ih = long(oh * g.stride) + ki - long(g.pad);
                                const long iw = long(ow * g.stride) + kj - long(g.pad);
                                if (ih < 0 || iw < 0 || ih >= long(g.in_h) || iw >= long(g.in_w))
                                    continue;
                                acc += x.at4(n, c, ih, iw) * gy.at4(n, f, oh, ow);
                            }
                    gw.at4(f, c, ki, kj) = acc;
                }
}

}  // namespace parallel

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out({a.dim(0), b.dim(1)});
    if (g_backend == Backend::Serial)
        serial::matmul(a, b, out);
    else
        parallel::matmul(a, b, out);
    return out;
}

Tensor conv_fwd(const Tensor& x, const Tensor& w, const ConvGeom& g) {
    Tensor y({x.dim(0), g.out_channels, g.out_h(), g.out_w()});
    if (g_backend == Backend::Serial)
        serial::conv_fwd(x, w, y, g);
    else
        parallel::conv_fwd(x, w, y, g);
    return y;
}

Tensor conv_dgrad(const Tensor& gy, const Tensor& w, const ConvGeom& g) {
    Tensor gx({gy.dim(0), g.in_channels, g.in_h, g.in_w});
    if (g_backend == Backend::Serial)
        serial::conv_dgrad(gy, w, gx, g);
    else
        parallel::conv_dgrad(gy, w, gx, g);
    return gx;
}

Tensor conv_wgrad(const Tensor& x, const Tensor& gy, const ConvGeom& g) {
    Tensor gw({g.out_channels, g.in_channels, g.kernel, g.kernel});
    if (g_backend == Backend::Serial)
        serial::conv_wgrad(x, gy, gw, g);
    else
        parallel::conv_wgrad(x, gy, gw, g);
    return gw;
}

}  // namespace kernels
}  // namespace capgan
