// Compares the serial reference kernels against the OpenMP variants and
// verifies that the two backends produce bit-identical outputs.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "capgan/kernels.hpp"
#include "capgan/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using capgan::Tensor;
namespace k = capgan::kernels;

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist;
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

double time_of(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
           reps;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-12s serial %8.4f ms   parallel %8.4f ms   speedup %5.2fx   %s\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
                identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; parallel variants run serially\n");
#endif
    std::mt19937_64 rng(7);
    constexpr int reps = 5;

    {
        const Tensor a = random_tensor({256, 384}, rng);
        const Tensor b = random_tensor({384, 256}, rng);
        Tensor ys({256, 256}), yp({256, 256});
        const double ts = time_of([&] { k::serial::matmul(a, b, ys); }, reps);
        const double tp = time_of([&] { k::parallel::matmul(a, b, yp); }, reps);
        report("matmul", ts, tp, bit_identical(ys, yp));
    }

    const k::ConvGeom g{16, 32, 4, 2, 1, 32, 32};
    const Tensor x = random_tensor({8, g.in_channels, g.in_h, g.in_w}, rng);
    const Tensor w = random_tensor({g.out_channels, g.in_channels, g.kernel, g.kernel}, rng);
    const Tensor gy = random_tensor({8, g.out_channels, g.out_h(), g.out_w()}, rng);

    {
        Tensor ys({8, g.out_channels, g.out_h(), g.out_w()});
        Tensor yp = ys;
        const double ts = time_of([&] { k::serial::conv_fwd(x, w, ys, g); }, reps);
        const double tp = time_of([&] { k::parallel::conv_fwd(x, w, yp, g); }, reps);
        report("conv_fwd", ts, tp, bit_identical(ys, yp));
    }
    {
        Tensor ys({8, g.in_channels, g.in_h, g.in_w});
        Tensor yp = ys;
        const double ts = time_of([&] { k::serial::conv_dgrad(gy, w, ys, g); }, reps);
        const double tp = time_of([&] { k::parallel::conv_dgrad(gy, w, yp, g); }, reps);
        report("conv_dgrad", ts, tp, bit_identical(ys, yp));
    }
    {
        Tensor ys({g.out_channels, g.in_channels, g.kernel, g.kernel});
        Tensor yp = ys;
        const double ts = time_of([&] { k::serial::conv_wgrad(x, gy, ys, g); }, reps);
        const double tp = time_of([&] { k::parallel::conv_wgrad(x, gy, yp, g); }, reps);
        report("conv_wgrad", ts, tp, bit_identical(ys, yp));
    }
    return 0;
}
