#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "capgan/tensor.hpp"

namespace capgan {

// Seeded random stream. All stochastic choices in the library draw from one of
// these so that a run is a pure function of its seeds on a given platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    Tensor normal_tensor(std::vector<std::size_t> shape, double mean = 0.0, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, stddev);
        return t;
    }

    Tensor uniform_tensor(std::vector<std::size_t> shape, double lo = 0.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

private:
    std::mt19937_64 engine_;
};

// Stable sub-seed derivation: FNV-1a over the stage name folded into the
// master seed. Deterministic across platforms and standard-library versions.
std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& stage);

}  // namespace capgan
