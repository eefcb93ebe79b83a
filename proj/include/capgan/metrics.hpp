#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "capgan/data.hpp"
#include "capgan/models.hpp"

namespace capgan::metrics {

// Deterministic image -> feature map.
struct FeatureEmbedder {
    std::string kind;  // "pixel" or "classifier"
    std::size_t embedding_dim = 0;
    std::function<Tensor(const data::ImageBatch&)> embed;  // -> [N, embedding_dim]
};

FeatureEmbedder pixel_embedder(std::size_t h, std::size_t w, std::size_t c);

struct GaussianStats {
    Tensor mean;  // [D]
    Tensor cov;   // [D,D], symmetric PSD
};

Tensor embed(const FeatureEmbedder& embedder, const data::ImageBatch& batch);

// Sample mean and unbiased sample covariance; requires N >= 2.
GaussianStats fit_gaussian(const Tensor& features);

// Symmetric-eigendecomposition square root; negative eigenvalues below a
// small tolerance are clipped to zero.
Tensor matrix_sqrt_psd(const Tensor& m);

// d^2 = |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), clipped at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Mean SSIM over 8x8 sliding windows (global statistics for smaller images),
// averaged over channels. Inputs are single images shaped [H,W,C].
double ssim(const Tensor& a, const Tensor& b, double dynamic_range);

struct TTestResult {
    double t = 0;
    double p = 1;
    std::size_t df = 0;
    bool degenerate = false;  // zero-variance differences
};

// Two-tailed paired Student's t-test.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

enum class SsimPairing { Random, Identity };

struct EvalOptions {
    std::size_t samples_per_class = 1000;
    std::uint64_t seed = 0;
    SsimPairing pairing = SsimPairing::Random;
    std::size_t ssim_pairs = 1000;
    int majority_class = 0;
};

struct ClassRow {
    int class_id = 0;
    double fid = 0;
    double ssim = 0;
};

struct MetricReport {
    std::vector<ClassRow> per_class;
    double minority_avg_fid = 0, minority_avg_ssim = 0;
    double majority_fid = 0, majority_ssim = 0;
    int majority_class = 0;

    void write_csv(const std::filesystem::path& path) const;
    void write_json(const std::filesystem::path& path) const;
    static MetricReport read_json(const std::filesystem::path& path);
};

// Class-conditional sampler abstraction so an oracle "generator" replaying
// held-out data can be evaluated with the same protocol.
using ClassSampler =
    std::function<data::ImageBatch(int class_id, std::size_t n, std::uint64_t seed)>;

MetricReport evaluate(const ClassSampler& sampler, const data::ImageBatch& test_batch,
                      const FeatureEmbedder& embedder, const EvalOptions& options);

MetricReport evaluate(const models::Generator& gen, const data::ImageBatch& test_batch,
                      const FeatureEmbedder& embedder, const EvalOptions& options);

struct OracleConfig {
    int epochs = 10;
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    std::size_t base_filters = 8;
    std::size_t depth = 3;
};

// Small convolutional classifier used both as FID embedder (penultimate
// activations) and as the class oracle for generated samples.
class OracleClassifier {
public:
    OracleClassifier(models::ModelConfig cfg, std::uint64_t seed);

    std::vector<int> classify(const data::ImageBatch& batch) const;
    double accuracy(const data::ImageBatch& batch) const;
    FeatureEmbedder embedder() const;

    double train_accuracy = 0;
    double test_accuracy = 0;

    models::ModelConfig cfg;
    models::ConvTrunk trunk;
    nn::Dense head;
    nn::ParamList params() const;
};

OracleClassifier train_oracle_classifier(const data::ImageBatch& train_batch,
                                         const data::ImageBatch& test_batch,
                                         const OracleConfig& config);

}  // namespace capgan::metrics
