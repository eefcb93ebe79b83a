#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capgan/tensor.hpp"

namespace capgan::data {

// Labeled image set; pixels are [N,H,W,C] in [0,1].
struct ImageBatch {
    Tensor pixels;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }
    std::size_t channels() const { return pixels.dim(3); }

    void validate() const;  // throws on any broken invariant
};

struct DatasetManifest {
    std::string name;
    std::size_t height = 0, width = 0, channels = 0;
    int num_classes = 0;
    std::vector<std::size_t> per_class_counts;
};

struct ImbalancePlan {
    int majority_class = 0;
    double rate = 1.0;  // >= 1
    std::uint64_t seed = 0;
};

DatasetManifest manifest_of(const ImageBatch& batch, const std::string& name);

// --- loaders ---
ImageBatch load_idx(const std::filesystem::path& image_path,
                    const std::filesystem::path& label_path);
ImageBatch load_cifar10(const std::vector<std::filesystem::path>& batch_files);
// One subdirectory per class; class ids in lexicographic directory order.
// Undecodable files are skipped with a warning on stderr.
ImageBatch load_image_dir(const std::filesystem::path& root, std::size_t channels = 3);

// --- transforms ---
ImageBatch resize(const ImageBatch& batch, std::size_t new_h, std::size_t new_w);
ImageBatch impose_imbalance(const ImageBatch& batch, const ImbalancePlan& plan);
ImageBatch random_oversample(const ImageBatch& batch, std::uint64_t seed);
std::vector<std::size_t> class_histogram(const ImageBatch& batch);

// Seeded stratified split; returns {train, test}.
std::pair<ImageBatch, ImageBatch> stratified_split(const ImageBatch& batch,
                                                   double test_fraction,
                                                   std::uint64_t seed);

ImageBatch select_class(const ImageBatch& batch, int class_id);

// --- persistence (flat named-array archive + JSON sidecar manifest) ---
void save_batch(const ImageBatch& batch, const std::filesystem::path& path,
                const std::string& name);
ImageBatch load_batch(const std::filesystem::path& path);

// --- layout conversion for the model stack ---
Tensor to_nchw(const Tensor& nhwc);
Tensor to_nhwc(const Tensor& nchw);

// PNG sample grid (row-major fill). Throws when fewer images than cells.
void render_grid(const ImageBatch& batch, std::size_t rows, std::size_t cols,
                 const std::filesystem::path& path);

// Synthetic multi-class dataset for desk-scale experiments and tests: each
// class is a distinct bright rectangle pattern plus seeded pixel noise.
ImageBatch make_synthetic(int num_classes, std::size_t per_class, std::size_t hw,
                          std::size_t channels, std::uint64_t seed);

}  // namespace capgan::data
