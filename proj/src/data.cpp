#include "capgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "capgan/archive.hpp"
#include "capgan/rng.hpp"

namespace capgan::data {

namespace {

std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

ImageBatch gather(const ImageBatch& batch, const std::vector<std::size_t>& idx) {
    const std::size_t H = batch.height(), W = batch.width(), C = batch.channels();
    const std::size_t px = H * W * C;
    ImageBatch out;
    out.num_classes = batch.num_classes;
    out.pixels = Tensor({idx.size(), H, W, C});
    out.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(batch.pixels.data() + idx[i] * px, px, out.pixels.data() + i * px);
        out.labels.push_back(batch.labels[idx[i]]);
    }
    return out;
}

std::vector<std::vector<std::size_t>> indices_by_class(const ImageBatch& batch) {
    std::vector<std::vector<std::size_t>> by_class(batch.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) by_class[batch.labels[i]].push_back(i);
    return by_class;
}

}  // namespace

void ImageBatch::validate() const {
    if (pixels.ndim() != 4)
        throw std::invalid_argument("ImageBatch: pixels must be 4-D");
    if (pixels.dim(0) != labels.size())
        throw std::invalid_argument("ImageBatch: pixel/label count mismatch");
    if (num_classes <= 0) throw std::invalid_argument("ImageBatch: num_classes must be > 0");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("ImageBatch: label out of range");
    for (std::size_t i = 0; i < pixels.numel(); ++i)
        if (pixels[i] < 0.0 || pixels[i] > 1.0)
            throw std::invalid_argument("ImageBatch: pixel outside [0,1]");
}

DatasetManifest manifest_of(const ImageBatch& batch, const std::string& name) {
    DatasetManifest m;
    m.name = name;
    m.height = batch.height();
    m.width = batch.width();
    m.channels = batch.channels();
    m.num_classes = batch.num_classes;
    m.per_class_counts = class_histogram(batch);
    return m;
}

ImageBatch load_idx(const std::filesystem::path& image_path,
                    const std::filesystem::path& label_path) {
    std::ifstream imgs(image_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("load_idx: cannot open " + image_path.string());
    std::ifstream labs(label_path, std::ios::binary);
    if (!labs) throw std::runtime_error("load_idx: cannot open " + label_path.string());

    const std::uint32_t img_magic = read_be32(imgs);
    if (img_magic != 0x00000803u)
        throw std::runtime_error("load_idx: bad image magic number in " +
                                 image_path.string());
    const std::uint32_t lab_magic = read_be32(labs);
    if (lab_magic != 0x00000801u)
        throw std::runtime_error("load_idx: bad label magic number in " +
                                 label_path.string());

    const std::uint32_t n_img = read_be32(imgs);
    const std::uint32_t h = read_be32(imgs);
    const std::uint32_t w = read_be32(imgs);
    const std::uint32_t n_lab = read_be32(labs);
    if (n_img != n_lab)
        throw std::runtime_error("load_idx: image/label count mismatch (" +
                                 std::to_string(n_img) + " vs " + std::to_string(n_lab) +
                                 ")");

    std::vector<unsigned char> raw(std::size_t(n_img) * h * w);
    imgs.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!imgs) throw std::runtime_error("load_idx: truncated image data");
    std::vector<unsigned char> lab_raw(n_lab);
    labs.read(reinterpret_cast<char*>(lab_raw.data()), std::streamsize(lab_raw.size()));
    if (!labs) throw std::runtime_error("load_idx: truncated label data");

    ImageBatch batch;
    batch.pixels = Tensor({n_img, h, w, 1});
    for (std::size_t i = 0; i < raw.size(); ++i) batch.pixels[i] = raw[i] / 255.0;
    batch.labels.assign(lab_raw.begin(), lab_raw.end());
    batch.num_classes = 10;
    return batch;
}

ImageBatch load_cifar10(const std::vector<std::filesystem::path>& batch_files) {
    constexpr std::size_t kRecord = 3073;  // 1 label + 3*32*32 channel-planar pixels
    std::vector<unsigned char> raw;
    for (const auto& path : batch_files) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw std::runtime_error("load_cifar10: cannot open " + path.string());
        const std::size_t len = std::size_t(in.tellg());
        if (len % kRecord != 0)
            throw std::runtime_error("load_cifar10: file length of " + path.string() +
                                     " is not a multiple of 3073 bytes");
        in.seekg(0);
        const std::size_t off = raw.size();
        raw.resize(off + len);
        in.read(reinterpret_cast<char*>(raw.data() + off), std::streamsize(len));
    }
    const std::size_t n = raw.size() / kRecord;
    ImageBatch batch;
    batch.pixels = Tensor({n, 32, 32, 3});
    batch.labels.resize(n);
    batch.num_classes = 10;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = raw.data() + i * kRecord;
        if (rec[0] > 9)
            throw std::runtime_error("load_cifar10: label byte " +
                                     std::to_string(int(rec[0])) + " out of range");
        batch.labels[i] = rec[0];
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t h = 0; h < 32; ++h)
                for (std::size_t w = 0; w < 32; ++w)
                    batch.pixels.at4(i, h, w, c) = rec[1 + (c * 32 + h) * 32 + w] / 255.0;
    }
    return batch;
}

ImageBatch resize(const ImageBatch& batch, std::size_t new_h, std::size_t new_w) {
    if (new_h < 1 || new_w < 1) throw std::invalid_argument("resize: target size must be >= 1");
    const std::size_t N = batch.size(), H = batch.height(), W = batch.width(),
                      C = batch.channels();
    if (new_h == H && new_w == W) return batch;

    ImageBatch out;
    out.num_classes = batch.num_classes;
    out.labels = batch.labels;
    out.pixels = Tensor({N, new_h, new_w, C});
    const double sy = double(H) / double(new_h);
    const double sx = double(W) / double(new_w);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t y = 0; y < new_h; ++y)
            for (std::size_t x = 0; x < new_w; ++x) {
                // Pixel-center aligned bilinear sampling, edge clamped.
                const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(H - 1));
                const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(W - 1));
                const std::size_t y0 = std::size_t(fy);
                const std::size_t x0 = std::size_t(fx);
                const std::size_t y1 = std::min(y0 + 1, H - 1);
                const std::size_t x1 = std::min(x0 + 1, W - 1);
                const double wy = fy - double(y0), wx = fx - double(x0);
                for (std::size_t c = 0; c < C; ++c) {
                    const double v =
                        (1 - wy) * ((1 - wx) * batch.pixels.at4(n, y0, x0, c) +
                                    wx * batch.pixels.at4(n, y0, x1, c)) +
                        wy * ((1 - wx) * batch.pixels.at4(n, y1, x0, c) +
                              wx * batch.pixels.at4(n, y1, x1, c));
                    out.pixels.at4(n, y, x, c) = std::clamp(v, 0.0, 1.0);
                }
            }
    return out;
}

ImageBatch impose_imbalance(const ImageBatch& batch, const ImbalancePlan& plan) {
    if (plan.rate < 1.0) throw std::invalid_argument("impose_imbalance: rate must be >= 1");
    if (plan.majority_class < 0 || plan.majority_class >= batch.num_classes)
        throw std::invalid_argument("impose_imbalance: invalid majority class");
    auto by_class = indices_by_class(batch);
    const std::size_t majority_count = by_class[plan.majority_class].size();
    const std::size_t target = std::size_t(std::floor(double(majority_count) / plan.rate));
    if (target < 1)
        throw std::invalid_argument("impose_imbalance: minority target is zero");
    for (int c = 0; c < batch.num_classes; ++c)
        if (c != plan.majority_class && by_class[c].size() < target)
            throw std::invalid_argument(
                "impose_imbalance: class " + std::to_string(c) +
                " has fewer samples than the minority target");

    Rng rng(plan.seed);
    std::vector<std::size_t> keep;
    for (int c = 0; c < batch.num_classes; ++c) {
        auto& idx = by_class[c];
        if (c != plan.majority_class) {
            std::shuffle(idx.begin(), idx.end(), rng.engine());
            idx.resize(target);
        }
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::shuffle(keep.begin(), keep.end(), rng.engine());
    return gather(batch, keep);
}

ImageBatch random_oversample(const ImageBatch& batch, std::uint64_t seed) {
    auto by_class = indices_by_class(batch);
    std::size_t max_count = 0;
    for (const auto& idx : by_class) {
        if (idx.empty())
            throw std::invalid_argument("random_oversample: empty class");
        max_count = std::max(max_count, idx.size());
    }
    Rng rng(seed);
    std::vector<std::size_t> keep;
    for (const auto& idx : by_class) {
        // Every original appears at least once; the remainder is drawn with
        // replacement.
        keep.insert(keep.end(), idx.begin(), idx.end());
        for (std::size_t i = idx.size(); i < max_count; ++i)
            keep.push_back(idx[rng.index(idx.size())]);
    }
    std::shuffle(keep.begin(), keep.end(), rng.engine());
    return gather(batch, keep);
}

std::vector<std::size_t> class_histogram(const ImageBatch& batch) {
    std::vector<std::size_t> counts(batch.num_classes, 0);
    for (int y : batch.labels) ++counts[y];
    return counts;
}

std::pair<ImageBatch, ImageBatch> stratified_split(const ImageBatch& batch,
                                                   double test_fraction,
                                                   std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("stratified_split: fraction must be in (0,1)");
    auto by_class = indices_by_class(batch);
    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        const std::size_t n_test = std::size_t(std::round(idx.size() * test_fraction));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_test ? test_idx : train_idx).push_back(idx[i]);
    }
    std::shuffle(train_idx.begin(), train_idx.end(), rng.engine());
    std::shuffle(test_idx.begin(), test_idx.end(), rng.engine());
    return {gather(batch, train_idx), gather(batch, test_idx)};
}

ImageBatch select_class(const ImageBatch& batch, int class_id) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch.labels[i] == class_id) idx.push_back(i);
    return gather(batch, idx);
}

void save_batch(const ImageBatch& batch, const std::filesystem::path& path,
                const std::string& name) {
    NamedArrayArchive arc;
    arc.put("pixels", batch.pixels);
    arc.put_ints("labels", std::vector<std::int64_t>(batch.labels.begin(),
                                                     batch.labels.end()));
    arc.set_meta("num_classes", batch.num_classes);
    arc.set_meta("name", name);
    arc.save(path);

    const DatasetManifest m = manifest_of(batch, name);
    nlohmann::json side;
    side["name"] = m.name;
    side["resolution"] = {m.height, m.width};
    side["channels"] = m.channels;
    side["num_classes"] = m.num_classes;
    side["per_class_counts"] = m.per_class_counts;
    std::ofstream out(path.string() + ".json");
    out << side.dump(2) << "\n";
}

ImageBatch load_batch(const std::filesystem::path& path) {
    NamedArrayArchive arc = NamedArrayArchive::load(path);
    ImageBatch batch;
    batch.pixels = arc.get("pixels");
    const auto& labels = arc.get_ints("labels");
    batch.labels.assign(labels.begin(), labels.end());
    batch.num_classes = arc.meta("num_classes").get<int>();
    return batch;
}

Tensor to_nchw(const Tensor& nhwc) {
    const std::size_t N = nhwc.dim(0), H = nhwc.dim(1), W = nhwc.dim(2), C = nhwc.dim(3);
    Tensor out({N, C, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
                for (std::size_t c = 0; c < C; ++c)
                    out.at4(n, c, h, w) = nhwc.at4(n, h, w, c);
    return out;
}

Tensor to_nhwc(const Tensor& nchw) {
    const std::size_t N = nchw.dim(0), C = nchw.dim(1), H = nchw.dim(2), W = nchw.dim(3);
    Tensor out({N, H, W, C});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    out.at4(n, h, w, c) = nchw.at4(n, c, h, w);
    return out;
}

ImageBatch make_synthetic(int num_classes, std::size_t per_class, std::size_t hw,
                          std::size_t channels, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = std::size_t(num_classes) * per_class;
    ImageBatch batch;
    batch.num_classes = num_classes;
    batch.pixels = Tensor({n, hw, hw, channels});
    batch.labels.resize(n);
    const int grid = std::max(1, int(std::ceil(std::sqrt(double(num_classes)))));
    std::size_t i = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
        // Class signature: a bright block in a class-specific grid cell.
        const std::size_t cell = hw / std::size_t(grid);
        const std::size_t gy = std::size_t(cls / grid) % std::size_t(grid);
        const std::size_t gx = std::size_t(cls % grid);
        for (std::size_t k = 0; k < per_class; ++k, ++i) {
            batch.labels[i] = cls;
            for (std::size_t y = 0; y < hw; ++y)
                for (std::size_t x = 0; x < hw; ++x) {
                    const bool inside = y >= gy * cell && y < (gy + 1) * cell &&
                                        x >= gx * cell && x < (gx + 1) * cell;
                    for (std::size_t c = 0; c < channels; ++c) {
                        const double base = inside ? 0.85 : 0.1;
                        batch.pixels.at4(i, y, x, c) =
                            std::clamp(base + rng.normal(0.0, 0.05), 0.0, 1.0);
                    }
                }
        }
    }
    return batch;
}

}  // namespace capgan::data
