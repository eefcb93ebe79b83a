// OpenCV-backed image decoding and PNG grid rendering, isolated in one
// translation unit.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "capgan/data.hpp"

namespace fs = std::filesystem;

namespace capgan::data {

ImageBatch load_image_dir(const fs::path& root, std::size_t channels) {
    if (!fs::is_directory(root))
        throw std::runtime_error("load_image_dir: not a directory: " + root.string());
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("load_image_dir: channels must be 1 or 3");

    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw std::runtime_error("load_image_dir: no class subdirectories in " +
                                 root.string());

    std::vector<cv::Mat> images;
    std::vector<int> labels;
    std::size_t h = 0, w = 0;
    for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[cls]))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            std::cerr << "warning: empty class directory " << class_dirs[cls] << "\n";
        for (const auto& f : files) {
            cv::Mat img = cv::imread(f.string(), channels == 1 ? cv::IMREAD_GRAYSCALE
                                                               : cv::IMREAD_COLOR);
            if (img.empty()) {
                std::cerr << "warning: skipping undecodable file " << f << "\n";
                continue;
            }
            if (h == 0) {
                h = std::size_t(img.rows);
                w = std::size_t(img.cols);
            } else if (std::size_t(img.rows) != h || std::size_t(img.cols) != w) {
                cv::resize(img, img, cv::Size(int(w), int(h)), 0, 0, cv::INTER_LINEAR);
            }
            images.push_back(img);
            labels.push_back(int(cls));
        }
    }
    if (images.empty())
        throw std::runtime_error("load_image_dir: no decodable images under " +
                                 root.string());

    ImageBatch batch;
    batch.num_classes = int(class_dirs.size());
    batch.labels = std::move(labels);
    batch.pixels = Tensor({images.size(), h, w, channels});
    for (std::size_t i = 0; i < images.size(); ++i) {
        const cv::Mat& img = images[i];
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    const unsigned char v =
                        channels == 1 ? img.at<unsigned char>(int(y), int(x))
                                      // OpenCV loads BGR; emit RGB.
                                      : img.at<cv::Vec3b>(int(y), int(x))[2 - int(c)];
                    batch.pixels.at4(i, y, x, c) = v / 255.0;
                }
    }
    return batch;
}

void render_grid(const ImageBatch& batch, std::size_t rows, std::size_t cols,
                 const fs::path& path) {
    if (batch.size() < rows * cols)
        throw std::invalid_argument("render_grid: fewer images than grid cells");
    const std::size_t h = batch.height(), w = batch.width(), ch = batch.channels();
    const int type = ch == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat canvas(int(rows * h), int(cols * w), type, cv::Scalar::all(0));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const int cy = int(r * h + y), cx = int(c * w + x);
                    if (ch == 1) {
                        canvas.at<unsigned char>(cy, cx) = static_cast<unsigned char>(
                            std::clamp(batch.pixels.at4(i, y, x, 0), 0.0, 1.0) * 255.0 +
                            0.5);
                    } else {
                        cv::Vec3b& px = canvas.at<cv::Vec3b>(cy, cx);
                        for (std::size_t k = 0; k < 3; ++k)
                            px[2 - int(k)] = static_cast<unsigned char>(
                                std::clamp(batch.pixels.at4(i, y, x, k), 0.0, 1.0) *
                                    255.0 +
                                0.5);
                    }
                }
        }
    if (!cv::imwrite(path.string(), canvas))
        throw std::runtime_error("render_grid: failed to write " + path.string());
}

}  // namespace capgan::data
