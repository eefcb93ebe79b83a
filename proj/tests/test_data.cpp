#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "capgan/data.hpp"
#include "capgan/rng.hpp"

using capgan::Tensor;
namespace data = capgan::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "capgan_data_test";
    fs::create_directories(dir);
    return dir;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
}

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(std::uint8_t(x >> 24));
    v.push_back(std::uint8_t(x >> 16));
    v.push_back(std::uint8_t(x >> 8));
    v.push_back(std::uint8_t(x));
}

// IDX pair: n images of h x w with the given pixel bytes and labels.
std::pair<fs::path, fs::path> write_idx(const std::string& tag, std::uint32_t n,
                                        std::uint32_t h, std::uint32_t w,
                                        const std::vector<std::uint8_t>& pixels,
                                        const std::vector<std::uint8_t>& labels,
                                        std::uint32_t label_n_override = 0) {
    std::vector<std::uint8_t> img;
    push_be32(img, 0x00000803);
    push_be32(img, n);
    push_be32(img, h);
    push_be32(img, w);
    img.insert(img.end(), pixels.begin(), pixels.end());

    std::vector<std::uint8_t> lab;
    push_be32(lab, 0x00000801);
    push_be32(lab, label_n_override ? label_n_override : n);
    lab.insert(lab.end(), labels.begin(), labels.end());

    const fs::path dir = temp_dir();
    write_bytes(dir / (tag + "_images.idx"), img);
    write_bytes(dir / (tag + "_labels.idx"), lab);
    return {dir / (tag + "_images.idx"), dir / (tag + "_labels.idx")};
}

data::ImageBatch batch_with_counts(const std::vector<std::size_t>& counts,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    data::ImageBatch b;
    b.num_classes = int(counts.size());
    std::size_t n = 0;
    for (auto c : counts) n += c;
    b.pixels = Tensor({n, 2, 2, 1});
    std::uniform_real_distribution<double> d(0, 1);
    for (std::size_t i = 0; i < b.pixels.numel(); ++i) b.pixels[i] = d(rng);
    for (int c = 0; c < b.num_classes; ++c)
        b.labels.insert(b.labels.end(), counts[std::size_t(c)], c);
    std::shuffle(b.labels.begin(), b.labels.end(), rng);
    return b;
}

std::vector<std::vector<double>> distinct_images_of_class(const data::ImageBatch& b,
                                                          int cls) {
    const std::size_t px = b.pixels.numel() / b.size();
    std::set<std::vector<double>> s;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b.labels[i] == cls)
            s.insert(std::vector<double>(b.pixels.data() + i * px,
                                         b.pixels.data() + (i + 1) * px));
    return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("load_idx reads pixels, scales to [0,1], and validates counts") {
    // 2 images of 2x2: one all-zero, one all-255.
    const std::vector<std::uint8_t> px = {0, 0, 0, 0, 255, 255, 255, 255};
    auto [ip, lp] = write_idx("ok", 2, 2, 2, px, {7, 1});
    const data::ImageBatch b = data::load_idx(ip, lp);
    CHECK(b.size() == 2);
    CHECK(b.height() == 2);
    CHECK(b.channels() == 1);
    CHECK(b.labels == std::vector<int>{7, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(b.pixels[i] == 0.0);
    for (std::size_t i = 4; i < 8; ++i) CHECK(b.pixels[i] == 1.0);
}

TEST_CASE("load_idx rejects bad magic and count mismatches") {
    auto [ip, lp] = write_idx("mismatch", 2, 2, 2,
                              std::vector<std::uint8_t>(8, 0), {1, 2, 3}, 3);
    CHECK_THROWS(data::load_idx(ip, lp));

    std::vector<std::uint8_t> bad;
    push_be32(bad, 0xdeadbeef);
    push_be32(bad, 1);
    push_be32(bad, 1);
    push_be32(bad, 1);
    bad.push_back(0);
    const fs::path bp = temp_dir() / "bad_magic.idx";
    write_bytes(bp, bad);
    auto [gi, gl] = write_idx("good1", 1, 1, 1, {0}, {0});
    CHECK_THROWS_WITH_AS(data::load_idx(bp, gl), doctest::Contains("bad_magic.idx"),
                         std::runtime_error);
}

TEST_CASE("load_cifar10 parses 3073-byte records") {
    std::vector<std::uint8_t> rec(3073, 255);
    rec[0] = 5;
    const fs::path p = temp_dir() / "cifar_one.bin";
    write_bytes(p, rec);
    const data::ImageBatch b = data::load_cifar10({p});
    CHECK(b.size() == 1);
    CHECK(b.height() == 32);
    CHECK(b.width() == 32);
    CHECK(b.channels() == 3);
    CHECK(b.labels == std::vector<int>{5});
    for (std::size_t i = 0; i < b.pixels.numel(); ++i) CHECK(b.pixels[i] == 1.0);
}

TEST_CASE("load_cifar10 rejects truncated files and bad labels") {
    const fs::path trunc = temp_dir() / "cifar_trunc.bin";
    write_bytes(trunc, std::vector<std::uint8_t>(3072, 0));
    CHECK_THROWS(data::load_cifar10({trunc}));

    std::vector<std::uint8_t> rec(3073, 0);
    rec[0] = 10;  // labels are 0..9
    const fs::path badlab = temp_dir() / "cifar_badlab.bin";
    write_bytes(badlab, rec);
    CHECK_THROWS(data::load_cifar10({badlab}));
}

TEST_CASE("resize: identity, constant preservation, and range") {
    data::ImageBatch b = batch_with_counts({3, 3}, 21);
    const data::ImageBatch same = data::resize(b, 2, 2);
    for (std::size_t i = 0; i < b.pixels.numel(); ++i)
        CHECK(same.pixels[i] == b.pixels[i]);

    data::ImageBatch constant = b;
    for (std::size_t i = 0; i < constant.pixels.numel(); ++i) constant.pixels[i] = 0.37;
    const data::ImageBatch up = data::resize(constant, 5, 7);
    CHECK(up.height() == 5);
    CHECK(up.width() == 7);
    for (std::size_t i = 0; i < up.pixels.numel(); ++i)
        CHECK(up.pixels[i] == doctest::Approx(0.37).epsilon(1e-12));

    const data::ImageBatch down = data::resize(data::resize(b, 9, 9), 4, 4);
    for (std::size_t i = 0; i < down.pixels.numel(); ++i) {
        CHECK(down.pixels[i] >= 0.0);
        CHECK(down.pixels[i] <= 1.0);
    }
    CHECK(down.labels == b.labels);
}

TEST_CASE("impose_imbalance realizes floor(majority/rate) exactly") {
    for (double rate : {5.0, 10.0, 20.0, 50.0, 100.0}) {
        data::ImageBatch b = batch_with_counts({600, 600, 600}, 31);
        const data::ImageBatch out =
            data::impose_imbalance(b, {0, rate, 99});
        const auto h = data::class_histogram(out);
        CHECK(h[0] == 600);
        const auto target = std::size_t(600.0 / rate);
        CHECK(h[1] == target);
        CHECK(h[2] == target);
    }
}

TEST_CASE("impose_imbalance: realized rate on uneven counts") {
    // Counts shaped like the imbalanced medical dataset: majority 5600 with a
    // smallest class of 106 gives a realized rate near 52.83.
    data::ImageBatch b = batch_with_counts({560, 560}, 32);
    const data::ImageBatch out = data::impose_imbalance(b, {0, 52.83, 5});
    const auto h = data::class_histogram(out);
    CHECK(h[0] == 560);
    CHECK(h[1] == std::size_t(560.0 / 52.83));
    CHECK(double(h[0]) / double(h[1]) == doctest::Approx(56.0).epsilon(0.2));
}

TEST_CASE("impose_imbalance errors and determinism") {
    data::ImageBatch b = batch_with_counts({20, 20}, 33);
    CHECK_THROWS_AS(data::impose_imbalance(b, {0, 0.5, 1}), std::invalid_argument);
    CHECK_THROWS(data::impose_imbalance(b, {0, 1000.0, 1}));  // minority target 0

    const data::ImageBatch a1 = data::impose_imbalance(b, {0, 4.0, 7});
    const data::ImageBatch a2 = data::impose_imbalance(b, {0, 4.0, 7});
    REQUIRE(a1.size() == a2.size());
    CHECK(a1.labels == a2.labels);
    for (std::size_t i = 0; i < a1.pixels.numel(); ++i)
        CHECK(a1.pixels[i] == a2.pixels[i]);
}

TEST_CASE("random_oversample: uniform histogram, all originals kept") {
    std::mt19937_64 meta(1234);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> ncls(2, 5);
        std::uniform_int_distribution<std::size_t> cnt(1, 12);
        std::vector<std::size_t> counts(std::size_t(ncls(meta)));
        for (auto& c : counts) c = cnt(meta);
        const std::size_t maxc = *std::max_element(counts.begin(), counts.end());

        const data::ImageBatch b = batch_with_counts(counts, 1000 + std::uint64_t(trial));
        const data::ImageBatch out = data::random_oversample(b, 77 + std::uint64_t(trial));
        const auto h = data::class_histogram(out);
        for (auto c : h) CHECK(c == maxc);
        for (int cls = 0; cls < b.num_classes; ++cls)
            CHECK(distinct_images_of_class(out, cls) == distinct_images_of_class(b, cls));
    }
}

TEST_CASE("random_oversample edge cases") {
    const data::ImageBatch balanced = batch_with_counts({4, 4}, 41);
    const data::ImageBatch out = data::random_oversample(balanced, 1);
    const auto h = data::class_histogram(out);
    CHECK(h[0] == 4);
    CHECK(h[1] == 4);

    data::ImageBatch missing = batch_with_counts({4, 4}, 42);
    missing.num_classes = 3;  // class 2 exists but has no samples
    CHECK_THROWS(data::random_oversample(missing, 1));
}

TEST_CASE("class_histogram counts and empty classes") {
    data::ImageBatch b;
    b.num_classes = 3;
    b.labels = {0, 0, 1};
    b.pixels = Tensor({3, 1, 1, 1});
    const auto h = data::class_histogram(b);
    CHECK(h == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("stratified_split is seeded, disjoint, and proportional") {
    const data::ImageBatch b = batch_with_counts({50, 30}, 51);
    auto [train, test] = data::stratified_split(b, 0.2, 9);
    CHECK(train.size() + test.size() == b.size());
    const auto ht = data::class_histogram(train);
    const auto hv = data::class_histogram(test);
    CHECK(hv[0] == 10);
    CHECK(hv[1] == 6);
    CHECK(ht[0] == 40);
    CHECK(ht[1] == 24);

    auto [train2, test2] = data::stratified_split(b, 0.2, 9);
    CHECK(train2.labels == train.labels);
    for (std::size_t i = 0; i < train.pixels.numel(); ++i)
        CHECK(train2.pixels[i] == train.pixels[i]);
}

TEST_CASE("batch persistence round-trips bit-exactly") {
    const data::ImageBatch b = batch_with_counts({5, 3}, 61);
    const fs::path p = temp_dir() / "roundtrip.arc";
    data::save_batch(b, p, "roundtrip");
    const data::ImageBatch r = data::load_batch(p);
    CHECK(r.num_classes == b.num_classes);
    CHECK(r.labels == b.labels);
    REQUIRE(r.pixels.same_shape(b.pixels));
    for (std::size_t i = 0; i < b.pixels.numel(); ++i) CHECK(r.pixels[i] == b.pixels[i]);
    CHECK(fs::exists(temp_dir() / "roundtrip.arc.json"));
}

TEST_CASE("to_nchw and to_nhwc are mutual inverses") {
    const data::ImageBatch b = batch_with_counts({2, 2}, 71);
    const Tensor nchw = data::to_nchw(b.pixels);
    CHECK(nchw.dim(1) == b.channels());
    const Tensor back = data::to_nhwc(nchw);
    for (std::size_t i = 0; i < b.pixels.numel(); ++i) CHECK(back[i] == b.pixels[i]);
}

TEST_CASE("make_synthetic: deterministic, class-structured, in range") {
    const data::ImageBatch a = data::make_synthetic(4, 8, 16, 1, 5);
    const data::ImageBatch b = data::make_synthetic(4, 8, 16, 1, 5);
    CHECK(a.size() == 32);
    CHECK(a.num_classes == 4);
    for (std::size_t i = 0; i < a.pixels.numel(); ++i) {
        CHECK(a.pixels[i] == b.pixels[i]);
        CHECK(a.pixels[i] >= 0.0);
        CHECK(a.pixels[i] <= 1.0);
    }
    const auto h = data::class_histogram(a);
    for (auto c : h) CHECK(c == 8);

    // Different classes occupy different bright regions: class means differ.
    const data::ImageBatch c0 = data::select_class(a, 0);
    const data::ImageBatch c1 = data::select_class(a, 1);
    double diff = 0;
    const std::size_t px = a.pixels.numel() / a.size();
    for (std::size_t i = 0; i < px; ++i) {
        double m0 = 0, m1 = 0;
        for (std::size_t s = 0; s < c0.size(); ++s) m0 += c0.pixels[s * px + i];
        for (std::size_t s = 0; s < c1.size(); ++s) m1 += c1.pixels[s * px + i];
        diff += std::abs(m0 / double(c0.size()) - m1 / double(c1.size()));
    }
    CHECK(diff > 1.0);
}

TEST_CASE("image directory loader maps subdirectories to classes") {
    const fs::path root = temp_dir() / "imgdir";
    fs::create_directories(root / "a");
    fs::create_directories(root / "b");
    // Write tiny valid PNGs through the renderer itself.
    data::ImageBatch one = batch_with_counts({1}, 81);
    data::render_grid(one, 1, 1, root / "a" / "x.png");
    data::render_grid(one, 1, 1, root / "b" / "y.png");
    data::render_grid(one, 1, 1, root / "b" / "z.png");
    write_bytes(root / "b" / "broken.png", {1, 2, 3});  // undecodable: skipped

    const data::ImageBatch loaded = data::load_image_dir(root, 1);
    CHECK(loaded.num_classes == 2);
    const auto h = data::class_histogram(loaded);
    CHECK(h[0] == 1);
    CHECK(h[1] == 2);
    CHECK(loaded.channels() == 1);

    const data::ImageBatch rgb = data::load_image_dir(root, 3);
    CHECK(rgb.channels() == 3);
}

TEST_CASE("render_grid rejects grids larger than the batch") {
    const data::ImageBatch b = batch_with_counts({4}, 91);
    CHECK_THROWS(data::render_grid(b, 3, 3, temp_dir() / "never.png"));
}
