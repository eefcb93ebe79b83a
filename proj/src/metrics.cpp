#include "capgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "capgan/gan.hpp"
#include "capgan/pretrain.hpp"

namespace capgan::metrics {

FeatureEmbedder pixel_embedder(std::size_t h, std::size_t w, std::size_t c) {
    FeatureEmbedder e;
    e.kind = "pixel";
    e.embedding_dim = h * w * c;
    e.embed = [dim = e.embedding_dim](const data::ImageBatch& batch) {
        return batch.pixels.reshaped({batch.size(), dim});
    };
    return e;
}

Tensor embed(const FeatureEmbedder& embedder, const data::ImageBatch& batch) {
    Tensor f = embedder.embed(batch);
    if (f.ndim() != 2 || f.dim(0) != batch.size() || f.dim(1) != embedder.embedding_dim)
        throw std::runtime_error("embed: embedder produced wrong shape");
    return f;
}

GaussianStats fit_gaussian(const Tensor& features) {
    const std::size_t n = features.dim(0), d = features.dim(1);
    if (n < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
    GaussianStats s;
    s.mean = Tensor({d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += features.at2(i, j);
    for (std::size_t j = 0; j < d; ++j) s.mean[j] /= double(n);

    Eigen::MatrixXd centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            centered(long(i), long(j)) = features.at2(i, j) - s.mean[j];
    Eigen::MatrixXd cov = (centered.transpose() * centered) / double(n - 1);
    s.cov = Tensor({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) s.cov.at2(i, j) = cov(long(i), long(j));
    return s;
}

namespace {
Eigen::MatrixXd to_eigen(const Tensor& t) {
    const std::size_t r = t.dim(0), c = t.dim(1);
    Eigen::MatrixXd m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(long(i), long(j)) = t.at2(i, j);
    return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
    Tensor t({std::size_t(m.rows()), std::size_t(m.cols())});
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) t.at2(std::size_t(i), std::size_t(j)) = m(i, j);
    return t;
}

Eigen::MatrixXd sqrt_psd_eigen(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("matrix_sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double tol = -1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (long i = 0; i < ev.size(); ++i) {
        if (ev[i] < tol && ev[i] < -1e-6)
            throw std::runtime_error("matrix_sqrt_psd: matrix is not PSD");
        ev[i] = ev[i] > 0 ? std::sqrt(ev[i]) : 0.0;
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace

Tensor matrix_sqrt_psd(const Tensor& m) {
    if (m.ndim() != 2 || m.dim(0) != m.dim(1))
        throw std::invalid_argument("matrix_sqrt_psd: square matrix required");
    return from_eigen(sqrt_psd_eigen(to_eigen(m)));
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.numel() != b.mean.numel())
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    const std::size_t d = a.mean.numel();
    double mean_term = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double dm = a.mean[i] - b.mean[i];
        mean_term += dm * dm;
    }
    Eigen::MatrixXd s1 = to_eigen(a.cov), s2 = to_eigen(b.cov);
    // Tr((S1 S2)^{1/2}) computed through the PSD form sqrt(S1)^T S2 sqrt(S1);
    // regularize when the product is near-singular.
    Eigen::MatrixXd s1h;
    try {
        s1h = sqrt_psd_eigen(s1);
    } catch (const std::exception&) {
        s1h = sqrt_psd_eigen(s1 + 1e-6 * Eigen::MatrixXd::Identity(long(d), long(d)));
        s2 += 1e-6 * Eigen::MatrixXd::Identity(long(d), long(d));
    }
    Eigen::MatrixXd inner = s1h * s2 * s1h;
    const double tr_sqrt = sqrt_psd_eigen(inner).trace();
    const double val = mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, val);
}

namespace {
struct WindowStats {
    double mean_a, mean_b, var_a, var_b, cov;
};

double ssim_term(const WindowStats& s, double c1, double c2) {
    return ((2 * s.mean_a * s.mean_b + c1) * (2 * s.cov + c2)) /
           ((s.mean_a * s.mean_a + s.mean_b * s.mean_b + c1) * (s.var_a + s.var_b + c2));
}
}  // namespace

double ssim(const Tensor& a, const Tensor& b, double dynamic_range) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.ndim() != 3) throw std::invalid_argument("ssim: expected [H,W,C] images");
    const std::size_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
    const double c1 = std::pow(0.01 * dynamic_range, 2);
    const double c2 = std::pow(0.03 * dynamic_range, 2);
    constexpr std::size_t win = 8;

    auto window_stats = [&](std::size_t y0, std::size_t x0, std::size_t wh,
                            std::size_t ww, std::size_t c) {
        WindowStats s{0, 0, 0, 0, 0};
        const double n = double(wh * ww);
        for (std::size_t y = y0; y < y0 + wh; ++y)
            for (std::size_t x = x0; x < x0 + ww; ++x) {
                s.mean_a += a[(y * W + x) * C + c];
                s.mean_b += b[(y * W + x) * C + c];
            }
        s.mean_a /= n;
        s.mean_b /= n;
        for (std::size_t y = y0; y < y0 + wh; ++y)
            for (std::size_t x = x0; x < x0 + ww; ++x) {
                const double da = a[(y * W + x) * C + c] - s.mean_a;
                const double db = b[(y * W + x) * C + c] - s.mean_b;
                s.var_a += da * da;
                s.var_b += db * db;
                s.cov += da * db;
            }
        s.var_a /= n;
        s.var_b /= n;
        s.cov /= n;
        return s;
    };

    double acc = 0;
    std::size_t count = 0;
    if (H < win || W < win) {
        for (std::size_t c = 0; c < C; ++c) {
            acc += ssim_term(window_stats(0, 0, H, W, c), c1, c2);
            ++count;
        }
    } else {
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y + win <= H; ++y)
                for (std::size_t x = 0; x + win <= W; ++x) {
                    acc += ssim_term(window_stats(y, x, win, win, c), c1, c2);
                    ++count;
                }
    }
    return acc / double(count);
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("paired_t_test: need equal lengths >= 2");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / double(n);
    double ss = 0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double var = ss / double(n - 1);

    TTestResult r;
    r.df = n - 1;
    if (var == 0.0) {
        r.degenerate = mean != 0.0;
        if (mean == 0.0) {
            r.t = 0;
            r.p = 1;
        } else {
            // All differences identical and nonzero: t is unbounded.
            r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
            r.p = std::numeric_limits<double>::min();
            std::cerr << "warning: paired_t_test on zero-variance differences; "
                         "p reported at machine floor\n";
        }
        return r;
    }
    r.t = mean / std::sqrt(var / double(n));
    boost::math::students_t_distribution<double> dist(double(r.df));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

MetricReport evaluate(const ClassSampler& sampler, const data::ImageBatch& test_batch,
                      const FeatureEmbedder& embedder, const EvalOptions& options) {
    const int num_classes = test_batch.num_classes;
    const auto counts = data::class_histogram(test_batch);
    for (int c = 0; c < num_classes; ++c)
        if (counts[c] == 0)
            throw std::runtime_error("evaluate: class " + std::to_string(c) +
                                     " absent from test set");

    const std::size_t H = test_batch.height(), W = test_batch.width(),
                      C = test_batch.channels();
    MetricReport report;
    report.majority_class = options.majority_class;
    for (int c = 0; c < num_classes; ++c) {
        const data::ImageBatch test_c = data::select_class(test_batch, c);
        const data::ImageBatch gen_c = sampler(
            c, options.samples_per_class,
            derive_seed(options.seed, "eval_class" + std::to_string(c)));

        const GaussianStats gs = fit_gaussian(embed(embedder, gen_c));
        const GaussianStats ts = fit_gaussian(embed(embedder, test_c));
        ClassRow row;
        row.class_id = c;
        row.fid = frechet_distance(gs, ts);

        auto image_of = [&](const data::ImageBatch& b, std::size_t i) {
            Tensor img({H, W, C});
            std::copy_n(b.pixels.data() + i * H * W * C, H * W * C, img.data());
            return img;
        };
        if (options.pairing == SsimPairing::Identity) {
            const std::size_t n = std::min(gen_c.size(), test_c.size());
            double acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                acc += ssim(image_of(gen_c, i), image_of(test_c, i), 1.0);
            row.ssim = acc / double(n);
        } else {
            Rng rng(derive_seed(options.seed, "ssim_class" + std::to_string(c)));
            double acc = 0;
            for (std::size_t k = 0; k < options.ssim_pairs; ++k)
                acc += ssim(image_of(gen_c, rng.index(gen_c.size())),
                            image_of(test_c, rng.index(test_c.size())), 1.0);
            row.ssim = acc / double(options.ssim_pairs);
        }
        report.per_class.push_back(row);
    }

    double min_fid = 0, min_ssim = 0;
    for (const auto& row : report.per_class) {
        if (row.class_id == options.majority_class) {
            report.majority_fid = row.fid;
            report.majority_ssim = row.ssim;
        } else {
            min_fid += row.fid;
            min_ssim += row.ssim;
        }
    }
    const double k = double(num_classes - 1);
    if (k > 0) {
        report.minority_avg_fid = min_fid / k;
        report.minority_avg_ssim = min_ssim / k;
    }
    return report;
}

MetricReport evaluate(const models::Generator& gen, const data::ImageBatch& test_batch,
                      const FeatureEmbedder& embedder, const EvalOptions& options) {
    ClassSampler sampler = [&gen](int c, std::size_t n, std::uint64_t seed) {
        return gan::sample(gen, c, n, seed);
    };
    return evaluate(sampler, test_batch, embedder, options);
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "row,fid,ssim\n";
    for (const auto& r : per_class)
        out << "class_" << r.class_id << ',' << r.fid << ',' << r.ssim << "\n";
    out << "avg(Minority)," << minority_avg_fid << ',' << minority_avg_ssim << "\n";
    out << "Majority," << majority_fid << ',' << majority_ssim << "\n";
}

void MetricReport::write_json(const std::filesystem::path& path) const {
    nlohmann::json j;
    for (const auto& r : per_class)
        j["per_class"].push_back({{"class", r.class_id}, {"fid", r.fid}, {"ssim", r.ssim}});
    j["avg_minority"] = {{"fid", minority_avg_fid}, {"ssim", minority_avg_ssim}};
    j["majority"] = {{"fid", majority_fid}, {"ssim", majority_ssim}};
    j["majority_class"] = majority_class;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

MetricReport MetricReport::read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    nlohmann::json j;
    in >> j;
    MetricReport r;
    for (const auto& e : j.at("per_class"))
        r.per_class.push_back({e.at("class").get<int>(), e.at("fid").get<double>(),
                               e.at("ssim").get<double>()});
    r.minority_avg_fid = j.at("avg_minority").at("fid").get<double>();
    r.minority_avg_ssim = j.at("avg_minority").at("ssim").get<double>();
    r.majority_fid = j.at("majority").at("fid").get<double>();
    r.majority_ssim = j.at("majority").at("ssim").get<double>();
    r.majority_class = j.at("majority_class").get<int>();
    return r;
}

OracleClassifier::OracleClassifier(models::ModelConfig cfg_, std::uint64_t seed)
    : cfg(std::move(cfg_)) {
    cfg.validate();
    if (cfg.num_classes < 2)
        throw std::invalid_argument("OracleClassifier: need at least 2 classes");
    Rng rng(seed);
    trunk = models::ConvTrunk::init(cfg, rng);
    head = nn::Dense::init(cfg.trunk_dim(), std::size_t(cfg.num_classes), rng);
}

nn::ParamList OracleClassifier::params() const {
    nn::ParamList out = trunk.params("oracle.trunk");
    auto h = head.params("oracle.head");
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

std::vector<int> OracleClassifier::classify(const data::ImageBatch& batch) const {
    ad::Var logits =
        head.forward(trunk.forward(ad::constant(data::to_nchw(batch.pixels))));
    std::vector<int> out(batch.size());
    const std::size_t k = std::size_t(cfg.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (logits.value().at2(i, j) > logits.value().at2(i, best)) best = j;
        out[i] = int(best);
    }
    return out;
}

double OracleClassifier::accuracy(const data::ImageBatch& batch) const {
    const std::vector<int> pred = classify(batch);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == batch.labels[i]) ++hit;
    return double(hit) / double(pred.size());
}

FeatureEmbedder OracleClassifier::embedder() const {
    FeatureEmbedder e;
    e.kind = "classifier";
    e.embedding_dim = cfg.trunk_dim();
    e.embed = [this](const data::ImageBatch& batch) {
        return trunk.forward(ad::constant(data::to_nchw(batch.pixels))).value();
    };
    return e;
}

OracleClassifier train_oracle_classifier(const data::ImageBatch& train_batch,
                                         const data::ImageBatch& test_batch,
                                         const OracleConfig& config) {
    models::ModelConfig cfg;
    cfg.image_hw = train_batch.height();
    cfg.channels = train_batch.channels();
    cfg.num_classes = train_batch.num_classes;
    cfg.base_filters = config.base_filters;
    cfg.depth = config.depth;
    cfg.latent_dim = 1;  // unused by the classifier

    OracleClassifier clf(cfg, derive_seed(config.seed, "oracle_init"));
    nn::Adam opt(clf.params(), config.learning_rate, 0.9);
    Rng rng(derive_seed(config.seed, "oracle_train"));

    std::vector<ad::Var> vars;
    for (const auto& p : clf.params()) vars.push_back(p.var);

    const Tensor nchw = data::to_nchw(train_batch.pixels);
    const std::size_t n = train_batch.size();
    const std::size_t px = nchw.numel() / n;
    for (int e = 0; e < config.epochs; ++e) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t off = 0; off < n; off += config.batch_size) {
            const std::size_t bs = std::min(config.batch_size, n - off);
            Tensor xb({bs, cfg.channels, cfg.image_hw, cfg.image_hw});
            std::vector<int> yb(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                std::copy_n(nchw.data() + order[off + i] * px, px, xb.data() + i * px);
                yb[i] = train_batch.labels[order[off + i]];
            }
            ad::Var logits = clf.head.forward(clf.trunk.forward(ad::constant(std::move(xb))));
            ad::Var loss = ad::softmax_cross_entropy(logits, yb);
            if (!std::isfinite(loss.value()[0]))
                throw std::runtime_error("train_oracle_classifier: non-finite loss");
            opt.step(ad::gradients(loss, vars));
        }
    }
    clf.train_accuracy = clf.accuracy(train_batch);
    clf.test_accuracy = test_batch.size() ? clf.accuracy(test_batch) : 0.0;
    return clf;
}

}  // namespace capgan::metrics
