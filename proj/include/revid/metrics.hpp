#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "revid/rng.hpp"
#include "revid/video.hpp"

namespace revid {

// ---------------------------------------------------------------------------
// embedders
// ---------------------------------------------------------------------------

// Deterministic feature extractors behind the learned-feature metrics.
// The real face/video classifiers are gated externals; reports always
// carry the embedder identifier so numbers are never compared across
// different embedders by accident.
class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::string name() const = 0;
    virtual Eigen::VectorXd embed_image(const Tensor<float>& frame) const = 0;
    virtual Eigen::VectorXd embed_video(const VideoClip& clip) const = 0;
};

// Flattened [0,1] pixels; embed_video flattens the temporal mean frame.
class PixelEmbedder : public Embedder {
  public:
    std::string name() const override { return "pixel"; }

    Eigen::VectorXd embed_image(const Tensor<float>& frame) const override {
        Eigen::VectorXd v(frame.numel());
        for (long i = 0; i < frame.numel(); ++i) v[i] = (static_cast<double>(frame[i]) + 1.0) / 2.0;
        return v;
    }

    Eigen::VectorXd embed_video(const VideoClip& clip) const override {
        clip.validate();
        Eigen::VectorXd acc = embed_image(clip.frames[0]);
        for (long k = 1; k < clip.frame_count(); ++k)
            acc += embed_image(clip.frames[static_cast<size_t>(k)]);
        return acc / static_cast<double>(clip.frame_count());
    }
};

// Seeded Gaussian projection of flattened [0,1] pixels to a fixed small
// dimension; the video embedding stacks the temporal mean and temporal
// standard deviation of the per-frame features (so motion matters).
class RandomProjectionEmbedder : public Embedder {
  public:
    RandomProjectionEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim < 1) throw ConfigError("embedder dim must be >= 1");
    }

    std::string name() const override {
        return "randproj-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
    }

    Eigen::VectorXd embed_image(const Tensor<float>& frame) const override {
        const Eigen::MatrixXd& M = projection(frame.numel());
        Eigen::VectorXd v(frame.numel());
        for (long i = 0; i < frame.numel(); ++i) v[i] = (static_cast<double>(frame[i]) + 1.0) / 2.0;
        return M * v;
    }

    Eigen::VectorXd embed_video(const VideoClip& clip) const override {
        clip.validate();
        const long n = clip.frame_count();
        Eigen::MatrixXd feats(dim_, n);
        for (long k = 0; k < n; ++k) feats.col(k) = embed_image(clip.frames[static_cast<size_t>(k)]);
        Eigen::VectorXd mean = feats.rowwise().mean();
        Eigen::VectorXd var = Eigen::VectorXd::Zero(dim_);
        for (long k = 0; k < n; ++k) {
            Eigen::VectorXd d = feats.col(k) - mean;
            var += d.cwiseProduct(d);
        }
        var /= static_cast<double>(n);
        Eigen::VectorXd out(2 * dim_);
        out << mean, var.cwiseSqrt();
        return out;
    }

  private:
    const Eigen::MatrixXd& projection(long input_dim) const {
        auto it = cache_.find(input_dim);
        if (it != cache_.end()) return it->second;
        Rng rng(seed_mix({seed_, 0x70726f6aULL, static_cast<std::uint64_t>(input_dim)}));
        Eigen::MatrixXd M(dim_, input_dim);
        const double s = 1.0 / std::sqrt(static_cast<double>(input_dim));
        for (int r = 0; r < dim_; ++r)
            for (long c = 0; c < input_dim; ++c) M(r, c) = s * rng.normal();
        return cache_.emplace(input_dim, std::move(M)).first->second;
    }

    int dim_;
    std::uint64_t seed_;
    mutable std::map<long, Eigen::MatrixXd> cache_;
};

// Adapter slot: plug a new Embedder subclass in here by name.
inline std::unique_ptr<Embedder> make_embedder(const std::string& kind, int dim,
                                               std::uint64_t seed) {
    if (kind == "pixel") return std::make_unique<PixelEmbedder>();
    if (kind == "randproj") return std::make_unique<RandomProjectionEmbedder>(dim, seed);
    throw ConfigError("unknown embedder '" + kind + "' (expected pixel|randproj)");
}

// ---------------------------------------------------------------------------
// pixel metrics
// ---------------------------------------------------------------------------

namespace metrics_detail {

inline void require_matching(const VideoClip& a, const VideoClip& b) {
    a.validate();
    b.validate();
    if (a.frame_count() != b.frame_count())
        throw ShapeError("clips differ in frame count: " + std::to_string(a.frame_count()) +
                         " vs " + std::to_string(b.frame_count()));
    if (a.frames[0].shape != b.frames[0].shape)
        throw ShapeError("clips differ in resolution: " + shape_str(a.frames[0]) + " vs " +
                         shape_str(b.frames[0]));
}

inline double to01(float v) { return (static_cast<double>(v) + 1.0) / 2.0; }

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
inline const std::vector<double>& gaussian_window() {
    static const std::vector<double> w = [] {
        std::vector<double> k(121);
        double sum = 0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                k[static_cast<size_t>(y * 11 + x)] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
                sum += k[static_cast<size_t>(y * 11 + x)];
            }
        for (auto& v : k) v /= sum;
        return k;
    }();
    return w;
}

} // namespace metrics_detail

// Pooled-MSE PSNR in dB over the whole clip, values in [0,1], MAX = 1.
// Identical clips return +infinity.
inline double psnr(const VideoClip& generated, const VideoClip& reference) {
    metrics_detail::require_matching(generated, reference);
    double se = 0;
    long count = 0;
    for (long k = 0; k < generated.frame_count(); ++k) {
        const auto& g = generated.frames[static_cast<size_t>(k)];
        const auto& r = reference.frames[static_cast<size_t>(k)];
        for (long i = 0; i < g.numel(); ++i) {
            const double d = metrics_detail::to01(g[i]) - metrics_detail::to01(r[i]);
            se += d * d;
        }
        count += g.numel();
    }
    const double mse = se / static_cast<double>(count);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

// Mean SSIM over valid 11x11 windows (Gaussian weighted, sigma 1.5),
// grayscale by channel mean, C1=(0.01)^2, C2=(0.03)^2 with L=1.
inline double ssim(const VideoClip& generated, const VideoClip& reference) {
    metrics_detail::require_matching(generated, reference);
    const long H = generated.height(), W = generated.width();
    if (H < 11 || W < 11)
        throw InputError("ssim: frames must be at least 11x11, got " +
                         std::to_string(H) + "x" + std::to_string(W));
    const auto& win = metrics_detail::gaussian_window();
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

    auto gray = [&](const Tensor<float>& f) {
        std::vector<double> g(static_cast<size_t>(H * W));
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x)
                g[static_cast<size_t>(y * W + x)] =
                    (metrics_detail::to01(f.at(0, y, x)) + metrics_detail::to01(f.at(1, y, x)) +
                     metrics_detail::to01(f.at(2, y, x))) /
                    3.0;
        return g;
    };

    double clip_acc = 0;
    for (long k = 0; k < generated.frame_count(); ++k) {
        const auto gx = gray(generated.frames[static_cast<size_t>(k)]);
        const auto gy = gray(reference.frames[static_cast<size_t>(k)]);
        double frame_acc = 0;
        long windows = 0;
        for (long y0 = 0; y0 + 11 <= H; ++y0)
            for (long x0 = 0; x0 + 11 <= W; ++x0) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int wy = 0; wy < 11; ++wy)
                    for (int wx = 0; wx < 11; ++wx) {
                        const double w = win[static_cast<size_t>(wy * 11 + wx)];
                        const double a = gx[static_cast<size_t>((y0 + wy) * W + x0 + wx)];
                        const double b = gy[static_cast<size_t>((y0 + wy) * W + x0 + wx)];
                        mx += w * a;
                        my += w * b;
                        xx += w * a * a;
                        yy += w * b * b;
                        xy += w * a * b;
                    }
                const double vx = xx - mx * mx;
                const double vy = yy - my * my;
                const double cxy = xy - mx * my;
                frame_acc += ((2 * mx * my + C1) * (2 * cxy + C2)) /
                             ((mx * mx + my * my + C1) * (vx + vy + C2));
                ++windows;
            }
        clip_acc += frame_acc / static_cast<double>(windows);
    }
    return clip_acc / static_cast<double>(generated.frame_count());
}

// ---------------------------------------------------------------------------
// feature metrics
// ---------------------------------------------------------------------------

// Mean L2 distance between consecutive-frame embeddings.
inline double acd(const VideoClip& clip, const Embedder& embedder) {
    clip.validate();
    if (clip.frame_count() < 2)
        throw InputError("acd: need at least 2 frames, got " +
                         std::to_string(clip.frame_count()));
    double acc = 0;
    Eigen::VectorXd prev = embedder.embed_image(clip.frames[0]);
    for (long k = 1; k < clip.frame_count(); ++k) {
        Eigen::VectorXd cur = embedder.embed_image(clip.frames[static_cast<size_t>(k)]);
        acc += (cur - prev).norm();
        prev = std::move(cur);
    }
    return acc / static_cast<double>(clip.frame_count() - 1);
}

// Mean L2 distance between frame embeddings and the identity embedding.
inline double acd_identity(const VideoClip& clip, const Tensor<float>& identity,
                           const Embedder& embedder) {
    clip.validate();
    const Eigen::VectorXd id = embedder.embed_image(identity);
    double acc = 0;
    for (const auto& f : clip.frames) acc += (embedder.embed_image(f) - id).norm();
    return acc / static_cast<double>(clip.frame_count());
}

// Frechet distance between two Gaussians:
//   |mu_g - mu_r|^2 + Tr(S_g + S_r - 2 (S_g^1/2 S_r S_g^1/2)^1/2)
// Matrix square roots via symmetric eigendecomposition with negative
// eigenvalues clipped at zero.
inline double frechet_distance(const Eigen::VectorXd& mu_g, const Eigen::MatrixXd& cov_g,
                               const Eigen::VectorXd& mu_r, const Eigen::MatrixXd& cov_r) {
    if (mu_g.size() != mu_r.size() || cov_g.rows() != cov_r.rows())
        throw ShapeError("frechet_distance: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_g(cov_g);
    if (es_g.info() != Eigen::Success)
        throw NumericalError("frechet_distance: eigendecomposition of generated covariance "
                             "failed (norm " + std::to_string(cov_g.norm()) + ")");
    Eigen::MatrixXd sqrt_g = es_g.eigenvectors() *
                             es_g.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                             es_g.eigenvectors().transpose();
    Eigen::MatrixXd inner = sqrt_g * cov_r * sqrt_g;
    inner = 0.5 * (inner + inner.transpose()); // symmetrize fp noise
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(inner);
    if (es_m.info() != Eigen::Success)
        throw NumericalError("frechet_distance: eigendecomposition of cross term failed "
                             "(norm " + std::to_string(inner.norm()) + ")");
    const double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return (mu_g - mu_r).squaredNorm() + cov_g.trace() + cov_r.trace() - 2.0 * tr_sqrt;
}

// Gaussian fit of a corpus of video embeddings. Sample covariance with
// diagonal loading so tiny corpora stay well-posed.
inline void fit_gaussian(const std::vector<VideoClip>& corpus, const Embedder& embedder,
                         double eps, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    if (corpus.empty()) throw InputError("fvd: empty corpus");
    const long n = static_cast<long>(corpus.size());
    Eigen::VectorXd first = embedder.embed_video(corpus[0]);
    const long d = first.size();
    Eigen::MatrixXd feats(d, n);
    feats.col(0) = first;
    for (long i = 1; i < n; ++i) {
        Eigen::VectorXd e = embedder.embed_video(corpus[static_cast<size_t>(i)]);
        if (e.size() != d) throw ShapeError("fvd: inconsistent embedding dimensions");
        feats.col(i) = e;
    }
    mu = feats.rowwise().mean();
    cov = Eigen::MatrixXd::Zero(d, d);
    if (n > 1) {
        Eigen::MatrixXd centered = feats.colwise() - mu;
        cov = centered * centered.transpose() / static_cast<double>(n - 1);
    }
    cov += eps * Eigen::MatrixXd::Identity(d, d);
}

inline double fvd(const std::vector<VideoClip>& generated, const std::vector<VideoClip>& reference,
                  const Embedder& embedder, double eps = 1e-6) {
    Eigen::VectorXd mu_g, mu_r;
    Eigen::MatrixXd cov_g, cov_r;
    fit_gaussian(generated, embedder, eps, mu_g, cov_g);
    fit_gaussian(reference, embedder, eps, mu_r, cov_r);
    return frechet_distance(mu_g, cov_g, mu_r, cov_r);
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ClipMetrics {
    std::string clip_id;
    double psnr_db = 0;
    double ssim = 0;
    double acd = 0;
    double acd_i = 0;
};

struct MetricsReport {
    std::vector<ClipMetrics> per_clip;
    double fvd = 0;
    std::string image_embedder;
    std::string video_embedder;
    long clip_count = 0;

    double mean_psnr() const { return mean(&ClipMetrics::psnr_db); }
    double mean_ssim() const { return mean(&ClipMetrics::ssim); }
    double mean_acd() const { return mean(&ClipMetrics::acd); }
    double mean_acd_i() const { return mean(&ClipMetrics::acd_i); }

  private:
    double mean(double ClipMetrics::* field) const {
        if (per_clip.empty()) return 0;
        double acc = 0;
        for (const auto& c : per_clip) acc += c.*field;
        return acc / static_cast<double>(per_clip.size());
    }
};

namespace metrics_detail {

// JSON has no infinity; the PSNR sentinel serializes as the string "inf".
inline nlohmann::json encode_value(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}
inline double decode_value(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw IoError("report: bad numeric value '" + j.get<std::string>() + "'");
    }
    return j.get<double>();
}

} // namespace metrics_detail

inline void save_report(const MetricsReport& r, const std::filesystem::path& path) {
    nlohmann::json j;
    j["image_embedder"] = r.image_embedder;
    j["video_embedder"] = r.video_embedder;
    j["clip_count"] = r.clip_count;
    j["fvd"] = metrics_detail::encode_value(r.fvd);
    j["clips"] = nlohmann::json::array();
    for (const auto& c : r.per_clip)
        j["clips"].push_back({{"clip_id", c.clip_id},
                              {"psnr_db", metrics_detail::encode_value(c.psnr_db)},
                              {"ssim", c.ssim},
                              {"acd", c.acd},
                              {"acd_i", c.acd_i}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

inline MetricsReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad report " + path.string() + ": " + e.what());
    }
    MetricsReport r;
    r.image_embedder = j.at("image_embedder").get<std::string>();
    r.video_embedder = j.at("video_embedder").get<std::string>();
    r.clip_count = j.at("clip_count").get<long>();
    r.fvd = metrics_detail::decode_value(j.at("fvd"));
    for (const auto& c : j.at("clips")) {
        ClipMetrics m;
        m.clip_id = c.at("clip_id").get<std::string>();
        m.psnr_db = metrics_detail::decode_value(c.at("psnr_db"));
        m.ssim = c.at("ssim").get<double>();
        m.acd = c.at("acd").get<double>();
        m.acd_i = c.at("acd_i").get<double>();
        r.per_clip.push_back(std::move(m));
    }
    return r;
}

// Full five-metric evaluation of paired clips plus corpus FVD.
inline MetricsReport evaluate_clips(const std::vector<VideoClip>& generated,
                                    const std::vector<VideoClip>& reference,
                                    const std::vector<Tensor<float>>& identities,
                                    const std::vector<std::string>& clip_ids,
                                    const Embedder& embedder) {
    if (generated.empty()) throw InputError("evaluate: no clips");
    if (generated.size() != reference.size() || generated.size() != identities.size() ||
        generated.size() != clip_ids.size())
        throw InputError("evaluate: corpus sizes disagree");
    MetricsReport r;
    r.image_embedder = embedder.name();
    r.video_embedder = embedder.name();
    r.clip_count = static_cast<long>(generated.size());
    for (size_t i = 0; i < generated.size(); ++i) {
        ClipMetrics m;
        m.clip_id = clip_ids[i];
        m.psnr_db = psnr(generated[i], reference[i]);
        m.ssim = ssim(generated[i], reference[i]);
        m.acd = generated[i].frame_count() >= 2 ? acd(generated[i], embedder) : 0.0;
        m.acd_i = acd_identity(generated[i], identities[i], embedder);
        r.per_clip.push_back(std::move(m));
    }
    r.fvd = fvd(generated, reference, embedder);
    return r;
}

} // namespace revid
