#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "revid/data.hpp"
#include "revid/rng.hpp"

namespace revid {

// Deterministic procedural dataset for desk-scale runs: per subject a
// distinct face (colored ellipse, eyes, brows, mouth) on a textured
// background; per expression a parameterized deformation ramp from the
// neutral pose. Same seed, same files, bit for bit.
struct SynthConfig {
    int n_subjects = 2;
    int n_frames = 8;
    int high_res = 32;
    int low_res = 0; // 0: high_res / 4
    std::uint64_t seed = 7;

    long effective_low_res() const { return low_res > 0 ? low_res : high_res / 4; }

    void validate() const {
        if (n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
        if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
        if (high_res < 8) throw ConfigError("high_res must be >= 8");
        if (effective_low_res() < 2 || effective_low_res() > high_res)
            throw ConfigError("low_res must be in [2, high_res]");
    }
};

namespace synth_detail {

struct Rgb {
    double r, g, b;
};

struct SubjectParams {
    Rgb bg0, bg1, skin, iris, mouth_color, brow_color;
    double tex_amp, tex_fx, tex_fy, tex_phase;
    double face_cx, face_cy, face_rx, face_ry;
    double eye_dx, eye_y, eye_r;
    double mouth_y, mouth_w, mouth_th;
    double brow_len, brow_th, brow_gap;
};

inline SubjectParams subject_params(std::uint64_t seed, int subject) {
    Rng rng(seed_mix({seed, stream::kSynth, static_cast<std::uint64_t>(subject)}));
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    SubjectParams p;
    p.bg0 = {u(0.10, 0.45), u(0.10, 0.45), u(0.10, 0.45)};
    p.bg1 = {u(0.30, 0.65), u(0.30, 0.65), u(0.30, 0.65)};
    p.skin = {u(0.55, 0.90), u(0.45, 0.75), u(0.35, 0.65)};
    p.iris = {u(0.05, 0.35), u(0.10, 0.45), u(0.30, 0.70)};
    p.mouth_color = {u(0.55, 0.85), u(0.10, 0.30), u(0.15, 0.35)};
    p.brow_color = {u(0.05, 0.30), u(0.05, 0.25), u(0.02, 0.20)};
    p.tex_amp = u(0.02, 0.06);
    p.tex_fx = u(2.0, 5.0);
    p.tex_fy = u(2.0, 5.0);
    p.tex_phase = u(0.0, 6.28);
    p.face_cx = u(0.47, 0.53);
    p.face_cy = u(0.50, 0.56);
    p.face_rx = u(0.26, 0.33);
    p.face_ry = u(0.32, 0.40);
    p.eye_dx = u(0.10, 0.14);
    p.eye_y = p.face_cy - u(0.08, 0.12);
    p.eye_r = u(0.035, 0.055);
    p.mouth_y = p.face_cy + u(0.14, 0.20);
    p.mouth_w = u(0.10, 0.15);
    p.mouth_th = u(0.018, 0.028);
    p.brow_len = u(0.05, 0.08);
    p.brow_th = u(0.010, 0.016);
    p.brow_gap = u(0.04, 0.06);
    return p;
}

struct FaceDeform {
    double mouth_curve = 0.0; // + corners up
    double mouth_open = 0.0;
    double mouth_shift = 0.0;
    double eye_scale = 1.0;
    double brow_tilt = 0.0;
    double brow_raise = 0.0;
};

// Neutral at p=0, apex at p=1; every expression keeps moving over the
// whole ramp so consecutive frames always differ.
inline FaceDeform deform_for(const std::string& label, double p) {
    FaceDeform d;
    if (label == "happiness") {
        d.mouth_curve = 0.045 * p;
        d.eye_scale = 1.0 - 0.25 * p;
        d.mouth_open = 0.010 * p;
    } else if (label == "sadness") {
        d.mouth_curve = -0.040 * p;
        d.brow_tilt = -0.35 * p;
        d.brow_raise = 0.010 * p;
    } else if (label == "surprise") {
        d.mouth_open = 0.045 * p;
        d.eye_scale = 1.0 + 0.45 * p;
        d.brow_raise = -0.030 * p;
    } else if (label == "anger") {
        d.brow_tilt = 0.55 * p;
        d.mouth_curve = -0.025 * p;
        d.eye_scale = 1.0 - 0.15 * p;
        d.brow_raise = 0.012 * p;
    } else if (label == "disgust") {
        d.mouth_curve = -0.030 * p;
        d.mouth_shift = 0.035 * p;
        d.eye_scale = 1.0 - 0.20 * p;
    } else if (label == "fear") {
        d.mouth_open = 0.030 * p;
        d.eye_scale = 1.0 + 0.30 * p;
        d.brow_tilt = -0.25 * p;
        d.brow_raise = -0.020 * p;
    } else {
        throw ConfigError("unknown expression label '" + label + "'");
    }
    return d;
}

// Alpha-blend helpers; geometry is in unit coordinates with ~1.3px soft
// edges so sub-pixel motion still changes quantized pixels.
inline void blend(Tensor<float>& img, long y, long x, const Rgb& c, double alpha) {
    if (alpha <= 0.0) return;
    const float a = static_cast<float>(std::min(alpha, 1.0));
    img.at(0, y, x) = (1.0f - a) * img.at(0, y, x) + a * static_cast<float>(c.r);
    img.at(1, y, x) = (1.0f - a) * img.at(1, y, x) + a * static_cast<float>(c.g);
    img.at(2, y, x) = (1.0f - a) * img.at(2, y, x) + a * static_cast<float>(c.b);
}

inline void add_ellipse(Tensor<float>& img, double cx, double cy, double rx, double ry,
                        const Rgb& color) {
    const long res = img.shape[1];
    const double edge = 1.3 / static_cast<double>(res);
    const double soft = edge / std::min(rx, ry);
    for (long y = 0; y < res; ++y)
        for (long x = 0; x < res; ++x) {
            const double px = (x + 0.5) / res, py = (y + 0.5) / res;
            const double dx = (px - cx) / rx, dy = (py - cy) / ry;
            const double d = std::sqrt(dx * dx + dy * dy);
            blend(img, y, x, color, (1.0 - d) / soft);
        }
}

inline void add_bar(Tensor<float>& img, double cx, double cy, double half_len, double half_th,
                    double angle, const Rgb& color) {
    const long res = img.shape[1];
    const double edge = 1.3 / static_cast<double>(res);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (long y = 0; y < res; ++y)
        for (long x = 0; x < res; ++x) {
            const double px = (x + 0.5) / res - cx, py = (y + 0.5) / res - cy;
            const double u = ca * px + sa * py, v = -sa * px + ca * py;
            const double d = std::max(std::abs(u) - half_len, std::abs(v) - half_th);
            blend(img, y, x, color, -d / edge + 1.0);
        }
}

// Curved mouth band: center line y(x) = my + curve/2 - curve*(x/w)^2, so
// positive curvature lifts the corners.
inline void add_mouth(Tensor<float>& img, const SubjectParams& sp, const FaceDeform& d) {
    const long res = img.shape[1];
    const double edge = 1.3 / static_cast<double>(res);
    const double mx = sp.face_cx + d.mouth_shift;
    for (long y = 0; y < res; ++y)
        for (long x = 0; x < res; ++x) {
            const double px = (x + 0.5) / res, py = (y + 0.5) / res;
            const double xr = (px - mx) / sp.mouth_w;
            if (std::abs(xr) > 1.3) continue;
            const double yc = sp.mouth_y + d.mouth_curve / 2.0 - d.mouth_curve * xr * xr;
            const double half = sp.mouth_th / 2.0 + d.mouth_open * std::max(0.0, 1.0 - xr * xr);
            const double dist = std::max(std::abs(py - yc) - half,
                                         (std::abs(xr) - 1.0) * sp.mouth_w);
            blend(img, y, x, sp.mouth_color, -dist / edge + 1.0);
        }
}

inline Tensor<float> render_face(const SubjectParams& sp, const FaceDeform& d, long res,
                                 bool with_background) {
    Tensor<float> img({3, res, res}); // working space is [0,1]
    if (with_background) {
        for (long y = 0; y < res; ++y)
            for (long x = 0; x < res; ++x) {
                const double px = (x + 0.5) / res, py = (y + 0.5) / res;
                const double g = 0.5 * (px + py);
                const double tex = sp.tex_amp * std::sin(6.28318 * sp.tex_fx * px + sp.tex_phase) *
                                   std::sin(6.28318 * sp.tex_fy * py);
                img.at(0, y, x) = static_cast<float>(sp.bg0.r + (sp.bg1.r - sp.bg0.r) * g + tex);
                img.at(1, y, x) = static_cast<float>(sp.bg0.g + (sp.bg1.g - sp.bg0.g) * g + tex);
                img.at(2, y, x) = static_cast<float>(sp.bg0.b + (sp.bg1.b - sp.bg0.b) * g + tex);
            }
    }

    add_ellipse(img, sp.face_cx, sp.face_cy, sp.face_rx, sp.face_ry, sp.skin);
    const Rgb white{0.92, 0.92, 0.92};
    for (int side : {-1, 1}) {
        const double ex = sp.face_cx + side * sp.eye_dx;
        const double ey = sp.eye_y;
        add_ellipse(img, ex, ey, sp.eye_r * 1.25, sp.eye_r * d.eye_scale, white);
        add_ellipse(img, ex, ey, sp.eye_r * 0.55, sp.eye_r * 0.55 * d.eye_scale, sp.iris);
        add_bar(img, ex, ey - sp.brow_gap + d.brow_raise, sp.brow_len, sp.brow_th,
                side * d.brow_tilt, sp.brow_color);
    }
    add_mouth(img, sp, d);

    // to [-1,1]
    Tensor<float> out({3, res, res});
    for (long i = 0; i < img.numel(); ++i)
        out[i] = 2.0f * std::clamp(img[i], 0.0f, 1.0f) - 1.0f;
    return out;
}

} // namespace synth_detail

// Writes frames + manifest under out_dir and returns the loaded manifest.
// Subject split is subject-independent at roughly 75/25 with at least one
// training subject (and one test subject when there are two or more).
inline SampleManifest synthesize_toy_dataset(const std::filesystem::path& out_dir,
                                             const SynthConfig& cfg) {
    using namespace synth_detail;
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    long n_train = std::max<long>(1, std::llround(0.75 * cfg.n_subjects));
    if (cfg.n_subjects >= 2 && n_train == cfg.n_subjects) n_train = cfg.n_subjects - 1;

    SampleManifest manifest;
    manifest.base_dir = out_dir;
    const long low = cfg.effective_low_res();

    for (int s = 0; s < cfg.n_subjects; ++s) {
        char sid[16];
        std::snprintf(sid, sizeof(sid), "s%02d", s);
        const SubjectParams sp = subject_params(cfg.seed, s);
        const std::filesystem::path subject_dir = out_dir / sid;
        std::filesystem::create_directories(subject_dir);

        const Tensor<float> identity = render_face(sp, deform_for("happiness", 0.0), cfg.high_res,
                                                   true); // p=0 is neutral for every label
        save_image(identity, subject_dir / "identity.png");

        for (const auto& label : expression_labels()) {
            VideoClip high, low_clip;
            for (int k = 0; k < cfg.n_frames; ++k) {
                const double p = cfg.n_frames == 1 ? 0.0
                                                   : static_cast<double>(k) / (cfg.n_frames - 1);
                const FaceDeform d = deform_for(label, p);
                high.frames.push_back(render_face(sp, d, cfg.high_res, true));
                low_clip.frames.push_back(
                    area_average(render_face(sp, d, cfg.high_res, false), low, low));
            }
            save_clip_dir(high, subject_dir / label / "high");
            save_clip_dir(low_clip, subject_dir / label / "low");

            ManifestRecord r;
            r.subject_id = sid;
            r.expression_label = label;
            r.identity_image_path = std::string(sid) + "/identity.png";
            r.high_res_dir = std::string(sid) + "/" + label + "/high";
            r.low_res_dir = std::string(sid) + "/" + label + "/low";
            r.split = s < n_train ? "train" : "test";
            manifest.records.push_back(std::move(r));
        }
    }

    save_manifest(manifest, out_dir / "manifest.json");
    validate_manifest(manifest);
    return manifest;
}

} // namespace revid
