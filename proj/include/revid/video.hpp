#pragma once

#include <algorithm>
#include <vector>

#include "revid/errors.hpp"
#include "revid/tensor.hpp"

namespace revid {

// Ordered frame sequence. Frames are (3,H,W) float tensors in [-1,1];
// fps is carried as optional metadata only.
struct VideoClip {
    std::vector<Tensor<float>> frames;
    double fps = 0.0;

    long frame_count() const { return static_cast<long>(frames.size()); }

    long height() const { return frames.empty() ? 0 : frames.front().shape[1]; }
    long width() const { return frames.empty() ? 0 : frames.front().shape[2]; }

    void validate() const {
        if (frames.empty()) throw InputError("clip has no frames");
        for (const auto& f : frames) {
            if (f.rank() != 3 || f.shape[0] != 3)
                throw ShapeError("clip frame must be (3,H,W), got " + shape_str(f));
            if (f.shape != frames.front().shape)
                throw ShapeError("clip frames disagree on resolution: " + shape_str(f) +
                                 " vs " + shape_str(frames.front()));
        }
    }
};

inline Tensor<float> clamp_frame(const Tensor<float>& f, float lo = -1.0f, float hi = 1.0f) {
    Tensor<float> out(f.shape);
    for (long i = 0; i < f.numel(); ++i) out[i] = std::clamp(f[i], lo, hi);
    return out;
}

// Nearest-neighbor spatial resize of a single (3,H,W) frame.
inline Tensor<float> resize_nearest(const Tensor<float>& f, long out_h, long out_w) {
    if (f.rank() != 3) throw ShapeError("resize_nearest: expected (C,H,W), got " + shape_str(f));
    const long C = f.shape[0], H = f.shape[1], W = f.shape[2];
    Tensor<float> out({C, out_h, out_w});
    for (long c = 0; c < C; ++c)
        for (long y = 0; y < out_h; ++y) {
            const long sy = std::min(H - 1, y * H / out_h);
            for (long x = 0; x < out_w; ++x) {
                const long sx = std::min(W - 1, x * W / out_w);
                out.at(c, y, x) = f.at(c, sy, sx);
            }
        }
    return out;
}

inline VideoClip resize_nearest(const VideoClip& clip, long out_h, long out_w) {
    VideoClip out;
    out.fps = clip.fps;
    for (const auto& f : clip.frames) out.frames.push_back(resize_nearest(f, out_h, out_w));
    return out;
}

// Exact area-averaging downsample with fractional pixel coverage; for
// divisible ratios this reduces to plain block means.
inline Tensor<float> area_average(const Tensor<float>& f, long out_h, long out_w) {
    if (f.rank() != 3) throw ShapeError("area_average: expected (C,H,W), got " + shape_str(f));
    const long C = f.shape[0], H = f.shape[1], W = f.shape[2];
    if (out_h < 1 || out_w < 1 || out_h > H || out_w > W)
        throw ShapeError("area_average: invalid target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " from " + shape_str(f));
    Tensor<float> out({C, out_h, out_w});
    for (long i = 0; i < out_h; ++i) {
        const double y0 = static_cast<double>(i) * H / out_h;
        const double y1 = static_cast<double>(i + 1) * H / out_h;
        for (long j = 0; j < out_w; ++j) {
            const double x0 = static_cast<double>(j) * W / out_w;
            const double x1 = static_cast<double>(j + 1) * W / out_w;
            for (long c = 0; c < C; ++c) {
                double acc = 0;
                for (long y = static_cast<long>(y0); y < static_cast<long>(std::ceil(y1)); ++y) {
                    const double wy = std::min<double>(y1, y + 1) - std::max<double>(y0, y);
                    for (long x = static_cast<long>(x0); x < static_cast<long>(std::ceil(x1));
                         ++x) {
                        const double wx = std::min<double>(x1, x + 1) - std::max<double>(x0, x);
                        acc += wy * wx * f.at(c, y, x);
                    }
                }
                out.at(c, i, j) = static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
            }
        }
    }
    return out;
}

} // namespace revid
