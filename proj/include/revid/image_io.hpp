#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "revid/video.hpp"

namespace revid {

// 8-bit <-> [-1,1] value mapping: v = px/127.5 - 1, inverse rounded half
// away from zero, so an 8-bit frame round-trips exactly.
inline float pixel_to_unit(std::uint8_t px) {
    return static_cast<float>(px) / 127.5f - 1.0f;
}

inline std::uint8_t unit_to_pixel(float v) {
    const long r = std::lround((static_cast<double>(v) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp<long>(r, 0, 255));
}

inline Tensor<float> load_image(const std::filesystem::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR); // BGR, 8-bit
    if (img.empty()) throw IoError("cannot read image: " + path.string());
    Tensor<float> out({3, img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            out.at(0, y, x) = pixel_to_unit(row[x][2]); // R
            out.at(1, y, x) = pixel_to_unit(row[x][1]); // G
            out.at(2, y, x) = pixel_to_unit(row[x][0]); // B
        }
    }
    return out;
}

inline void save_image(const Tensor<float>& frame, const std::filesystem::path& path) {
    if (frame.rank() != 3 || frame.shape[0] != 3)
        throw ShapeError("save_image: expected (3,H,W), got " + shape_str(frame));
    const long H = frame.shape[1], W = frame.shape[2];
    cv::Mat img(static_cast<int>(H), static_cast<int>(W), CV_8UC3);
    for (long y = 0; y < H; ++y) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
        for (long x = 0; x < W; ++x) {
            row[x][2] = unit_to_pixel(frame.at(0, y, x));
            row[x][1] = unit_to_pixel(frame.at(1, y, x));
            row[x][0] = unit_to_pixel(frame.at(2, y, x));
        }
    }
    if (!cv::imwrite(path.string(), img))
        throw IoError("cannot write image: " + path.string());
}

// Canonical clip format: a directory of numbered PNG frames, ordered by
// filename ("000.png", "001.png", ...).
inline VideoClip load_clip_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("not a frame directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    if (files.empty()) throw IoError("no .png frames in " + dir.string());
    std::sort(files.begin(), files.end());
    VideoClip clip;
    for (const auto& f : files) clip.frames.push_back(load_image(f));
    clip.validate();
    return clip;
}

inline void save_clip_dir(const VideoClip& clip, const std::filesystem::path& dir) {
    clip.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    int digits = 3;
    while (clip.frame_count() >= std::pow(10, digits)) ++digits;
    for (long i = 0; i < clip.frame_count(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%0*ld.png", digits, i);
        save_image(clip.frames[static_cast<size_t>(i)], dir / name);
    }
}

} // namespace revid
