#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "revid/image_io.hpp"
#include "revid/training.hpp"
#include "revid/video.hpp"

namespace revid {

inline const std::array<std::string, 6>& expression_labels() {
    static const std::array<std::string, 6> labels = {"happiness", "sadness", "surprise",
                                                      "anger",     "disgust", "fear"};
    return labels;
}

inline bool is_expression_label(const std::string& s) {
    for (const auto& l : expression_labels())
        if (l == s) return true;
    return false;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

// One clip of one subject. Paths are relative to the manifest directory;
// low_res_dir may be empty, in which case the low-res view is derived by
// degrade() at load time.
struct ManifestRecord {
    std::string subject_id;
    std::string expression_label;
    std::string identity_image_path;
    std::string low_res_dir;
    std::string high_res_dir;
    std::string split; // "train" | "test"
};

struct SampleManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRecord> records;

    std::vector<ManifestRecord> for_split(const std::string& split) const {
        std::vector<ManifestRecord> out;
        for (const auto& r : records)
            if (r.split == split) out.push_back(r);
        return out;
    }
};

inline void to_json(nlohmann::json& j, const ManifestRecord& r) {
    j = nlohmann::json{{"subject_id", r.subject_id},
                       {"expression_label", r.expression_label},
                       {"identity_image_path", r.identity_image_path},
                       {"low_res_dir", r.low_res_dir},
                       {"high_res_dir", r.high_res_dir},
                       {"split", r.split}};
}

inline void from_json(const nlohmann::json& j, ManifestRecord& r) {
    j.at("subject_id").get_to(r.subject_id);
    j.at("expression_label").get_to(r.expression_label);
    j.at("identity_image_path").get_to(r.identity_image_path);
    r.low_res_dir = j.value("low_res_dir", "");
    j.at("high_res_dir").get_to(r.high_res_dir);
    j.at("split").get_to(r.split);
}

// Split hygiene and label/path validity are enforced at load time.
inline void validate_manifest(const SampleManifest& m) {
    std::set<std::string> train_subjects, test_subjects;
    for (const auto& r : m.records) {
        if (!is_expression_label(r.expression_label))
            throw ConfigError("manifest: unknown expression_label '" + r.expression_label + "'");
        if (r.split != "train" && r.split != "test")
            throw ConfigError("manifest: split must be train|test, got '" + r.split + "'");
        (r.split == "train" ? train_subjects : test_subjects).insert(r.subject_id);
        const auto identity = m.base_dir / r.identity_image_path;
        if (!std::filesystem::exists(identity))
            throw IoError("manifest: missing identity image " + identity.string());
        const auto high = m.base_dir / r.high_res_dir;
        if (!std::filesystem::is_directory(high))
            throw IoError("manifest: missing high-res dir " + high.string());
        if (!r.low_res_dir.empty() && !std::filesystem::is_directory(m.base_dir / r.low_res_dir))
            throw IoError("manifest: missing low-res dir " +
                          (m.base_dir / r.low_res_dir).string());
    }
    for (const auto& s : train_subjects)
        if (test_subjects.count(s))
            throw ConfigError("manifest: subject '" + s + "' appears in both splits");
}

inline SampleManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad manifest " + path.string() + ": " + e.what());
    }
    SampleManifest m;
    m.base_dir = path.parent_path();
    m.records = j.at("records").get<std::vector<ManifestRecord>>();
    validate_manifest(m);
    return m;
}

inline void save_manifest(const SampleManifest& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["records"] = m.records;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// clip preparation
// ---------------------------------------------------------------------------

// Uniform temporal resampling by nearest-index selection: frame k of the
// output is source frame round(k*(N-1)/(target-1)). First and last frames
// are always preserved; no blending.
inline VideoClip standardize_clip(const VideoClip& clip, long target_n) {
    if (clip.frames.empty()) throw InputError("standardize_clip: empty clip");
    if (target_n < 1) throw InputError("standardize_clip: target_n must be >= 1");
    const long n = clip.frame_count();
    VideoClip out;
    out.fps = clip.fps;
    for (long k = 0; k < target_n; ++k) {
        const long src =
            target_n == 1
                ? 0
                : std::llround(static_cast<double>(k) * (n - 1) / static_cast<double>(target_n - 1));
        out.frames.push_back(clip.frames[static_cast<size_t>(src)]);
    }
    return out;
}

// Background removal + area-averaging downsample. Masks are optional
// per-frame (H,W) maps; masked-out pixels turn black before averaging.
// With no masks the frames are downsampled as-is (synthetic data already
// has a black background).
inline VideoClip degrade(const VideoClip& v_high, const std::vector<Tensor<float>>* face_masks,
                         long target = 64) {
    v_high.validate();
    if (face_masks && static_cast<long>(face_masks->size()) != v_high.frame_count())
        throw ShapeError("degrade: mask count " + std::to_string(face_masks->size()) +
                         " != frame count " + std::to_string(v_high.frame_count()));
    VideoClip out;
    out.fps = v_high.fps;
    for (long i = 0; i < v_high.frame_count(); ++i) {
        const Tensor<float>& f = v_high.frames[static_cast<size_t>(i)];
        Tensor<float> masked = f;
        if (face_masks) {
            const Tensor<float>& mask = (*face_masks)[static_cast<size_t>(i)];
            if (mask.rank() != 2 || mask.shape[0] != f.shape[1] || mask.shape[1] != f.shape[2])
                throw ShapeError("degrade: mask " + shape_str(mask) + " does not match frame " +
                                 shape_str(f));
            for (long c = 0; c < 3; ++c)
                for (long y = 0; y < f.shape[1]; ++y)
                    for (long x = 0; x < f.shape[2]; ++x)
                        if (mask.at(y, x) == 0.0f) masked.at(c, y, x) = -1.0f; // black
        }
        out.frames.push_back(area_average(masked, target, target));
    }
    return out;
}

// ---------------------------------------------------------------------------
// training pair stream
// ---------------------------------------------------------------------------

struct ClipPair {
    VideoClip v_low;
    VideoClip v_high;
    Tensor<float> identity;
    ManifestRecord record;
};

// Disk-backed (f_low, I_Id, f_high, f_prev) tuples, flattened over
// (record, frame). Clips are standardized on load; the previous frame of
// a clip's first sample is the identity image. Decoded clips are cached
// per record for sequential access.
class PairDataset : public SampleDataset {
  public:
    PairDataset(SampleManifest manifest, const std::string& split, long clip_frames,
                long low_res)
        : manifest_(std::move(manifest)), records_(manifest_.for_split(split)),
          clip_frames_(clip_frames), low_res_(low_res) {
        if (records_.empty()) return;
        // probe the first clip for the per-clip sample count
        frames_per_clip_ = clip_frames_ > 0
                               ? clip_frames_
                               : load_clip_dir(manifest_.base_dir / records_[0].high_res_dir)
                                     .frame_count();
    }

    long clip_count() const { return static_cast<long>(records_.size()); }
    long frames_per_clip() const { return frames_per_clip_; }
    long size() const override { return clip_count() * frames_per_clip_; }

    ClipPair clip(long index) const {
        if (index < 0 || index >= clip_count())
            throw IndexError("clip index " + std::to_string(index) + " out of range");
        if (cache_ && cache_->first == index) return cache_->second;
        const ManifestRecord& r = records_[static_cast<size_t>(index)];
        ClipPair pair;
        pair.record = r;
        pair.identity = load_image(manifest_.base_dir / r.identity_image_path);
        try {
            pair.v_high = load_clip_dir(manifest_.base_dir / r.high_res_dir);
            if (clip_frames_ > 0) pair.v_high = standardize_clip(pair.v_high, clip_frames_);
            if (r.low_res_dir.empty()) {
                pair.v_low = degrade(pair.v_high, nullptr, low_res_);
            } else {
                pair.v_low = load_clip_dir(manifest_.base_dir / r.low_res_dir);
                if (clip_frames_ > 0) pair.v_low = standardize_clip(pair.v_low, clip_frames_);
            }
        } catch (const IoError& e) {
            throw IoError("record " + r.subject_id + "/" + r.expression_label + ": " + e.what());
        }
        if (pair.v_low.frame_count() != pair.v_high.frame_count())
            throw InputError("record " + r.subject_id + "/" + r.expression_label +
                             ": low/high frame counts differ (" +
                             std::to_string(pair.v_low.frame_count()) + " vs " +
                             std::to_string(pair.v_high.frame_count()) + ")");
        cache_ = {index, pair};
        return pair;
    }

    TrainingSample get(long index) const override {
        const long clip_idx = index / frames_per_clip_;
        const long frame = index % frames_per_clip_; // 0-based
        ClipPair pair = clip(clip_idx);
        TrainingSample s;
        s.low_res = pair.v_low.frames[static_cast<size_t>(frame)];
        s.identity = pair.identity;
        s.target = pair.v_high.frames[static_cast<size_t>(frame)];
        s.previous =
            frame == 0 ? pair.identity : pair.v_high.frames[static_cast<size_t>(frame - 1)];
        s.subject_id = pair.record.subject_id;
        s.expression_label = pair.record.expression_label;
        s.frame_index = static_cast<int>(frame + 1);
        return s;
    }

  private:
    SampleManifest manifest_;
    std::vector<ManifestRecord> records_;
    long clip_frames_ = 0;
    long low_res_ = 64;
    long frames_per_clip_ = 0;
    mutable std::optional<std::pair<long, ClipPair>> cache_;
};

} // namespace revid
