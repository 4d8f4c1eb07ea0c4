#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "revid/checkpoint.hpp"
#include "revid/training.hpp"

using namespace revid;
using testutil::tiny_denoiser_config;
using testutil::tiny_train_config;
using testutil::toy_clip_samples;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("revid_ckpt_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

} // namespace

TEST(Checkpoint, RoundTripBitExact) {
    TempDir dir;
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    auto samples = toy_clip_samples(2, 8, 4);
    tr.train_step({samples[0], samples[1]});
    tr.train_step({samples[0], samples[1]});

    Checkpoint<float> ck = tr.snapshot();
    const fs::path file = dir.path / "model.ckpt";
    save_checkpoint(file, ck);
    Checkpoint<float> back = load_checkpoint<float>(file);

    EXPECT_EQ(back.global_step, 2);
    EXPECT_EQ(back.adam_steps, 2);
    ASSERT_EQ(back.weights.size(), ck.weights.size());
    ASSERT_EQ(back.ema.size(), ck.ema.size());
    for (size_t i = 0; i < ck.weights.size(); ++i) {
        EXPECT_EQ(back.weights[i].first, ck.weights[i].first);
        ASSERT_EQ(back.weights[i].second.shape, ck.weights[i].second.shape);
        for (long j = 0; j < ck.weights[i].second.numel(); ++j) {
            EXPECT_EQ(back.weights[i].second[j], ck.weights[i].second[j]);
            EXPECT_EQ(back.ema[i].second[j], ck.ema[i].second[j]);
            EXPECT_EQ(back.adam_m[i].second[j], ck.adam_m[i].second[j]);
            EXPECT_EQ(back.adam_v[i].second[j], ck.adam_v[i].second[j]);
        }
    }
    EXPECT_EQ(back.denoiser_config.hidden_channels, ck.denoiser_config.hidden_channels);
    EXPECT_EQ(back.train_config.seed, ck.train_config.seed);
}

TEST(Checkpoint, ScheduleRebuildsBitExact) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    Checkpoint<float> ck = tr.snapshot();
    NoiseSchedule a = ck.schedule();
    NoiseSchedule b = build_schedule(ck.train_config.total_steps, ck.train_config.beta_start,
                                     ck.train_config.beta_end);
    ASSERT_EQ(a.alpha_bar.size(), b.alpha_bar.size());
    for (size_t i = 0; i < a.alpha_bar.size(); ++i) {
        EXPECT_EQ(a.beta[i], b.beta[i]);
        EXPECT_EQ(a.alpha_bar[i], b.alpha_bar[i]);
    }
}

TEST(Checkpoint, CorruptPayloadDetected) {
    TempDir dir;
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    const fs::path file = dir.path / "model.ckpt";
    save_checkpoint(file, tr.snapshot());

    // flip one payload byte near the end of the file
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-5, std::ios::end);
    char c;
    f.read(&c, 1);
    f.seekp(-5, std::ios::end);
    c = static_cast<char>(c ^ 0x40);
    f.write(&c, 1);
    f.close();

    try {
        load_checkpoint<float>(file);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }
}

TEST(Checkpoint, ScalarTypeMismatchRejected) {
    TempDir dir;
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    const fs::path file = dir.path / "model.ckpt";
    save_checkpoint(file, tr.snapshot());
    EXPECT_THROW(load_checkpoint<double>(file), IoError);
}

TEST(Checkpoint, MissingFileNamesPath) {
    try {
        load_checkpoint<float>("/nonexistent/dir/model.ckpt");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/model.ckpt"), std::string::npos);
    }
}

TEST(Checkpoint, BuildDenoiserSelectsWeights) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    auto samples = toy_clip_samples(2, 8, 4);
    for (int i = 0; i < 5; ++i) tr.train_step({samples[0], samples[1]});
    Checkpoint<float> ck = tr.snapshot();

    auto live = build_denoiser(ck, false);
    auto ema = build_denoiser(ck, true);
    // after a few steps live and EMA weights differ
    bool differ = false;
    for (size_t i = 0; i < ck.weights.size() && !differ; ++i)
        for (long j = 0; j < ck.weights[i].second.numel(); ++j)
            if (live.params().entries[i].second->value[j] !=
                ema.params().entries[i].second->value[j]) {
                differ = true;
                break;
            }
    EXPECT_TRUE(differ);
    // and each matches its section exactly
    for (size_t i = 0; i < ck.weights.size(); ++i)
        for (long j = 0; j < ck.weights[i].second.numel(); ++j) {
            EXPECT_EQ(live.params().entries[i].second->value[j], ck.weights[i].second[j]);
            EXPECT_EQ(ema.params().entries[i].second->value[j], ck.ema[i].second[j]);
        }
}
