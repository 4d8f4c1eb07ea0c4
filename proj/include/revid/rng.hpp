#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "revid/tensor.hpp"

namespace revid {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Folds several seed words into one stream seed. Used to derive
// independent, reproducible RNG streams from (seed, tag, step, ...).
inline std::uint64_t seed_mix(std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = 0x2545f4914f6cdd1dULL;
    for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w));
    return h;
}

// Stream tags for seed derivation.
namespace stream {
constexpr std::uint64_t kInit = 0x696e6974;      // model weight init
constexpr std::uint64_t kTrainStep = 0x73746570; // per-step training draws
constexpr std::uint64_t kShuffle = 0x73687566;   // per-epoch permutation
constexpr std::uint64_t kSampleInit = 0x78696e69; // x_T draw at inference
constexpr std::uint64_t kSampleZ = 0x7a7a7a7a;    // z draws at inference
constexpr std::uint64_t kSynth = 0x73796e74;      // toy dataset synthesis
} // namespace stream

// Seeded generator. Draws are always made in double and cast at the
// call site, so float and double models consume identical streams.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double normal() { return normal_(gen_); }
    double uniform() { return unit_(gen_); }

    // Inclusive on both ends.
    long uniform_int(long lo, long hi) {
        return std::uniform_int_distribution<long>(lo, hi)(gen_);
    }

    template <typename Real>
    void fill_normal(Tensor<Real>& t) {
        for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(normal());
    }

    template <typename Real>
    Tensor<Real> normal_tensor(std::vector<long> shape) {
        Tensor<Real> t(std::move(shape));
        fill_normal(t);
        return t;
    }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<long> permutation(long n) {
        std::vector<long> p(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        for (long i = n - 1; i > 0; --i) std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(uniform_int(0, i))]);
        return p;
    }

  private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

// Counted Gaussian source used by the samplers; the draw counters back
// the reproducibility audits (one z tensor per reverse step, etc).
class CountedNoise {
  public:
    explicit CountedNoise(std::uint64_t seed) : rng_(seed) {}

    template <typename Real>
    Tensor<Real> draw(const std::vector<long>& shape) {
        ++draws_;
        return rng_.normal_tensor<Real>(shape);
    }

    std::uint64_t draws() const { return draws_; }

  private:
    Rng rng_;
    std::uint64_t draws_ = 0;
};

} // namespace revid
