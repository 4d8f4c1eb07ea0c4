#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <vector>

#include <Eigen/Core>

#include "revid/errors.hpp"

namespace revid {

// Dense row-major tensor. Rank is dynamic; the codebase uses
// (C,H,W) for single images and (N,C,H,W) for batches.
template <typename Real>
struct Tensor {
    std::vector<long> shape;
    std::vector<Real> data;

    Tensor() = default;
    explicit Tensor(std::vector<long> s) : shape(std::move(s)), data(count(shape), Real(0)) {}
    Tensor(std::initializer_list<long> s) : Tensor(std::vector<long>(s)) {}

    static long count(const std::vector<long>& s) {
        long n = 1;
        for (long d : s) n *= d;
        return n;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    long dim(int i) const { return shape[static_cast<size_t>(i)]; }

    Real* ptr() { return data.data(); }
    const Real* ptr() const { return data.data(); }

    Real& operator[](long i) { return data[static_cast<size_t>(i)]; }
    const Real& operator[](long i) const { return data[static_cast<size_t>(i)]; }

    Real& at(long y, long x) { return data[y * shape[1] + x]; }
    const Real& at(long y, long x) const { return data[y * shape[1] + x]; }
    Real& at(long c, long y, long x) { return data[(c * shape[1] + y) * shape[2] + x]; }
    const Real& at(long c, long y, long x) const { return data[(c * shape[1] + y) * shape[2] + x]; }
    Real& at(long n, long c, long y, long x) {
        return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    const Real& at(long n, long c, long y, long x) const {
        return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape);
        for (long i = 0; i < numel(); ++i) out[i] = static_cast<Other>(data[i]);
        return out;
    }
};

template <typename Real>
std::string shape_str(const Tensor<Real>& t) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < t.shape.size(); ++i) os << (i ? "," : "") << t.shape[i];
    os << ")";
    return os.str();
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename Real>
using MatMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// View a contiguous tensor (or a slice of it) as a rows x cols matrix.
template <typename Real>
MatMap<Real> as_matrix(Tensor<Real>& t, long rows, long cols, long offset = 0) {
    return MatMap<Real>(t.ptr() + offset, rows, cols);
}
template <typename Real>
ConstMatMap<Real> as_matrix(const Tensor<Real>& t, long rows, long cols, long offset = 0) {
    return ConstMatMap<Real>(t.ptr() + offset, rows, cols);
}

} // namespace revid
