#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"

namespace geoadapt::nn {

/// Dense row-major tensor of rank 1 or 2. Deliberately minimal: the tape
/// owns all the math, this owns the storage.
template <typename T>
struct Tensor {
    std::vector<size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size())
            throw Error("tensor shape " + shape_str() + " does not match " +
                        std::to_string(data.size()) + " elements");
    }

    static size_t numel(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    static Tensor zeros(std::vector<size_t> s) {
        size_t n = numel(s);
        return Tensor(std::move(s), std::vector<T>(n, T(0)));
    }
    static Tensor full(std::vector<size_t> s, T value) {
        size_t n = numel(s);
        return Tensor(std::move(s), std::vector<T>(n, value));
    }
    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    size_t size() const { return data.size(); }
    size_t rank() const { return shape.size(); }
    size_t rows() const { return rank() == 2 ? shape[0] : 1; }
    size_t cols() const { return rank() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

    T& at(size_t i, size_t j) { return data[i * cols() + j]; }
    const T& at(size_t i, size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> d(data.size());
        for (size_t i = 0; i < data.size(); ++i) d[i] = static_cast<U>(data[i]);
        return Tensor<U>(shape, std::move(d));
    }
};

/// C = op(A) * op(B) with row-major storage; accumulates when requested.
/// m, n, k refer to the logical (post-transpose) dimensions.
template <typename T>
void gemm(const T* a, const T* b, T* c, size_t m, size_t n, size_t k, bool trans_a, bool trans_b,
          bool accumulate) {
    if (!accumulate)
        for (size_t i = 0; i < m * n; ++i) c[i] = T(0);
    if (!trans_a && !trans_b) {
        for (size_t i = 0; i < m; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (size_t p = 0; p < k; ++p) {
                T av = ai[p];
                const T* bp = b + p * n;
                for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (size_t i = 0; i < m; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (size_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T acc = T(0);
                for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                ci[j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        // A stored (k, m): stream rows of A and B together.
        for (size_t p = 0; p < k; ++p) {
            const T* ap = a + p * m;
            const T* bp = b + p * n;
            for (size_t i = 0; i < m; ++i) {
                T av = ap[i];
                T* ci = c + i * n;
                for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else {
        // Both transposed; only hit by unusual graphs, so plain strides.
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) {
                T acc = T(0);
                for (size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
                c[i * n + j] += acc;
            }
    }
}

}  // namespace geoadapt::nn
