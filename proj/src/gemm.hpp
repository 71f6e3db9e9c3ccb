#pragma once

#include <cstddef>

// Row-major dense products, all accumulating into C. Loop orders keep the
// innermost loop contiguous; the nn kernel sums over k in ascending order so
// it agrees bitwise with a naive triple loop when FP contraction is off.
namespace sf2f::detail {

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) acc[l] += x[i + l] * y[i + l];
    }
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += dot(ai, b + j * k, k);
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = ap[i];
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

}  // namespace sf2f::detail
