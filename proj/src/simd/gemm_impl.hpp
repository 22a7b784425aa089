#pragma once

#include <algorithm>
#include <cstddef>

// Loop nests shared by every ISA. `Ops` supplies dot and axpy for the target.

namespace semdec::simd::detail {

template <typename Ops>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            Ops::axpy(ci, ai[p], b + p * n, n);
        }
    }
}

template <typename Ops>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    std::fill(c, c + m * n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            Ops::axpy(c + i * n, ap[i], bp, n);
        }
    }
}

template <typename Ops>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] = Ops::dot(ai, b + j * k, k);
    }
}

}  // namespace semdec::simd::detail
