// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.

#include <immintrin.h>

#include "gemm_impl.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec::simd {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

struct Avx2Ops {
    static double dot(const double* a, const double* b, std::size_t n) {
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        __m256d acc2 = _mm256_setzero_pd();
        __m256d acc3 = _mm256_setzero_pd();
        std::size_t i = 0;
        for (; i + 16 <= n; i += 16) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
            acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
            acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
        }
        for (; i + 4 <= n; i += 4) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        }
        double sum = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
        for (; i < n; ++i) sum += a[i] * b[i];
        return sum;
    }

    static double squared_distance(const double* a, const double* b, std::size_t n) {
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        std::size_t i = 0;
        for (; i + 8 <= n; i += 8) {
            const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
            const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
            acc0 = _mm256_fmadd_pd(d0, d0, acc0);
            acc1 = _mm256_fmadd_pd(d1, d1, acc1);
        }
        for (; i + 4 <= n; i += 4) {
            const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
            acc0 = _mm256_fmadd_pd(d0, d0, acc0);
        }
        double sum = hsum(_mm256_add_pd(acc0, acc1));
        for (; i < n; ++i) {
            const double d = a[i] - b[i];
            sum += d * d;
        }
        return sum;
    }

    static void axpy(double* y, double alpha, const double* x, std::size_t n) {
        const __m256d va = _mm256_set1_pd(alpha);
        std::size_t i = 0;
        for (; i + 8 <= n; i += 8) {
            _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
            _mm256_storeu_pd(y + i + 4,
                             _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
        }
        for (; i + 4 <= n; i += 4) {
            _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        }
        for (; i < n; ++i) y[i] += alpha * x[i];
    }
};

}  // namespace

const KernelTable& avx2_table() noexcept {
    static const KernelTable table{
        Isa::avx2,
        &Avx2Ops::dot,
        &Avx2Ops::squared_distance,
        &Avx2Ops::axpy,
        &detail::gemm_nn<Avx2Ops>,
        &detail::gemm_tn<Avx2Ops>,
        &detail::gemm_nt<Avx2Ops>,
    };
    return table;
}

}  // namespace semdec::simd
