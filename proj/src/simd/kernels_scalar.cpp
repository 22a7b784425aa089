#include "gemm_impl.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec::simd {
namespace {

struct ScalarOps {
    static double dot(const double* a, const double* b, std::size_t n) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
        return sum;
    }
    static double squared_distance(const double* a, const double* b, std::size_t n) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = a[i] - b[i];
            sum += d * d;
        }
        return sum;
    }
    static void axpy(double* y, double alpha, const double* x, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
    }
};

}  // namespace

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{
        Isa::scalar,
        &ScalarOps::dot,
        &ScalarOps::squared_distance,
        &ScalarOps::axpy,
        &detail::gemm_nn<ScalarOps>,
        &detail::gemm_tn<ScalarOps>,
        &detail::gemm_nt<ScalarOps>,
    };
    return table;
}

}  // namespace semdec::simd
