#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense inner-loop kernels. Every kernel has a scalar reference and, where the
// CPU supports it, an AVX2+FMA variant. The active variant is chosen once at
// startup (best available, overridable with SEMDEC_SIMD=scalar|avx2) and can
// be switched explicitly for equivalence tests.

namespace semdec::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double* y, double alpha, const double* x, std::size_t n);
    // C[m×n] = A[m×k]·B[k×n]
    void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
    // C[m×n] = Aᵀ·B with A stored [k×m]
    void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
    // C[m×n] = A·Bᵀ with B stored [n×k]
    void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
};

bool isa_available(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

/// Table for a specific ISA. Throws ConfigError if the ISA is unavailable.
const KernelTable& kernels(Isa isa);
/// Currently active table.
const KernelTable& kernels() noexcept;

Isa active_isa() noexcept;
/// Not thread-safe; call between computations.
void set_active_isa(Isa isa);

/// RAII override of the active ISA, restored on scope exit.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
    ~ScopedIsa() { set_active_isa(previous_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa previous_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    return kernels().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return kernels().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(std::span<double> y, double alpha, std::span<const double> x) {
    kernels().axpy(y.data(), alpha, x.data(), y.size());
}

}  // namespace semdec::simd
