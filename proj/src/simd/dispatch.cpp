#include <cstdlib>
#include <string>
#include <string_view>

#include "semdec/error.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec::simd {

const KernelTable& scalar_table() noexcept;
#if defined(SEMDEC_WITH_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(SEMDEC_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() noexcept {
    if (const char* env = std::getenv("SEMDEC_SIMD")) {
        const std::string_view v(env);
        if (v == "scalar") return Isa::scalar;
        if (v == "avx2" && cpu_has_avx2()) return Isa::avx2;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

const KernelTable*& active_table() noexcept {
    static const KernelTable* table = &kernels(initial_isa());
    return table;
}

}  // namespace

bool isa_available(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2: return cpu_has_avx2();
    }
    return false;
}

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

const KernelTable& kernels(Isa isa) {
    if (!isa_available(isa)) {
        throw ConfigError("SIMD variant not available on this CPU: " + std::string(isa_name(isa)));
    }
#if defined(SEMDEC_WITH_AVX2)
    if (isa == Isa::avx2) return avx2_table();
#endif
    return scalar_table();
}

const KernelTable& kernels() noexcept { return *active_table(); }

Isa active_isa() noexcept { return active_table()->isa; }

void set_active_isa(Isa isa) { active_table() = &kernels(isa); }

}  // namespace semdec::simd
