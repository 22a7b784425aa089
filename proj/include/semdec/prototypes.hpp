#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "semdec/matrix.hpp"

namespace semdec {

/// Per-class memory bank of neural semantic prototypes, updated only by EMA.
struct PrototypeBank {
    Matrix centres;          // K × d
    double alpha = 0.5;      // momentum
    std::vector<bool> seen;  // class updated at least once

    std::size_t num_classes() const noexcept { return centres.rows(); }
    std::size_t dim() const noexcept { return centres.cols(); }
    bool operator==(const PrototypeBank&) const = default;
};

/// Standard-normal rows, unit-normalized, deterministic in seed.
PrototypeBank init_bank(std::size_t num_classes, std::size_t dim, std::uint64_t seed, double alpha = 0.5);

using ClassMeans = std::map<std::int32_t, std::vector<double>>;

/// Mean row per label present in `labels`.
ClassMeans class_means(const Matrix& z, std::span<const std::int32_t> labels);

/// c_k ← α·c_k + (1−α)·mean_k for each class in `means`; no renormalization.
void ema_update(PrototypeBank& bank, const ClassMeans& means);

enum class IntraDeviation {
    absolute,  // |d_i − mean_d|
    squared,   // (d_i − mean_d)²
};

/// Sum over classes present in the batch of the mean deviation of member
/// distances ‖z_i − c_y‖₂ from their class mean. The bank is a constant.
/// `grad` (same shape as z) receives ∂L/∂z when non-null.
double intra_class_loss(const Matrix& z, std::span<const std::int32_t> labels, const PrototypeBank& bank,
                        Matrix* grad = nullptr, IntraDeviation mode = IntraDeviation::absolute);

}  // namespace semdec
