#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "semdec/matrix.hpp"

namespace semdec {

struct AdamWConfig {
    double lr = 3e-4;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers mirroring a parameter list.
struct AdamWState {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
    std::uint64_t step = 0;

    bool operator==(const AdamWState&) const = default;
};

AdamWState init_adamw(std::span<const Matrix* const> params);

/// One AdamW update with bias correction. Weight decay is decoupled and
/// applied multiplicatively before the adaptive step.
void optimizer_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamWState& state,
                    const AdamWConfig& cfg);

}  // namespace semdec
