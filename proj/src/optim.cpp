#include "semdec/optim.hpp"

#include <cmath>

namespace semdec {

AdamWState init_adamw(std::span<const Matrix* const> params) {
    AdamWState s;
    for (const Matrix* p : params) {
        s.first.emplace_back(p->rows(), p->cols());
        s.second.emplace_back(p->rows(), p->cols());
    }
    return s;
}

void optimizer_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamWState& state,
                    const AdamWConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.first.size()) {
        throw DimensionError("optimizer_step: parameter, gradient and moment lists differ in length");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        require_same_shape(*params[t], *grads[t], "optimizer_step");
        require_same_shape(*params[t], state.first[t], "optimizer_step");
    }
    ++state.step;
    const double step = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, step);
    const double correction2 = 1.0 - std::pow(cfg.beta2, step);
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;

    for (std::size_t t = 0; t < params.size(); ++t) {
        double* p = params[t]->data();
        const double* g = grads[t]->data();
        double* m = state.first[t].data();
        double* v = state.second[t].data();
        for (std::size_t i = 0; i < params[t]->size(); ++i) {
            p[i] *= decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace semdec
