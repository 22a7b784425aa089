#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "semdec/encoders.hpp"
#include "semdec/matrix.hpp"

namespace semdec {

/// Diagonal-Gaussian conditional q(z_s | z_d): a GELU trunk shared by a mean
/// head and a log-variance head. Log-variances are clamped to [−10, 10].
struct VariationalNet {
    static constexpr double kLogVarMin = -10.0;
    static constexpr double kLogVarMax = 10.0;

    Matrix trunk_w;   // cond_dim × hidden
    Matrix trunk_b;   // 1 × hidden
    Matrix mean_w;    // hidden × target_dim
    Matrix mean_b;    // 1 × target_dim
    Matrix logvar_w;  // hidden × target_dim
    Matrix logvar_b;  // 1 × target_dim

    std::size_t cond_dim() const noexcept { return trunk_w.rows(); }
    std::size_t target_dim() const noexcept { return mean_w.cols(); }

    std::vector<Matrix*> tensors() { return {&trunk_w, &trunk_b, &mean_w, &mean_b, &logvar_w, &logvar_b}; }
    std::vector<const Matrix*> tensors() const {
        return {&trunk_w, &trunk_b, &mean_w, &mean_b, &logvar_w, &logvar_b};
    }
    bool operator==(const VariationalNet&) const = default;
};

VariationalNet init_variational(std::size_t cond_dim, std::size_t hidden_dim, std::size_t target_dim,
                                std::uint64_t seed);
VariationalNet zeros_like(const VariationalNet& q);

struct GaussianParams {
    Matrix mean;
    Matrix logvar;  // clamped
};

struct VariationalCache {
    Matrix input;
    Matrix pre;
    Matrix act;
    Matrix logvar_raw;
};

GaussianParams variational_forward(const VariationalNet& q, const Matrix& z_cond, VariationalCache* cache = nullptr);

/// Backprop through both heads (zero gradient where the clamp is active).
/// Accumulates into `grads` and returns ∂L/∂z_cond.
Matrix variational_backward(const VariationalNet& q, const VariationalCache& cache, const Matrix& grad_mean,
                            const Matrix& grad_logvar, VariationalNet& grads);

/// Gradient outputs for estimators over (z_s, z_d). `q` accumulates parameter
/// gradients when non-null.
struct EstimatorGradients {
    Matrix semantic;
    Matrix domain;
    VariationalNet* q = nullptr;
};

/// Mean negative log-density of z_s rows under q(·|z_d), summed over dims.
double gaussian_log_likelihood(const VariationalNet& q, const Matrix& z_s, const Matrix& z_d,
                               EstimatorGradients* grads = nullptr);

/// CLUB estimate (1/n)Σ_i [log q(s_i|d_i) − (1/n)Σ_j log q(s_j|d_i)]. Not
/// floored at zero. The cross term is evaluated in closed form from the
/// per-dimension mean and variance of z_s, which is algebraically equal to
/// the full pairwise sum and costs O(n·d).
double club_upper_bound(const VariationalNet& q, const Matrix& z_s, const Matrix& z_d,
                        EstimatorGradients* grads = nullptr);

/// Gradients of the MI-minimization loss with respect to the four features.
struct DecoupledGradients {
    Matrix visual_semantic, visual_domain, neural_semantic, neural_domain;
};

/// Î(z_v^d; z_v^s) + Î(z_b^d; z_b^s). Only feature gradients are produced;
/// q_visual and q_neural are treated as constants on this path.
double loss_mi_min(const VariationalNet& q_visual, const VariationalNet& q_neural, const DecoupledFeatures& feats,
                   DecoupledGradients* grads = nullptr);

/// Learnable temperature τ = max(exp(−log_inv_tau), 0.01).
struct Temperature {
    static constexpr double kTauMin = 0.01;
    double log_inv_tau = 0.0;

    static Temperature from_tau(double tau);
    double tau() const noexcept;
    /// dτ/d(log_inv_tau); zero on the floor.
    double dtau_dparam() const noexcept;
};

struct ContrastiveGradients {
    Matrix a;
    Matrix b;
    double tau = 0.0;
};

/// Symmetric InfoNCE over cosine logits ⟨a_i, b_j⟩/τ with diagonal positives.
double info_nce(const Matrix& z_a, const Matrix& z_b, double tau, ContrastiveGradients* grads = nullptr);

/// Supervised variant: every other-modality row sharing the anchor's label is
/// a positive. Normalized by 1/(2n) so it coincides with info_nce when labels
/// are distinct.
double sup_con(const Matrix& z_a, const Matrix& z_b, std::span<const std::int32_t> labels, double tau,
               ContrastiveGradients* grads = nullptr);

/// MI of `dim` independent bivariate-Gaussian pairs with correlation rho.
double gaussian_mi_analytic(double rho, int dim);

}  // namespace semdec
