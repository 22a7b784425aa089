#include "semdec/mi_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rng.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ½·ln(2π)

void check_finite(double v, const char* component) {
    if (!std::isfinite(v)) throw NumericalError(component, "non-finite value");
}

void require_estimator_shapes(const VariationalNet& q, const Matrix& z_s, const Matrix& z_d, const char* what) {
    if (z_s.rows() != z_d.rows()) throw DimensionError(std::string(what) + ": row counts differ");
    if (z_d.cols() != q.cond_dim() || z_s.cols() != q.target_dim()) {
        throw DimensionError(std::string(what) + ": feature widths do not match the variational net");
    }
}

}  // namespace

VariationalNet init_variational(std::size_t cond_dim, std::size_t hidden_dim, std::size_t target_dim,
                                std::uint64_t seed) {
    if (cond_dim == 0 || hidden_dim == 0 || target_dim == 0) throw DimensionError("init_variational: dims must be >= 1");
    auto rng = detail::seeded_engine(seed, 0x7161);
    VariationalNet q{Matrix(cond_dim, hidden_dim), Matrix(1, hidden_dim), Matrix(hidden_dim, target_dim),
                     Matrix(1, target_dim),        Matrix(hidden_dim, target_dim), Matrix(1, target_dim)};
    std::uniform_real_distribution<double> u_trunk(-1.0 / std::sqrt(double(cond_dim)), 1.0 / std::sqrt(double(cond_dim)));
    std::uniform_real_distribution<double> u_head(-1.0 / std::sqrt(double(hidden_dim)), 1.0 / std::sqrt(double(hidden_dim)));
    for (double& v : q.trunk_w.flat()) v = u_trunk(rng);
    for (double& v : q.mean_w.flat()) v = u_head(rng);
    for (double& v : q.logvar_w.flat()) v = u_head(rng);
    return q;
}

VariationalNet zeros_like(const VariationalNet& q) {
    VariationalNet z;
    auto dst = z.tensors();
    auto src = q.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Matrix(src[i]->rows(), src[i]->cols());
    return z;
}

GaussianParams variational_forward(const VariationalNet& q, const Matrix& z_cond, VariationalCache* cache) {
    if (z_cond.cols() != q.cond_dim()) throw DimensionError("variational_forward: conditioning width");
    Matrix pre = matmul(z_cond, q.trunk_w);
    add_row_vector(pre, q.trunk_b);
    Matrix act(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) act.data()[i] = gelu(pre.data()[i]);

    GaussianParams out{matmul(act, q.mean_w), matmul(act, q.logvar_w)};
    add_row_vector(out.mean, q.mean_b);
    add_row_vector(out.logvar, q.logvar_b);
    Matrix raw = out.logvar;
    for (double& v : out.logvar.flat()) v = std::clamp(v, VariationalNet::kLogVarMin, VariationalNet::kLogVarMax);
    if (cache) {
        cache->input = z_cond;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
        cache->logvar_raw = std::move(raw);
    }
    return out;
}

Matrix variational_backward(const VariationalNet& q, const VariationalCache& cache, const Matrix& grad_mean,
                            const Matrix& grad_logvar, VariationalNet& grads) {
    Matrix grad_raw = grad_logvar;
    for (std::size_t i = 0; i < grad_raw.size(); ++i) {
        const double r = cache.logvar_raw.data()[i];
        if (r < VariationalNet::kLogVarMin || r > VariationalNet::kLogVarMax) grad_raw.data()[i] = 0.0;
    }
    grads.mean_w += matmul_tn(cache.act, grad_mean);
    grads.mean_b += column_sums(grad_mean);
    grads.logvar_w += matmul_tn(cache.act, grad_raw);
    grads.logvar_b += column_sums(grad_raw);

    Matrix grad_act = matmul_nt(grad_mean, q.mean_w);
    grad_act += matmul_nt(grad_raw, q.logvar_w);
    for (std::size_t i = 0; i < grad_act.size(); ++i) grad_act.data()[i] *= gelu_derivative(cache.pre.data()[i]);
    grads.trunk_w += matmul_tn(cache.input, grad_act);
    grads.trunk_b += column_sums(grad_act);
    return matmul_nt(grad_act, q.trunk_w);
}

namespace {

// Runs the q forward pass, lets `body` fill ∂/∂mean and ∂/∂logvar, then
// backprops into z_d (and q when requested).
template <typename Body>
double with_variational(const VariationalNet& q, const Matrix& z_s, const Matrix& z_d, EstimatorGradients* grads,
                        Body&& body) {
    VariationalCache cache;
    const GaussianParams g = variational_forward(q, z_d, grads ? &cache : nullptr);
    Matrix grad_mean, grad_logvar, grad_s;
    if (grads) {
        grad_mean = Matrix(z_s.rows(), z_s.cols());
        grad_logvar = Matrix(z_s.rows(), z_s.cols());
        grad_s = Matrix(z_s.rows(), z_s.cols());
    }
    const double value = body(g, grads ? &grad_mean : nullptr, grads ? &grad_logvar : nullptr,
                              grads ? &grad_s : nullptr);
    if (grads) {
        VariationalNet scratch;
        VariationalNet& q_grads = grads->q ? *grads->q : (scratch = zeros_like(q));
        grads->domain = variational_backward(q, cache, grad_mean, grad_logvar, q_grads);
        grads->semantic = std::move(grad_s);
    }
    return value;
}

}  // namespace

double gaussian_log_likelihood(const VariationalNet& q, const Matrix& z_s, const Matrix& z_d,
                               EstimatorGradients* grads) {
    require_estimator_shapes(q, z_s, z_d, "gaussian_log_likelihood");
    const std::size_t n = z_s.rows();
    const std::size_t d = z_s.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double value = with_variational(q, z_s, z_d, grads, [&](const GaussianParams& g, Matrix* dmean,
                                                                  Matrix* dlogvar, Matrix* ds) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                const double lv = g.logvar(i, k);
                const double inv_var = std::exp(-lv);
                const double r = z_s(i, k) - g.mean(i, k);
                sum += kHalfLog2Pi + 0.5 * lv + 0.5 * r * r * inv_var;
                if (ds) {
                    (*ds)(i, k) = inv_n * r * inv_var;
                    (*dmean)(i, k) = -inv_n * r * inv_var;
                    (*dlogvar)(i, k) = inv_n * 0.5 * (1.0 - r * r * inv_var);
                }
            }
        }
        return sum * inv_n;
    });
    check_finite(value, "gaussian_log_likelihood");
    return value;
}

double club_upper_bound(const VariationalNet& q, const Matrix& z_s, const Matrix& z_d, EstimatorGradients* grads) {
    require_estimator_shapes(q, z_s, z_d, "club_upper_bound");
    const std::size_t n = z_s.rows();
    const std::size_t d = z_s.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    // (1/n)Σ_j (s_jk − μ)² = var_k + (centre_k − μ)²; the log-normalizer and
    // log-variance terms cancel between the positive and the cross average.
    std::vector<double> centre(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) centre[k] += z_s(i, k);
    }
    for (double& c : centre) c *= inv_n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            const double t = z_s(i, k) - centre[k];
            var[k] += t * t;
        }
    }
    for (double& v : var) v *= inv_n;

    const double value = with_variational(q, z_s, z_d, grads, [&](const GaussianParams& g, Matrix* dmean,
                                                                  Matrix* dlogvar, Matrix* ds) {
        double sum = 0.0;
        std::vector<double> weight_sum(d, 0.0), weighted_mean(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                const double w = 0.5 * inv_n * std::exp(-g.logvar(i, k));
                const double mu = g.mean(i, k);
                const double pos = (z_s(i, k) - mu) * (z_s(i, k) - mu);
                const double cross = var[k] + (centre[k] - mu) * (centre[k] - mu);
                sum += w * (cross - pos);
                if (ds) {
                    (*dmean)(i, k) = 2.0 * w * (z_s(i, k) - centre[k]);
                    (*dlogvar)(i, k) = -w * (cross - pos);
                    (*ds)(i, k) = -2.0 * w * (z_s(i, k) - mu);
                    weight_sum[k] += w;
                    weighted_mean[k] += w * mu;
                }
            }
        }
        if (ds) {
            // Cross-term dependence of every μ_i on each s_j.
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < d; ++k) {
                    (*ds)(j, k) += 2.0 * inv_n * (z_s(j, k) * weight_sum[k] - weighted_mean[k]);
                }
            }
        }
        return sum;
    });
    check_finite(value, "club_upper_bound");
    return value;
}

double loss_mi_min(const VariationalNet& q_visual, const VariationalNet& q_neural, const DecoupledFeatures& feats,
                   DecoupledGradients* grads) {
    EstimatorGradients gv, gb;
    const double visual = club_upper_bound(q_visual, feats.visual_semantic, feats.visual_domain, grads ? &gv : nullptr);
    const double neural = club_upper_bound(q_neural, feats.neural_semantic, feats.neural_domain, grads ? &gb : nullptr);
    if (grads) {
        grads->visual_semantic = std::move(gv.semantic);
        grads->visual_domain = std::move(gv.domain);
        grads->neural_semantic = std::move(gb.semantic);
        grads->neural_domain = std::move(gb.domain);
    }
    return visual + neural;
}

Temperature Temperature::from_tau(double tau) {
    if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
    return Temperature{-std::log(tau)};
}

double Temperature::tau() const noexcept { return std::max(std::exp(-log_inv_tau), kTauMin); }

double Temperature::dtau_dparam() const noexcept {
    const double raw = std::exp(-log_inv_tau);
    return raw > kTauMin ? -raw : 0.0;
}

namespace {

// Shared core of the symmetric contrastive losses. `positive_weight(i, j)`
// is 1/|P(i)| for positives of anchor i and 0 otherwise; the matrix it
// describes must be symmetric.
template <typename PositiveWeight>
double contrastive(const Matrix& z_a, const Matrix& z_b, double tau, ContrastiveGradients* grads,
                   PositiveWeight&& positive_weight, const char* name) {
    if (!(tau > 0.0)) throw ConfigError(std::string(name) + ": temperature must be > 0");
    require_same_shape(z_a, z_b, name);
    const std::size_t n = z_a.rows();
    if (n == 0) throw DimensionError(std::string(name) + ": empty batch");

    Matrix logits = matmul_nt(z_a, z_b);
    scale_in_place(logits, 1.0 / tau);

    std::vector<double> row_lse(n), col_lse(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) m = std::max(m, logits(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(logits(i, j) - m);
        row_lse[i] = m + std::log(s);
    }
    for (std::size_t j = 0; j < n; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, logits(i, j));
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::exp(logits(i, j) - m);
        col_lse[j] = m + std::log(s);
    }

    // a-anchored term uses row i of the logits; b-anchored uses column i.
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pos_a = 0.0, pos_b = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = positive_weight(i, j);
            if (w != 0.0) {
                pos_a += w * logits(i, j);
                pos_b += w * logits(j, i);
            }
        }
        sum += (row_lse[i] - pos_a) + (col_lse[i] - pos_b);
    }
    const double inv_2n = 0.5 / static_cast<double>(n);
    const double value = sum * inv_2n;
    check_finite(value, name);

    if (grads) {
        Matrix dlogits(n, n);
        double dtau = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double w = positive_weight(i, j);
                const double p_row = std::exp(logits(i, j) - row_lse[i]);
                const double p_col = std::exp(logits(i, j) - col_lse[j]);
                const double g = inv_2n * (p_row + p_col - 2.0 * w);
                dlogits(i, j) = g / tau;
                dtau -= g * logits(i, j) / tau;
            }
        }
        grads->a = matmul(dlogits, z_b);
        grads->b = matmul_tn(dlogits, z_a);
        grads->tau = dtau;
    }
    return value;
}

}  // namespace

double info_nce(const Matrix& z_a, const Matrix& z_b, double tau, ContrastiveGradients* grads) {
    return contrastive(z_a, z_b, tau, grads, [](std::size_t i, std::size_t j) { return i == j ? 1.0 : 0.0; },
                       "info_nce");
}

double sup_con(const Matrix& z_a, const Matrix& z_b, std::span<const std::int32_t> labels, double tau,
               ContrastiveGradients* grads) {
    if (labels.size() != z_a.rows()) throw DimensionError("sup_con: label count differs from batch size");
    std::vector<double> inv_count(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        inv_count[i] = 1.0 / static_cast<double>(std::count(labels.begin(), labels.end(), labels[i]));
    }
    return contrastive(
        z_a, z_b, tau, grads,
        [&](std::size_t i, std::size_t j) { return labels[i] == labels[j] ? inv_count[i] : 0.0; }, "sup_con");
}

double gaussian_mi_analytic(double rho, int dim) {
    if (!(std::abs(rho) < 1.0)) throw DomainError("gaussian_mi_analytic: |rho| must be < 1");
    if (dim < 0) throw DomainError("gaussian_mi_analytic: dim must be >= 0");
    return -0.5 * static_cast<double>(dim) * std::log1p(-rho * rho);
}

}  // namespace semdec
