#include "semdec/encoders.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "rng.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec {

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) noexcept {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

void Mlp::validate() const {
    if (b1.rows() != 1 || b1.cols() != w1.cols() || w2.rows() != w1.cols() || b2.rows() != 1 ||
        b2.cols() != w2.cols()) {
        throw DimensionError("mlp: inconsistent parameter shapes");
    }
    for (const Matrix* t : tensors()) {
        if (!all_finite(*t)) throw NumericalError("mlp", "non-finite parameter");
    }
}

Mlp init_mlp(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed) {
    if (in_dim == 0 || hidden_dim == 0 || out_dim == 0) throw DimensionError("init_mlp: dims must be >= 1");
    auto rng = detail::seeded_engine(seed, 0x6d6c70);
    Mlp p{Matrix(in_dim, hidden_dim), Matrix(1, hidden_dim), Matrix(hidden_dim, out_dim), Matrix(1, out_dim)};
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> u1(-bound1, bound1);
    std::uniform_real_distribution<double> u2(-bound2, bound2);
    for (double& v : p.w1.flat()) v = u1(rng);
    for (double& v : p.w2.flat()) v = u2(rng);
    return p;
}

Mlp zeros_like(const Mlp& p) {
    return {Matrix(p.w1.rows(), p.w1.cols()), Matrix(1, p.b1.cols()), Matrix(p.w2.rows(), p.w2.cols()),
            Matrix(1, p.b2.cols())};
}

Matrix mlp_forward(const Mlp& p, const Matrix& h, MlpCache* cache) {
    if (h.cols() != p.in_dim()) {
        throw DimensionError("mlp_forward: input has " + std::to_string(h.cols()) + " columns, expected " +
                             std::to_string(p.in_dim()));
    }
    Matrix pre = matmul(h, p.w1);
    add_row_vector(pre, p.b1);
    Matrix act(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) act.data()[i] = gelu(pre.data()[i]);
    Matrix out = matmul(act, p.w2);
    add_row_vector(out, p.b2);
    if (cache) {
        cache->input = h;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
    }
    return out;
}

Matrix mlp_backward(const Mlp& p, const MlpCache& cache, const Matrix& grad_out, Mlp& grads) {
    if (grad_out.cols() != p.out_dim() || grad_out.rows() != cache.act.rows()) {
        throw DimensionError("mlp_backward: gradient shape");
    }
    grads.w2 += matmul_tn(cache.act, grad_out);
    grads.b2 += column_sums(grad_out);
    Matrix grad_pre = matmul_nt(grad_out, p.w2);
    for (std::size_t i = 0; i < grad_pre.size(); ++i) grad_pre.data()[i] *= gelu_derivative(cache.pre.data()[i]);
    grads.w1 += matmul_tn(cache.input, grad_pre);
    grads.b1 += column_sums(grad_pre);
    return matmul_nt(grad_pre, p.w1);
}

Matrix l2_normalize(const Matrix& z, std::vector<double>* divisors) {
    Matrix out = z;
    if (divisors) divisors->assign(z.rows(), 0.0);
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const double norm = std::sqrt(simd::dot(z.row(r), z.row(r)));
        const double d = std::max(norm, kNormEpsilon);
        for (double& v : out.row(r)) v /= d;
        if (divisors) (*divisors)[r] = d;
    }
    return out;
}

Matrix l2_normalize_backward(const Matrix& normalized, std::span<const double> divisors, const Matrix& grad_out) {
    require_same_shape(normalized, grad_out, "l2_normalize_backward");
    Matrix grad_in(grad_out.rows(), grad_out.cols());
    for (std::size_t r = 0; r < grad_out.rows(); ++r) {
        const auto y = normalized.row(r);
        const auto g = grad_out.row(r);
        auto out = grad_in.row(r);
        const double d = divisors[r];
        // Below the epsilon floor the map is linear: x / eps.
        const double proj = d > kNormEpsilon ? simd::dot(y, g) : 0.0;
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = (g[c] - y[c] * proj) / d;
    }
    return grad_in;
}

std::vector<Matrix*> Backbone::tensors() {
    if (kind == Kind::identity) return {};
    return mlp.tensors();
}

std::vector<const Matrix*> Backbone::tensors() const {
    if (kind == Kind::identity) return {};
    return mlp.tensors();
}

Backbone identity_backbone() { return Backbone{Backbone::Kind::identity, {}}; }

Backbone mlp_backbone(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed) {
    return Backbone{Backbone::Kind::mlp, init_mlp(in_dim, hidden_dim == 0 ? out_dim : hidden_dim, out_dim, seed)};
}

std::size_t backbone_out_dim(const Backbone& b, std::size_t in_dim) {
    return b.kind == Backbone::Kind::identity ? in_dim : b.mlp.out_dim();
}

Matrix backbone_forward(const Backbone& b, const Matrix& x, MlpCache* cache) {
    switch (b.kind) {
        case Backbone::Kind::identity: return x;
        case Backbone::Kind::mlp: return mlp_forward(b.mlp, x, cache);
    }
    return x;
}

Matrix backbone_backward(const Backbone& b, const MlpCache& cache, const Matrix& grad_out, Backbone& grads) {
    switch (b.kind) {
        case Backbone::Kind::identity: return grad_out;
        case Backbone::Kind::mlp: return mlp_backward(b.mlp, cache, grad_out, grads.mlp);
    }
    return grad_out;
}

Backbone zeros_like(const Backbone& b) {
    if (b.kind == Backbone::Kind::identity) return identity_backbone();
    return Backbone{b.kind, zeros_like(b.mlp)};
}

Matrix encode_normalized(const Mlp& encoder, const Matrix& h, EncodeCache* cache) {
    Matrix raw = mlp_forward(encoder, h, cache ? &cache->mlp : nullptr);
    return l2_normalize(raw, cache ? &cache->divisors : nullptr);
}

Matrix encode_normalized_backward(const Mlp& encoder, const EncodeCache& cache, const Matrix& normalized,
                                  const Matrix& grad_out, Mlp& grads) {
    return mlp_backward(encoder, cache.mlp, l2_normalize_backward(normalized, cache.divisors, grad_out), grads);
}

DecoupledFeatures decouple(const Matrix& h_visual, const Matrix& h_neural, const Encoders& enc,
                           DecoupleCache* cache) {
    if (h_visual.rows() != h_neural.rows()) throw DimensionError("decouple: modalities have different row counts");
    return {
        encode_normalized(enc.semantic_visual, h_visual, cache ? &cache->visual_semantic : nullptr),
        encode_normalized(enc.domain_visual, h_visual, cache ? &cache->visual_domain : nullptr),
        encode_normalized(enc.semantic_neural, h_neural, cache ? &cache->neural_semantic : nullptr),
        encode_normalized(enc.domain_neural, h_neural, cache ? &cache->neural_domain : nullptr),
    };
}

Matrix reconstruct(const Mlp& decoder, const Matrix& z_domain, const Matrix& z_semantic_other, MlpCache* cache) {
    require_same_shape(z_domain, z_semantic_other, "reconstruct");
    return mlp_forward(decoder, z_domain + z_semantic_other, cache);
}

}  // namespace semdec
