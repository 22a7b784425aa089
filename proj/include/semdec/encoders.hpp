#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "semdec/matrix.hpp"

namespace semdec {

/// Exact GELU, x·Φ(x) with the Gaussian CDF written through erf.
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

/// Two-layer perceptron: GELU(h·w1 + b1)·w2 + b2. Biases are 1×width.
struct Mlp {
    Matrix w1;  // in × hidden
    Matrix b1;  // 1 × hidden
    Matrix w2;  // hidden × out
    Matrix b2;  // 1 × out

    std::size_t in_dim() const noexcept { return w1.rows(); }
    std::size_t hidden_dim() const noexcept { return w1.cols(); }
    std::size_t out_dim() const noexcept { return w2.cols(); }

    void validate() const;
    std::vector<Matrix*> tensors() { return {&w1, &b1, &w2, &b2}; }
    std::vector<const Matrix*> tensors() const { return {&w1, &b1, &w2, &b2}; }
    bool operator==(const Mlp&) const = default;
};

/// Weights ~ U(−1/√fan_in, 1/√fan_in), zero biases, deterministic in seed.
Mlp init_mlp(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed);
Mlp zeros_like(const Mlp& p);

struct MlpCache {
    Matrix input;
    Matrix pre;  // h·w1 + b1
    Matrix act;  // GELU(pre)
};

Matrix mlp_forward(const Mlp& p, const Matrix& h, MlpCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns ∂L/∂input.
Matrix mlp_backward(const Mlp& p, const MlpCache& cache, const Matrix& grad_out, Mlp& grads);

inline constexpr double kNormEpsilon = 1e-12;

/// Divides each row by max(‖row‖₂, 1e-12). Stores the divisors if asked.
Matrix l2_normalize(const Matrix& z, std::vector<double>* divisors = nullptr);
Matrix l2_normalize_backward(const Matrix& normalized, std::span<const double> divisors, const Matrix& grad_out);

/// Pluggable neural backbone slot (h_b = F(x_b)). New backbones add a kind
/// and extend the three functions below.
struct Backbone {
    enum class Kind { identity, mlp };
    Kind kind = Kind::mlp;
    Mlp mlp;

    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;
    bool operator==(const Backbone&) const = default;
};

Backbone identity_backbone();
/// Default hidden width equals `out_dim` when `hidden_dim` is 0.
Backbone mlp_backbone(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed);
std::size_t backbone_out_dim(const Backbone& b, std::size_t in_dim);

Matrix backbone_forward(const Backbone& b, const Matrix& x, MlpCache* cache = nullptr);
Matrix backbone_backward(const Backbone& b, const MlpCache& cache, const Matrix& grad_out, Backbone& grads);
Backbone zeros_like(const Backbone& b);

/// Semantic (Φ) and domain (Ψ) encoders for both modalities.
struct Encoders {
    Mlp semantic_visual;
    Mlp domain_visual;
    Mlp semantic_neural;
    Mlp domain_neural;
    bool operator==(const Encoders&) const = default;
};

struct DecoupledFeatures {
    Matrix visual_semantic;  // z_v^s
    Matrix visual_domain;    // z_v^d
    Matrix neural_semantic;  // z_b^s
    Matrix neural_domain;    // z_b^d
};

/// One encoder followed by row normalization, with what backprop needs.
struct EncodeCache {
    MlpCache mlp;
    std::vector<double> divisors;
};

Matrix encode_normalized(const Mlp& encoder, const Matrix& h, EncodeCache* cache = nullptr);
Matrix encode_normalized_backward(const Mlp& encoder, const EncodeCache& cache, const Matrix& normalized,
                                  const Matrix& grad_out, Mlp& grads);

struct DecoupleCache {
    EncodeCache visual_semantic, visual_domain, neural_semantic, neural_domain;
};

/// Applies the four encoders, then L2-normalizes every output row.
DecoupledFeatures decouple(const Matrix& h_visual, const Matrix& h_neural, const Encoders& enc,
                           DecoupleCache* cache = nullptr);

/// Decoder applied to the additive fusion z_domain + z_semantic_other.
Matrix reconstruct(const Mlp& decoder, const Matrix& z_domain, const Matrix& z_semantic_other,
                   MlpCache* cache = nullptr);

}  // namespace semdec
