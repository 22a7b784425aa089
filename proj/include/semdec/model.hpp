#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "semdec/encoders.hpp"
#include "semdec/mi_estimation.hpp"
#include "semdec/optim.hpp"
#include "semdec/prototypes.hpp"

namespace semdec {

/// Training ladder. clip_con aligns neural features directly to the raw
/// visual embeddings; joint_con aligns both in a learned joint space;
/// ve_sdn adds semantic/domain decoupling and cyclic reconstruction.
enum class Mode { clip_con, joint_con, ve_sdn };

std::string_view mode_name(Mode m) noexcept;
Mode parse_mode(std::string_view name);

struct TrainConfig {
    double lambda1 = 1.0;  // MI minimization
    double lambda2 = 2.0;  // reconstruction
    double lambda3 = 0.5;  // intra-class consistency
    double alpha = 0.5;    // prototype momentum
    double tau_init = 0.07;
    double lr = 3e-4;
    double weight_decay = 0.0;
    std::size_t batch_size = 1024;
    std::size_t epochs = 50;
    std::size_t n_logli = 1;
    std::uint64_t seed = 0;
    Mode mode = Mode::ve_sdn;
    bool intra = false;
    bool supcon = false;
    IntraDeviation intra_deviation = IntraDeviation::absolute;

    std::size_t d_joint = 512;
    std::size_t encoder_hidden = 0;   // 0 → d_joint
    std::size_t q_hidden = 0;         // 0 → d_joint
    std::size_t backbone_hidden = 0;  // 0 → backbone output width
    std::size_t backbone_out = 0;     // 0 → d_joint
    Backbone::Kind backbone = Backbone::Kind::mlp;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Main-network parameters.
struct Model {
    Backbone backbone;
    Encoders encoders;
    Mlp decoder_visual;  // joint → D_v
    Mlp decoder_neural;  // joint → backbone width
    Matrix log_inv_tau = Matrix(1, 1);

    Temperature temperature() const noexcept { return Temperature{log_inv_tau(0, 0)}; }

    bool operator==(const Model&) const = default;
};

struct TrainState {
    TrainConfig cfg;
    std::size_t visual_dim = 0;
    std::size_t neural_dim = 0;
    std::size_t num_classes = 0;

    Model model;
    VariationalNet q_visual;  // q(z_v^s | z_v^d)
    VariationalNet q_neural;  // q(z_b^s | z_b^d)
    VariationalNet probe;     // q(z_v^s | z_b^s), reporting only
    PrototypeBank bank;

    AdamWState main_opt;
    AdamWState q_opt;
    AdamWState probe_opt;
    std::uint64_t step = 0;
    std::size_t epoch = 0;

    /// Width of the semantic space: D_v in clip_con, d_joint otherwise.
    std::size_t semantic_dim() const noexcept;
    std::size_t neural_feature_dim() const noexcept;
};

TrainState init_state(const TrainConfig& cfg, std::size_t visual_dim, std::size_t neural_dim,
                      std::size_t num_classes);

/// Stable, ordered parameter lists. The optimizers' moment buffers follow
/// the same order.
std::vector<Matrix*> main_parameters(Model& m);
std::vector<const Matrix*> main_parameters(const Model& m);
std::vector<Matrix*> q_parameters(TrainState& s);

/// Every tensor of the state under a unique name, for checkpoints.
std::vector<std::pair<std::string, Matrix*>> named_tensors(TrainState& s);
std::vector<std::pair<std::string, const Matrix*>> named_tensors(const TrainState& s);

/// Semantic features used for decoding and evaluation.
Matrix visual_semantic(const TrainState& s, const Matrix& h_visual);
Matrix neural_semantic(const TrainState& s, const Matrix& x_neural);

}  // namespace semdec
