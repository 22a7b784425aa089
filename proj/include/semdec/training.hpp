#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "semdec/feature_io.hpp"
#include "semdec/model.hpp"

namespace semdec {

struct LossReport {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    double l_con = 0.0;
    double l_mi = 0.0;
    double l_recon = 0.0;
    double l_intra = 0.0;
    double l_loglikeli = 0.0;
    double l_total = 0.0;
    double probe_mi = 0.0;
};

struct EpochSummary {
    std::size_t epoch = 0;
    double top1 = 0.0;
    double top5 = 0.0;
    double probe_mi = 0.0;  // mean over the epoch's steps
    double l_mi = 0.0;      // mean over the epoch's steps
    double l_total = 0.0;   // mean over the epoch's steps
};

struct History {
    std::vector<LossReport> steps;
    std::vector<EpochSummary> epochs;
};

/// Gradients of the reconstruction loss. Decoder gradients accumulate.
struct ReconGradients {
    Matrix visual_domain, neural_domain, visual_semantic, neural_semantic;
    Matrix h_neural;  // through the reconstruction target
    Mlp* decoder_visual = nullptr;
    Mlp* decoder_neural = nullptr;
};

/// ½[MSE(h_v, D_v(z_v^d + z_b^s)) + MSE(h_b, D_b(z_b^d + z_v^s))].
double loss_recon(const Matrix& h_visual, const Matrix& h_neural, const DecoupledFeatures& feats,
                  const Mlp& decoder_visual, const Mlp& decoder_neural, ReconGradients* grads = nullptr);

/// n_logli AdamW steps on q_visual and q_neural minimizing their negative
/// log-likelihoods over fixed features. Returns the last evaluated
/// L(θ_v) + L(θ_b). Main-network parameters are untouched.
double q_inner_steps(TrainState& state, const DecoupledFeatures& feats, std::size_t n_logli);

/// Forward products of the main network for one batch.
struct BatchForward {
    Matrix h_neural;
    DecoupledFeatures feats;  // domain parts empty outside ve_sdn
    MlpCache backbone;
    DecoupleCache encoders;
};

BatchForward forward_batch(const TrainState& state, const FeatureBatch& batch);

/// Weighted training objective for fixed q networks and bank: value of each
/// component and, if `grads` is non-null, the gradient of the total into
/// every main-network parameter (accumulated).
LossReport main_objective(const TrainState& state, const FeatureBatch& batch, const BatchForward& fwd,
                          Model* grads = nullptr);

Model zeros_like(const Model& m);

/// One full training iteration: forward, EMA update, q inner steps, probe
/// update, losses and one AdamW step on the main network.
LossReport train_step(TrainState& state, const FeatureBatch& batch);

struct FitOptions {
    std::optional<std::filesystem::path> checkpoint_dir;
    std::function<void(const EpochSummary&)> on_epoch;
};

struct FitResult {
    TrainState state;
    History history;
};

FitResult fit(const TrainConfig& cfg, const FeaturePack& pack, const FitOptions& options = {});

void write_history_csv(const History& h, const std::filesystem::path& path);
void write_history_json(const History& h, const std::filesystem::path& path);
History read_history_json(const std::filesystem::path& path);

}  // namespace semdec
