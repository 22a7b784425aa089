#include "semdec/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>

#include "json.hpp"
#include "rng.hpp"
#include "semdec/checkpoint.hpp"
#include "semdec/evaluation.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec {

std::string_view mode_name(Mode m) noexcept {
    switch (m) {
        case Mode::clip_con: return "clip_con";
        case Mode::joint_con: return "joint_con";
        case Mode::ve_sdn: return "ve_sdn";
    }
    return "unknown";
}

Mode parse_mode(std::string_view name) {
    if (name == "clip_con") return Mode::clip_con;
    if (name == "joint_con") return Mode::joint_con;
    if (name == "ve_sdn") return Mode::ve_sdn;
    throw ConfigError("unknown mode: " + std::string(name));
}

void TrainConfig::validate() const {
    for (double l : {lambda1, lambda2, lambda3}) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and >= 0");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(tau_init > 0.0) || !std::isfinite(tau_init)) throw ConfigError("tau must be > 0");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (n_logli < 1) throw ConfigError("n_logli must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 while a contrastive loss is active");
    if (d_joint < 1) throw ConfigError("d_joint must be >= 1");
}

std::size_t TrainState::semantic_dim() const noexcept {
    return cfg.mode == Mode::clip_con ? visual_dim : cfg.d_joint;
}

std::size_t TrainState::neural_feature_dim() const noexcept { return backbone_out_dim(model.backbone, neural_dim); }

TrainState init_state(const TrainConfig& cfg, std::size_t visual_dim, std::size_t neural_dim,
                      std::size_t num_classes) {
    cfg.validate();
    if (visual_dim == 0 || neural_dim == 0 || num_classes == 0) throw ConfigError("init_state: empty dimensions");
    using detail::sub_seed;
    const std::size_t joint = cfg.d_joint;
    const std::size_t hidden = cfg.encoder_hidden ? cfg.encoder_hidden : joint;
    const std::size_t q_hidden = cfg.q_hidden ? cfg.q_hidden : joint;

    TrainState s;
    s.cfg = cfg;
    s.visual_dim = visual_dim;
    s.neural_dim = neural_dim;
    s.num_classes = num_classes;

    Model& m = s.model;
    if (cfg.backbone == Backbone::Kind::identity) {
        m.backbone = identity_backbone();
    } else {
        m.backbone = mlp_backbone(neural_dim, cfg.backbone_hidden, cfg.backbone_out ? cfg.backbone_out : joint,
                                  sub_seed(cfg.seed, 1));
    }
    const std::size_t feature_dim = s.neural_feature_dim();
    const std::size_t sem_dim = s.semantic_dim();
    m.encoders.semantic_visual = init_mlp(visual_dim, hidden, joint, sub_seed(cfg.seed, 2));
    m.encoders.domain_visual = init_mlp(visual_dim, hidden, joint, sub_seed(cfg.seed, 3));
    m.encoders.semantic_neural = init_mlp(feature_dim, hidden, sem_dim, sub_seed(cfg.seed, 4));
    m.encoders.domain_neural = init_mlp(feature_dim, hidden, joint, sub_seed(cfg.seed, 5));
    m.decoder_visual = init_mlp(joint, hidden, visual_dim, sub_seed(cfg.seed, 6));
    m.decoder_neural = init_mlp(joint, hidden, feature_dim, sub_seed(cfg.seed, 7));
    m.log_inv_tau(0, 0) = Temperature::from_tau(cfg.tau_init).log_inv_tau;

    s.q_visual = init_variational(joint, q_hidden, joint, sub_seed(cfg.seed, 8));
    s.q_neural = init_variational(joint, q_hidden, joint, sub_seed(cfg.seed, 9));
    s.probe = init_variational(sem_dim, q_hidden, sem_dim, sub_seed(cfg.seed, 10));
    s.bank = init_bank(num_classes, sem_dim, sub_seed(cfg.seed, 11), cfg.alpha);

    s.main_opt = init_adamw(main_parameters(std::as_const(m)));
    std::vector<const Matrix*> qp;
    for (Matrix* t : q_parameters(s)) qp.push_back(t);
    s.q_opt = init_adamw(qp);
    s.probe_opt = init_adamw(std::as_const(s.probe).tensors());
    return s;
}

namespace {

template <typename ModelRef, typename Out>
void collect_main(ModelRef& m, Out& out) {
    for (auto* t : m.backbone.tensors()) out.push_back(t);
    for (auto* mlp : {&m.encoders.semantic_visual, &m.encoders.domain_visual, &m.encoders.semantic_neural,
                      &m.encoders.domain_neural, &m.decoder_visual, &m.decoder_neural}) {
        for (auto* t : mlp->tensors()) out.push_back(t);
    }
    out.push_back(&m.log_inv_tau);
}

}  // namespace

std::vector<Matrix*> main_parameters(Model& m) {
    std::vector<Matrix*> out;
    collect_main(m, out);
    return out;
}

std::vector<const Matrix*> main_parameters(const Model& m) {
    std::vector<const Matrix*> out;
    collect_main(m, out);
    return out;
}

std::vector<Matrix*> q_parameters(TrainState& s) {
    std::vector<Matrix*> out = s.q_visual.tensors();
    for (Matrix* t : s.q_neural.tensors()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Matrix*>> named_tensors(TrainState& s) {
    std::vector<std::pair<std::string, Matrix*>> out;
    auto add_mlp = [&](const std::string& prefix, Mlp& p) {
        out.emplace_back(prefix + ".w1", &p.w1);
        out.emplace_back(prefix + ".b1", &p.b1);
        out.emplace_back(prefix + ".w2", &p.w2);
        out.emplace_back(prefix + ".b2", &p.b2);
    };
    auto add_q = [&](const std::string& prefix, VariationalNet& q) {
        out.emplace_back(prefix + ".trunk_w", &q.trunk_w);
        out.emplace_back(prefix + ".trunk_b", &q.trunk_b);
        out.emplace_back(prefix + ".mean_w", &q.mean_w);
        out.emplace_back(prefix + ".mean_b", &q.mean_b);
        out.emplace_back(prefix + ".logvar_w", &q.logvar_w);
        out.emplace_back(prefix + ".logvar_b", &q.logvar_b);
    };
    auto add_opt = [&](const std::string& prefix, AdamWState& o) {
        for (std::size_t i = 0; i < o.first.size(); ++i) {
            out.emplace_back(prefix + ".m." + std::to_string(i), &o.first[i]);
            out.emplace_back(prefix + ".v." + std::to_string(i), &o.second[i]);
        }
    };
    Model& m = s.model;
    if (m.backbone.kind == Backbone::Kind::mlp) add_mlp("backbone", m.backbone.mlp);
    add_mlp("encoder.semantic_visual", m.encoders.semantic_visual);
    add_mlp("encoder.domain_visual", m.encoders.domain_visual);
    add_mlp("encoder.semantic_neural", m.encoders.semantic_neural);
    add_mlp("encoder.domain_neural", m.encoders.domain_neural);
    add_mlp("decoder.visual", m.decoder_visual);
    add_mlp("decoder.neural", m.decoder_neural);
    out.emplace_back("temperature.log_inv_tau", &m.log_inv_tau);
    add_q("q_visual", s.q_visual);
    add_q("q_neural", s.q_neural);
    add_q("probe", s.probe);
    out.emplace_back("bank.centres", &s.bank.centres);
    add_opt("opt.main", s.main_opt);
    add_opt("opt.q", s.q_opt);
    add_opt("opt.probe", s.probe_opt);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(const TrainState& s) {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [name, t] : named_tensors(const_cast<TrainState&>(s))) out.emplace_back(std::move(name), t);
    return out;
}

Matrix visual_semantic(const TrainState& s, const Matrix& h_visual) {
    if (s.cfg.mode == Mode::clip_con) return l2_normalize(h_visual);
    return encode_normalized(s.model.encoders.semantic_visual, h_visual);
}

Matrix neural_semantic(const TrainState& s, const Matrix& x_neural) {
    return encode_normalized(s.model.encoders.semantic_neural, backbone_forward(s.model.backbone, x_neural));
}

Model zeros_like(const Model& m) {
    Model z;
    z.backbone = zeros_like(m.backbone);
    z.encoders = {zeros_like(m.encoders.semantic_visual), zeros_like(m.encoders.domain_visual),
                  zeros_like(m.encoders.semantic_neural), zeros_like(m.encoders.domain_neural)};
    z.decoder_visual = zeros_like(m.decoder_visual);
    z.decoder_neural = zeros_like(m.decoder_neural);
    z.log_inv_tau = Matrix(1, 1);
    return z;
}

double loss_recon(const Matrix& h_visual, const Matrix& h_neural, const DecoupledFeatures& feats,
                  const Mlp& decoder_visual, const Mlp& decoder_neural, ReconGradients* grads) {
    MlpCache cache_v, cache_b;
    const Matrix rec_v = reconstruct(decoder_visual, feats.visual_domain, feats.neural_semantic, &cache_v);
    const Matrix rec_b = reconstruct(decoder_neural, feats.neural_domain, feats.visual_semantic, &cache_b);
    require_same_shape(rec_v, h_visual, "loss_recon (visual)");
    require_same_shape(rec_b, h_neural, "loss_recon (neural)");

    Matrix diff_v = rec_v - h_visual;
    Matrix diff_b = rec_b - h_neural;
    const double count_v = static_cast<double>(diff_v.size());
    const double count_b = static_cast<double>(diff_b.size());
    const double mse_v = simd::dot(diff_v.flat(), diff_v.flat()) / count_v;
    const double mse_b = simd::dot(diff_b.flat(), diff_b.flat()) / count_b;
    const double value = 0.5 * (mse_v + mse_b);
    if (!std::isfinite(value)) throw NumericalError("loss_recon", "non-finite value");

    if (grads) {
        scale_in_place(diff_v, 1.0 / count_v);
        scale_in_place(diff_b, 1.0 / count_b);
        Mlp scratch_v, scratch_b;
        Mlp& gv = grads->decoder_visual ? *grads->decoder_visual : (scratch_v = zeros_like(decoder_visual));
        Mlp& gb = grads->decoder_neural ? *grads->decoder_neural : (scratch_b = zeros_like(decoder_neural));
        Matrix fused_v = mlp_backward(decoder_visual, cache_v, diff_v, gv);
        Matrix fused_b = mlp_backward(decoder_neural, cache_b, diff_b, gb);
        grads->visual_domain = fused_v;
        grads->neural_semantic = std::move(fused_v);
        grads->neural_domain = fused_b;
        grads->visual_semantic = std::move(fused_b);
        scale_in_place(diff_b, -1.0);
        grads->h_neural = std::move(diff_b);
    }
    return value;
}

double q_inner_steps(TrainState& state, const DecoupledFeatures& feats, std::size_t n_logli) {
    if (n_logli < 1) throw ConfigError("n_logli must be >= 1");
    const AdamWConfig opt{state.cfg.lr, state.cfg.weight_decay};
    double last = 0.0;
    for (std::size_t k = 0; k < n_logli; ++k) {
        VariationalNet grad_v = zeros_like(state.q_visual);
        VariationalNet grad_b = zeros_like(state.q_neural);
        EstimatorGradients ev{{}, {}, &grad_v};
        EstimatorGradients eb{{}, {}, &grad_b};
        last = gaussian_log_likelihood(state.q_visual, feats.visual_semantic, feats.visual_domain, &ev) +
               gaussian_log_likelihood(state.q_neural, feats.neural_semantic, feats.neural_domain, &eb);
        std::vector<const Matrix*> grads;
        for (const Matrix* t : std::as_const(grad_v).tensors()) grads.push_back(t);
        for (const Matrix* t : std::as_const(grad_b).tensors()) grads.push_back(t);
        optimizer_step(q_parameters(state), grads, state.q_opt, opt);
    }
    return last;
}

BatchForward forward_batch(const TrainState& state, const FeatureBatch& batch) {
    if (batch.size() == 0) throw DimensionError("forward_batch: empty batch");
    if (batch.visual.rows() != batch.size() || batch.neural.rows() != batch.size()) {
        throw DimensionError("forward_batch: inconsistent row counts");
    }
    const Model& m = state.model;
    BatchForward fwd;
    fwd.h_neural = backbone_forward(m.backbone, batch.neural, &fwd.backbone);
    if (state.cfg.mode == Mode::clip_con) {
        fwd.feats.visual_semantic = l2_normalize(batch.visual);
    } else {
        fwd.feats.visual_semantic =
            encode_normalized(m.encoders.semantic_visual, batch.visual, &fwd.encoders.visual_semantic);
    }
    fwd.feats.neural_semantic =
        encode_normalized(m.encoders.semantic_neural, fwd.h_neural, &fwd.encoders.neural_semantic);
    if (state.cfg.mode == Mode::ve_sdn) {
        fwd.feats.visual_domain = encode_normalized(m.encoders.domain_visual, batch.visual, &fwd.encoders.visual_domain);
        fwd.feats.neural_domain = encode_normalized(m.encoders.domain_neural, fwd.h_neural, &fwd.encoders.neural_domain);
    }
    return fwd;
}

LossReport main_objective(const TrainState& state, const FeatureBatch& batch, const BatchForward& fwd, Model* grads) {
    const TrainConfig& cfg = state.cfg;
    const Model& m = state.model;
    const DecoupledFeatures& f = fwd.feats;
    const Temperature temperature = m.temperature();
    const bool decoupled = cfg.mode == Mode::ve_sdn;
    const std::size_t n = batch.size();

    LossReport r;
    ContrastiveGradients cg;
    r.l_con = cfg.supcon ? sup_con(f.visual_semantic, f.neural_semantic, batch.labels, temperature.tau(), grads ? &cg : nullptr)
                         : info_nce(f.visual_semantic, f.neural_semantic, temperature.tau(), grads ? &cg : nullptr);

    Matrix g_vs, g_bs, g_vd, g_bd, g_hb;
    if (grads) {
        g_vs = std::move(cg.a);
        g_bs = std::move(cg.b);
        g_hb = Matrix(n, fwd.h_neural.cols());
        grads->log_inv_tau(0, 0) += cg.tau * temperature.dtau_dparam();
    }

    if (decoupled) {
        DecoupledGradients mg;
        r.l_mi = loss_mi_min(state.q_visual, state.q_neural, f, grads ? &mg : nullptr);
        Mlp dec_v, dec_b;
        ReconGradients rg;
        if (grads) {
            dec_v = zeros_like(m.decoder_visual);
            dec_b = zeros_like(m.decoder_neural);
            rg.decoder_visual = &dec_v;
            rg.decoder_neural = &dec_b;
        }
        r.l_recon = loss_recon(batch.visual, fwd.h_neural, f, m.decoder_visual, m.decoder_neural, grads ? &rg : nullptr);
        if (grads) {
            add_scaled(g_vs, mg.visual_semantic, cfg.lambda1);
            add_scaled(g_bs, mg.neural_semantic, cfg.lambda1);
            g_vd = mg.visual_domain;
            scale_in_place(g_vd, cfg.lambda1);
            g_bd = mg.neural_domain;
            scale_in_place(g_bd, cfg.lambda1);

            add_scaled(g_vs, rg.visual_semantic, cfg.lambda2);
            add_scaled(g_bs, rg.neural_semantic, cfg.lambda2);
            add_scaled(g_vd, rg.visual_domain, cfg.lambda2);
            add_scaled(g_bd, rg.neural_domain, cfg.lambda2);
            add_scaled(g_hb, rg.h_neural, cfg.lambda2);
            auto dst_v = grads->decoder_visual.tensors();
            auto dst_b = grads->decoder_neural.tensors();
            auto src_v = std::as_const(dec_v).tensors();
            auto src_b = std::as_const(dec_b).tensors();
            for (std::size_t i = 0; i < dst_v.size(); ++i) add_scaled(*dst_v[i], *src_v[i], cfg.lambda2);
            for (std::size_t i = 0; i < dst_b.size(); ++i) add_scaled(*dst_b[i], *src_b[i], cfg.lambda2);
        }
    }

    if (cfg.intra) {
        Matrix gi;
        r.l_intra = intra_class_loss(f.visual_semantic, batch.labels, state.bank, grads ? &gi : nullptr,
                                     cfg.intra_deviation);
        if (!std::isfinite(r.l_intra)) throw NumericalError("l_intra", "non-finite value");
        if (grads) add_scaled(g_vs, gi, cfg.lambda3);
    }

    r.l_total = r.l_con + cfg.lambda1 * r.l_mi + cfg.lambda2 * r.l_recon + cfg.lambda3 * r.l_intra;
    if (!std::isfinite(r.l_total)) throw NumericalError("l_total", "non-finite value");

    if (grads) {
        const Encoders& e = m.encoders;
        Encoders& ge = grads->encoders;
        if (cfg.mode != Mode::clip_con) {
            encode_normalized_backward(e.semantic_visual, fwd.encoders.visual_semantic, f.visual_semantic, g_vs,
                                       ge.semantic_visual);
        }
        g_hb += encode_normalized_backward(e.semantic_neural, fwd.encoders.neural_semantic, f.neural_semantic, g_bs,
                                           ge.semantic_neural);
        if (decoupled) {
            encode_normalized_backward(e.domain_visual, fwd.encoders.visual_domain, f.visual_domain, g_vd,
                                       ge.domain_visual);
            g_hb += encode_normalized_backward(e.domain_neural, fwd.encoders.neural_domain, f.neural_domain, g_bd,
                                               ge.domain_neural);
        }
        backbone_backward(m.backbone, fwd.backbone, g_hb, grads->backbone);
    }
    return r;
}

LossReport train_step(TrainState& state, const FeatureBatch& batch) {
    const TrainConfig& cfg = state.cfg;
    const BatchForward fwd = forward_batch(state, batch);

    ema_update(state.bank, class_means(fwd.feats.neural_semantic, batch.labels));

    double loglikeli = 0.0;
    if (cfg.mode == Mode::ve_sdn) loglikeli = q_inner_steps(state, fwd.feats, cfg.n_logli);

    // Cross-modal probe: trained on detached semantic features, never feeds
    // the main network.
    {
        VariationalNet probe_grad = zeros_like(state.probe);
        EstimatorGradients eg{{}, {}, &probe_grad};
        gaussian_log_likelihood(state.probe, fwd.feats.visual_semantic, fwd.feats.neural_semantic, &eg);
        optimizer_step(state.probe.tensors(), std::as_const(probe_grad).tensors(), state.probe_opt,
                       AdamWConfig{cfg.lr, cfg.weight_decay});
    }
    const double probe_mi = club_upper_bound(state.probe, fwd.feats.visual_semantic, fwd.feats.neural_semantic);

    Model grads = zeros_like(state.model);
    LossReport report = main_objective(state, batch, fwd, &grads);
    optimizer_step(main_parameters(state.model), main_parameters(std::as_const(grads)), state.main_opt,
                   AdamWConfig{cfg.lr, cfg.weight_decay});

    ++state.step;
    report.step = state.step;
    report.epoch = state.epoch;
    report.l_loglikeli = loglikeli;
    report.probe_mi = probe_mi;
    return report;
}

FitResult fit(const TrainConfig& cfg, const FeaturePack& pack, const FitOptions& options) {
    cfg.validate();
    pack.validate();
    const auto [train_view, test_view] = split_seen_unseen(pack);
    FitResult result{init_state(cfg, pack.visual.cols(), pack.neural.cols(), static_cast<std::size_t>(pack.num_classes)),
                     {}};
    TrainState& state = result.state;

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        state.epoch = e + 1;
        BatchIterator it(train_view, cfg.batch_size, cfg.seed, e);
        FeatureBatch batch;
        EpochSummary summary;
        summary.epoch = state.epoch;
        std::size_t count = 0;
        while (it.next(batch)) {
            const LossReport r = train_step(state, batch);
            summary.probe_mi += r.probe_mi;
            summary.l_mi += r.l_mi;
            summary.l_total += r.l_total;
            ++count;
            result.history.steps.push_back(r);
        }
        summary.probe_mi /= static_cast<double>(count);
        summary.l_mi /= static_cast<double>(count);
        summary.l_total /= static_cast<double>(count);

        const EvalReport eval = evaluate_zero_shot(state, test_view);
        summary.top1 = eval.top1;
        summary.top5 = eval.top5;
        result.history.epochs.push_back(summary);
        if (options.checkpoint_dir) save_checkpoint(state, *options.checkpoint_dir);
        if (options.on_epoch) options.on_epoch(summary);
    }
    return result;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_history_csv(const History& h, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("history", "cannot write " + path.string());
    out << "step,epoch,l_con,l_mi,l_recon,l_intra,l_loglikeli,l_total,probe_mi\n";
    for (const LossReport& r : h.steps) {
        out << r.step << ',' << r.epoch << ',' << fmt_double(r.l_con) << ',' << fmt_double(r.l_mi) << ','
            << fmt_double(r.l_recon) << ',' << fmt_double(r.l_intra) << ',' << fmt_double(r.l_loglikeli) << ','
            << fmt_double(r.l_total) << ',' << fmt_double(r.probe_mi) << '\n';
    }
}

void write_history_json(const History& h, const std::filesystem::path& path) {
    nlohmann::json j;
    j["steps"] = nlohmann::json::array();
    for (const LossReport& r : h.steps) {
        j["steps"].push_back({{"step", r.step}, {"epoch", r.epoch}, {"l_con", r.l_con}, {"l_mi", r.l_mi},
                              {"l_recon", r.l_recon}, {"l_intra", r.l_intra}, {"l_loglikeli", r.l_loglikeli},
                              {"l_total", r.l_total}, {"probe_mi", r.probe_mi}});
    }
    j["epochs"] = nlohmann::json::array();
    for (const EpochSummary& e : h.epochs) {
        j["epochs"].push_back({{"epoch", e.epoch}, {"top1", e.top1}, {"top5", e.top5}, {"probe_mi", e.probe_mi},
                               {"l_mi", e.l_mi}, {"l_total", e.l_total}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("history", "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

History read_history_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("history", "cannot read " + path.string());
    History h;
    try {
        const auto j = nlohmann::json::parse(in);
        for (const auto& s : j.at("steps")) {
            h.steps.push_back({s.at("step").get<std::uint64_t>(), s.at("epoch").get<std::size_t>(),
                               s.at("l_con").get<double>(), s.at("l_mi").get<double>(), s.at("l_recon").get<double>(),
                               s.at("l_intra").get<double>(), s.at("l_loglikeli").get<double>(),
                               s.at("l_total").get<double>(), s.at("probe_mi").get<double>()});
        }
        for (const auto& e : j.at("epochs")) {
            h.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("top1").get<double>(), e.at("top5").get<double>(),
                                e.at("probe_mi").get<double>(), e.at("l_mi").get<double>(),
                                e.at("l_total").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("history", std::string("malformed history: ") + e.what());
    }
    return h;
}

}  // namespace semdec
