#include "semdec/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include "CLI11.hpp"
#include "json.hpp"
#include "semdec/checkpoint.hpp"
#include "semdec/evaluation.hpp"
#include "semdec/feature_io.hpp"
#include "semdec/training.hpp"

namespace semdec::cli {

namespace fs = std::filesystem;

namespace {

void report_error(const char* kind, const std::string& where, const std::string& msg) {
    std::string escaped;
    for (char c : msg) {
        if (c == '"' || c == '\\') escaped += '\\';
        escaped += c == '\n' ? ' ' : c;
    }
    std::cerr << "error kind=" << kind << " where=" << (where.empty() ? "-" : where) << " msg=\"" << escaped << "\"\n";
}

struct TrainFlags {
    std::string pack;
    std::string out = "run";
    std::string mode = "ve_sdn";
    std::string backbone = "mlp";
    std::string intra_deviation = "absolute";
};

void add_train_options(CLI::App& cmd, TrainConfig& cfg, TrainFlags& flags) {
    cmd.add_option("--pack", flags.pack, "Feature-pack directory")->required();
    cmd.add_option("--out", flags.out, "Output directory")->capture_default_str();
    cmd.add_option("--mode", flags.mode, "clip_con | joint_con | ve_sdn")
        ->check(CLI::IsMember({"clip_con", "joint_con", "ve_sdn"}))
        ->capture_default_str();
    cmd.add_flag("--intra", cfg.intra, "Enable the intra-class consistency loss");
    cmd.add_flag("--supcon", cfg.supcon, "Use the supervised contrastive loss");
    cmd.add_option("--n-logli", cfg.n_logli, "Variational-net steps per batch")->capture_default_str();
    cmd.add_option("--lambda1", cfg.lambda1, "MI-minimization weight")->capture_default_str();
    cmd.add_option("--lambda2", cfg.lambda2, "Reconstruction weight")->capture_default_str();
    cmd.add_option("--lambda3", cfg.lambda3, "Intra-class weight")->capture_default_str();
    cmd.add_option("--alpha", cfg.alpha, "Prototype momentum")->capture_default_str();
    cmd.add_option("--tau", cfg.tau_init, "Initial temperature")->capture_default_str();
    cmd.add_option("--lr", cfg.lr, "Learning rate")->capture_default_str();
    cmd.add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
    cmd.add_option("--batch", cfg.batch_size, "Batch size")->capture_default_str();
    cmd.add_option("--epochs", cfg.epochs, "Epochs")->capture_default_str();
    cmd.add_option("--seed", cfg.seed, "Seed")->capture_default_str();
    cmd.add_option("--d-joint", cfg.d_joint, "Joint semantic width")->capture_default_str();
    cmd.add_option("--hidden", cfg.encoder_hidden, "Encoder hidden width (0: d-joint)")->capture_default_str();
    cmd.add_option("--q-hidden", cfg.q_hidden, "Variational-net hidden width (0: d-joint)")->capture_default_str();
    cmd.add_option("--backbone", flags.backbone, "mlp | identity")
        ->check(CLI::IsMember({"mlp", "identity"}))
        ->capture_default_str();
    cmd.add_option("--backbone-hidden", cfg.backbone_hidden, "Backbone hidden width (0: output width)");
    cmd.add_option("--backbone-out", cfg.backbone_out, "Backbone output width (0: d-joint)");
    cmd.add_option("--intra-deviation", flags.intra_deviation, "absolute | squared")
        ->check(CLI::IsMember({"absolute", "squared"}))
        ->capture_default_str();
}

int cmd_synth(const SynthConfig& cfg, const std::string& out) {
    const FeaturePack pack = generate_synthetic(cfg);
    save_pack(pack, out);
    std::cout << "wrote pack N=" << pack.size() << " K=" << pack.num_classes << " to " << out << '\n';
    return kOk;
}

int cmd_train(TrainConfig cfg, const TrainFlags& flags) {
    cfg.mode = parse_mode(flags.mode);
    cfg.backbone = flags.backbone == "identity" ? Backbone::Kind::identity : Backbone::Kind::mlp;
    cfg.intra_deviation = flags.intra_deviation == "squared" ? IntraDeviation::squared : IntraDeviation::absolute;
    cfg.validate();
    const FeaturePack pack = load_pack(flags.pack);
    const fs::path out(flags.out);
    fs::create_directories(out);

    FitOptions options;
    options.checkpoint_dir = out / "checkpoint";
    options.on_epoch = [](const EpochSummary& e) {
        std::cout << "epoch " << e.epoch << " top1=" << e.top1 << " top5=" << e.top5 << " probe_mi=" << e.probe_mi
                  << " l_mi=" << e.l_mi << " l_total=" << e.l_total << '\n';
    };
    const FitResult result = fit(cfg, pack, options);
    write_history_csv(result.history, out / "history.csv");
    write_history_json(result.history, out / "history.json");
    write_eval_csv(result.history.epochs, out / "eval.csv");
    return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& pack_dir, const std::string& out_dir, std::size_t top_k) {
    const TrainState state = load_checkpoint(checkpoint);
    const FeaturePack pack = load_pack(pack_dir);
    if (pack.visual.cols() != state.visual_dim || pack.neural.cols() != state.neural_dim) {
        throw FormatError("pack", "feature widths do not match the checkpoint");
    }
    if (static_cast<std::size_t>(pack.num_classes) != state.num_classes) {
        throw FormatError("K", "class count does not match the checkpoint");
    }
    const auto [train_view, test_view] = split_seen_unseen(pack);
    const EvalReport report = evaluate_zero_shot(state, test_view, top_k);

    const fs::path out(out_dir);
    fs::create_directories(out);
    const EpochSummary summary{state.epoch, report.top1, report.top5, 0.0, 0.0, 0.0};
    write_eval_csv(std::span(&summary, 1), out / "eval.csv");

    // Class-level representational similarity: mean neural semantic feature
    // per unseen class against the visual templates.
    const auto means = class_means(report.neural_semantic, report.true_ids);
    Matrix neural_means(report.templates.class_ids.size(), report.templates.z.cols());
    for (std::size_t j = 0; j < report.templates.class_ids.size(); ++j) {
        const auto& m = means.at(report.templates.class_ids[j]);
        std::copy(m.begin(), m.end(), neural_means.row(j).begin());
    }
    write_matrix_csv(similarity_matrix(l2_normalize(neural_means), report.templates.z), out / "simmat.csv");

    const std::size_t k = std::min<std::size_t>(top_k, report.templates.class_ids.size());
    write_retrieval_csv(retrieval_topk(report.prediction.scores, k), report.templates.class_ids, out / "retrieval.csv");

    std::vector<std::size_t> all(train_view.size());
    std::iota(all.begin(), all.end(), 0);
    const FeatureBatch seen = gather_batch(train_view, all);
    const auto gaps = gap_stats(visual_semantic(state, seen.visual), seen.labels, state.bank);
    write_gaps_csv(gaps, out / "gaps.csv");

    write_embeddings(report.neural_semantic, report.true_ids, "neural", out);
    write_embeddings(report.templates.z, report.templates.class_ids, "visual", out);

    {
        std::ofstream pc(out / "per_class.csv", std::ios::trunc);
        pc << "class,accuracy\n";
        for (std::size_t j = 0; j < report.class_ids.size(); ++j) {
            pc << report.class_ids[j] << ',' << report.per_class_accuracy[j] << '\n';
        }
    }
    std::cout << "top1=" << report.top1 << " top5=" << report.top5 << " mean_gap_std=" << mean_gap_std(gaps) << '\n';
    return kOk;
}

int cmd_analyze(const std::vector<std::string>& histories, std::size_t window, std::size_t permutations,
                const std::string& out_dir, std::uint64_t seed) {
    nlohmann::json result;
    std::vector<History> runs;
    result["runs"] = nlohmann::json::array();
    for (const std::string& path : histories) {
        runs.push_back(read_history_json(path));
        const History& h = runs.back();
        nlohmann::json entry{{"history", path}, {"epochs", h.epochs.size()}};
        if (h.epochs.size() >= 2) {
            try {
                const auto r = mi_accuracy_analysis(h);
                std::vector<double> mi, top1;
                for (const auto& e : h.epochs) {
                    mi.push_back(e.probe_mi);
                    top1.push_back(e.top1);
                }
                entry["intra_r_top1"] = r.r_top1;
                entry["intra_r_top5"] = r.r_top5;
                entry["intra_p_top1"] = pearson_permutation_pvalue(mi, top1, permutations, seed);
            } catch (const DomainError& e) {
                entry["intra_error"] = e.what();
            }
        }
        result["runs"].push_back(entry);
        std::cout << path << ": " << entry.dump() << '\n';
    }
    if (runs.size() >= 2) {
        result["window"] = window;
        try {
            const auto r = inter_run_analysis(runs, window);
            result["inter_r_top1"] = r.r_top1;
            result["inter_r_top5"] = r.r_top5;
            std::cout << "inter-run r_top1=" << r.r_top1 << " r_top5=" << r.r_top5 << '\n';
        } catch (const DomainError& e) {
            result["inter_error"] = e.what();
            std::cout << "inter-run: " << e.what() << '\n';
        }
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "analysis.json", std::ios::trunc);
        out << result.dump(2) << '\n';
    }
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Semantic decoupling and zero-shot cross-modal decoding"};
    app.set_config("--config", "", "Config file (TOML/INI); keys mirror flag names, flags win");
    app.require_subcommand(1);

    SynthConfig synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic feature pack");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--k-seen", synth.k_seen)->capture_default_str();
    synth_cmd->add_option("--k-unseen", synth.k_unseen)->capture_default_str();
    synth_cmd->add_option("--n-per-class", synth.n_per_class)->capture_default_str();
    synth_cmd->add_option("--d-sem", synth.d_sem)->capture_default_str();
    synth_cmd->add_option("--d-dom", synth.d_dom)->capture_default_str();
    synth_cmd->add_option("--visual-dim", synth.visual_dim)->capture_default_str();
    synth_cmd->add_option("--neural-dim", synth.neural_dim)->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise_sigma)->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

    TrainConfig train_cfg;
    TrainFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train on the seen classes of a pack");
    add_train_options(*train_cmd, train_cfg, train_flags);

    std::string eval_checkpoint, eval_pack, eval_out = "eval";
    std::size_t eval_top_k = 5;
    auto* eval_cmd = app.add_subcommand("eval", "Zero-shot evaluation of a checkpoint on the unseen classes");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory")->required();
    eval_cmd->add_option("--pack", eval_pack, "Feature-pack directory")->required();
    eval_cmd->add_option("--out", eval_out, "Output directory")->capture_default_str();
    eval_cmd->add_option("--top-k", eval_top_k, "Retrieval depth")->capture_default_str();

    std::vector<std::string> histories;
    std::size_t window = 10, permutations = 1000;
    std::uint64_t analyze_seed = 0;
    std::string analyze_out;
    auto* analyze_cmd = app.add_subcommand("analyze", "MI/accuracy correlations from training histories");
    analyze_cmd->add_option("--history", histories, "history.json files (one per run)")->required();
    analyze_cmd->add_option("--window", window, "Last-N-epoch window for the inter-run statistic")->capture_default_str();
    analyze_cmd->add_option("--permutations", permutations, "Permutations for p-values")->capture_default_str();
    analyze_cmd->add_option("--seed", analyze_seed, "Permutation seed")->capture_default_str();
    analyze_cmd->add_option("--out", analyze_out, "Directory for analysis.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", "", e.what());
        return kUsage;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth, synth_out);
        if (*train_cmd) return cmd_train(train_cfg, train_flags);
        if (*eval_cmd) return cmd_eval(eval_checkpoint, eval_pack, eval_out, eval_top_k);
        if (*analyze_cmd) return cmd_analyze(histories, window, permutations, analyze_out, analyze_seed);
    } catch (const ConfigError& e) {
        report_error("usage", "", e.what());
        return kUsage;
    } catch (const NumericalError& e) {
        report_error("numerical", e.component(), e.what());
        return kNumericalAbort;
    } catch (const FormatError& e) {
        report_error("format", e.field(), e.what());
        return kDataError;
    } catch (const std::exception& e) {
        report_error("data", "", e.what());
        return kDataError;
    }
    return kUsage;
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("semdec");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace semdec::cli
