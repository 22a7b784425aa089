#include "semdec/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "blob_io.hpp"
#include "json.hpp"

namespace semdec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

json config_to_json(const TrainConfig& c) {
    return {{"lambda1", c.lambda1},
            {"lambda2", c.lambda2},
            {"lambda3", c.lambda3},
            {"alpha", c.alpha},
            {"tau_init", c.tau_init},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"n_logli", c.n_logli},
            {"seed", c.seed},
            {"mode", std::string(mode_name(c.mode))},
            {"intra", c.intra},
            {"supcon", c.supcon},
            {"intra_deviation", c.intra_deviation == IntraDeviation::absolute ? "absolute" : "squared"},
            {"d_joint", c.d_joint},
            {"encoder_hidden", c.encoder_hidden},
            {"q_hidden", c.q_hidden},
            {"backbone_hidden", c.backbone_hidden},
            {"backbone_out", c.backbone_out},
            {"backbone", c.backbone == Backbone::Kind::identity ? "identity" : "mlp"}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.lambda1 = j.at("lambda1").get<double>();
    c.lambda2 = j.at("lambda2").get<double>();
    c.lambda3 = j.at("lambda3").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.tau_init = j.at("tau_init").get<double>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.n_logli = j.at("n_logli").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.intra = j.at("intra").get<bool>();
    c.supcon = j.at("supcon").get<bool>();
    const auto dev = j.at("intra_deviation").get<std::string>();
    if (dev != "absolute" && dev != "squared") throw FormatError("config.intra_deviation", "unknown value " + dev);
    c.intra_deviation = dev == "absolute" ? IntraDeviation::absolute : IntraDeviation::squared;
    c.d_joint = j.at("d_joint").get<std::size_t>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    c.q_hidden = j.at("q_hidden").get<std::size_t>();
    c.backbone_hidden = j.at("backbone_hidden").get<std::size_t>();
    c.backbone_out = j.at("backbone_out").get<std::size_t>();
    const auto bb = j.at("backbone").get<std::string>();
    if (bb != "identity" && bb != "mlp") throw FormatError("config.backbone", "unknown value " + bb);
    c.backbone = bb == "identity" ? Backbone::Kind::identity : Backbone::Kind::mlp;
    return c;
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& dir) {
    fs::create_directories(dir);
    json tensors = json::array();
    for (const auto& [name, tensor] : named_tensors(state)) {
        const std::string file = name + ".f32";
        const MatrixF values = to_float(*tensor);
        detail::write_blob<float>(dir / file, values.flat(), name);
        tensors.push_back({{"name", name}, {"rows", tensor->rows()}, {"cols", tensor->cols()}, {"file", file}});
    }
    std::vector<int> seen(state.bank.seen.begin(), state.bank.seen.end());
    json manifest{{"version", kCheckpointVersion},
                  {"config", config_to_json(state.cfg)},
                  {"visual_dim", state.visual_dim},
                  {"neural_dim", state.neural_dim},
                  {"num_classes", state.num_classes},
                  {"step", state.step},
                  {"epoch", state.epoch},
                  {"bank_seen", seen},
                  {"opt_steps", {{"main", state.main_opt.step}, {"q", state.q_opt.step}, {"probe", state.probe_opt.step}}},
                  {"tensors", tensors}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw FormatError("manifest", "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

TrainState load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("manifest", "no manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("manifest", std::string("unparseable: ") + e.what());
    }
    try {
        if (manifest.at("version").get<int>() != kCheckpointVersion) throw FormatError("version", "unsupported checkpoint version");
        TrainState s = init_state(config_from_json(manifest.at("config")), manifest.at("visual_dim").get<std::size_t>(),
                                  manifest.at("neural_dim").get<std::size_t>(), manifest.at("num_classes").get<std::size_t>());
        s.step = manifest.at("step").get<std::uint64_t>();
        s.epoch = manifest.at("epoch").get<std::size_t>();
        const auto seen = manifest.at("bank_seen").get<std::vector<int>>();
        if (seen.size() != s.bank.seen.size()) throw FormatError("bank_seen", "length differs from class count");
        for (std::size_t i = 0; i < seen.size(); ++i) s.bank.seen[i] = seen[i] != 0;
        s.main_opt.step = manifest.at("opt_steps").at("main").get<std::uint64_t>();
        s.q_opt.step = manifest.at("opt_steps").at("q").get<std::uint64_t>();
        s.probe_opt.step = manifest.at("opt_steps").at("probe").get<std::uint64_t>();

        const auto& listed = manifest.at("tensors");
        auto expected = named_tensors(s);
        if (listed.size() != expected.size()) throw FormatError("tensors", "tensor count differs from configuration");
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const auto& [name, tensor] = expected[i];
            const auto& entry = listed[i];
            if (entry.at("name").get<std::string>() != name) throw FormatError("tensors", "expected tensor " + name);
            const auto rows = entry.at("rows").get<std::size_t>();
            const auto cols = entry.at("cols").get<std::size_t>();
            if (rows != tensor->rows() || cols != tensor->cols()) throw FormatError(name, "shape differs from configuration");
            const std::string file = entry.at("file").get<std::string>();
            if (fs::path(file).has_parent_path()) throw FormatError(name, "blob filename must be a bare name");
            const auto values = detail::read_blob<float>(dir / file, rows * cols, name);
            for (std::size_t k = 0; k < values.size(); ++k) {
                if (!std::isfinite(values[k])) throw FormatError(name, "non-finite value");
                tensor->data()[k] = values[k];
            }
        }
        return s;
    } catch (const json::exception& e) {
        throw FormatError("manifest", std::string("missing or malformed field: ") + e.what());
    }
}

}  // namespace semdec
