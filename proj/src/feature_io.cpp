#include "semdec/feature_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "blob_io.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace semdec {

namespace fs = std::filesystem;
using nlohmann::json;

bool FeaturePack::is_unseen(std::int32_t label) const {
    return std::binary_search(unseen_classes.begin(), unseen_classes.end(), label);
}

void FeaturePack::validate() const {
    const std::size_t n = labels.size();
    if (visual.rows() != n) throw FormatError("visual", "row count differs from labels");
    if (neural.rows() != n) throw FormatError("neural", "row count differs from labels");
    if (num_classes < 1) throw FormatError("K", "must be at least 1");
    for (std::int32_t y : labels) {
        if (y < 0 || y >= num_classes) throw FormatError("labels", "label " + std::to_string(y) + " outside [0, K)");
    }
    for (std::size_t i = 0; i < unseen_classes.size(); ++i) {
        const std::int32_t c = unseen_classes[i];
        if (c < 0 || c >= num_classes) throw FormatError("unseen_classes", "class id outside [0, K)");
        if (i > 0 && unseen_classes[i - 1] >= c) throw FormatError("unseen_classes", "must be sorted and distinct");
    }
    if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(num_classes)) {
        throw FormatError("class_names", "must list exactly K names");
    }
    for (float v : visual.flat()) {
        if (!std::isfinite(v)) throw FormatError("visual", "non-finite value");
    }
    for (float v : neural.flat()) {
        if (!std::isfinite(v)) throw FormatError("neural", "non-finite value");
    }
}

void SynthConfig::validate() const {
    if (k_seen < 1 || k_unseen < 1 || n_per_class < 1 || d_sem < 1 || d_dom < 0) {
        throw ConfigError("synth: class counts, samples per class and d_sem must be >= 1, d_dom >= 0");
    }
    if (visual_dim < d_sem || neural_dim < d_sem) throw ConfigError("synth: observed dims must be >= d_sem");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("synth: noise_sigma must be >= 0");
}

namespace {

Matrix random_map(std::mt19937_64& rng, int out_dim, int in_dim) {
    Matrix m(static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim));
    if (in_dim == 0) return m;
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    for (double& v : m.flat()) v = normal(rng);
    return m;
}

// out[r] = map · latent, written as float.
void emit_row(const Matrix& sem_map, const Matrix& dom_map, std::span<const double> sem,
              std::span<const double> dom, double sigma, std::mt19937_64& rng, std::span<float> out) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double v = 0.0;
        for (std::size_t c = 0; c < sem.size(); ++c) v += sem_map(r, c) * sem[c];
        for (std::size_t c = 0; c < dom.size(); ++c) v += dom_map(r, c) * dom[c];
        const double eps = noise(rng);
        if (sigma > 0.0) v += sigma * eps;
        out[r] = static_cast<float>(v);
    }
}

}  // namespace

FeaturePack generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Matrix visual_sem = random_map(rng, cfg.visual_dim, cfg.d_sem);
    const Matrix visual_dom = random_map(rng, cfg.visual_dim, cfg.d_dom);
    const Matrix neural_sem = random_map(rng, cfg.neural_dim, cfg.d_sem);
    const Matrix neural_dom = random_map(rng, cfg.neural_dim, cfg.d_dom);

    const int k_total = cfg.k_seen + cfg.k_unseen;
    Matrix class_latents(static_cast<std::size_t>(k_total), static_cast<std::size_t>(cfg.d_sem));
    for (double& v : class_latents.flat()) v = normal(rng);

    const std::size_t n = static_cast<std::size_t>(k_total) * static_cast<std::size_t>(cfg.n_per_class);
    FeaturePack pack;
    pack.visual = MatrixF(n, static_cast<std::size_t>(cfg.visual_dim));
    pack.neural = MatrixF(n, static_cast<std::size_t>(cfg.neural_dim));
    pack.labels.resize(n);
    pack.num_classes = k_total;
    for (int k = cfg.k_seen; k < k_total; ++k) pack.unseen_classes.push_back(k);

    std::vector<double> dom_v(static_cast<std::size_t>(cfg.d_dom));
    std::vector<double> dom_b(static_cast<std::size_t>(cfg.d_dom));
    std::size_t row = 0;
    for (int k = 0; k < k_total; ++k) {
        const auto sem = class_latents.row(static_cast<std::size_t>(k));
        for (int s = 0; s < cfg.n_per_class; ++s, ++row) {
            for (double& v : dom_v) v = normal(rng);
            for (double& v : dom_b) v = normal(rng);
            emit_row(visual_sem, visual_dom, sem, dom_v, cfg.noise_sigma, rng, pack.visual.row(row));
            emit_row(neural_sem, neural_dom, sem, dom_b, cfg.noise_sigma, rng, pack.neural.row(row));
            pack.labels[row] = k;
        }
    }
    return pack;
}

void save_pack(const FeaturePack& pack, const fs::path& dir) {
    pack.validate();
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = FeaturePack::kFormatVersion;
    manifest["N"] = pack.size();
    manifest["K"] = pack.num_classes;
    manifest["D_v"] = pack.visual.cols();
    manifest["D_b"] = pack.neural.cols();
    manifest["unseen_classes"] = pack.unseen_classes;
    manifest["blobs"] = {{"visual", "visual.f32"}, {"neural", "neural.f32"}, {"labels", "labels.i32"}};
    if (!pack.class_names.empty()) manifest["class_names"] = pack.class_names;

    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw FormatError("manifest", "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';

    detail::write_blob<float>(dir / "visual.f32", pack.visual.flat(), "visual");
    detail::write_blob<float>(dir / "neural.f32", pack.neural.flat(), "neural");
    detail::write_blob<std::int32_t>(dir / "labels.i32", pack.labels, "labels");
}

namespace {

template <typename T>
T require_field(const json& manifest, const char* key) {
    if (!manifest.contains(key)) throw FormatError(key, "missing from manifest");
    try {
        return manifest.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(key, std::string("bad value: ") + e.what());
    }
}

std::string blob_name(const json& manifest, const char* field) {
    if (!manifest.contains("blobs") || !manifest["blobs"].contains(field)) {
        throw FormatError(field, "blob filename missing from manifest");
    }
    const std::string name = manifest["blobs"][field].get<std::string>();
    if (name.empty() || fs::path(name).has_parent_path()) throw FormatError(field, "blob filename must be a bare name");
    return name;
}

}  // namespace

FeaturePack load_pack(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("manifest", "no manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("manifest", std::string("unparseable: ") + e.what());
    }

    const int version = require_field<int>(manifest, "version");
    if (version != FeaturePack::kFormatVersion) throw FormatError("version", "unsupported " + std::to_string(version));
    const auto n = require_field<std::size_t>(manifest, "N");
    const auto k = require_field<std::int32_t>(manifest, "K");
    const auto dv = require_field<std::size_t>(manifest, "D_v");
    const auto db = require_field<std::size_t>(manifest, "D_b");

    FeaturePack pack;
    pack.num_classes = k;
    pack.unseen_classes = require_field<std::vector<std::int32_t>>(manifest, "unseen_classes");
    if (manifest.contains("class_names")) pack.class_names = require_field<std::vector<std::string>>(manifest, "class_names");

    pack.visual = MatrixF(n, dv, detail::read_blob<float>(dir / blob_name(manifest, "visual"), n * dv, "visual"));
    pack.neural = MatrixF(n, db, detail::read_blob<float>(dir / blob_name(manifest, "neural"), n * db, "neural"));
    pack.labels = detail::read_blob<std::int32_t>(dir / blob_name(manifest, "labels"), n, "labels");
    pack.validate();
    return pack;
}

std::pair<PackView, PackView> split_seen_unseen(const FeaturePack& pack) {
    const std::set<std::int32_t> unseen(pack.unseen_classes.begin(), pack.unseen_classes.end());
    if (unseen.empty()) throw ConfigError("split: unseen class set is empty");
    if (unseen.size() >= static_cast<std::size_t>(pack.num_classes)) {
        throw ConfigError("split: unseen classes cover every class");
    }
    PackView train{&pack, {}};
    PackView test{&pack, {}};
    for (std::size_t i = 0; i < pack.size(); ++i) {
        (unseen.count(pack.labels[i]) ? test : train).rows.push_back(i);
    }
    for (std::size_t r : train.rows) {
        if (unseen.count(pack.labels[r])) throw ConfigError("split: seen and unseen views overlap");
    }
    return {std::move(train), std::move(test)};
}

FeatureBatch gather_batch(const PackView& view, std::span<const std::size_t> positions) {
    const FeaturePack& pack = *view.pack;
    FeatureBatch batch;
    batch.visual = Matrix(positions.size(), pack.visual.cols());
    batch.neural = Matrix(positions.size(), pack.neural.cols());
    batch.labels.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const std::size_t r = view.rows.at(positions[i]);
        std::copy(pack.visual.row(r).begin(), pack.visual.row(r).end(), batch.visual.row(i).begin());
        std::copy(pack.neural.row(r).begin(), pack.neural.row(r).end(), batch.neural.row(i).begin());
        batch.labels[i] = pack.labels[r];
    }
    return batch;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto rng = detail::seeded_engine(seed, epoch);
    // Fisher–Yates with our own bounded draw: std::shuffle's output is not
    // specified across standard libraries.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = detail::bounded(rng, i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

BatchIterator::BatchIterator(const PackView& view, std::size_t batch_size, std::uint64_t shuffle_seed,
                             std::uint64_t epoch)
    : view_(&view), batch_size_(batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (view.size() == 0) throw ConfigError("cannot batch an empty view");
    order_ = epoch_permutation(view.size(), shuffle_seed, epoch);
}

bool BatchIterator::next(FeatureBatch& out) {
    if (cursor_ >= order_.size()) return false;
    const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    out = gather_batch(*view_, std::span<const std::size_t>(order_).subspan(cursor_, end - cursor_));
    cursor_ = end;
    return true;
}

std::size_t BatchIterator::num_batches() const noexcept {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace semdec
