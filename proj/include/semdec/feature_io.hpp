#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "semdec/matrix.hpp"

namespace semdec {

/// Paired-modality embeddings with dense integer labels in [0, num_classes).
/// Features are kept in float32, the on-disk precision, so save/load is
/// byte-exact.
struct FeaturePack {
    static constexpr int kFormatVersion = 1;

    MatrixF visual;                    // N × D_v
    MatrixF neural;                    // N × D_b
    std::vector<std::int32_t> labels;  // N
    std::int32_t num_classes = 0;
    std::vector<std::int32_t> unseen_classes;  // sorted, distinct
    std::vector<std::string> class_names;      // optional, empty or num_classes long

    std::size_t size() const noexcept { return labels.size(); }
    bool is_unseen(std::int32_t label) const;

    /// Throws FormatError naming the first offending field.
    void validate() const;
    bool operator==(const FeaturePack&) const = default;
};

struct SynthConfig {
    int k_seen = 50;
    int k_unseen = 10;
    int n_per_class = 40;
    int d_sem = 16;
    int d_dom = 16;
    int visual_dim = 64;
    int neural_dim = 64;
    double noise_sigma = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Linear-Gaussian factor model: h = A·s_class + B·d_sample + noise per
/// modality, with independent seeded maps. Unseen classes are the last
/// k_unseen ids. Latents are not stored.
FeaturePack generate_synthetic(const SynthConfig& cfg);

/// Writes manifest.json, visual.f32, neural.f32 and labels.i32 (little-endian,
/// row-major) into `dir`, creating it if needed.
void save_pack(const FeaturePack& pack, const std::filesystem::path& dir);
FeaturePack load_pack(const std::filesystem::path& dir);

/// Row subset of a pack. Holds a pointer; the pack must outlive the view.
struct PackView {
    const FeaturePack* pack = nullptr;
    std::vector<std::size_t> rows;

    std::size_t size() const noexcept { return rows.size(); }
    std::int32_t label(std::size_t i) const { return pack->labels[rows[i]]; }
};

/// Returns (train, test): rows with labels outside / inside the unseen set.
std::pair<PackView, PackView> split_seen_unseen(const FeaturePack& pack);

struct FeatureBatch {
    Matrix visual;  // h_v
    Matrix neural;  // x_b
    std::vector<std::int32_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

FeatureBatch gather_batch(const PackView& view, std::span<const std::size_t> positions);

/// Permutation of [0, n) fixed by (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// One shuffled pass over a view. Single consumer.
class BatchIterator {
public:
    BatchIterator(const PackView& view, std::size_t batch_size, std::uint64_t shuffle_seed,
                  std::uint64_t epoch = 0);

    bool next(FeatureBatch& out);
    std::size_t num_batches() const noexcept;

private:
    const PackView* view_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace semdec
