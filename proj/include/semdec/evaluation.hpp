#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "semdec/feature_io.hpp"
#include "semdec/model.hpp"
#include "semdec/training.hpp"

namespace semdec {

/// Unit-norm concept templates, one per class, sorted by class id.
struct TemplateSet {
    Matrix z;
    std::vector<std::int32_t> class_ids;
};

/// Encodes one visual row per class into the semantic space.
TemplateSet build_templates(const TrainState& state, const Matrix& visual_rows,
                            std::span<const std::int32_t> class_ids);

struct Prediction {
    std::vector<std::int32_t> class_ids;  // argmax per row, ties → lowest id
    Matrix scores;                        // rows × templates, cosine
};

Prediction zero_shot_predict(const TrainState& state, const Matrix& neural_rows, const TemplateSet& templates);
/// Scores already-encoded semantic rows against templates.
Prediction predict_from_semantic(const Matrix& neural_semantic, const TemplateSet& templates);

/// Template indices of the k best scores per row, descending; ties resolved
/// toward the lower index (= lower class id).
std::vector<std::vector<std::size_t>> retrieval_topk(const Matrix& scores, std::size_t k);

/// Fraction of rows whose true class is among the k best templates.
double top_k_accuracy(const Matrix& scores, std::span<const std::int32_t> true_ids,
                      std::span<const std::int32_t> template_ids, std::size_t k);

/// Pairwise cosine similarities of unit rows.
Matrix similarity_matrix(const Matrix& z_a, const Matrix& z_b);

double pearson(std::span<const double> x, std::span<const double> y);
/// Two-sided permutation p-value for the Pearson coefficient.
double pearson_permutation_pvalue(std::span<const double> x, std::span<const double> y, std::size_t permutations,
                                  std::uint64_t seed);

struct MiAccuracyCorrelation {
    double r_top1 = 0.0;
    double r_top5 = 0.0;
};

/// Per-epoch probe MI against per-epoch accuracy within one run.
MiAccuracyCorrelation mi_accuracy_analysis(const History& history);
/// Across runs: last-`window`-epoch means of probe MI against accuracy.
MiAccuracyCorrelation inter_run_analysis(std::span<const History> runs, std::size_t window = 10);

struct ClassGap {
    std::int32_t class_id = 0;
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

/// Distances ‖z_i − c_{y_i}‖₂ summarized per class.
std::vector<ClassGap> gap_stats(const Matrix& visual_semantic, std::span<const std::int32_t> labels,
                                const PrototypeBank& bank);
double mean_gap_std(std::span<const ClassGap> gaps);

struct EvalReport {
    double top1 = 0.0;
    double top5 = 0.0;
    std::vector<std::int32_t> class_ids;
    std::vector<double> per_class_accuracy;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], template order
    Prediction prediction;
    std::vector<std::int32_t> true_ids;
    TemplateSet templates;
    Matrix neural_semantic;
};

/// Templates from the first visual row of each class in `test`, decoded
/// against every neural row of `test`. top-k uses min(top_k, #classes).
EvalReport evaluate_zero_shot(const TrainState& state, const PackView& test, std::size_t top_k = 5);

void write_eval_csv(std::span<const EpochSummary> epochs, const std::filesystem::path& path);
void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
void write_gaps_csv(std::span<const ClassGap> gaps, const std::filesystem::path& path);
void write_retrieval_csv(const std::vector<std::vector<std::size_t>>& ranked,
                         std::span<const std::int32_t> template_ids, const std::filesystem::path& path);
/// embeddings_<modality>.f32 plus embeddings_<modality>.json (rows, cols, labels).
void write_embeddings(const Matrix& z, std::span<const std::int32_t> labels, const std::string& modality,
                      const std::filesystem::path& dir);

}  // namespace semdec
