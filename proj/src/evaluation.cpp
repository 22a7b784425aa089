#include "semdec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "blob_io.hpp"
#include "json.hpp"
#include "rng.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec {

namespace fs = std::filesystem;

TemplateSet build_templates(const TrainState& state, const Matrix& visual_rows, std::span<const std::int32_t> class_ids) {
    if (visual_rows.rows() != class_ids.size()) throw DimensionError("build_templates: one row per class id required");
    std::vector<std::size_t> order(class_ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return class_ids[a] < class_ids[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (class_ids[order[i]] == class_ids[order[i - 1]]) {
            throw ConfigError("build_templates: duplicate class id " + std::to_string(class_ids[order[i]]));
        }
    }
    TemplateSet t;
    t.z = visual_semantic(state, select_rows(visual_rows, order));
    for (std::size_t i : order) t.class_ids.push_back(class_ids[i]);
    return t;
}

Prediction predict_from_semantic(const Matrix& neural_semantic, const TemplateSet& templates) {
    if (templates.z.rows() == 0) throw ConfigError("zero_shot_predict: no templates");
    Prediction p;
    p.scores = similarity_matrix(neural_semantic, templates.z);
    p.class_ids.resize(neural_semantic.rows());
    for (std::size_t i = 0; i < p.scores.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < p.scores.cols(); ++j) {
            if (p.scores(i, j) > p.scores(i, best)) best = j;
        }
        p.class_ids[i] = templates.class_ids[best];
    }
    return p;
}

Prediction zero_shot_predict(const TrainState& state, const Matrix& neural_rows, const TemplateSet& templates) {
    return predict_from_semantic(neural_semantic(state, neural_rows), templates);
}

std::vector<std::vector<std::size_t>> retrieval_topk(const Matrix& scores, std::size_t k) {
    if (k < 1 || k > scores.cols()) throw ConfigError("retrieval_topk: k must lie in [1, #templates]");
    std::vector<std::vector<std::size_t>> out(scores.rows());
    std::vector<std::size_t> idx(scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        std::iota(idx.begin(), idx.end(), 0);
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (scores(i, a) != scores(i, b)) return scores(i, a) > scores(i, b);
                              return a < b;
                          });
        out[i].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
}

double top_k_accuracy(const Matrix& scores, std::span<const std::int32_t> true_ids,
                      std::span<const std::int32_t> template_ids, std::size_t k) {
    if (k < 1) throw ConfigError("top_k_accuracy: k must be >= 1");
    if (k > scores.cols()) throw ConfigError("top_k_accuracy: k exceeds the number of templates");
    if (true_ids.size() != scores.rows() || template_ids.size() != scores.cols()) {
        throw DimensionError("top_k_accuracy: label counts do not match the score matrix");
    }
    if (scores.rows() == 0) return 0.0;
    const auto ranked = retrieval_topk(scores, k);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        for (std::size_t j : ranked[i]) {
            if (template_ids[j] == true_ids[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

Matrix similarity_matrix(const Matrix& z_a, const Matrix& z_b) {
    Matrix s = matmul_nt(z_a, z_b);
    // Unit rows keep entries in [−1, 1] up to rounding; clamp the rounding.
    for (double& v : s.flat()) v = std::clamp(v, -1.0, 1.0);
    return s;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
    if (x.size() < 2) throw DomainError("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DomainError("pearson: undefined correlation (zero variance)");
    return sxy / std::sqrt(sxx * syy);
}

double pearson_permutation_pvalue(std::span<const double> x, std::span<const double> y, std::size_t permutations,
                                  std::uint64_t seed) {
    if (permutations == 0) throw ConfigError("pearson_permutation_pvalue: need at least one permutation");
    const double observed = std::abs(pearson(x, y));
    std::vector<double> shuffled(y.begin(), y.end());
    auto rng = detail::seeded_engine(seed, 0x70657270);
    std::size_t extreme = 0;
    for (std::size_t p = 0; p < permutations; ++p) {
        for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[detail::bounded(rng, i)]);
        if (std::abs(pearson(x, shuffled)) >= observed - 1e-12) ++extreme;
    }
    return static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
}

MiAccuracyCorrelation mi_accuracy_analysis(const History& history) {
    std::vector<double> mi, top1, top5;
    for (const EpochSummary& e : history.epochs) {
        mi.push_back(e.probe_mi);
        top1.push_back(e.top1);
        top5.push_back(e.top5);
    }
    return {pearson(mi, top1), pearson(mi, top5)};
}

MiAccuracyCorrelation inter_run_analysis(std::span<const History> runs, std::size_t window) {
    if (window < 1) throw ConfigError("inter_run_analysis: window must be >= 1");
    std::vector<double> mi, top1, top5;
    for (const History& h : runs) {
        if (h.epochs.empty()) throw ConfigError("inter_run_analysis: run without epoch summaries");
        const std::size_t w = std::min(window, h.epochs.size());
        double m = 0.0, a1 = 0.0, a5 = 0.0;
        for (std::size_t i = h.epochs.size() - w; i < h.epochs.size(); ++i) {
            m += h.epochs[i].probe_mi;
            a1 += h.epochs[i].top1;
            a5 += h.epochs[i].top5;
        }
        mi.push_back(m / double(w));
        top1.push_back(a1 / double(w));
        top5.push_back(a5 / double(w));
    }
    return {pearson(mi, top1), pearson(mi, top5)};
}

std::vector<ClassGap> gap_stats(const Matrix& visual_semantic, std::span<const std::int32_t> labels,
                                const PrototypeBank& bank) {
    if (labels.size() != visual_semantic.rows()) throw DimensionError("gap_stats: label count differs from rows");
    if (visual_semantic.cols() != bank.dim()) throw DimensionError("gap_stats: feature width differs from bank");
    std::map<std::int32_t, std::vector<double>> dist;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= bank.num_classes()) {
            throw IndexError("gap_stats: label outside the bank");
        }
        dist[labels[i]].push_back(
            std::sqrt(simd::squared_distance(visual_semantic.row(i), bank.centres.row(static_cast<std::size_t>(labels[i])))));
    }
    std::vector<ClassGap> out;
    for (const auto& [label, d] : dist) {
        const double n = static_cast<double>(d.size());
        const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
        double var = 0.0;
        for (double v : d) var += (v - mean) * (v - mean);
        out.push_back({label, d.size(), mean, std::sqrt(var / n)});
    }
    return out;
}

double mean_gap_std(std::span<const ClassGap> gaps) {
    if (gaps.empty()) throw ConfigError("mean_gap_std: no classes");
    double s = 0.0;
    for (const ClassGap& g : gaps) s += g.std;
    return s / static_cast<double>(gaps.size());
}

EvalReport evaluate_zero_shot(const TrainState& state, const PackView& test, std::size_t top_k) {
    if (test.size() == 0) throw ConfigError("evaluate_zero_shot: empty test view");
    const FeaturePack& pack = *test.pack;

    std::vector<std::size_t> template_rows;
    std::vector<std::int32_t> template_ids;
    std::set<std::int32_t> seen;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (seen.insert(test.label(i)).second) {
            template_rows.push_back(test.rows[i]);
            template_ids.push_back(test.label(i));
        }
    }
    EvalReport r;
    Matrix template_visual(template_rows.size(), pack.visual.cols());
    for (std::size_t i = 0; i < template_rows.size(); ++i) {
        const auto src = pack.visual.row(template_rows[i]);
        std::copy(src.begin(), src.end(), template_visual.row(i).begin());
    }
    r.templates = build_templates(state, template_visual, template_ids);

    std::vector<std::size_t> all(test.size());
    std::iota(all.begin(), all.end(), 0);
    const FeatureBatch rows = gather_batch(test, all);
    r.true_ids = rows.labels;
    r.neural_semantic = neural_semantic(state, rows.neural);
    r.prediction = predict_from_semantic(r.neural_semantic, r.templates);

    const std::size_t u = r.templates.class_ids.size();
    r.top1 = top_k_accuracy(r.prediction.scores, r.true_ids, r.templates.class_ids, 1);
    r.top5 = top_k_accuracy(r.prediction.scores, r.true_ids, r.templates.class_ids, std::min(top_k, u));

    r.class_ids = r.templates.class_ids;
    std::map<std::int32_t, std::size_t> index;
    for (std::size_t j = 0; j < u; ++j) index[r.class_ids[j]] = j;
    r.confusion.assign(u, std::vector<std::size_t>(u, 0));
    for (std::size_t i = 0; i < r.true_ids.size(); ++i) {
        ++r.confusion[index.at(r.true_ids[i])][index.at(r.prediction.class_ids[i])];
    }
    r.per_class_accuracy.resize(u);
    for (std::size_t j = 0; j < u; ++j) {
        const std::size_t total = std::accumulate(r.confusion[j].begin(), r.confusion[j].end(), std::size_t{0});
        r.per_class_accuracy[j] = total ? static_cast<double>(r.confusion[j][j]) / static_cast<double>(total) : 0.0;
    }
    return r;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path.filename().string(), "cannot write " + path.string());
    return out;
}

}  // namespace

void write_eval_csv(std::span<const EpochSummary> epochs, const fs::path& path) {
    auto out = open_out(path);
    out << "epoch,top1,top5\n";
    for (const EpochSummary& e : epochs) out << e.epoch << ',' << fmt_double(e.top1) << ',' << fmt_double(e.top5) << '\n';
}

void write_matrix_csv(const Matrix& m, const fs::path& path) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt_double(m(i, j));
        out << '\n';
    }
}

void write_gaps_csv(std::span<const ClassGap> gaps, const fs::path& path) {
    auto out = open_out(path);
    out << "class,count,mean,std\n";
    for (const ClassGap& g : gaps) {
        out << g.class_id << ',' << g.count << ',' << fmt_double(g.mean) << ',' << fmt_double(g.std) << '\n';
    }
}

void write_retrieval_csv(const std::vector<std::vector<std::size_t>>& ranked, std::span<const std::int32_t> template_ids,
                         const fs::path& path) {
    auto out = open_out(path);
    out << "row";
    const std::size_t k = ranked.empty() ? 0 : ranked.front().size();
    for (std::size_t r = 0; r < k; ++r) out << ",rank" << (r + 1);
    out << '\n';
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        out << i;
        for (std::size_t j : ranked[i]) out << ',' << template_ids[j];
        out << '\n';
    }
}

void write_embeddings(const Matrix& z, std::span<const std::int32_t> labels, const std::string& modality,
                      const fs::path& dir) {
    fs::create_directories(dir);
    const std::string blob = "embeddings_" + modality + ".f32";
    const MatrixF zf = to_float(z);
    detail::write_blob<float>(dir / blob, zf.flat(), blob);
    nlohmann::json manifest{{"rows", z.rows()}, {"cols", z.cols()}, {"blob", blob},
                            {"labels", std::vector<std::int32_t>(labels.begin(), labels.end())}};
    auto out = open_out(dir / ("embeddings_" + modality + ".json"));
    out << manifest.dump(2) << '\n';
}

}  // namespace semdec
