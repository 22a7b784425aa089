#include <cmath>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "scratch_dir.hpp"
#include "semdec/error.hpp"
#include "semdec/evaluation.hpp"

using namespace semdec;

namespace {

FeaturePack small_pack() {
    SynthConfig c;
    c.k_seen = 6;
    c.k_unseen = 4;
    c.n_per_class = 5;
    c.d_sem = 3;
    c.d_dom = 2;
    c.visual_dim = 7;
    c.neural_dim = 5;
    c.noise_sigma = 0.3;
    c.seed = 2;
    return generate_synthetic(c);
}

TrainState small_state(const FeaturePack& pack, Mode mode = Mode::ve_sdn) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.d_joint = 4;
    cfg.batch_size = 8;
    return init_state(cfg, pack.visual.cols(), pack.neural.cols(), pack.num_classes);
}

History history_from(const std::vector<double>& mi, const std::vector<double>& top1) {
    History h;
    for (std::size_t i = 0; i < mi.size(); ++i) h.epochs.push_back({i + 1, top1[i], std::min(1.0, top1[i] + 0.1), mi[i]});
    return h;
}

}  // namespace

TEST_CASE("pearson examples") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(std::abs(pearson(x, std::vector<double>{1, 3, 2, 4}) - 0.8) < 1e-12);
    CHECK(pearson(x, std::vector<double>{5, 7, 9, 11}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(x, std::vector<double>{-1, -2, -3, -4}) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(pearson(x, std::vector<double>{2, 2, 2, 2}), DomainError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), DomainError);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("pearson properties") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix m = oracle::random_matrix(2, 15, seed);
        std::vector<double> x(m.row(0).begin(), m.row(0).end()), y(m.row(1).begin(), m.row(1).end());
        const double r = pearson(x, y);
        CHECK(r == doctest::Approx(oracle::pearson_ref(x, y)).epsilon(1e-12));
        CHECK(std::abs(r) <= 1.0);
        std::vector<double> ax = x, ay = y;
        for (double& v : ax) v = 3.5 * v - 2.0;
        for (double& v : ay) v = 0.25 * v + 100.0;
        CHECK(pearson(ax, ay) == doctest::Approx(r).epsilon(1e-10));
    }
}

TEST_CASE("pearson_permutation_pvalue") {
    std::vector<double> x, y;
    for (int i = 0; i < 30; ++i) {
        x.push_back(i);
        y.push_back(i + 0.1 * ((i * 7) % 5));
    }
    const double p = pearson_permutation_pvalue(x, y, 999, 1);
    CHECK(p == doctest::Approx(1.0 / 1000.0));
    CHECK(pearson_permutation_pvalue(x, y, 999, 1) == p);
    const Matrix noise = oracle::random_matrix(1, 30, 4);
    std::vector<double> z(noise.row(0).begin(), noise.row(0).end());
    CHECK(pearson_permutation_pvalue(x, z, 999, 1) > 0.01);
}

TEST_CASE("mi_accuracy_analysis and inter_run_analysis") {
    const History co = history_from({0.1, 0.2, 0.3, 0.5, 0.6}, {0.2, 0.3, 0.35, 0.5, 0.55});
    CHECK(mi_accuracy_analysis(co).r_top1 > 0.0);

    std::vector<History> runs;
    for (int r = 0; r < 4; ++r) {
        std::vector<double> mi, acc;
        for (int e = 0; e < 15; ++e) {
            mi.push_back(e < 5 ? 100.0 : 0.1 * r + 0.001 * e);  // early epochs fall outside the window
            acc.push_back(0.2 * r + 0.001 * e);
        }
        runs.push_back(history_from(mi, acc));
    }
    const auto res = inter_run_analysis(runs, 10);
    CHECK(res.r_top1 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(inter_run_analysis(runs, 0), ConfigError);
    runs.push_back(History{});
    CHECK_THROWS_AS(inter_run_analysis(runs, 10), ConfigError);
}

TEST_CASE("top_k_accuracy and retrieval_topk") {
    Matrix eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const std::vector<std::int32_t> ids{4, 7, 9};
    CHECK(top_k_accuracy(eye, ids, ids, 1) == 1.0);

    const Matrix s = oracle::random_matrix(20, 6, 3);
    std::vector<std::int32_t> truth(20), tids{0, 1, 2, 3, 4, 5};
    for (std::size_t i = 0; i < 20; ++i) truth[i] = std::int32_t(i % 6);
    double prev = 0;
    for (std::size_t k = 1; k <= 6; ++k) {
        const double a = top_k_accuracy(s, truth, tids, k);
        CHECK(a >= prev);
        prev = a;
    }
    CHECK(prev == 1.0);
    CHECK_THROWS_AS(top_k_accuracy(s, truth, tids, 7), ConfigError);
    CHECK_THROWS_AS(top_k_accuracy(s, truth, tids, 0), ConfigError);

    const auto ranked = retrieval_topk(s, 5);
    for (std::size_t i = 0; i < 20; ++i) {
        REQUIRE(ranked[i].size() == 5);
        for (std::size_t r = 1; r < 5; ++r) CHECK(s(i, ranked[i][r - 1]) >= s(i, ranked[i][r]));
    }

    Matrix tie(1, 3);
    tie.fill(0.5);
    CHECK(retrieval_topk(tie, 3)[0] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("predict_from_semantic: self-match, ties and scale invariance") {
    const Matrix raw = oracle::random_matrix(5, 4, 1);
    TemplateSet t{l2_normalize(raw), {10, 11, 12, 13, 14}};
    const Prediction p = predict_from_semantic(t.z, t);
    CHECK(p.class_ids == t.class_ids);
    for (std::size_t i = 0; i < 5; ++i) CHECK(p.scores(i, i) == doctest::Approx(1.0).epsilon(1e-15));
    const auto head = retrieval_topk(p.scores, 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(t.class_ids[head[i][0]] == p.class_ids[i]);

    Matrix scaled = raw;
    scale_in_place(scaled, 5.0);
    const Matrix queries = l2_normalize(oracle::random_matrix(9, 4, 2));
    CHECK(predict_from_semantic(queries, TemplateSet{l2_normalize(scaled), t.class_ids}).class_ids ==
          predict_from_semantic(queries, t).class_ids);

    TemplateSet dup{Matrix(2, 4), {1, 2}};
    dup.z(0, 0) = dup.z(1, 0) = 1.0;
    Matrix q(1, 4);
    q(0, 0) = 1.0;
    CHECK(predict_from_semantic(q, dup).class_ids[0] == 1);
}

TEST_CASE("similarity_matrix") {
    const Matrix z = l2_normalize(oracle::random_matrix(6, 5, 3));
    const Matrix s = similarity_matrix(z, z);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(s(i, i) == doctest::Approx(1.0).epsilon(1e-15));
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(s(i, j) == s(j, i));
            CHECK(std::abs(s(i, j)) <= 1.0);
        }
    }
}

TEST_CASE("build_templates and zero_shot_predict") {
    const FeaturePack pack = small_pack();
    const TrainState st = small_state(pack);
    const Matrix rows = oracle::random_matrix(3, 7, 5);
    const std::vector<std::int32_t> ids{9, 6, 8};
    const TemplateSet t = build_templates(st, rows, ids);
    CHECK(t.class_ids == std::vector<std::int32_t>{6, 8, 9});
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0;
        for (double v : t.z.row(i)) s += v * v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(build_templates(st, rows, ids).z == t.z);
    CHECK_THROWS_AS(build_templates(st, rows, std::vector<std::int32_t>{1, 2, 1}), ConfigError);

    const Prediction p = zero_shot_predict(st, oracle::random_matrix(4, 5, 6), t);
    CHECK(p.scores.rows() == 4);
    CHECK(p.scores.cols() == 3);

    // clip_con templates are normalized raw embeddings, so raw rescaling
    // leaves predictions unchanged.
    const TrainState clip = small_state(pack, Mode::clip_con);
    Matrix scaled = rows;
    scale_in_place(scaled, 5.0);
    const Matrix eeg = oracle::random_matrix(8, 5, 7);
    CHECK(zero_shot_predict(clip, eeg, build_templates(clip, scaled, ids)).class_ids ==
          zero_shot_predict(clip, eeg, build_templates(clip, rows, ids)).class_ids);
}

TEST_CASE("gap_stats") {
    PrototypeBank b = init_bank(3, 2, 0);
    b.centres.fill(0.0);
    Matrix z(4, 2);
    z(0, 0) = 1.0;
    z(1, 1) = 3.0;
    z(2, 0) = 0.6;
    z(2, 1) = 0.8;
    z(3, 0) = -1.0;
    const std::vector<std::int32_t> y{0, 0, 2, 2};
    const auto g = gap_stats(z, y, b);
    REQUIRE(g.size() == 2);
    CHECK(g[0].class_id == 0);
    CHECK(g[0].mean == doctest::Approx(2.0));
    CHECK(g[0].std == doctest::Approx(1.0));
    CHECK(g[1].std == doctest::Approx(0.0).scale(1.0));
    CHECK(mean_gap_std(g) == doctest::Approx(0.5));
    const auto single = gap_stats(z, std::vector<std::int32_t>{0, 1, 2, 2}, b);
    CHECK(single[0].std == 0.0);
    CHECK_THROWS_AS(gap_stats(z, std::vector<std::int32_t>{0, 0, 3, 2}, b), IndexError);
}

TEST_CASE("evaluate_zero_shot report invariants and writers") {
    const FeaturePack pack = small_pack();
    const TrainState st = small_state(pack);
    const auto [train, test] = split_seen_unseen(pack);
    const EvalReport r = evaluate_zero_shot(st, test, 3);
    CHECK(r.class_ids == std::vector<std::int32_t>{6, 7, 8, 9});
    CHECK(r.top1 <= r.top5);
    CHECK(r.top1 >= 0.0);
    CHECK(r.top5 <= 1.0);
    std::size_t total = 0;
    for (const auto& row : r.confusion)
        for (std::size_t c : row) total += c;
    CHECK(total == test.size());
    const EvalReport again = evaluate_zero_shot(st, test, 3);
    CHECK(again.prediction.scores == r.prediction.scores);

    const auto dir = scratch_dir("writers");
    const std::vector<EpochSummary> e{{1, 0.25, 0.5, 0.1, 0.0, 0.0}};
    write_eval_csv(e, dir / "eval.csv");
    CHECK(read_bytes(dir / "eval.csv") == "epoch,top1,top5\n1,0.25,0.5\n");
    write_embeddings(r.neural_semantic, r.true_ids, "neural", dir);
    const auto meta = nlohmann::json::parse(read_bytes(dir / "embeddings_neural.json"));
    CHECK(meta.at("rows").get<std::size_t>() == r.neural_semantic.rows());
    CHECK(read_bytes(dir / "embeddings_neural.f32").size() == r.neural_semantic.size() * sizeof(float));
    write_matrix_csv(similarity_matrix(r.templates.z, r.templates.z), dir / "simmat.csv");
    CHECK(read_bytes(dir / "simmat.csv").find('\n') != std::string::npos);
}
