#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "scratch_dir.hpp"
#include "semdec/error.hpp"
#include "semdec/feature_io.hpp"

using namespace semdec;

namespace {

// Rank of a float matrix by Gaussian elimination with partial pivoting.
std::size_t numeric_rank(const MatrixF& m, double tol = 1e-6) {
    Matrix a = to_double(m);
    std::size_t rank = 0;
    for (std::size_t col = 0; col < a.cols() && rank < a.rows(); ++col) {
        std::size_t pivot = rank;
        for (std::size_t r = rank; r < a.rows(); ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (std::abs(a(pivot, col)) < tol) continue;
        for (std::size_t c = 0; c < a.cols(); ++c) std::swap(a(rank, c), a(pivot, c));
        for (std::size_t r = rank + 1; r < a.rows(); ++r) {
            const double f = a(r, col) / a(rank, col);
            for (std::size_t c = 0; c < a.cols(); ++c) a(r, c) -= f * a(rank, c);
        }
        ++rank;
    }
    return rank;
}

SynthConfig tiny() {
    SynthConfig c;
    c.k_seen = 2;
    c.k_unseen = 1;
    c.n_per_class = 3;
    c.d_sem = 2;
    c.d_dom = 2;
    c.visual_dim = 4;
    c.neural_dim = 4;
    c.noise_sigma = 0.0;
    return c;
}

FeaturePack small_pack() {
    FeaturePack p;
    p.num_classes = 3;
    p.labels = {0, 1, 2, 2};
    p.unseen_classes = {2};
    p.visual = MatrixF(4, 2);
    p.neural = MatrixF(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t k = 0; k < 2; ++k) p.visual(i, k) = float(i * 10 + k);
        for (std::size_t k = 0; k < 3; ++k) p.neural(i, k) = float(i * 100 + k);
    }
    return p;
}

}  // namespace

TEST_CASE("generate_synthetic: zero-noise tiny pack") {
    const FeaturePack p = generate_synthetic(tiny());
    CHECK(p.size() == 9);
    CHECK(p.num_classes == 3);
    CHECK(p.unseen_classes == std::vector<std::int32_t>{2});
    CHECK(p.visual.cols() == 4);
    CHECK(p.neural.cols() == 4);
    for (std::int32_t k = 0; k < 3; ++k) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p.labels[i] == k) rows.push_back(i);
        CHECK(rows.size() == 3);
        MatrixF sub(rows.size(), p.visual.cols());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < p.visual.cols(); ++c) sub(r, c) = p.visual(rows[r], c);
        CHECK(numeric_rank(sub) <= 4);
    }
}

TEST_CASE("generate_synthetic: deterministic in seed") {
    SynthConfig c = tiny();
    c.noise_sigma = 0.3;
    c.seed = 5;
    CHECK(generate_synthetic(c) == generate_synthetic(c));
    SynthConfig d = c;
    d.seed = 6;
    CHECK_FALSE(generate_synthetic(c) == generate_synthetic(d));
}

TEST_CASE("generate_synthetic: no domain and no noise collapses each class") {
    SynthConfig c = tiny();
    c.d_dom = 0;
    const FeaturePack p = generate_synthetic(c);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (p.labels[i] != p.labels[j]) continue;
            for (std::size_t k = 0; k < 4; ++k) {
                CHECK(p.visual(i, k) == p.visual(j, k));
                CHECK(p.neural(i, k) == p.neural(j, k));
            }
        }
    }
}

TEST_CASE("generate_synthetic: invalid configs") {
    SynthConfig c = tiny();
    c.k_seen = 0;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    c = tiny();
    c.noise_sigma = -1;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    c = tiny();
    c.visual_dim = 1;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
}

TEST_CASE("save_pack/load_pack round trip is exact") {
    const auto dir = scratch_dir("roundtrip");
    SynthConfig c = tiny();
    c.noise_sigma = 0.7;
    FeaturePack p = generate_synthetic(c);
    p.class_names = {"a", "b", "c"};
    save_pack(p, dir / "p1");
    const FeaturePack q = load_pack(dir / "p1");
    CHECK(q == p);
    save_pack(q, dir / "p2");
    for (const char* f : {"manifest.json", "visual.f32", "neural.f32", "labels.i32"}) {
        CHECK(read_bytes(dir / "p1" / f) == read_bytes(dir / "p2" / f));
    }
}

TEST_CASE("load_pack: labels blob shorter than the manifest claims") {
    const auto dir = scratch_dir("short_labels");
    // Manifest and feature blobs say N=10; labels.i32 holds 9 entries.
    FeaturePack p;
    p.num_classes = 10;
    p.labels.resize(10);
    for (int i = 0; i < 10; ++i) p.labels[i] = i;
    p.unseen_classes = {9};
    p.visual = MatrixF(10, 4);
    p.neural = MatrixF(10, 4);
    save_pack(p, dir);
    {
        std::ofstream out(dir / "labels.i32", std::ios::binary | std::ios::trunc);
        for (std::int32_t i = 0; i < 9; ++i) out.write(reinterpret_cast<const char*>(&i), sizeof i);
    }
    try {
        load_pack(dir);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.field() == "labels");
    }
}

TEST_CASE("load_pack: corrupt inputs name the field") {
    const auto dir = scratch_dir("corrupt");
    FeaturePack p = small_pack();
    save_pack(p, dir);
    auto manifest = nlohmann::json::parse(read_bytes(dir / "manifest.json"));

    auto expect_field = [&](nlohmann::json m, const std::string& field) {
        std::ofstream(dir / "manifest.json", std::ios::trunc) << m.dump();
        try {
            load_pack(dir);
            FAIL("expected a format error for " << field);
        } catch (const FormatError& e) {
            CHECK(e.field() == field);
        }
    };
    {
        auto m = manifest;
        m.erase("unseen_classes");
        expect_field(m, "unseen_classes");
    }
    {
        auto m = manifest;
        m["D_v"] = 3;
        expect_field(m, "visual");
    }
    {
        auto m = manifest;
        m["version"] = 99;
        expect_field(m, "version");
    }
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump();
    p.visual(1, 1) = std::numeric_limits<float>::infinity();
    {
        std::ofstream out(dir / "visual.f32", std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(p.visual.data()), std::streamsize(p.visual.size() * sizeof(float)));
    }
    try {
        load_pack(dir);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.field() == "visual");
    }
}

TEST_CASE("pack with 1024-wide visual features is accepted") {
    const auto dir = scratch_dir("wide");
    FeaturePack p = small_pack();
    p.visual = MatrixF(4, 1024);
    p.visual(3, 1023) = 1.5f;
    save_pack(p, dir);
    CHECK(load_pack(dir) == p);
}

TEST_CASE("split_seen_unseen") {
    const FeaturePack p = small_pack();
    const auto [train, test] = split_seen_unseen(p);
    CHECK(train.rows == std::vector<std::size_t>{0, 1});
    CHECK(test.rows == std::vector<std::size_t>{2, 3});

    FeaturePack all = p;
    all.unseen_classes = {0, 1, 2};
    CHECK_THROWS_AS(split_seen_unseen(all), ConfigError);
    FeaturePack none = p;
    none.unseen_classes = {};
    CHECK_THROWS_AS(split_seen_unseen(none), ConfigError);
}

TEST_CASE("split of a ThingsEEG-shaped pack") {
    FeaturePack p;
    p.num_classes = 1854;
    p.visual = MatrixF(16740, 1);
    p.neural = MatrixF(16740, 1);
    for (std::int32_t k = 0; k < 1654; ++k)
        for (int r = 0; r < 10; ++r) p.labels.push_back(k);
    for (std::int32_t k = 1654; k < 1854; ++k) {
        p.labels.push_back(k);
        p.unseen_classes.push_back(k);
    }
    const auto [train, test] = split_seen_unseen(p);
    CHECK(train.size() == 16540);
    CHECK(test.size() == 200);
}

TEST_CASE("BatchIterator") {
    FeaturePack p;
    p.num_classes = 2;
    p.unseen_classes = {1};
    p.visual = MatrixF(10, 2);
    p.neural = MatrixF(10, 1);
    for (int i = 0; i < 10; ++i) {
        p.labels.push_back(i < 9 ? 0 : 1);
        p.visual(i, 0) = float(i);
        p.neural(i, 0) = float(-i);
    }
    const auto [train, test] = split_seen_unseen(p);
    REQUIRE(train.size() == 9);

    SUBCASE("sizes 4, 4, 1 covering every row once") {
        BatchIterator it(train, 4, 3);
        CHECK(it.num_batches() == 3);
        std::vector<std::size_t> sizes;
        std::multiset<double> seen;
        FeatureBatch b;
        while (it.next(b)) {
            sizes.push_back(b.size());
            for (std::size_t r = 0; r < b.size(); ++r) {
                seen.insert(b.visual(r, 0));
                CHECK(b.neural(r, 0) == -b.visual(r, 0));
            }
        }
        CHECK(sizes == std::vector<std::size_t>{4, 4, 1});
        CHECK(seen == std::multiset<double>{0, 1, 2, 3, 4, 5, 6, 7, 8});
    }
    SUBCASE("same seed, same order; epochs differ") {
        auto order = [&](std::uint64_t seed, std::uint64_t epoch) {
            BatchIterator it(train, 4, seed, epoch);
            std::vector<double> v;
            FeatureBatch b;
            while (it.next(b))
                for (std::size_t r = 0; r < b.size(); ++r) v.push_back(b.visual(r, 0));
            return v;
        };
        CHECK(order(11, 0) == order(11, 0));
        CHECK(order(11, 0) != order(11, 1));
        CHECK(epoch_permutation(100, 1, 2) == epoch_permutation(100, 1, 2));
    }
    SUBCASE("empty view") {
        PackView empty{&p, {}};
        CHECK_THROWS_AS(BatchIterator(empty, 4, 0), ConfigError);
    }
}
