#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "semdec/encoders.hpp"
#include "semdec/error.hpp"
#include "semdec/prototypes.hpp"

using namespace semdec;

namespace {

PrototypeBank zero_bank(std::size_t k, std::size_t d, double alpha = 0.5) {
    PrototypeBank b = init_bank(k, d, 0, alpha);
    b.centres.fill(0.0);
    return b;
}

// Random orthogonal matrix from Gram–Schmidt on a Gaussian draw.
Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
    Matrix q = oracle::random_matrix(d, d, seed);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double p = 0;
            for (std::size_t k = 0; k < d; ++k) p += q(i, k) * q(j, k);
            for (std::size_t k = 0; k < d; ++k) q(i, k) -= p * q(j, k);
        }
        double s = 0;
        for (std::size_t k = 0; k < d; ++k) s += q(i, k) * q(i, k);
        for (std::size_t k = 0; k < d; ++k) q(i, k) /= std::sqrt(s);
    }
    return q;
}

double norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("init_bank") {
    const PrototypeBank a = init_bank(5, 3, 9);
    CHECK(a == init_bank(5, 3, 9));
    CHECK_FALSE(a == init_bank(5, 3, 10));
    for (std::size_t k = 0; k < 5; ++k) CHECK(norm(a.centres.row(k)) == doctest::Approx(1.0).epsilon(1e-14));
    for (bool s : a.seen) CHECK_FALSE(s);
    CHECK_THROWS_AS(init_bank(0, 3, 0), ConfigError);
    CHECK_THROWS_AS(init_bank(2, 3, 0, 1.5), ConfigError);
}

TEST_CASE("class_means examples") {
    Matrix z(3, 2);
    z(0, 0) = 1;
    z(1, 1) = 1;
    z(2, 0) = 0.3;
    z(2, 1) = -0.7;
    const std::vector<std::int32_t> y{3, 3, 5};
    const ClassMeans m = class_means(z, y);
    CHECK(m.size() == 2);
    CHECK(m.at(3) == std::vector<double>{0.5, 0.5});
    CHECK(m.at(5) == std::vector<double>{0.3, -0.7});
    CHECK_THROWS_AS(class_means(z, std::vector<std::int32_t>{1, 2}), DimensionError);
}

TEST_CASE("ema_update examples") {
    SUBCASE("alpha 0.5") {
        PrototypeBank b = zero_bank(2, 2);
        b.centres(1, 0) = 1.0;
        ema_update(b, {{1, {0.0, 1.0}}});
        CHECK(b.centres(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(b.centres(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(b.seen[1]);
        CHECK_FALSE(b.seen[0]);
    }
    SUBCASE("alpha 1 leaves the bank unchanged") {
        PrototypeBank b = init_bank(3, 2, 4, 1.0);
        const Matrix before = b.centres;
        ema_update(b, {{0, {5.0, 5.0}}, {2, {-1.0, 3.0}}});
        CHECK(b.centres == before);
    }
    SUBCASE("alpha 0 replaces rows by the means") {
        PrototypeBank b = init_bank(3, 2, 4, 0.0);
        ema_update(b, {{2, {-1.0, 3.0}}});
        CHECK(b.centres(2, 0) == -1.0);
        CHECK(b.centres(2, 1) == 3.0);
    }
    SUBCASE("out-of-range class id") {
        PrototypeBank b = init_bank(3, 2, 4);
        const PrototypeBank before = b;
        CHECK_THROWS_AS(ema_update(b, {{0, {1.0, 1.0}}, {3, {1.0, 1.0}}}), IndexError);
        CHECK(b == before);
        CHECK_THROWS_AS(ema_update(b, {{-1, {1.0, 1.0}}}), IndexError);
    }
}

TEST_CASE("ema_update properties") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double alpha = double(seed % 10) / 10.0;
        PrototypeBank b = init_bank(4, 6, seed, alpha);
        b.centres = oracle::random_matrix(4, 6, seed + 1, 2.0);
        const Matrix m = oracle::random_matrix(4, 6, seed + 2, 0.5);
        ClassMeans means;
        for (std::int32_t k = 0; k < 4; ++k) means[k] = {m.row(k).begin(), m.row(k).end()};

        PrototypeBank once = b;
        ema_update(once, means);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(norm(once.centres.row(k)) <= std::max(norm(b.centres.row(k)), norm(m.row(k))) + 1e-12);
        }

        PrototypeBank twice = b;
        ema_update(twice, means);
        ema_update(twice, means);
        PrototypeBank squared = b;
        squared.alpha = alpha * alpha;
        ema_update(squared, means);
        CHECK(oracle::relative_error(twice.centres, squared.centres) < 1e-14);
    }
}

TEST_CASE("intra_class_loss examples") {
    PrototypeBank b = zero_bank(3, 2);
    SUBCASE("distances {1, 3} give 1") {
        Matrix z(2, 2);
        z(0, 0) = 1.0;
        z(1, 1) = 3.0;
        const std::vector<std::int32_t> y{1, 1};
        CHECK(intra_class_loss(z, y, b) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(intra_class_loss(z, y, b, nullptr, IntraDeviation::squared) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("equidistant members give 0") {
        const Matrix z = oracle::unit_rows(oracle::random_matrix(5, 2, 3));
        CHECK(intra_class_loss(z, std::vector<std::int32_t>{0, 0, 0, 2, 2}, b) == doctest::Approx(0.0).scale(1.0));
    }
    SUBCASE("single-member classes give 0") {
        const Matrix z = oracle::random_matrix(3, 2, 4);
        CHECK(intra_class_loss(z, std::vector<std::int32_t>{0, 1, 2}, b) == 0.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(intra_class_loss(Matrix(2, 2), std::vector<std::int32_t>{0, 3}, b), IndexError);
        CHECK_THROWS_AS(intra_class_loss(Matrix(2, 3), std::vector<std::int32_t>{0, 1}, b), DimensionError);
    }
}

TEST_CASE("intra_class_loss properties") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const Matrix z = oracle::unit_rows(oracle::random_matrix(12, 4, seed));
        std::vector<std::int32_t> y(12);
        for (std::size_t i = 0; i < 12; ++i) y[i] = std::int32_t((i * 7 + seed) % 4);
        PrototypeBank b = init_bank(4, 4, seed + 1);
        const double l = intra_class_loss(z, y, b);
        CHECK(l >= 0.0);

        const Matrix q = random_orthogonal(4, seed + 2);
        PrototypeBank rotated = b;
        rotated.centres = matmul(b.centres, q);
        CHECK(intra_class_loss(matmul(z, q), y, rotated) == doctest::Approx(l).epsilon(1e-12));
    }
}

TEST_CASE("intra_class_loss gradients match finite differences") {
    for (IntraDeviation mode : {IntraDeviation::absolute, IntraDeviation::squared}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Matrix z = oracle::unit_rows(oracle::random_matrix(9, 3, seed + 30));
            const std::vector<std::int32_t> y{0, 1, 0, 1, 2, 0, 1, 0, 2};
            const PrototypeBank b = init_bank(3, 3, seed);
            Matrix g;
            intra_class_loss(z, y, b, &g, mode);
            // Random draws keep every d_i away from its class mean.
            const Matrix num = oracle::numeric_gradient(z, [&] { return intra_class_loss(z, y, b, nullptr, mode); });
            CHECK(oracle::relative_error(g, num) < 1e-6);
        }
    }
}
