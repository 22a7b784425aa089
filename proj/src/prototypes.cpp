#include "semdec/prototypes.hpp"

#include <cmath>
#include <random>

#include "rng.hpp"
#include "semdec/encoders.hpp"
#include "semdec/simd/kernels.hpp"

namespace semdec {

PrototypeBank init_bank(std::size_t num_classes, std::size_t dim, std::uint64_t seed, double alpha) {
    if (num_classes == 0 || dim == 0) throw ConfigError("init_bank: K and dim must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("init_bank: alpha must lie in [0, 1]");
    auto rng = detail::seeded_engine(seed, 0x62616e6b);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix centres(num_classes, dim);
    for (double& v : centres.flat()) v = normal(rng);
    return PrototypeBank{l2_normalize(centres), alpha, std::vector<bool>(num_classes, false)};
}

ClassMeans class_means(const Matrix& z, std::span<const std::int32_t> labels) {
    if (labels.size() != z.rows()) throw DimensionError("class_means: label count differs from rows");
    if (z.rows() == 0) throw DimensionError("class_means: empty batch");
    ClassMeans sums;
    std::map<std::int32_t, std::size_t> counts;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto& acc = sums[labels[i]];
        if (acc.empty()) acc.assign(z.cols(), 0.0);
        simd::axpy(acc, 1.0, z.row(i));
        ++counts[labels[i]];
    }
    for (auto& [label, acc] : sums) {
        const double inv = 1.0 / static_cast<double>(counts[label]);
        for (double& v : acc) v *= inv;
    }
    return sums;
}

void ema_update(PrototypeBank& bank, const ClassMeans& means) {
    for (const auto& [label, mean] : means) {
        if (label < 0 || static_cast<std::size_t>(label) >= bank.num_classes()) {
            throw IndexError("ema_update: class id " + std::to_string(label) + " outside the bank");
        }
        if (mean.size() != bank.dim()) throw DimensionError("ema_update: mean width differs from bank");
    }
    for (const auto& [label, mean] : means) {
        auto c = bank.centres.row(static_cast<std::size_t>(label));
        for (std::size_t k = 0; k < c.size(); ++k) c[k] = bank.alpha * c[k] + (1.0 - bank.alpha) * mean[k];
        bank.seen[static_cast<std::size_t>(label)] = true;
    }
}

double intra_class_loss(const Matrix& z, std::span<const std::int32_t> labels, const PrototypeBank& bank,
                        Matrix* grad, IntraDeviation mode) {
    if (labels.size() != z.rows()) throw DimensionError("intra_class_loss: label count differs from rows");
    if (z.cols() != bank.dim()) throw DimensionError("intra_class_loss: feature width differs from bank");
    std::map<std::int32_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= bank.num_classes()) {
            throw IndexError("intra_class_loss: label outside the bank");
        }
        members[labels[i]].push_back(i);
    }
    if (grad) *grad = Matrix(z.rows(), z.cols());

    double total = 0.0;
    std::vector<double> dist;
    for (const auto& [label, rows] : members) {
        const auto centre = bank.centres.row(static_cast<std::size_t>(label));
        const double m = static_cast<double>(rows.size());
        dist.resize(rows.size());
        double mean = 0.0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            dist[r] = std::sqrt(simd::squared_distance(z.row(rows[r]), centre));
            mean += dist[r];
        }
        mean /= m;

        double term = 0.0;
        double sign_sum = 0.0;
        for (double d : dist) {
            const double dev = d - mean;
            term += mode == IntraDeviation::absolute ? std::abs(dev) : dev * dev;
            sign_sum += (dev > 0.0) - (dev < 0.0);
        }
        total += term / m;

        if (grad) {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const double dev = dist[r] - mean;
                // ∂term/∂d_r, including the dependence of the class mean on d_r.
                const double dd = mode == IntraDeviation::absolute
                                      ? (((dev > 0.0) - (dev < 0.0)) - sign_sum / m) / m
                                      : 2.0 * dev / m;
                if (dist[r] <= 0.0 || dd == 0.0) continue;
                auto g = grad->row(rows[r]);
                const auto zr = z.row(rows[r]);
                for (std::size_t k = 0; k < g.size(); ++k) g[k] = dd * (zr[k] - centre[k]) / dist[r];
            }
        }
    }
    return total;
}

}  // namespace semdec
