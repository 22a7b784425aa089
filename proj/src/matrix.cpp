#include "semdec/matrix.hpp"

#include <cmath>
#include <string>

#include "semdec/simd/kernels.hpp"

namespace semdec {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!same_shape(a, b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    simd::kernels().gemm_nn(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    simd::kernels().gemm_tn(a.cols(), a.rows(), b.cols(), a.data(), b.data(), c.data());
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts differ");
    Matrix c(a.rows(), b.rows());
    simd::kernels().gemm_nt(a.rows(), a.cols(), b.rows(), a.data(), b.data(), c.data());
    return c;
}

void add_row_vector(Matrix& m, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) throw DimensionError("add_row_vector: bias shape");
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias(0, c);
    }
}

Matrix column_sums(const Matrix& m) {
    Matrix out(1, m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) simd::axpy(out.row(0), 1.0, m.row(r));
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    c += b;
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    add_scaled(c, b, -1.0);
    return c;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    add_scaled(a, b, 1.0);
    return a;
}

void add_scaled(Matrix& a, const Matrix& b, double scale) {
    require_same_shape(a, b, "add_scaled");
    simd::axpy(a.flat(), scale, b.flat());
}

void scale_in_place(Matrix& a, double scale) {
    for (double& v : a.flat()) v *= scale;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) throw IndexError("select_rows: row index out of range");
        auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix to_double(const MatrixF& m) {
    std::vector<double> data(m.storage().begin(), m.storage().end());
    return Matrix(m.rows(), m.cols(), std::move(data));
}

MatrixF to_float(const Matrix& m) {
    std::vector<float> data(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) data[i] = static_cast<float>(m.data()[i]);
    return MatrixF(m.rows(), m.cols(), std::move(data));
}

bool all_finite(const Matrix& m) {
    for (double v : m.flat()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(simd::dot(m.flat(), m.flat())); }

}  // namespace semdec
