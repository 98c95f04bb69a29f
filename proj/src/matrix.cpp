#include "tprl/matrix.hpp"

#include <cmath>

#include "tprl/error.hpp"

namespace tprl {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

bool same_shape(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void ensure_finite(const Matrix& m, const std::string& what) {
    if (!all_finite(m)) throw NumericError("non-finite value in " + what);
}

void ensure_finite(double x, const std::string& what) {
    if (!std::isfinite(x)) throw NumericError("non-finite value in " + what);
}

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw DimensionError(what);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols, 0.0);
    // i-k-j order streams rows of b, which auto-vectorizes well.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
    Matrix c(a.rows, b.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "matmul_tn: inner dimensions differ");
    Matrix c(a.cols, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            double* crow = c.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double* yr = y.row(i);
        double mx = xr[0];
        for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < x.cols; ++j) yr[j] *= inv;
    }
    return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
    require(same_shape(y, dy), "softmax_rows_backward: shape mismatch");
    Matrix dx(y.rows, y.cols);
    for (std::size_t i = 0; i < y.rows; ++i) {
        const double* yr = y.row(i);
        const double* dr = dy.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) dot += yr[j] * dr[j];
        double* xr = dx.row(i);
        for (std::size_t j = 0; j < y.cols; ++j) xr[j] = yr[j] * (dr[j] - dot);
    }
    return dx;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad_scalar(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double dens = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return phi + x * dens;
}

Matrix gelu(const Matrix& x) {
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = gelu_scalar(x.data[i]);
    return y;
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
    require(same_shape(x, dy), "gelu_backward: shape mismatch");
    Matrix dx(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = gelu_grad_scalar(x.data[i]) * dy.data[i];
    return dx;
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = sigmoid_scalar(x.data[i]);
    return y;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(same_shape(a, b), "add: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require(same_shape(a, b), "sub: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require(same_shape(a, b), "add_in_place: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

void scale_in_place(Matrix& a, double s) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] *= s;
}

Matrix take_rows(const Matrix& m, const std::vector<std::uint32_t>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows) throw StateError("take_rows: row index out of range");
        std::copy(m.row(rows[i]), m.row(rows[i]) + m.cols, out.row(i));
    }
    return out;
}

}  // namespace tprl
