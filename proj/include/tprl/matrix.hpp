#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tprl {

// Dense row-major matrix of doubles. The whole project runs on 64-bit floats;
// there is no strided view machinery because every consumer owns its data.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    static Matrix identity(std::size_t n);
};

bool same_shape(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, const std::string& what);
void ensure_finite(double x, const std::string& what);

// C = A * B. Shapes checked, DimensionError on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = A^T * B.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction, so large logits stay finite.
Matrix softmax_rows(const Matrix& x);
// dX for Y = softmax_rows(X), given Y and dY.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// Exact GELU, x * Phi(x) with the erf form (no tanh approximation).
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

Matrix sigmoid(const Matrix& x);
double sigmoid_scalar(double x);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
void add_in_place(Matrix& a, const Matrix& b);
void scale_in_place(Matrix& a, double s);

// Gathers the given rows, in order. Indices out of range are a state error.
Matrix take_rows(const Matrix& m, const std::vector<std::uint32_t>& rows);

}  // namespace tprl
