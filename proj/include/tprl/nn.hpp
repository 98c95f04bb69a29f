#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tprl/matrix.hpp"
#include "tprl/rng.hpp"

namespace tprl {

// A learnable tensor plus its gradient accumulator. Gradients are zeroed
// explicitly by the owning trainer before each backward pass.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
        grad = Matrix(value.rows, value.cols, 0.0);
    }

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct AdamState {
    Matrix m;
    Matrix v;
    std::uint64_t step = 0;
};

// One bias-corrected Adam step. The gradient is left untouched. Non-finite
// gradients abort with the parameter name so training failures are traceable.
void adam_step(Parameter& p, AdamState& s, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Adam over a fixed parameter list; states are keyed by list position.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter*> params, double lr);

    void zero_grads();
    void step();

    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
};

// Weight init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] drawn from `rng`;
// fan_in is the input width of the layer the tensor belongs to.
Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

// Affine layer, y = x * w + b with w of shape (in, out). `has_bias` false
// turns it into a pure linear map (used by the projections and attention).
struct Affine {
    Parameter w;
    Parameter b;
    bool has_bias = true;

    struct Cache {
        Matrix x;
        bool valid = false;
    };

    static Affine init(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);

    Matrix forward(const Matrix& x, Cache& cache) const;
    // Accumulates into w.grad / b.grad, returns dX.
    Matrix backward(const Matrix& dy, Cache& cache);

    std::vector<Parameter*> params();
};

// Row-wise LayerNorm with learnable gain and shift, epsilon 1e-5.
struct LayerNorm {
    Parameter gain;
    Parameter shift;
    static constexpr double kEps = 1e-5;

    struct Cache {
        Matrix xhat;
        std::vector<double> inv_std;
        bool valid = false;
    };

    static LayerNorm init(const std::string& name, std::size_t dim);

    Matrix forward(const Matrix& x, Cache& cache) const;
    Matrix backward(const Matrix& dy, Cache& cache);

    std::vector<Parameter*> params();
};

// Multi-head self-attention followed by a residual connection and LayerNorm:
//   F = LayerNorm(X + concat_h(softmax(Q_h K_h^T / sqrt(d_k)) V_h) W_O)
// Heads are column slices of shared (d, d) projection matrices; d_k = d / h.
struct AttentionBlock {
    Parameter w_q;
    Parameter w_k;
    Parameter w_v;
    Parameter w_o;
    LayerNorm ln;
    std::size_t heads = 1;

    struct Cache {
        Matrix x;
        Matrix q, k, v;
        std::vector<Matrix> attn;  // per-head softmax weights, each n x n
        Matrix concat;
        LayerNorm::Cache ln_cache;
        bool valid = false;
    };

    static AttentionBlock init(const std::string& name, std::size_t d, std::size_t heads, Rng& rng);

    Matrix forward(const Matrix& x, Cache& cache) const;
    Matrix backward(const Matrix& dy, Cache& cache);

    std::vector<Parameter*> params();
};

}  // namespace tprl
