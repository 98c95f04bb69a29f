#include "tprl/nn.hpp"

#include <cmath>

#include "tprl/error.hpp"

namespace tprl {

void adam_step(Parameter& p, AdamState& s, double lr, double beta1, double beta2, double eps) {
    if (!all_finite(p.grad)) throw NumericError("non-finite gradient for parameter " + p.name);
    if (s.m.size() != p.value.size()) {
        s.m = Matrix(p.value.rows, p.value.cols, 0.0);
        s.v = Matrix(p.value.rows, p.value.cols, 0.0);
        s.step = 0;
    }
    s.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.data[i];
        s.m.data[i] = beta1 * s.m.data[i] + (1.0 - beta1) * g;
        s.v.data[i] = beta2 * s.v.data[i] + (1.0 - beta2) * g * g;
        const double mhat = s.m.data[i] / bc1;
        const double vhat = s.v.data[i] / bc2;
        p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double lr_in)
    : lr(lr_in), params_(std::move(params)), states_(params_.size()) {}

void AdamOptimizer::zero_grads() {
    for (Parameter* p : params_) p->zero_grad();
}

void AdamOptimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        adam_step(*params_[i], states_[i], lr, beta1, beta2, eps);
    }
}

Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (double& v : m.data) v = (2.0 * rng.uniform01() - 1.0) * bound;
    return m;
}

// ---------------------------------------------------------------------------
// Affine

Affine Affine::init(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                    bool with_bias) {
    Affine a;
    a.w = Parameter(name + ".w", init_uniform(in, out, in, rng));
    a.has_bias = with_bias;
    if (with_bias) {
        a.b = Parameter(name + ".b", Matrix(1, out, 0.0));
    }
    return a;
}

Matrix Affine::forward(const Matrix& x, Cache& cache) const {
    Matrix y = matmul(x, w.value);
    if (has_bias) {
        for (std::size_t i = 0; i < y.rows; ++i) {
            double* yr = y.row(i);
            const double* br = b.value.row(0);
            for (std::size_t j = 0; j < y.cols; ++j) yr[j] += br[j];
        }
    }
    cache.x = x;
    cache.valid = true;
    return y;
}

Matrix Affine::backward(const Matrix& dy, Cache& cache) {
    if (!cache.valid) throw StateError("affine backward called before forward");
    add_in_place(w.grad, matmul_tn(cache.x, dy));
    if (has_bias) {
        for (std::size_t i = 0; i < dy.rows; ++i) {
            const double* dr = dy.row(i);
            double* br = b.grad.row(0);
            for (std::size_t j = 0; j < dy.cols; ++j) br[j] += dr[j];
        }
    }
    return matmul_nt(dy, w.value);
}

std::vector<Parameter*> Affine::params() {
    if (has_bias) return {&w, &b};
    return {&w};
}

// ---------------------------------------------------------------------------
// LayerNorm

LayerNorm LayerNorm::init(const std::string& name, std::size_t dim) {
    LayerNorm ln;
    ln.gain = Parameter(name + ".gain", Matrix(1, dim, 1.0));
    ln.shift = Parameter(name + ".shift", Matrix(1, dim, 0.0));
    return ln;
}

Matrix LayerNorm::forward(const Matrix& x, Cache& cache) const {
    const std::size_t d = x.cols;
    Matrix y(x.rows, d);
    cache.xhat = Matrix(x.rows, d);
    cache.inv_std.assign(x.rows, 0.0);
    const double* g = gain.value.row(0);
    const double* s = shift.value.row(0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kEps);
        cache.inv_std[i] = inv;
        double* hr = cache.xhat.row(i);
        double* yr = y.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            hr[j] = (xr[j] - mean) * inv;
            yr[j] = hr[j] * g[j] + s[j];
        }
    }
    cache.valid = true;
    return y;
}

Matrix LayerNorm::backward(const Matrix& dy, Cache& cache) {
    if (!cache.valid) throw StateError("layernorm backward called before forward");
    const std::size_t d = dy.cols;
    const double invd = 1.0 / static_cast<double>(d);
    Matrix dx(dy.rows, d);
    const double* g = gain.value.row(0);
    double* dg = gain.grad.row(0);
    double* ds = shift.grad.row(0);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dr = dy.row(i);
        const double* hr = cache.xhat.row(i);
        const double inv = cache.inv_std[i];
        double mean_gdy = 0.0;
        double mean_gdy_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double gd = dr[j] * g[j];
            mean_gdy += gd;
            mean_gdy_xhat += gd * hr[j];
            dg[j] += dr[j] * hr[j];
            ds[j] += dr[j];
        }
        mean_gdy *= invd;
        mean_gdy_xhat *= invd;
        double* xr = dx.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double gd = dr[j] * g[j];
            xr[j] = inv * (gd - mean_gdy - hr[j] * mean_gdy_xhat);
        }
    }
    return dx;
}

std::vector<Parameter*> LayerNorm::params() { return {&gain, &shift}; }

// ---------------------------------------------------------------------------
// AttentionBlock

AttentionBlock AttentionBlock::init(const std::string& name, std::size_t d, std::size_t heads,
                                    Rng& rng) {
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("attention: head count must divide the model width");
    }
    AttentionBlock blk;
    blk.heads = heads;
    blk.w_q = Parameter(name + ".wq", init_uniform(d, d, d, rng));
    blk.w_k = Parameter(name + ".wk", init_uniform(d, d, d, rng));
    blk.w_v = Parameter(name + ".wv", init_uniform(d, d, d, rng));
    blk.w_o = Parameter(name + ".wo", init_uniform(d, d, d, rng));
    blk.ln = LayerNorm::init(name + ".ln", d);
    return blk;
}

namespace {

// Extracts the column block [c0, c0+dk) of m into an n x dk matrix.
Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t dk) {
    Matrix s(m.rows, dk);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* src = m.row(i) + c0;
        double* dst = s.row(i);
        for (std::size_t j = 0; j < dk; ++j) dst[j] = src[j];
    }
    return s;
}

void add_cols(Matrix& dst, const Matrix& s, std::size_t c0) {
    for (std::size_t i = 0; i < s.rows; ++i) {
        double* d = dst.row(i) + c0;
        const double* src = s.row(i);
        for (std::size_t j = 0; j < s.cols; ++j) d[j] += src[j];
    }
}

}  // namespace

Matrix AttentionBlock::forward(const Matrix& x, Cache& cache) const {
    const std::size_t d = w_q.value.cols;
    if (x.cols != d) throw DimensionError("attention: input width does not match weights");
    const std::size_t dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    cache.x = x;
    cache.q = matmul(x, w_q.value);
    cache.k = matmul(x, w_k.value);
    cache.v = matmul(x, w_v.value);
    cache.attn.assign(heads, Matrix());
    cache.concat = Matrix(x.rows, d, 0.0);

    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dk;
        Matrix qh = slice_cols(cache.q, c0, dk);
        Matrix kh = slice_cols(cache.k, c0, dk);
        Matrix vh = slice_cols(cache.v, c0, dk);
        Matrix scores = matmul_nt(qh, kh);
        scale_in_place(scores, scale);
        cache.attn[h] = softmax_rows(scores);
        Matrix head = matmul(cache.attn[h], vh);
        add_cols(cache.concat, head, c0);
    }

    Matrix out = matmul(cache.concat, w_o.value);
    add_in_place(out, x);  // residual
    Matrix f = ln.forward(out, cache.ln_cache);
    cache.valid = true;
    return f;
}

Matrix AttentionBlock::backward(const Matrix& dy, Cache& cache) {
    if (!cache.valid) throw StateError("attention backward called before forward");
    const std::size_t d = w_q.value.cols;
    const std::size_t dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Matrix d_resid = ln.backward(dy, cache.ln_cache);
    // Residual: dX picks up d_resid directly, the rest flows through W_O.
    Matrix dx = d_resid;
    add_in_place(w_o.grad, matmul_tn(cache.concat, d_resid));
    Matrix d_concat = matmul_nt(d_resid, w_o.value);

    Matrix dq(cache.q.rows, d, 0.0);
    Matrix dkm(cache.k.rows, d, 0.0);
    Matrix dv(cache.v.rows, d, 0.0);

    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dk;
        Matrix qh = slice_cols(cache.q, c0, dk);
        Matrix kh = slice_cols(cache.k, c0, dk);
        Matrix vh = slice_cols(cache.v, c0, dk);
        Matrix d_head = slice_cols(d_concat, c0, dk);

        Matrix d_attn = matmul_nt(d_head, vh);
        Matrix d_vh = matmul_tn(cache.attn[h], d_head);
        Matrix d_scores = softmax_rows_backward(cache.attn[h], d_attn);
        scale_in_place(d_scores, scale);
        Matrix d_qh = matmul(d_scores, kh);
        Matrix d_kh = matmul_tn(d_scores, qh);

        add_cols(dq, d_qh, c0);
        add_cols(dkm, d_kh, c0);
        add_cols(dv, d_vh, c0);
    }

    add_in_place(w_q.grad, matmul_tn(cache.x, dq));
    add_in_place(w_k.grad, matmul_tn(cache.x, dkm));
    add_in_place(w_v.grad, matmul_tn(cache.x, dv));
    add_in_place(dx, matmul_nt(dq, w_q.value));
    add_in_place(dx, matmul_nt(dkm, w_k.value));
    add_in_place(dx, matmul_nt(dv, w_v.value));
    return dx;
}

std::vector<Parameter*> AttentionBlock::params() {
    return {&w_q, &w_k, &w_v, &w_o, &ln.gain, &ln.shift};
}

}  // namespace tprl
