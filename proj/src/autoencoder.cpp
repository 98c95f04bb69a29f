#include "tprl/autoencoder.hpp"

#include <cmath>

#include "tprl/error.hpp"

namespace tprl {

AutoencoderParams AutoencoderParams::init(const AutoencoderConfig& cfg, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x4145494e4954ULL));
    AutoencoderParams p;
    p.cfg = cfg;
    p.enc1 = Affine::init("enc1", cfg.d_v, cfg.d_hidden, rng);
    p.enc_ln = LayerNorm::init("enc_ln", cfg.d_hidden);
    p.enc2 = Affine::init("enc2", cfg.d_hidden, cfg.d_l, rng);
    p.dec1 = Affine::init("dec1", cfg.d_l, cfg.d_hidden, rng);
    p.dec_ln = LayerNorm::init("dec_ln", cfg.d_hidden);
    p.dec2 = Affine::init("dec2", cfg.d_hidden, cfg.d_v, rng);
    return p;
}

Matrix AutoencoderParams::encode(const Matrix& tokens) const {
    if (tokens.rows == 0) return Matrix(0, cfg.d_l);
    if (tokens.cols != cfg.d_v) throw DimensionError("encode: token width does not match d_v");
    Affine::Cache c1;
    LayerNorm::Cache cl;
    Affine::Cache c2;
    Matrix h = enc1.forward(tokens, c1);
    h = enc_ln.forward(h, cl);
    h = gelu(h);
    return enc2.forward(h, c2);
}

Matrix AutoencoderParams::decode(const Matrix& codes) const {
    if (codes.rows == 0) return Matrix(0, cfg.d_v);
    if (codes.cols != cfg.d_l) throw DimensionError("decode: code width does not match d_l");
    Affine::Cache c1;
    LayerNorm::Cache cl;
    Affine::Cache c2;
    Matrix h = dec1.forward(codes, c1);
    h = dec_ln.forward(h, cl);
    h = gelu(h);
    return dec2.forward(h, c2);
}

Matrix AutoencoderParams::reconstruct(const Matrix& tokens) const { return decode(encode(tokens)); }

std::vector<Parameter*> AutoencoderParams::params() {
    std::vector<Parameter*> out;
    for (Parameter* p : enc1.params()) out.push_back(p);
    for (Parameter* p : enc_ln.params()) out.push_back(p);
    for (Parameter* p : enc2.params()) out.push_back(p);
    for (Parameter* p : dec1.params()) out.push_back(p);
    for (Parameter* p : dec_ln.params()) out.push_back(p);
    for (Parameter* p : dec2.params()) out.push_back(p);
    return out;
}

void freeze(AutoencoderParams& params) { params.frozen = true; }

double recon_loss(const AutoencoderParams& params, const Matrix& tokens) {
    if (tokens.rows == 0) return 0.0;
    Matrix recon = params.reconstruct(tokens);
    double total = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const double d = tokens.data[i] - recon.data[i];
        total += d * d;
    }
    return total / static_cast<double>(tokens.rows);
}

double recon_loss_backward(AutoencoderParams& params, const Matrix& tokens) {
    if (params.frozen) throw StateError("autoencoder is frozen; gradient update rejected");
    if (tokens.rows == 0) return 0.0;
    Affine::Cache e1, e2, d1, d2;
    LayerNorm::Cache el, dl;

    Matrix h1 = params.enc1.forward(tokens, e1);
    Matrix h1n = params.enc_ln.forward(h1, el);
    Matrix h1g = gelu(h1n);
    Matrix z = params.enc2.forward(h1g, e2);
    Matrix h2 = params.dec1.forward(z, d1);
    Matrix h2n = params.dec_ln.forward(h2, dl);
    Matrix h2g = gelu(h2n);
    Matrix out = params.dec2.forward(h2g, d2);

    const double inv_n = 1.0 / static_cast<double>(tokens.rows);
    double loss = 0.0;
    Matrix d_out(out.rows, out.cols);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double diff = out.data[i] - tokens.data[i];
        loss += diff * diff;
        d_out.data[i] = 2.0 * diff * inv_n;
    }
    loss *= inv_n;

    Matrix g = params.dec2.backward(d_out, d2);
    g = gelu_backward(h2n, g);
    g = params.dec_ln.backward(g, dl);
    g = params.dec1.backward(g, d1);
    g = params.enc2.backward(g, e2);
    g = gelu_backward(h1n, g);
    g = params.enc_ln.backward(g, el);
    (void)params.enc1.backward(g, e1);
    return loss;
}

ReconReport eval_recon(const AutoencoderParams& params, const std::vector<Matrix>& token_sets) {
    double total_err = 0.0;
    double total_norm = 0.0;
    std::size_t total_rows = 0;
    for (const Matrix& tokens : token_sets) {
        if (tokens.rows == 0) continue;
        Matrix recon = params.reconstruct(tokens);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const double d = tokens.data[i] - recon.data[i];
            total_err += d * d;
            total_norm += tokens.data[i] * tokens.data[i];
        }
        total_rows += tokens.rows;
    }
    ReconReport r;
    r.mse = total_rows ? total_err / static_cast<double>(total_rows) : 0.0;
    r.rel_err = total_norm > 0.0 ? std::sqrt(total_err / total_norm) : 0.0;
    return r;
}

AutoencoderParams train_autoencoder(const std::vector<Matrix>& train,
                                    const std::vector<Matrix>& held_out, const AeTrainConfig& cfg,
                                    std::uint64_t seed, ReconReport* final_report,
                                    const AeEpochCallback& on_epoch) {
    if (train.empty()) throw ConfigError("train_autoencoder: empty training set");
    AutoencoderParams params = AutoencoderParams::init(cfg.arch, seed);
    AdamOptimizer opt(params.params(), cfg.lr);
    Rng shuffle_rng(mix_seed(seed, 0x41455348ULL));

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    ReconReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        deterministic_shuffle(order, shuffle_rng);
        for (std::size_t idx : order) {
            opt.zero_grads();
            const double loss = recon_loss_backward(params, train[idx]);
            ensure_finite(loss, "autoencoder training loss");
            opt.step();
        }
        report = eval_recon(params, held_out.empty() ? train : held_out);
        report.epochs = epoch + 1;
        if (on_epoch) on_epoch(epoch + 1, report);
    }
    if (final_report) *final_report = report;
    return params;
}

}  // namespace tprl
