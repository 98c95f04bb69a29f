#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tprl/nn.hpp"

namespace tprl {

// Token compressor: affine (d_v -> d_hidden), LayerNorm, GELU, affine
// (d_hidden -> d_l), mirrored decoder. Compression is per token and never
// changes the token count; codes feed the pruning policy only, the surrogate
// scorer always sees original tokens.
struct AutoencoderConfig {
    std::size_t d_v = 64;
    std::size_t d_hidden = 32;
    std::size_t d_l = 8;
};

struct AutoencoderParams {
    AutoencoderConfig cfg;
    Affine enc1;
    LayerNorm enc_ln;
    Affine enc2;
    Affine dec1;
    LayerNorm dec_ln;
    Affine dec2;
    bool frozen = false;

    static AutoencoderParams init(const AutoencoderConfig& cfg, std::uint64_t seed);

    // Row-wise; an empty input yields an empty code matrix.
    Matrix encode(const Matrix& tokens) const;
    Matrix decode(const Matrix& codes) const;
    Matrix reconstruct(const Matrix& tokens) const;

    std::vector<Parameter*> params();
};

// Marks the parameters immutable. Idempotent; encode is unaffected.
void freeze(AutoencoderParams& params);

// Mean squared reconstruction error over rows: (1/N) sum_i |h_i - D(E(h_i))|^2.
double recon_loss(const AutoencoderParams& params, const Matrix& tokens);

// Same loss; also accumulates parameter gradients. Rejects frozen params.
double recon_loss_backward(AutoencoderParams& params, const Matrix& tokens);

struct ReconReport {
    double mse = 0.0;      // mean per-token squared error
    double rel_err = 0.0;  // sqrt(total squared error / total squared norm)
    std::size_t epochs = 0;
};

ReconReport eval_recon(const AutoencoderParams& params, const std::vector<Matrix>& token_sets);

struct AeTrainConfig {
    AutoencoderConfig arch;
    std::size_t epochs = 50;
    double lr = 1e-3;
};

// Adam training over per-sample token matrices; one optimizer step per
// matrix. The per-epoch callback (may be null) receives held-out metrics.
using AeEpochCallback = std::function<void(std::size_t epoch, const ReconReport&)>;

AutoencoderParams train_autoencoder(const std::vector<Matrix>& train,
                                    const std::vector<Matrix>& held_out, const AeTrainConfig& cfg,
                                    std::uint64_t seed, ReconReport* final_report = nullptr,
                                    const AeEpochCallback& on_epoch = nullptr);

}  // namespace tprl
