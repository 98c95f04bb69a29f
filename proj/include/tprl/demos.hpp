#pragma once

#include <cstdint>
#include <vector>

#include "tprl/agent.hpp"
#include "tprl/autoencoder.hpp"
#include "tprl/environment.hpp"

namespace tprl {

// One supervision step: the surviving tokens the pruner saw and, for each,
// whether it kept the token. Codes are not stored; they are recomputed from
// the sample and the frozen compressor, which keeps the container small and
// the trajectories exactly reproducible.
struct DemoStep {
    std::vector<std::uint32_t> index_map;  // surviving original indices, ascending
    std::vector<std::uint8_t> labels;      // aligned with index_map, 1 = retain
};

struct DemoTrajectory {
    std::uint32_t sample_index = 0;
    std::vector<DemoStep> steps;
};

struct HeuristicConfig {
    // Cumulative pruned fractions, strictly increasing, each in [0, 1).
    std::vector<double> rates = {0.25, 0.5};
    // Strength of the probe token whose encoding defines the query direction
    // in code space; matches the generator's planted signal by default.
    double signal_scale = 5.0;
};

// The query's footprint in code space: encode a pure planted-signal token
// for this query. Tokens aligned with the query's signal direction land near
// this code, so cosine against it ranks relevance.
std::vector<double> query_code_direction(const AutoencoderParams& encoder,
                                         const std::vector<double>& query, double signal_scale);

// score_i = cosine(codes row i, proj_q). A zero-norm side scores 0.
std::vector<double> heuristic_relevance(const Matrix& codes, const std::vector<double>& proj_q);

// Prunes to the top-ceil(N*(1-rate)) tokens by heuristic score at each
// cumulative rate. Scores are ranked once over the original N tokens, so the
// surviving sets are nested. Ties break toward the lower original index.
DemoTrajectory generate_demo(const Sample& sample, const AutoencoderParams& encoder,
                             const HeuristicConfig& cfg, std::uint32_t sample_index);

// Normalization of the supervised loss: by trajectory count, or by total
// label count for a scale-free variant.
enum class BceNorm { trajectories, tokens };

// Binary cross-entropy of the policy's retention probabilities against the
// demo labels, summed over trajectories, steps and tokens, divided by the
// trajectory count (or label count). Probabilities are clamped to
// [1e-7, 1-1e-7] before the logs.
double bce_loss(const AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                const std::vector<Sample>& samples, const std::vector<Matrix>& codes,
                BceNorm norm);

// Same value; also accumulates gradients into the policy parameters.
double bce_loss_backward(AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                         const std::vector<Sample>& samples, const std::vector<Matrix>& codes,
                         BceNorm norm);

// Fraction of demo tokens where (p > 0.5) matches the label.
double label_agreement(const AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                       const std::vector<Sample>& samples, const std::vector<Matrix>& codes);

// Encodes each sample's tokens once, indexed like `samples`. `used` marks
// which entries are needed; unused entries stay empty.
std::vector<Matrix> encode_samples(const AutoencoderParams& encoder,
                                   const std::vector<Sample>& samples,
                                   const std::vector<std::uint8_t>* used = nullptr);

struct PretrainConfig {
    std::size_t epochs = 20;
    double lr = 1e-3;
    std::size_t batch = 32;  // trajectories per optimizer step
    double target_agreement = 0.97;
    BceNorm norm = BceNorm::trajectories;
};

struct PretrainEpoch {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double held_loss = 0.0;
    double agreement = 0.0;
};

struct PretrainReport {
    std::vector<PretrainEpoch> epochs;
    double final_agreement = 0.0;
    bool early_stopped = false;
};

// Behavior cloning on the demo set. Demos are split 90/10 into train and
// held-out by index (every tenth trajectory held out); only the feature
// extractor and policy head receive gradients. Stops early once held-out
// agreement reaches the target. A non-finite loss aborts.
PretrainReport pretrain_policy(AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                               const std::vector<Sample>& samples,
                               const AutoencoderParams& encoder, const PretrainConfig& cfg,
                               std::uint64_t seed);

}  // namespace tprl
