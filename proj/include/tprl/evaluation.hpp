#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tprl/agent.hpp"
#include "tprl/autoencoder.hpp"
#include "tprl/environment.hpp"

namespace tprl {

// One point of the threshold sweep.
struct TauPoint {
    double tau = 0.0;
    double mean_tokens = 0.0;
    double mean_score = 0.0;
};

// Aggregate evaluation over a sample set. evaluate() fills the policy
// numbers and the sweep; baseline entries are merged in by the caller.
struct EvalReport {
    double mean_score = 0.0;
    double mean_retained_tokens = 0.0;
    double retention_rate = 0.0;  // mean over samples of retained / N
    std::vector<TauPoint> curve;
    std::map<std::string, double> baselines;
};

// Nine evenly spaced thresholds 0.1..0.9 plus the reference operating
// points 0.55, 0.67, 0.74; sorted ascending.
std::vector<double> default_tau_grid();

// One-shot inference mask over the full code set: retain iff p > tau,
// strictly, no discounting. A floor keeps the single highest-probability
// token (lowest index on ties) when the threshold would drop everything.
std::vector<std::uint8_t> inference_mask(const AgentParams& policy, const Matrix& codes,
                                         const std::vector<double>& query, double tau);

// Deterministic single-pass evaluation at threshold tau. When curve_taus is
// non-empty the report carries one sweep point per threshold, same order.
// Requires a frozen compressor and a non-empty sample set.
EvalReport evaluate(const AgentParams& policy, const AutoencoderParams& encoder,
                    const std::vector<Sample>& samples, double tau, double kappa,
                    const std::vector<double>& curve_taus = {});

// Mean surrogate score of the all-ones mask; the denominator of the
// relative-accuracy convention.
double full_mask_score(const std::vector<Sample>& samples, double kappa);

// Keeps ceil(N * rate) uniformly drawn tokens per sample, rate in (0, 1].
EvalReport baseline_random(const std::vector<Sample>& samples, double rate, double kappa,
                           std::uint64_t seed);

// Keeps the ceil(N * rate) tokens ranked best by code-space cosine against
// the query's planted-signal code. Ties break toward the lower index.
EvalReport baseline_heuristic(const std::vector<Sample>& samples,
                              const AutoencoderParams& encoder, double rate, double kappa,
                              double signal_scale);

// Prefill cost model; unit-free FLOP counts supplied by the caller.
struct FlopsModel {
    double backbone_params = 7e9;         // P
    double retained_visual_tokens = 0.0;  // tokens surviving the pruner
    double text_tokens = 0.0;
    double vision_cost = 0.0;
    double pruner_cost = 0.0;
    double decode_cost = 0.0;
};

// vision + pruner + 2 * P * (visual + text) + decode. Every field must be
// non-negative and finite.
double flops_estimate(const FlopsModel& m);

// One stochastic rollout with full bookkeeping. Record 0 is the untouched
// initial state; record t >= 1 shows the mask after the step t-1 action.
struct TraceStep {
    std::uint32_t step = 0;
    std::vector<std::uint8_t> mask;  // length N, original indices
    std::size_t retained = 0;
    double score = 0.0;
};

struct TraceRecord {
    std::uint64_t sample_seed = 0;
    std::vector<TraceStep> steps;
};

// Mirrors the training rollout: per-token seeded draws, discounted retention
// probabilities, the non-empty floor, early stop at one surviving token.
TraceRecord trace(const AgentParams& policy, const AutoencoderParams& encoder,
                  const Sample& sample, std::size_t t_max, double lambda_disc, double kappa,
                  std::uint64_t seed);

}  // namespace tprl
