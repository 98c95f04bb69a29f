#pragma once

#include <cstdint>
#include <vector>

#include "tprl/nn.hpp"

namespace tprl {

// Pruning agent. Token codes and the query are projected into a shared
// d_model space, stacked (query row last), passed through one attention
// block, and scored by two residual GELU heads: a per-token retention
// probability and a scalar state value pooled over token rows only.
struct AgentConfig {
    std::size_t d_l = 8;
    std::size_t d_q = 16;
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t d_ff = 128;
    bool mlp_only = false;  // ablation: skip attention, heads see raw projections
};

struct AgentParams {
    AgentConfig cfg;
    Affine proj_token;  // d_l -> d_model, linear
    Affine proj_query;  // d_q -> d_model, linear
    AttentionBlock attn;

    Affine pol_fc1;  // d_model -> d_ff
    Affine pol_fc2;  // d_ff -> d_model
    LayerNorm pol_ln;
    Affine pol_out;  // d_model -> 1

    Affine val_fc1;
    Affine val_fc2;
    LayerNorm val_ln;
    Affine val_out;  // d_model -> 1

    static AgentParams init(const AgentConfig& cfg, std::uint64_t seed);

    std::vector<Parameter*> params();
    // Extractor plus policy head; the value head never sees supervised loss.
    std::vector<Parameter*> policy_params();
};

// One state's forward pass with every cache needed to run the backward.
struct AgentPass {
    std::size_t k = 0;
    Affine::Cache tok_c, qry_c;
    AttentionBlock::Cache attn_c;
    Matrix x;         // (k+1) x d_model, pre-attention
    Matrix f;         // (k+1) x d_model, features
    Matrix f_tokens;  // k x d_model, token rows only

    Affine::Cache p1_c, p2_c, pout_c;
    LayerNorm::Cache pln_c;
    Matrix p_hidden_pre;  // k x d_ff, pre-GELU
    std::vector<double> logits;
    std::vector<double> probs;

    bool has_value = false;
    Matrix fbar;  // 1 x d_model mean over token rows
    Affine::Cache v1_c, v2_c, vout_c;
    LayerNorm::Cache vln_c;
    Matrix v_hidden_pre;  // 1 x d_ff
    double value = 0.0;
};

// Forward over one state (k >= 1 codes + query). Policy probabilities are
// raw, undiscounted sigmoids; discounting happens only in sampling.
AgentPass agent_forward(const AgentParams& params, const Matrix& codes,
                        const std::vector<double>& query, bool want_value);

// Accumulates gradients for upstream d(loss)/d(logit_i) and d(loss)/d(value).
// Pass dvalue = 0 when the loss does not touch the value head.
void agent_backward(AgentParams& params, AgentPass& pass, const std::vector<double>& dlogits,
                    double dvalue);

// Convenience wrappers over agent_forward for consumers that need one side.
std::vector<double> policy_probs(const AgentParams& params, const Matrix& codes,
                                 const std::vector<double>& query);
double value_estimate(const AgentParams& params, const Matrix& codes,
                      const std::vector<double>& query);

// --- stochastic action machinery ---

inline constexpr double kProbFloor = 1e-7;

inline double clamp_prob(double p) {
    if (p < kProbFloor) return kProbFloor;
    if (p > 1.0 - kProbFloor) return 1.0 - kProbFloor;
    return p;
}

// True when clamping flattened the probability, killing its gradient.
inline bool clamp_active(double p) { return p < kProbFloor || p > 1.0 - kProbFloor; }

// Per-step retention probabilities during training: q_i = lambda_disc^t * p_i.
std::vector<double> discounted_probs(const std::vector<double>& probs, std::uint32_t step,
                                     double lambda_disc);

// Joint Bernoulli log-probability of `bits` under retention probs `q`.
double joint_log_prob(const std::vector<double>& q, const std::vector<std::uint8_t>& bits);
// d(joint_log_prob)/dq_i, zero where the clamp is active.
std::vector<double> joint_log_prob_grad_q(const std::vector<double>& q,
                                          const std::vector<std::uint8_t>& bits);

// Sum of per-token Bernoulli entropies of `q`, clamped at the log sites.
double entropy_sum(const std::vector<double>& q);
std::vector<double> entropy_grad_q(const std::vector<double>& q);

// Uniform draw source for action sampling; production draws come from
// per-token streams keyed by original index so rollouts are reproducible and
// exactly permutation-equivariant.
struct ActionRng {
    virtual ~ActionRng() = default;
    virtual double draw(std::size_t slot) const = 0;
};

struct StreamActionRng : ActionRng {
    std::uint64_t base = 0;
    std::uint32_t step = 0;
    const std::vector<std::uint32_t>* index_map = nullptr;

    StreamActionRng(std::uint64_t base_in, std::uint32_t step_in,
                    const std::vector<std::uint32_t>& map)
        : base(base_in), step(step_in), index_map(&map) {}

    double draw(std::size_t slot) const override;
};

struct ActionSample {
    std::vector<std::uint8_t> bits;
    double log_prob = 0.0;
};

// Bit i is retained when draw_i < lambda_disc^step * p_i. The stored log
// probability is the joint log-likelihood of the sampled bits.
ActionSample sample_actions(const std::vector<double>& probs, std::uint32_t step,
                            double lambda_disc, const ActionRng& rng);

// Inference rule: retain iff p > tau, strictly. No discounting, by
// construction: this function has no step or lambda parameter.
std::vector<std::uint8_t> deterministic_mask(const std::vector<double>& probs, double tau);

}  // namespace tprl
