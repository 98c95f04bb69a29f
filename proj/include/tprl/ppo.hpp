#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tprl/agent.hpp"
#include "tprl/autoencoder.hpp"
#include "tprl/environment.hpp"
#include "tprl/nn.hpp"
#include "tprl/rng.hpp"

namespace tprl {

struct GaeConfig {
    double gamma = 0.99;
    double lambda = 0.95;
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> targets;  // targets[t] = advantages[t] + values[t]
};

// Generalized advantage estimation by backward recursion:
//   delta_t = r_t + gamma * V(s_{t+1}) - V(s_t)
//   A_t = delta_t + gamma * lambda * A_{t+1}
// `values` holds V(s_0..s_{T-1}); `bootstrap` is V(s_T), zero for finished
// episodes. Equals the explicit discounted sum of deltas.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double bootstrap, const GaeConfig& cfg);

// One stored decision: the state the policy saw, the sampled bit vector and
// the collection-time log-prob, value and reward. Advantage and target are
// filled after the episode completes.
struct StepRecord {
    std::uint32_t sample_index = 0;  // into RolloutBuffer::samples
    std::uint32_t step = 0;          // t within the episode
    std::vector<std::uint32_t> index_map;
    std::vector<std::uint8_t> bits;
    double log_prob_old = 0.0;
    double value_old = 0.0;
    double reward = 0.0;
    double advantage = 0.0;
    double value_target = 0.0;
};

struct EpisodeStats {
    double total_reward = 0.0;
    double final_score = 0.0;
    std::size_t final_tokens = 0;
};

struct RolloutBuffer {
    std::vector<Sample> samples;
    std::vector<Matrix> codes;  // full-token codes, parallel to samples
    std::vector<StepRecord> steps;
    std::vector<EpisodeStats> episodes;
};

enum class RewardMode { per_sample, batch_mean };

RewardMode parse_reward_mode(const std::string& name);

struct RolloutConfig {
    std::size_t t_max = 3;
    double lambda_disc = 0.5;
    RewardConfig reward;
    RewardMode reward_mode = RewardMode::per_sample;
};

// Rolls a batch of episodes in lockstep. Per step: sample actions from the
// discounted Bernoulli policy (per-token draw streams keyed by original
// index), force-retain the highest-probability token when a draw empties the
// state, stop an episode once a single token is left. In batch_mean mode the
// per-step reward credited to every live episode is the batch mean. Episode
// records land contiguously in the buffer in step order; advantages and
// value targets are filled per episode with terminal bootstrap 0.
RolloutBuffer collect_rollouts(const AgentParams& policy, std::vector<Sample> samples,
                               const AutoencoderParams& encoder, const RolloutConfig& cfg,
                               const GaeConfig& gae, std::uint64_t action_seed_base);

struct PpoConfig {
    double clip_epsilon = 0.2;
    double c1 = 0.5;  // value-loss coefficient
    double c2 = 0.01;  // entropy coefficient
    std::size_t epochs = 4;
    std::size_t minibatch = 64;
    double lr = 3e-4;
    bool advantage_norm = true;
    // Entropy term per record: mean per token (default) or raw sum. The sum
    // grows with token count and at N=64 would dwarf the policy term under
    // the same c2, so the coefficient is calibrated against per-token scale.
    bool entropy_per_token = true;
};

struct PpoLosses {
    double l_clip = 0.0;
    double l_vf = 0.0;
    double l_entropy = 0.0;
    double l_total = 0.0;  // -l_clip + c1 * l_vf - c2 * l_entropy
    double clip_fraction = 0.0;
    double mean_ratio = 0.0;
};

// Evaluates the PPO objective over the whole buffer with raw (unnormalized)
// advantages and no gradient side effects.
PpoLosses ppo_losses(const AgentParams& policy, const RolloutBuffer& buffer, const PpoConfig& cfg,
                     double lambda_disc);

// Same value; also accumulates d(l_total)/d(theta) into the policy.
PpoLosses ppo_losses_backward(AgentParams& policy, const RolloutBuffer& buffer,
                              const PpoConfig& cfg, double lambda_disc);

// Shifts and scales to mean 0, unit population variance. A batch whose spread
// vanishes carries no preference signal and maps to all zeros.
std::vector<double> standardize_advantages(const std::vector<double>& adv);

// Runs epochs-per-update passes of shuffled minibatch Adam steps on the
// clipped objective. Advantages are standardized per minibatch when
// configured. Returns metrics averaged over every minibatch step. A
// non-finite loss or ratio aborts with diagnostics.
PpoLosses ppo_update(AgentParams& policy, const RolloutBuffer& buffer, const PpoConfig& cfg,
                     double lambda_disc, AdamOptimizer& opt, Rng& shuffle_rng);

struct TrainRlConfig {
    EnvConfig env;
    RolloutConfig rollout;
    GaeConfig gae;
    PpoConfig ppo;
    std::size_t iterations = 150;
    std::size_t rollout_batch = 8;
};

struct IterationRow {
    std::size_t iteration = 0;  // 1-based
    double mean_reward = 0.0;   // mean episode return in the iteration's batch
    double mean_score = 0.0;    // mean final surrogate score
    double mean_tokens = 0.0;   // mean final retained count
    double l_clip = 0.0;
    double l_vf = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
};

using RlIterCallback = std::function<void(const IterationRow&)>;

// Phase-3 loop: fresh on-policy samples each iteration, rollout collection,
// GAE, PPO update. Optimizer moments persist across iterations. `on_abort`
// (may be null) runs before a NumericError propagates, giving the caller a
// chance to dump the half-trained parameters.
std::vector<IterationRow> train_rl(AgentParams& policy, const AutoencoderParams& encoder,
                                   const TrainRlConfig& cfg, std::uint64_t seed,
                                   const RlIterCallback& on_iter = nullptr,
                                   const std::function<void()>& on_abort = nullptr);

}  // namespace tprl
