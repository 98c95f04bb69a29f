#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tprl/config.hpp"
#include "tprl/demos.hpp"
#include "tprl/evaluation.hpp"
#include "tprl/ppo.hpp"

namespace tprl {

// Phase drivers shared by the CLI, the ablation sweeps and the acceptance
// harness. Every phase draws its randomness from cfg.seed through its own
// tagged stream, so a config echo fully determines each artifact.

// The last eval_samples entries of the dataset are held out; everything
// before them is the training split.
std::size_t train_split(const RunConfig& cfg);

EnvConfig env_config(const RunConfig& cfg);
AgentConfig agent_config(const RunConfig& cfg);
AeTrainConfig ae_config(const RunConfig& cfg);
RewardConfig reward_config(const RunConfig& cfg);
HeuristicConfig heuristic_config(const RunConfig& cfg);
PretrainConfig pretrain_config(const RunConfig& cfg);
TrainRlConfig rl_config(const RunConfig& cfg);

// sample_count samples with per-index seeds derived from cfg.seed.
std::vector<Sample> make_dataset(const RunConfig& cfg);

// Trains the compressor on training-split tokens, monitoring the held-out
// split; returns it frozen.
AutoencoderParams run_train_ae(const RunConfig& cfg, const std::vector<Sample>& samples,
                               ReconReport* report = nullptr,
                               const AeEpochCallback& on_epoch = nullptr);

// Heuristic trajectories for the first demo_count training samples.
std::vector<DemoTrajectory> run_gen_demos(const RunConfig& cfg,
                                          const std::vector<Sample>& samples,
                                          const AutoencoderParams& encoder);

// Fresh agent, behavior-cloned on the demos.
AgentParams run_pretrain(const RunConfig& cfg, const std::vector<DemoTrajectory>& demos,
                         const std::vector<Sample>& samples, const AutoencoderParams& encoder,
                         PretrainReport* report = nullptr);

// The agent a from-scratch run starts PPO with: same initialization the
// pretraining phase starts from.
AgentParams scratch_policy(const RunConfig& cfg);

// PPO fine-tuning in place; rows (may be null) receives the metric log.
void run_train_ppo(const RunConfig& cfg, AgentParams& policy, const AutoencoderParams& encoder,
                   std::vector<IterationRow>* rows = nullptr,
                   const RlIterCallback& on_iter = nullptr,
                   const std::function<void()>& on_abort = nullptr);

// Held-out evaluation at cfg.tau with the default threshold sweep, plus the
// three reference points: random and heuristic baselines at the policy's
// achieved retention rate, and the all-tokens score.
struct EvalOutcome {
    EvalReport policy;
    double full_score = 0.0;
    double relative_score = 0.0;  // policy.mean_score / full_score
    EvalReport random_matched;
    EvalReport heuristic_matched;
};

EvalOutcome run_eval(const RunConfig& cfg, const AgentParams& policy,
                     const AutoencoderParams& encoder, const std::vector<Sample>& samples);

// One complete run: data, compressor, (demos, pretraining | scratch init),
// PPO, held-out evaluation.
struct PipelineResult {
    AutoencoderParams encoder;
    AgentParams policy;
    PretrainReport pretrain;  // empty for from-scratch runs
    std::vector<IterationRow> ppo_rows;
    EvalOutcome eval;
};

PipelineResult run_pipeline(const RunConfig& cfg, bool from_scratch = false);

// Ablation sweeps: the base seed is shared across cells so the axis value is
// the only difference between them; upstream phases that the axis cannot
// influence are computed once and reused bitwise.
struct AblationCell {
    std::string label;
    double mean_score = 0.0;
    double mean_tokens = 0.0;
    double relative_score = 0.0;
};

std::vector<AblationCell> ablation_tmax(const RunConfig& base,
                                        const std::vector<std::size_t>& grid);
std::vector<AblationCell> ablation_dimension(const RunConfig& base,
                                             const std::vector<std::size_t>& grid);
std::vector<AblationCell> ablation_arch(const RunConfig& base);
std::vector<AblationCell> ablation_init(const RunConfig& base);

}  // namespace tprl
