#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tprl {

// Run configuration, loaded from a line-oriented "key = value" text file with
// '#' comments. Unknown keys and out-of-range values are rejected with the
// offending key named. The echo written next to run outputs round-trips
// through load() to an identical configuration, so an echo file fully
// determines a run.
struct RunConfig {
    std::uint64_t seed = 42;

    // problem dimensions
    std::size_t n_tokens = 64;     // visual tokens per sample
    std::size_t d_v = 64;          // raw token width
    std::size_t d_q = 16;          // query width
    std::size_t d_hidden = 32;     // compressor hidden width
    std::size_t d_l = 8;           // code width
    std::size_t d_model = 64;      // shared feature width in the agent
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;        // hidden width of both scoring heads

    // synthetic task
    std::size_t n_relevant = 16;
    double signal_strength = 5.0;
    double kappa = 0.25;           // clutter penalty in the surrogate score
    std::size_t sample_count = 2400;

    // reward
    double alpha = 1.0;
    double beta = 0.1;
    std::size_t reward_batch = 8;
    std::string reward_mode = "per_sample";  // or "batch_mean"

    // compressor training
    std::size_t ae_epochs = 50;
    double ae_lr = 1e-3;

    // demonstrations and supervised pretraining
    std::size_t demo_count = 2000;
    std::vector<double> pruning_rates = {0.25, 0.5};  // cumulative
    std::size_t pretrain_epochs = 20;
    double pretrain_lr = 1e-3;
    std::size_t pretrain_batch = 32;
    double pretrain_target_agreement = 0.97;  // early-stop threshold
    std::string bce_norm = "trajectories";    // or "tokens"

    // reinforcement learning
    double gamma = 0.99;
    double lambda_gae = 0.95;
    double lambda_disc = 0.5;
    double clip_epsilon = 0.2;
    double c1 = 0.5;
    double c2 = 0.01;
    std::size_t t_max = 3;
    std::size_t ppo_epochs = 4;
    std::size_t minibatch_size = 64;
    double ppo_lr = 3e-4;
    bool advantage_norm = true;
    std::string entropy_norm = "tokens";  // or "sum"
    std::size_t iterations = 150;
    std::size_t rollout_batch = 8;
    std::string policy_arch = "attention";  // or "mlp_only"

    // evaluation
    double tau = 0.55;
    std::size_t eval_samples = 200;
};

// Parses text, applying values on top of the defaults above.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Re-validates every constraint; throws ConfigError naming the violated one.
void validate_config(const RunConfig& cfg);

// Canonical echo: every key, full double precision, stable ordering.
std::string config_echo(const RunConfig& cfg);

}  // namespace tprl
