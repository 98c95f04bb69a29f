#include "tprl/pipeline.hpp"

#include <utility>

#include "tprl/error.hpp"
#include "tprl/rng.hpp"

namespace tprl {

namespace {

constexpr std::uint64_t kDatasetTag = 0x44415441534554ULL;
constexpr std::uint64_t kEvalRandomTag = 0x4556414c524e44ULL;

AblationCell cell_from(std::string label, const EvalOutcome& eval) {
    AblationCell cell;
    cell.label = std::move(label);
    cell.mean_score = eval.policy.mean_score;
    cell.mean_tokens = eval.policy.mean_retained_tokens;
    cell.relative_score = eval.relative_score;
    return cell;
}

void check_grid(const std::vector<std::size_t>& grid, const char* who) {
    if (grid.empty()) throw ConfigError(std::string(who) + ": empty grid");
    for (std::size_t v : grid) {
        if (v == 0) throw ConfigError(std::string(who) + ": grid values must be at least 1");
    }
}

}  // namespace

std::size_t train_split(const RunConfig& cfg) { return cfg.sample_count - cfg.eval_samples; }

EnvConfig env_config(const RunConfig& cfg) {
    EnvConfig env;
    env.n_tokens = cfg.n_tokens;
    env.d_v = cfg.d_v;
    env.d_q = cfg.d_q;
    env.n_relevant = cfg.n_relevant;
    env.signal_strength = cfg.signal_strength;
    return env;
}

AgentConfig agent_config(const RunConfig& cfg) {
    AgentConfig acfg;
    acfg.d_l = cfg.d_l;
    acfg.d_q = cfg.d_q;
    acfg.d_model = cfg.d_model;
    acfg.heads = cfg.n_heads;
    acfg.d_ff = cfg.d_ff;
    acfg.mlp_only = cfg.policy_arch == "mlp_only";
    return acfg;
}

AeTrainConfig ae_config(const RunConfig& cfg) {
    AeTrainConfig acfg;
    acfg.arch.d_v = cfg.d_v;
    acfg.arch.d_hidden = cfg.d_hidden;
    acfg.arch.d_l = cfg.d_l;
    acfg.epochs = cfg.ae_epochs;
    acfg.lr = cfg.ae_lr;
    return acfg;
}

RewardConfig reward_config(const RunConfig& cfg) {
    RewardConfig rcfg;
    rcfg.alpha = cfg.alpha;
    rcfg.beta = cfg.beta;
    rcfg.kappa = cfg.kappa;
    return rcfg;
}

HeuristicConfig heuristic_config(const RunConfig& cfg) {
    HeuristicConfig hcfg;
    hcfg.rates = cfg.pruning_rates;
    hcfg.signal_scale = cfg.signal_strength;
    return hcfg;
}

PretrainConfig pretrain_config(const RunConfig& cfg) {
    PretrainConfig pcfg;
    pcfg.epochs = cfg.pretrain_epochs;
    pcfg.lr = cfg.pretrain_lr;
    pcfg.batch = cfg.pretrain_batch;
    pcfg.target_agreement = cfg.pretrain_target_agreement;
    pcfg.norm = cfg.bce_norm == "tokens" ? BceNorm::tokens : BceNorm::trajectories;
    return pcfg;
}

TrainRlConfig rl_config(const RunConfig& cfg) {
    TrainRlConfig rl;
    rl.env = env_config(cfg);
    rl.rollout.t_max = cfg.t_max;
    rl.rollout.lambda_disc = cfg.lambda_disc;
    rl.rollout.reward = reward_config(cfg);
    rl.rollout.reward_mode = parse_reward_mode(cfg.reward_mode);
    rl.gae.gamma = cfg.gamma;
    rl.gae.lambda = cfg.lambda_gae;
    rl.ppo.clip_epsilon = cfg.clip_epsilon;
    rl.ppo.c1 = cfg.c1;
    rl.ppo.c2 = cfg.c2;
    rl.ppo.epochs = cfg.ppo_epochs;
    rl.ppo.minibatch = cfg.minibatch_size;
    rl.ppo.lr = cfg.ppo_lr;
    rl.ppo.advantage_norm = cfg.advantage_norm;
    rl.ppo.entropy_per_token = cfg.entropy_norm == "tokens";
    rl.iterations = cfg.iterations;
    rl.rollout_batch = cfg.rollout_batch;
    return rl;
}

std::vector<Sample> make_dataset(const RunConfig& cfg) {
    const EnvConfig env = env_config(cfg);
    std::vector<Sample> samples;
    samples.reserve(cfg.sample_count);
    for (std::size_t i = 0; i < cfg.sample_count; ++i) {
        samples.push_back(generate_sample(mix_seed(cfg.seed, kDatasetTag, i), env));
    }
    return samples;
}

AutoencoderParams run_train_ae(const RunConfig& cfg, const std::vector<Sample>& samples,
                               ReconReport* report, const AeEpochCallback& on_epoch) {
    const std::size_t split = train_split(cfg);
    if (samples.size() < cfg.sample_count) {
        throw StateError("run_train_ae: dataset smaller than sample_count");
    }
    std::vector<Matrix> train;
    train.reserve(split);
    for (std::size_t i = 0; i < split; ++i) train.push_back(samples[i].tokens);
    std::vector<Matrix> held;
    held.reserve(samples.size() - split);
    for (std::size_t i = split; i < samples.size(); ++i) held.push_back(samples[i].tokens);

    AutoencoderParams encoder =
        train_autoencoder(train, held, ae_config(cfg), cfg.seed, report, on_epoch);
    freeze(encoder);
    return encoder;
}

std::vector<DemoTrajectory> run_gen_demos(const RunConfig& cfg,
                                          const std::vector<Sample>& samples,
                                          const AutoencoderParams& encoder) {
    if (samples.size() < cfg.demo_count) {
        throw StateError("run_gen_demos: dataset smaller than demo_count");
    }
    const HeuristicConfig hcfg = heuristic_config(cfg);
    std::vector<DemoTrajectory> demos;
    demos.reserve(cfg.demo_count);
    for (std::size_t i = 0; i < cfg.demo_count; ++i) {
        demos.push_back(generate_demo(samples[i], encoder, hcfg, static_cast<std::uint32_t>(i)));
    }
    return demos;
}

AgentParams run_pretrain(const RunConfig& cfg, const std::vector<DemoTrajectory>& demos,
                         const std::vector<Sample>& samples, const AutoencoderParams& encoder,
                         PretrainReport* report) {
    AgentParams policy = AgentParams::init(agent_config(cfg), cfg.seed);
    PretrainReport rep = pretrain_policy(policy, demos, samples, encoder, pretrain_config(cfg),
                                         cfg.seed);
    if (report) *report = std::move(rep);
    return policy;
}

AgentParams scratch_policy(const RunConfig& cfg) {
    return AgentParams::init(agent_config(cfg), cfg.seed);
}

void run_train_ppo(const RunConfig& cfg, AgentParams& policy, const AutoencoderParams& encoder,
                   std::vector<IterationRow>* rows, const RlIterCallback& on_iter,
                   const std::function<void()>& on_abort) {
    std::vector<IterationRow> log =
        train_rl(policy, encoder, rl_config(cfg), cfg.seed, on_iter, on_abort);
    if (rows) *rows = std::move(log);
}

EvalOutcome run_eval(const RunConfig& cfg, const AgentParams& policy,
                     const AutoencoderParams& encoder, const std::vector<Sample>& samples) {
    const std::size_t split = train_split(cfg);
    if (samples.size() <= split) {
        throw StateError("run_eval: dataset carries no held-out samples");
    }
    const std::vector<Sample> held(samples.begin() + static_cast<std::ptrdiff_t>(split),
                                   samples.end());

    EvalOutcome out;
    out.policy = evaluate(policy, encoder, held, cfg.tau, cfg.kappa, default_tau_grid());
    out.full_score = full_mask_score(held, cfg.kappa);
    out.relative_score = out.policy.mean_score / out.full_score;
    const double rate = out.policy.retention_rate;
    out.random_matched =
        baseline_random(held, rate, cfg.kappa, mix_seed(cfg.seed, kEvalRandomTag));
    out.heuristic_matched = baseline_heuristic(held, encoder, rate, cfg.kappa,
                                               cfg.signal_strength);
    out.policy.baselines["full"] = out.full_score;
    out.policy.baselines["random_matched"] = out.random_matched.mean_score;
    out.policy.baselines["heuristic_matched"] = out.heuristic_matched.mean_score;
    return out;
}

PipelineResult run_pipeline(const RunConfig& cfg, bool from_scratch) {
    validate_config(cfg);
    PipelineResult result;
    const std::vector<Sample> samples = make_dataset(cfg);
    result.encoder = run_train_ae(cfg, samples);
    if (from_scratch) {
        result.policy = scratch_policy(cfg);
    } else {
        const std::vector<DemoTrajectory> demos = run_gen_demos(cfg, samples, result.encoder);
        result.policy = run_pretrain(cfg, demos, samples, result.encoder, &result.pretrain);
    }
    run_train_ppo(cfg, result.policy, result.encoder, &result.ppo_rows);
    result.eval = run_eval(cfg, result.policy, result.encoder, samples);
    return result;
}

std::vector<AblationCell> ablation_tmax(const RunConfig& base,
                                        const std::vector<std::size_t>& grid) {
    check_grid(grid, "ablation_tmax");
    validate_config(base);

    // Everything upstream of PPO is t_max-independent and shared bitwise.
    const std::vector<Sample> samples = make_dataset(base);
    const AutoencoderParams encoder = run_train_ae(base, samples);
    const std::vector<DemoTrajectory> demos = run_gen_demos(base, samples, encoder);
    const AgentParams pretrained = run_pretrain(base, demos, samples, encoder);

    std::vector<AblationCell> cells;
    for (std::size_t t : grid) {
        RunConfig cfg = base;
        cfg.t_max = t;
        validate_config(cfg);
        AgentParams policy = pretrained;
        run_train_ppo(cfg, policy, encoder, nullptr);
        cells.push_back(cell_from("t_max=" + std::to_string(t),
                                  run_eval(cfg, policy, encoder, samples)));
    }
    return cells;
}

std::vector<AblationCell> ablation_dimension(const RunConfig& base,
                                             const std::vector<std::size_t>& grid) {
    check_grid(grid, "ablation_dimension");
    std::vector<AblationCell> cells;
    for (std::size_t d : grid) {
        RunConfig cfg = base;
        cfg.d_l = d;
        validate_config(cfg);
        PipelineResult run = run_pipeline(cfg);
        cells.push_back(cell_from("d_l=" + std::to_string(d), run.eval));
    }
    return cells;
}

std::vector<AblationCell> ablation_arch(const RunConfig& base) {
    validate_config(base);
    const std::vector<Sample> samples = make_dataset(base);
    const AutoencoderParams encoder = run_train_ae(base, samples);
    const std::vector<DemoTrajectory> demos = run_gen_demos(base, samples, encoder);

    std::vector<AblationCell> cells;
    for (const char* arch : {"attention", "mlp_only"}) {
        RunConfig cfg = base;
        cfg.policy_arch = arch;
        validate_config(cfg);
        AgentParams policy = run_pretrain(cfg, demos, samples, encoder);
        run_train_ppo(cfg, policy, encoder, nullptr);
        cells.push_back(cell_from(arch, run_eval(cfg, policy, encoder, samples)));
    }
    return cells;
}

std::vector<AblationCell> ablation_init(const RunConfig& base) {
    validate_config(base);
    const std::vector<Sample> samples = make_dataset(base);
    const AutoencoderParams encoder = run_train_ae(base, samples);

    std::vector<AblationCell> cells;
    {
        const std::vector<DemoTrajectory> demos = run_gen_demos(base, samples, encoder);
        AgentParams policy = run_pretrain(base, demos, samples, encoder);
        run_train_ppo(base, policy, encoder, nullptr);
        cells.push_back(cell_from("lfd", run_eval(base, policy, encoder, samples)));
    }
    {
        AgentParams policy = scratch_policy(base);
        run_train_ppo(base, policy, encoder, nullptr);
        cells.push_back(cell_from("scratch", run_eval(base, policy, encoder, samples)));
    }
    return cells;
}

}  // namespace tprl
