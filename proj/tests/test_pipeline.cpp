#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tprl/error.hpp"
#include "tprl/pipeline.hpp"

using namespace tprl;

namespace {

RunConfig tiny_cfg() {
    RunConfig cfg;
    cfg.seed = 11;
    cfg.n_tokens = 12;
    cfg.d_v = 10;
    cfg.d_q = 3;
    cfg.d_hidden = 8;
    cfg.d_l = 4;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 8;
    cfg.n_relevant = 3;
    cfg.sample_count = 30;
    cfg.eval_samples = 8;
    cfg.demo_count = 12;
    cfg.ae_epochs = 2;
    cfg.pretrain_epochs = 2;
    cfg.iterations = 2;
    cfg.rollout_batch = 3;
    cfg.minibatch_size = 16;
    return cfg;
}

std::vector<double> flatten(AgentParams& p) {
    std::vector<double> out;
    for (Parameter* q : p.params()) {
        out.insert(out.end(), q->value.data.begin(), q->value.data.end());
    }
    return out;
}

}  // namespace

TEST_CASE("config mapping carries every field") {
    RunConfig cfg = tiny_cfg();
    cfg.signal_strength = 3.5;
    cfg.kappa = 0.3;
    cfg.alpha = 1.25;
    cfg.beta = 0.2;
    cfg.pruning_rates = {0.2, 0.4, 0.6};
    cfg.pretrain_lr = 2e-3;
    cfg.pretrain_batch = 7;
    cfg.pretrain_target_agreement = 0.91;
    cfg.bce_norm = "tokens";
    cfg.gamma = 0.9;
    cfg.lambda_gae = 0.8;
    cfg.lambda_disc = 0.6;
    cfg.clip_epsilon = 0.3;
    cfg.c1 = 0.7;
    cfg.c2 = 0.02;
    cfg.t_max = 4;
    cfg.ppo_epochs = 3;
    cfg.ppo_lr = 1e-4;
    cfg.advantage_norm = false;
    cfg.reward_mode = "batch_mean";
    cfg.policy_arch = "mlp_only";
    cfg.ae_lr = 5e-4;

    EnvConfig env = env_config(cfg);
    CHECK(env.n_tokens == cfg.n_tokens);
    CHECK(env.d_v == cfg.d_v);
    CHECK(env.d_q == cfg.d_q);
    CHECK(env.n_relevant == cfg.n_relevant);
    CHECK(env.signal_strength == cfg.signal_strength);

    AgentConfig acfg = agent_config(cfg);
    CHECK(acfg.d_l == cfg.d_l);
    CHECK(acfg.d_q == cfg.d_q);
    CHECK(acfg.d_model == cfg.d_model);
    CHECK(acfg.heads == cfg.n_heads);
    CHECK(acfg.d_ff == cfg.d_ff);
    CHECK(acfg.mlp_only == true);

    AeTrainConfig ae = ae_config(cfg);
    CHECK(ae.arch.d_v == cfg.d_v);
    CHECK(ae.arch.d_hidden == cfg.d_hidden);
    CHECK(ae.arch.d_l == cfg.d_l);
    CHECK(ae.epochs == cfg.ae_epochs);
    CHECK(ae.lr == cfg.ae_lr);

    RewardConfig rw = reward_config(cfg);
    CHECK(rw.alpha == cfg.alpha);
    CHECK(rw.beta == cfg.beta);
    CHECK(rw.kappa == cfg.kappa);

    HeuristicConfig h = heuristic_config(cfg);
    CHECK(h.rates == cfg.pruning_rates);
    CHECK(h.signal_scale == cfg.signal_strength);

    PretrainConfig pt = pretrain_config(cfg);
    CHECK(pt.epochs == cfg.pretrain_epochs);
    CHECK(pt.lr == cfg.pretrain_lr);
    CHECK(pt.batch == cfg.pretrain_batch);
    CHECK(pt.target_agreement == cfg.pretrain_target_agreement);
    CHECK(pt.norm == BceNorm::tokens);

    TrainRlConfig rl = rl_config(cfg);
    CHECK(rl.env.n_tokens == cfg.n_tokens);
    CHECK(rl.rollout.t_max == cfg.t_max);
    CHECK(rl.rollout.lambda_disc == cfg.lambda_disc);
    CHECK(rl.rollout.reward.alpha == cfg.alpha);
    CHECK(rl.rollout.reward_mode == RewardMode::batch_mean);
    CHECK(rl.gae.gamma == cfg.gamma);
    CHECK(rl.gae.lambda == cfg.lambda_gae);
    CHECK(rl.ppo.clip_epsilon == cfg.clip_epsilon);
    CHECK(rl.ppo.c1 == cfg.c1);
    CHECK(rl.ppo.c2 == cfg.c2);
    CHECK(rl.ppo.epochs == cfg.ppo_epochs);
    CHECK(rl.ppo.minibatch == cfg.minibatch_size);
    CHECK(rl.ppo.lr == cfg.ppo_lr);
    CHECK(rl.ppo.advantage_norm == cfg.advantage_norm);
    CHECK(rl.iterations == cfg.iterations);
    CHECK(rl.rollout_batch == cfg.rollout_batch);

    CHECK(train_split(cfg) == cfg.sample_count - cfg.eval_samples);
}

TEST_CASE("dataset derivation is deterministic and seed-sensitive") {
    RunConfig cfg = tiny_cfg();
    std::vector<Sample> a = make_dataset(cfg);
    std::vector<Sample> b = make_dataset(cfg);
    REQUIRE(a.size() == cfg.sample_count);
    REQUIRE(b.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].seed == b[i].seed);
        CHECK(a[i].tokens.data == b[i].tokens.data);
        CHECK(a[i].query == b[i].query);
        CHECK(a[i].relevant == b[i].relevant);
    }

    RunConfig other = cfg;
    other.seed = 12;
    std::vector<Sample> c = make_dataset(other);
    CHECK(c[0].seed != a[0].seed);
}

TEST_CASE("pipeline smoke produces coherent results") {
    RunConfig cfg = tiny_cfg();
    PipelineResult run = run_pipeline(cfg);

    CHECK(run.encoder.frozen);
    CHECK(!run.pretrain.epochs.empty());
    CHECK(run.ppo_rows.size() == cfg.iterations);
    for (std::size_t i = 0; i < run.ppo_rows.size(); ++i) {
        CHECK(run.ppo_rows[i].iteration == i + 1);
        CHECK(std::isfinite(run.ppo_rows[i].mean_reward));
    }

    const EvalOutcome& ev = run.eval;
    CHECK(ev.policy.retention_rate > 0.0);
    CHECK(ev.policy.retention_rate <= 1.0);
    CHECK(ev.policy.curve.size() == default_tau_grid().size());
    CHECK(ev.full_score > 0.0);
    CHECK(ev.relative_score == ev.policy.mean_score / ev.full_score);
    CHECK(ev.policy.baselines.count("full") == 1);
    CHECK(ev.policy.baselines.count("random_matched") == 1);
    CHECK(ev.policy.baselines.count("heuristic_matched") == 1);
    CHECK(ev.policy.baselines.at("full") == ev.full_score);
    CHECK(std::fabs(ev.random_matched.mean_retained_tokens - ev.policy.mean_retained_tokens) <
          1.0);
}

TEST_CASE("from-scratch pipeline skips pretraining but still trains") {
    RunConfig cfg = tiny_cfg();
    PipelineResult run = run_pipeline(cfg, /*from_scratch=*/true);
    CHECK(run.pretrain.epochs.empty());
    CHECK(run.ppo_rows.size() == cfg.iterations);
    CHECK(run.eval.policy.retention_rate > 0.0);

    // Pretraining must actually move the policy away from the shared init.
    std::vector<Sample> samples = make_dataset(cfg);
    AutoencoderParams encoder = run_train_ae(cfg, samples);
    std::vector<DemoTrajectory> demos = run_gen_demos(cfg, samples, encoder);
    AgentParams cloned = run_pretrain(cfg, demos, samples, encoder);
    AgentParams scratch = scratch_policy(cfg);
    CHECK(flatten(cloned) != flatten(scratch));
}

TEST_CASE("tmax ablation with a single cell equals the plain run") {
    RunConfig cfg = tiny_cfg();
    PipelineResult plain = run_pipeline(cfg);
    std::vector<AblationCell> cells = ablation_tmax(cfg, {cfg.t_max});
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].label == "t_max=" + std::to_string(cfg.t_max));
    CHECK(cells[0].mean_score == plain.eval.policy.mean_score);
    CHECK(cells[0].mean_tokens == plain.eval.policy.mean_retained_tokens);
    CHECK(cells[0].relative_score == plain.eval.relative_score);
}

TEST_CASE("ablation axes produce labeled cells") {
    RunConfig cfg = tiny_cfg();

    std::vector<AblationCell> arch = ablation_arch(cfg);
    REQUIRE(arch.size() == 2);
    CHECK(arch[0].label == "attention");
    CHECK(arch[1].label == "mlp_only");
    for (const AblationCell& c : arch) CHECK(std::isfinite(c.mean_score));

    std::vector<AblationCell> init = ablation_init(cfg);
    REQUIRE(init.size() == 2);
    CHECK(init[0].label == "lfd");
    CHECK(init[1].label == "scratch");

    std::vector<AblationCell> dims = ablation_dimension(cfg, {2, 4});
    REQUIRE(dims.size() == 2);
    CHECK(dims[0].label == "d_l=2");
    CHECK(dims[1].label == "d_l=4");
}

TEST_CASE("ablation drivers validate their grids") {
    RunConfig cfg = tiny_cfg();
    CHECK_THROWS_AS(ablation_tmax(cfg, {}), ConfigError);
    CHECK_THROWS_AS(ablation_dimension(cfg, {}), ConfigError);
    CHECK_THROWS_AS(ablation_tmax(cfg, {0}), ConfigError);
    CHECK_THROWS_AS(ablation_dimension(cfg, {4, 0}), ConfigError);
}

TEST_CASE("phase drivers reject undersized datasets") {
    RunConfig cfg = tiny_cfg();
    std::vector<Sample> samples = make_dataset(cfg);
    std::vector<Sample> short_set(samples.begin(), samples.begin() + 5);
    CHECK_THROWS_AS(run_train_ae(cfg, short_set), StateError);
    AutoencoderParams encoder = run_train_ae(cfg, samples);
    CHECK_THROWS_AS(run_gen_demos(cfg, short_set, encoder), StateError);
    AgentParams policy = scratch_policy(cfg);
    CHECK_THROWS_AS(run_eval(cfg, policy, encoder, short_set), StateError);
}
