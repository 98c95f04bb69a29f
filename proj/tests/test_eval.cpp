#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tprl/error.hpp"
#include "tprl/evaluation.hpp"
#include "tprl/rng.hpp"

#include "test_support.hpp"

using namespace tprl;

namespace {

EnvConfig small_env() {
    EnvConfig env;
    env.n_tokens = 12;
    env.d_v = 10;
    env.d_q = 3;
    env.n_relevant = 3;
    env.signal_strength = 5.0;
    return env;
}

std::vector<Sample> make_samples(const EnvConfig& env, std::size_t count, std::uint64_t seed0) {
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < count; ++i) samples.push_back(generate_sample(seed0 + i, env));
    return samples;
}

AutoencoderParams frozen_encoder(std::size_t d_v, std::size_t d_l, std::uint64_t seed) {
    AutoencoderConfig cfg;
    cfg.d_v = d_v;
    cfg.d_hidden = 8;
    cfg.d_l = d_l;
    AutoencoderParams enc = AutoencoderParams::init(cfg, seed);
    freeze(enc);
    return enc;
}

AgentParams small_agent(std::size_t d_l, std::size_t d_q, std::uint64_t seed) {
    AgentConfig cfg;
    cfg.d_l = d_l;
    cfg.d_q = d_q;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 6;
    return AgentParams::init(cfg, seed);
}

// Oracle copy of the inference rule: strict threshold plus argmax floor.
std::vector<std::uint8_t> oracle_mask(const std::vector<double>& probs, double tau) {
    std::vector<std::uint8_t> mask(probs.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > tau) {
            mask[i] = 1;
            any = true;
        }
    }
    if (!any) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        mask[best] = 1;
    }
    return mask;
}

std::size_t popcount(const std::vector<std::uint8_t>& mask) {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

}  // namespace

TEST_CASE("default tau grid lists the twelve sorted thresholds") {
    const std::vector<double> grid = default_tau_grid();
    const std::vector<double> want = {0.1, 0.2,  0.3, 0.4,  0.5, 0.55,
                                      0.6, 0.67, 0.7, 0.74, 0.8, 0.9};
    REQUIRE(grid.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(grid[i] == doctest::Approx(want[i]).epsilon(1e-15));
    CHECK(std::is_sorted(grid.begin(), grid.end()));
}

TEST_CASE("evaluate keeps everything at tau zero") {
    EnvConfig env = small_env();
    std::vector<Sample> samples = make_samples(env, 6, 100);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 7);
    AgentParams policy = small_agent(4, env.d_q, 8);

    EvalReport rep = evaluate(policy, enc, samples, 0.0, 0.25);
    CHECK(rep.mean_retained_tokens == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(rep.retention_rate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.mean_score == doctest::Approx(full_mask_score(samples, 0.25)).epsilon(1e-12));

    // All-ones mask: recall 1, clutter 9/12, so every sample scores the same.
    const double want = 1.0 / (1.0 + 0.25 * (9.0 / 12.0));
    CHECK(rep.mean_score == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("evaluate floor at tau one keeps the single most confident token") {
    EnvConfig env = small_env();
    std::vector<Sample> samples = make_samples(env, 5, 200);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 9);
    AgentParams policy = small_agent(4, env.d_q, 10);

    EvalReport rep = evaluate(policy, enc, samples, 1.0, 0.25);
    CHECK(rep.mean_retained_tokens == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.retention_rate == doctest::Approx(1.0 / 12.0).epsilon(1e-12));

    double want = 0.0;
    for (const Sample& s : samples) {
        std::vector<double> probs = policy_probs(policy, enc.encode(s.tokens), s.query);
        std::vector<std::uint8_t> mask = oracle_mask(probs, 1.0);
        CHECK(popcount(mask) == 1);
        want += surrogate_score(mask, s, 0.25) / static_cast<double>(samples.size());
    }
    CHECK(rep.mean_score == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("per-sample scores equal the surrogate of the deterministic mask") {
    EnvConfig env = small_env();
    std::vector<Sample> samples = make_samples(env, 8, 300);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 11);
    AgentParams policy = small_agent(4, env.d_q, 12);

    for (const Sample& s : samples) {
        std::vector<double> probs = policy_probs(policy, enc.encode(s.tokens), s.query);
        std::vector<std::uint8_t> want = oracle_mask(probs, 0.55);
        CHECK(inference_mask(policy, enc.encode(s.tokens), s.query, 0.55) == want);

        EvalReport one = evaluate(policy, enc, {s}, 0.55, 0.25);
        CHECK(one.mean_score == surrogate_score(want, s, 0.25));
        CHECK(one.mean_retained_tokens == static_cast<double>(popcount(want)));
    }
}

TEST_CASE("tau sweep retention is non-increasing and matches pointwise runs") {
    EnvConfig env = small_env();
    std::vector<Sample> samples = make_samples(env, 10, 400);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 13);
    AgentParams policy = small_agent(4, env.d_q, 14);

    const std::vector<double> grid = default_tau_grid();
    EvalReport rep = evaluate(policy, enc, samples, 0.55, 0.25, grid);
    REQUIRE(rep.curve.size() == grid.size());
    for (std::size_t c = 1; c < rep.curve.size(); ++c) {
        CHECK(rep.curve[c].mean_tokens <= rep.curve[c - 1].mean_tokens);
    }
    for (double tau : {0.1, 0.55, 0.9}) {
        const auto it = std::find_if(rep.curve.begin(), rep.curve.end(),
                                     [&](const TauPoint& p) { return p.tau == tau; });
        REQUIRE(it != rep.curve.end());
        EvalReport point = evaluate(policy, enc, samples, tau, 0.25);
        CHECK(it->mean_tokens == point.mean_retained_tokens);
        CHECK(it->mean_score == point.mean_score);
    }
}

TEST_CASE("evaluate is deterministic and validates its inputs") {
    EnvConfig env = small_env();
    std::vector<Sample> samples = make_samples(env, 4, 500);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 15);
    AgentParams policy = small_agent(4, env.d_q, 16);

    EvalReport a = evaluate(policy, enc, samples, 0.55, 0.25, default_tau_grid());
    EvalReport b = evaluate(policy, enc, samples, 0.55, 0.25, default_tau_grid());
    CHECK(a.mean_score == b.mean_score);
    CHECK(a.mean_retained_tokens == b.mean_retained_tokens);
    CHECK(a.retention_rate == b.retention_rate);
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t c = 0; c < a.curve.size(); ++c) {
        CHECK(a.curve[c].mean_tokens == b.curve[c].mean_tokens);
        CHECK(a.curve[c].mean_score == b.curve[c].mean_score);
    }

    CHECK_THROWS_AS(evaluate(policy, enc, {}, 0.55, 0.25), ConfigError);
    AutoencoderParams thawed = AutoencoderParams::init(enc.cfg, 15);
    CHECK_THROWS_AS(evaluate(policy, thawed, samples, 0.55, 0.25), StateError);
}

TEST_CASE("random baseline keeps the exact count and recalls at the rate") {
    EnvConfig env;
    env.n_tokens = 64;
    env.d_v = 8;
    env.d_q = 3;
    env.n_relevant = 16;
    env.signal_strength = 5.0;
    std::vector<Sample> samples = make_samples(env, 400, 1000);

    // kappa = 0 turns the surrogate into pure recall.
    EvalReport half = baseline_random(samples, 0.5, 0.0, 21);
    CHECK(half.mean_retained_tokens == doctest::Approx(32.0).epsilon(1e-12));
    CHECK(half.retention_rate == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::fabs(half.mean_score - 0.5) < 0.03);

    EvalReport quarter = baseline_random(samples, 0.25, 0.0, 21);
    CHECK(quarter.mean_retained_tokens == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(std::fabs(quarter.mean_score - 0.25) < 0.03);

    EvalReport all = baseline_random(samples, 1.0, 0.0, 21);
    CHECK(all.mean_retained_tokens == doctest::Approx(64.0).epsilon(1e-12));
    CHECK(all.mean_score == doctest::Approx(1.0).epsilon(1e-12));

    EvalReport again = baseline_random(samples, 0.5, 0.0, 21);
    CHECK(again.mean_score == half.mean_score);
    EvalReport other = baseline_random(samples, 0.5, 0.0, 22);
    CHECK(other.mean_score != half.mean_score);

    CHECK_THROWS_AS(baseline_random(samples, 0.0, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(baseline_random(samples, 1.001, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(baseline_random({}, 0.5, 0.0, 1), ConfigError);
}

TEST_CASE("heuristic baseline outranks random at matched retention") {
    EnvConfig env;
    env.n_tokens = 16;
    env.d_v = 16;
    env.d_q = 4;
    env.n_relevant = 4;
    env.signal_strength = 5.0;

    std::vector<Matrix> train;
    for (std::uint64_t i = 0; i < 200; ++i) train.push_back(generate_sample(900 + i, env).tokens);
    AeTrainConfig ae_cfg;
    ae_cfg.arch.d_v = 16;
    ae_cfg.arch.d_hidden = 12;
    ae_cfg.arch.d_l = 4;
    ae_cfg.epochs = 20;
    AutoencoderParams enc = train_autoencoder(train, {}, ae_cfg, 12);
    freeze(enc);

    std::vector<Sample> samples = make_samples(env, 200, 5000);
    const double rate = 1.0 / 3.0;
    EvalReport heur = baseline_heuristic(samples, enc, rate, 0.25, env.signal_strength);
    EvalReport rand = baseline_random(samples, rate, 0.25, 31);

    CHECK(heur.mean_retained_tokens == doctest::Approx(6.0).epsilon(1e-12));  // ceil(16/3)
    CHECK(rand.mean_retained_tokens == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(heur.mean_score > rand.mean_score + 0.1);

    EvalReport again = baseline_heuristic(samples, enc, rate, 0.25, env.signal_strength);
    CHECK(again.mean_score == heur.mean_score);
    CHECK_THROWS_AS(baseline_heuristic(samples, enc, 0.0, 0.25, 5.0), ConfigError);
    CHECK_THROWS_AS(baseline_heuristic({}, enc, 0.5, 0.25, 5.0), ConfigError);
}

TEST_CASE("flops model matches the prefill formula") {
    FlopsModel m;
    m.backbone_params = 7e9;
    m.retained_visual_tokens = 192.0;
    m.text_tokens = 64.0;
    CHECK(flops_estimate(m) == 3.584e12);

    m.vision_cost = 1e9;
    m.pruner_cost = 2e8;
    m.decode_cost = 3e9;
    double prev = std::numeric_limits<double>::infinity();
    for (double retained : {576.0, 384.0, 192.0, 96.0, 0.0}) {
        FlopsModel step = m;
        step.retained_visual_tokens = retained;
        const double cur = flops_estimate(step);
        CHECK(cur < prev);
        prev = cur;
    }

    // Linear in the retained count with slope 2P.
    FlopsModel up = m;
    up.retained_visual_tokens += 1.0;
    CHECK(flops_estimate(up) - flops_estimate(m) == doctest::Approx(2.0 * 7e9).epsilon(1e-12));

    FlopsModel zero;
    zero.backbone_params = 0.0;
    CHECK(flops_estimate(zero) == 0.0);

    FlopsModel bad = m;
    bad.text_tokens = -1.0;
    CHECK_THROWS_WITH_AS(flops_estimate(bad), "flops_estimate: text_tokens must be non-negative",
                         ConfigError);
    bad = m;
    bad.backbone_params = std::nan("");
    CHECK_THROWS_AS(flops_estimate(bad), ConfigError);
    bad = m;
    bad.decode_cost = -0.5;
    CHECK_THROWS_AS(flops_estimate(bad), ConfigError);
}

TEST_CASE("trace replays the stochastic rollout with full bookkeeping") {
    EnvConfig env = small_env();
    Sample sample = generate_sample(777, env);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 17);
    AgentParams policy = small_agent(4, env.d_q, 18);

    const std::size_t t_max = 3;
    const double lambda = 0.5;
    TraceRecord rec = trace(policy, enc, sample, t_max, lambda, 0.25, 99);
    CHECK(rec.sample_seed == sample.seed);
    REQUIRE(!rec.steps.empty());
    REQUIRE(rec.steps.size() <= t_max + 1);

    CHECK(rec.steps[0].step == 0);
    CHECK(rec.steps[0].mask == std::vector<std::uint8_t>(env.n_tokens, 1));
    CHECK(rec.steps[0].retained == env.n_tokens);
    CHECK(rec.steps[0].score ==
          surrogate_score(std::vector<std::uint8_t>(env.n_tokens, 1), sample, 0.25));

    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        const TraceStep& st = rec.steps[i];
        CHECK(st.step == i);
        CHECK(st.mask.size() == env.n_tokens);
        CHECK(st.retained == popcount(st.mask));
        CHECK(st.score == surrogate_score(st.mask, sample, 0.25));
        if (i > 0) {
            CHECK(st.retained <= rec.steps[i - 1].retained);
            for (std::size_t j = 0; j < st.mask.size(); ++j) {
                if (st.mask[j]) CHECK(rec.steps[i - 1].mask[j] == 1);
            }
        }
    }

    // First-principles replay of the same rollout.
    PruningState state = initial_state(enc.encode(sample.tokens));
    std::size_t emitted = 1;
    for (std::uint32_t t = 0; t < t_max; ++t) {
        if (state.index_map.size() <= 1) break;
        std::vector<double> probs = policy_probs(policy, state.codes, sample.query);
        StreamActionRng rng(99, t, state.index_map);
        ActionSample action = sample_actions(probs, t, lambda, rng);
        if (std::find(action.bits.begin(), action.bits.end(), 1) == action.bits.end()) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < probs.size(); ++i) {
                if (probs[i] > probs[best]) best = i;
            }
            action.bits[best] = 1;
        }
        state = apply_action(state, action.bits);
        REQUIRE(emitted < rec.steps.size());
        CHECK(rec.steps[emitted].mask == state.mask);
        CHECK(rec.steps[emitted].score == surrogate_score(state.mask, sample, 0.25));
        ++emitted;
    }
    CHECK(emitted == rec.steps.size());

    TraceRecord same = trace(policy, enc, sample, t_max, lambda, 0.25, 99);
    REQUIRE(same.steps.size() == rec.steps.size());
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        CHECK(same.steps[i].mask == rec.steps[i].mask);
        CHECK(same.steps[i].score == rec.steps[i].score);
    }

    TraceRecord other = trace(policy, enc, sample, t_max, lambda, 0.25, 100);
    bool differs = other.steps.size() != rec.steps.size();
    for (std::size_t i = 0; !differs && i < rec.steps.size(); ++i) {
        differs = other.steps[i].mask != rec.steps[i].mask;
    }
    CHECK(differs);
}

TEST_CASE("trace stops once one token survives") {
    EnvConfig env = small_env();
    Sample sample = generate_sample(888, env);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 19);
    AgentParams policy = small_agent(4, env.d_q, 20);
    for (double& v : policy.pol_out.w.value.data) v = 0.0;
    policy.pol_out.b.value.data[0] = -20.0;

    TraceRecord rec = trace(policy, enc, sample, 5, 0.5, 0.25, 7);
    REQUIRE(rec.steps.size() == 2);
    CHECK(rec.steps[1].retained == 1);
    CHECK(rec.steps[1].mask[0] == 1);  // equal probabilities, lowest index wins

    CHECK_THROWS_AS(trace(policy, enc, sample, 0, 0.5, 0.25, 7), ConfigError);
}

TEST_CASE("trace with t_max one emits the baseline and a single step") {
    EnvConfig env = small_env();
    Sample sample = generate_sample(999, env);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 21);
    AgentParams policy = small_agent(4, env.d_q, 22);

    TraceRecord rec = trace(policy, enc, sample, 1, 0.5, 0.25, 11);
    REQUIRE(rec.steps.size() == 2);
    CHECK(rec.steps[0].step == 0);
    CHECK(rec.steps[1].step == 1);
}

TEST_CASE("inference mask floor prefers the lowest index on ties") {
    EnvConfig env = small_env();
    Sample sample = generate_sample(1111, env);
    AutoencoderParams enc = frozen_encoder(env.d_v, 4, 23);
    AgentParams policy = small_agent(4, env.d_q, 24);
    for (double& v : policy.pol_out.w.value.data) v = 0.0;
    policy.pol_out.b.value.data[0] = -20.0;

    std::vector<std::uint8_t> mask =
        inference_mask(policy, enc.encode(sample.tokens), sample.query, 0.5);
    CHECK(popcount(mask) == 1);
    CHECK(mask[0] == 1);
}

TEST_CASE("full mask score averages the all-ones surrogate") {
    EnvConfig env = small_env();
    std::vector<Sample> samples = make_samples(env, 5, 600);
    const double want = 1.0 / (1.0 + 0.25 * (9.0 / 12.0));
    CHECK(full_mask_score(samples, 0.25) == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_AS(full_mask_score({}, 0.25), ConfigError);
}
