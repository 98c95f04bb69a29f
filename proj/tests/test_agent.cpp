#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "tprl/agent.hpp"
#include "tprl/error.hpp"
#include "tprl/rng.hpp"

#include "test_support.hpp"

using namespace tprl;
using namespace testsupport;

namespace {

AgentConfig tiny_cfg(bool mlp_only = false) {
    AgentConfig cfg;
    cfg.d_l = 3;
    cfg.d_q = 2;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 6;
    cfg.mlp_only = mlp_only;
    return cfg;
}

struct FixedRng : ActionRng {
    std::vector<double> draws;
    explicit FixedRng(std::vector<double> d) : draws(std::move(d)) {}
    double draw(std::size_t slot) const override { return draws[slot]; }
};

}  // namespace

TEST_CASE("forward shapes and wrapper consistency") {
    AgentConfig cfg = tiny_cfg();
    AgentParams p = AgentParams::init(cfg, 1);
    Rng rng(2);
    Matrix codes = random_matrix(4, cfg.d_l, rng, 1.0);
    std::vector<double> query = {0.3, -0.7};
    AgentPass pass = agent_forward(p, codes, query, true);
    CHECK(pass.k == 4);
    CHECK(pass.probs.size() == 4);
    CHECK(pass.logits.size() == 4);
    for (double pr : pass.probs) {
        CHECK(pr > 0.0);
        CHECK(pr < 1.0);
    }
    CHECK(pass.x.rows == 5);  // query row appended last
    CHECK(policy_probs(p, codes, query) == pass.probs);
    CHECK(value_estimate(p, codes, query) == pass.value);

    // Single token still works; value is defined.
    Matrix one = random_matrix(1, cfg.d_l, rng, 1.0);
    AgentPass single = agent_forward(p, one, query, true);
    CHECK(single.probs.size() == 1);
    CHECK(std::isfinite(single.value));
}

TEST_CASE("forward validates inputs") {
    AgentConfig cfg = tiny_cfg();
    AgentParams p = AgentParams::init(cfg, 1);
    Rng rng(2);
    Matrix bad_width = random_matrix(4, cfg.d_l + 1, rng, 1.0);
    std::vector<double> query = {0.3, -0.7};
    CHECK_THROWS_AS(agent_forward(p, bad_width, query, false), DimensionError);
    Matrix codes = random_matrix(4, cfg.d_l, rng, 1.0);
    std::vector<double> bad_query = {0.3};
    CHECK_THROWS_AS(agent_forward(p, codes, bad_query, false), DimensionError);
    Matrix empty(0, cfg.d_l);
    CHECK_THROWS_AS(agent_forward(p, empty, query, false), StateError);
    CHECK_THROWS_AS(AgentParams::init(AgentConfig{3, 2, 9, 2, 6, false}, 0), ConfigError);
}

TEST_CASE("zeroed output head gives probability one half everywhere") {
    AgentConfig cfg = tiny_cfg();
    AgentParams p = AgentParams::init(cfg, 3);
    for (double& v : p.pol_out.w.value.data) v = 0.0;
    for (double& v : p.pol_out.b.value.data) v = 0.0;
    Rng rng(4);
    Matrix codes = random_matrix(5, cfg.d_l, rng, 1.0);
    std::vector<double> query = {1.0, 2.0};
    for (double pr : policy_probs(p, codes, query)) CHECK(pr == 0.5);
}

TEST_CASE("token permutation permutes probabilities and preserves the value") {
    for (bool mlp_only : {false, true}) {
        AgentConfig cfg = tiny_cfg(mlp_only);
        AgentParams p = AgentParams::init(cfg, 5);
        Rng rng(6);
        Matrix codes = random_matrix(6, cfg.d_l, rng, 1.0);
        std::vector<double> query = {0.2, 0.9};
        AgentPass base = agent_forward(p, codes, query, true);

        std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
        Matrix shuffled(6, cfg.d_l);
        for (std::size_t i = 0; i < 6; ++i) {
            std::copy(codes.row(perm[i]), codes.row(perm[i]) + cfg.d_l, shuffled.row(i));
        }
        AgentPass permuted = agent_forward(p, shuffled, query, true);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(permuted.probs[i] == doctest::Approx(base.probs[perm[i]]).epsilon(1e-11));
        }
        CHECK(permuted.value == doctest::Approx(base.value).epsilon(1e-11));
    }
}

TEST_CASE("attention couples tokens and the query; the mlp variant does not") {
    AgentConfig attn_cfg = tiny_cfg(false);
    AgentConfig mlp_cfg = tiny_cfg(true);
    AgentParams pa = AgentParams::init(attn_cfg, 7);
    AgentParams pm = AgentParams::init(mlp_cfg, 7);
    Rng rng(8);
    Matrix codes = random_matrix(4, 3, rng, 1.0);
    std::vector<double> q1 = {0.5, -0.5};
    std::vector<double> q2 = {-1.5, 2.0};

    // Query change moves attention-based probabilities.
    auto pr_a1 = policy_probs(pa, codes, q1);
    auto pr_a2 = policy_probs(pa, codes, q2);
    double diff = 0.0;
    for (std::size_t i = 0; i < pr_a1.size(); ++i) diff += std::abs(pr_a1[i] - pr_a2[i]);
    CHECK(diff > 1e-6);

    // Without attention nothing mixes rows: the query cannot reach the token
    // scores and editing one token leaves the others untouched.
    auto pr_m1 = policy_probs(pm, codes, q1);
    auto pr_m2 = policy_probs(pm, codes, q2);
    CHECK(pr_m1 == pr_m2);
    CHECK(value_estimate(pm, codes, q1) == value_estimate(pm, codes, q2));

    Matrix edited = codes;
    edited.at(2, 0) += 1.0;
    auto pr_m3 = policy_probs(pm, edited, q1);
    for (std::size_t i = 0; i < 4; ++i) {
        if (i == 2) {
            CHECK(pr_m3[i] != pr_m1[i]);
        } else {
            CHECK(pr_m3[i] == pr_m1[i]);
        }
    }
    // With attention the edit propagates to at least one other token.
    auto pr_a3 = policy_probs(pa, edited, q1);
    double cross = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (i != 2) cross += std::abs(pr_a3[i] - pr_a1[i]);
    }
    CHECK(cross > 1e-9);
}

TEST_CASE("backward matches finite differences through probs and value") {
    for (bool mlp_only : {false, true}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            AgentConfig cfg = tiny_cfg(mlp_only);
            AgentParams p = AgentParams::init(cfg, seed);
            Rng rng(seed + 50);
            Matrix codes = random_matrix(3, cfg.d_l, rng, 1.0);
            std::vector<double> query = {0.4, -1.1};
            std::vector<double> coef = {0.7, -1.3, 0.5};
            const double cv = 0.9;

            auto loss_fn = [&]() {
                AgentPass pass = agent_forward(p, codes, query, true);
                double loss = cv * pass.value;
                for (std::size_t i = 0; i < coef.size(); ++i) loss += coef[i] * pass.probs[i];
                return loss;
            };

            for (Parameter* prm : p.params()) prm->zero_grad();
            AgentPass pass = agent_forward(p, codes, query, true);
            std::vector<double> dlogits(pass.k);
            for (std::size_t i = 0; i < pass.k; ++i) {
                dlogits[i] = coef[i] * pass.probs[i] * (1.0 - pass.probs[i]);
            }
            agent_backward(p, pass, dlogits, cv);
            CHECK(max_fd_rel_err(p.params(), loss_fn) <= 1e-4);
        }
    }
}

TEST_CASE("value gradient flows only when requested") {
    AgentConfig cfg = tiny_cfg();
    AgentParams p = AgentParams::init(cfg, 9);
    Rng rng(10);
    Matrix codes = random_matrix(3, cfg.d_l, rng, 1.0);
    std::vector<double> query = {0.1, 0.2};

    // Policy-only pass: dvalue = 0 works, nonzero dvalue is a state error.
    AgentPass pass = agent_forward(p, codes, query, false);
    for (Parameter* prm : p.params()) prm->zero_grad();
    agent_backward(p, pass, {1.0, 0.0, 0.0}, 0.0);
    double val_grad = 0.0;
    for (Parameter* prm : p.val_out.params()) {
        for (double g : prm->grad.data) val_grad += std::abs(g);
    }
    CHECK(val_grad == 0.0);
    AgentPass pass2 = agent_forward(p, codes, query, false);
    CHECK_THROWS_AS(agent_backward(p, pass2, {1.0, 0.0, 0.0}, 1.0), StateError);
    AgentPass pass3 = agent_forward(p, codes, query, true);
    CHECK_THROWS_AS(agent_backward(p, pass3, {1.0, 0.0}, 0.0), DimensionError);
}

TEST_CASE("discounting halves probabilities per step") {
    std::vector<double> probs = {0.8, 0.4, 1.0};
    auto q0 = discounted_probs(probs, 0, 0.5);
    CHECK(q0 == probs);  // lambda^0 = 1
    auto q1 = discounted_probs(probs, 1, 0.5);
    CHECK(q1[0] == doctest::Approx(0.4).epsilon(1e-15));
    auto q2 = discounted_probs(probs, 2, 0.5);
    CHECK(q2[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(q2[2] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("joint log probability closed forms and gradient") {
    std::vector<double> half(4, 0.5);
    std::vector<std::uint8_t> bits = {1, 0, 1, 1};
    CHECK(joint_log_prob(half, bits) == doctest::Approx(-4.0 * std::log(2.0)).epsilon(1e-12));

    std::vector<double> q = {0.25, 0.75};
    CHECK(joint_log_prob(q, {1, 0}) ==
          doctest::Approx(std::log(0.25) + std::log(0.25)).epsilon(1e-12));
    auto g = joint_log_prob_grad_q(q, {1, 0});
    CHECK(g[0] == doctest::Approx(4.0).epsilon(1e-12));         // 1/q
    CHECK(g[1] == doctest::Approx(-4.0).epsilon(1e-12));        // -1/(1-q)
    CHECK_THROWS_AS(joint_log_prob({0.5}, {1, 0}), DimensionError);

    // Clamp keeps the log finite and kills the gradient.
    std::vector<double> extreme = {0.0, 1.0};
    CHECK(std::isfinite(joint_log_prob(extreme, {1, 1})));
    auto ge = joint_log_prob_grad_q(extreme, {1, 1});
    CHECK(ge[0] == 0.0);
    CHECK(ge[1] == 0.0);

    // FD check of the gradient in the interior.
    std::vector<double> qf = {0.3, 0.6, 0.9};
    std::vector<std::uint8_t> bf = {0, 1, 1};
    auto gf = joint_log_prob_grad_q(qf, bf);
    const double h = 1e-7;
    for (std::size_t i = 0; i < qf.size(); ++i) {
        auto qp = qf, qm = qf;
        qp[i] += h;
        qm[i] -= h;
        double fd = (joint_log_prob(qp, bf) - joint_log_prob(qm, bf)) / (2.0 * h);
        CHECK(gf[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("entropy closed forms and gradient") {
    std::vector<double> half = {0.5};
    CHECK(entropy_sum(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(entropy_grad_q(half)[0] == doctest::Approx(0.0).epsilon(1e-12));
    std::vector<double> q = {0.5, 0.5, 0.5};
    CHECK(entropy_sum(q) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

    std::vector<double> qf = {0.2, 0.7};
    auto g = entropy_grad_q(qf);
    CHECK(g[0] == doctest::Approx(std::log(0.8 / 0.2)).epsilon(1e-12));
    const double h = 1e-7;
    for (std::size_t i = 0; i < qf.size(); ++i) {
        auto qp = qf, qm = qf;
        qp[i] += h;
        qm[i] -= h;
        double fd = (entropy_sum(qp) - entropy_sum(qm)) / (2.0 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
    }
    // Entropy of a degenerate distribution is ~0 and its gradient is gated.
    CHECK(std::abs(entropy_sum({1.0})) < 1e-5);
    CHECK(entropy_grad_q({1.0})[0] == 0.0);
}

TEST_CASE("sampling respects the discounted threshold rule") {
    std::vector<double> probs = {0.8, 0.4};
    // Step 0: thresholds are 0.8 and 0.4.
    FixedRng r1({0.79, 0.41});
    ActionSample s1 = sample_actions(probs, 0, 0.5, r1);
    CHECK(s1.bits == std::vector<std::uint8_t>{1, 0});
    CHECK(s1.log_prob == doctest::Approx(std::log(0.8) + std::log(0.6)).epsilon(1e-12));

    // Step 2: lambda^2 = 0.25, thresholds become 0.2 and 0.1.
    FixedRng r2({0.19, 0.11});
    ActionSample s2 = sample_actions(probs, 2, 0.5, r2);
    CHECK(s2.bits == std::vector<std::uint8_t>{1, 0});
    CHECK(s2.log_prob == doctest::Approx(std::log(0.2) + std::log(0.9)).epsilon(1e-12));

    // Boundary: draw equal to the threshold drops the token (strict <).
    FixedRng r3({0.8, 0.1});
    ActionSample s3 = sample_actions(probs, 0, 0.5, r3);
    CHECK(s3.bits[0] == 0);
    CHECK(s3.bits[1] == 1);
}

TEST_CASE("sampled retention frequencies concentrate on the discounted probabilities") {
    std::vector<double> probs = {0.3, 0.8};
    std::vector<std::uint32_t> index_map = {5, 9};
    const int trials = 10000;
    for (std::uint32_t step : {0u, 1u}) {
        double sum0 = 0.0, sum1 = 0.0;
        for (int t = 0; t < trials; ++t) {
            StreamActionRng rng(mix_seed(123, static_cast<std::uint64_t>(t)), step, index_map);
            ActionSample s = sample_actions(probs, step, 0.5, rng);
            sum0 += s.bits[0];
            sum1 += s.bits[1];
        }
        const double disc = step == 0 ? 1.0 : 0.5;
        // Three-sigma bands around the Bernoulli means.
        const double q0 = disc * probs[0], q1 = disc * probs[1];
        CHECK(std::abs(sum0 / trials - q0) < 3.0 * std::sqrt(q0 * (1 - q0) / trials));
        CHECK(std::abs(sum1 / trials - q1) < 3.0 * std::sqrt(q1 * (1 - q1) / trials));
    }
}

TEST_CASE("per-token draw streams are keyed by original index") {
    // The same original index yields the same draw no matter where it sits in
    // the surviving-token list, so sampling is permutation-exact.
    std::vector<std::uint32_t> map_a = {2, 7, 11};
    std::vector<std::uint32_t> map_b = {7, 11, 2};
    StreamActionRng ra(99, 1, map_a);
    StreamActionRng rb(99, 1, map_b);
    CHECK(ra.draw(0) == rb.draw(2));   // index 2
    CHECK(ra.draw(1) == rb.draw(0));   // index 7
    CHECK(ra.draw(2) == rb.draw(1));   // index 11
    // Different steps decorrelate the stream.
    StreamActionRng rc(99, 2, map_a);
    CHECK(ra.draw(0) != rc.draw(0));
}

TEST_CASE("exhaustive bit patterns sum to unit probability") {
    std::vector<double> probs = {0.15, 0.5, 0.66, 0.91};
    for (std::uint32_t step : {0u, 1u, 2u}) {
        auto q = discounted_probs(probs, step, 0.5);
        double total = 0.0;
        for (unsigned m = 0; m < 16u; ++m) {
            std::vector<std::uint8_t> bits(4);
            for (unsigned b = 0; b < 4u; ++b) bits[b] = (m >> b) & 1u;
            total += std::exp(joint_log_prob(q, bits));
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
    }
}

TEST_CASE("deterministic mask thresholds strictly") {
    std::vector<double> probs = {0.56, 0.55, 0.54, 0.9, 0.1};
    auto bits = deterministic_mask(probs, 0.55);
    CHECK(bits == std::vector<std::uint8_t>{1, 0, 0, 1, 0});
    // tau = 0 keeps everything with positive probability; tau = 1 drops all.
    CHECK(deterministic_mask({0.01, 0.99}, 0.0) == std::vector<std::uint8_t>{1, 1});
    CHECK(deterministic_mask({0.01, 0.99}, 1.0) == std::vector<std::uint8_t>{0, 0});
}
