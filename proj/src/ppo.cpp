#include "tprl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tprl/error.hpp"

namespace tprl {

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double bootstrap, const GaeConfig& cfg) {
    if (rewards.empty()) throw StateError("compute_gae: empty trajectory");
    if (rewards.size() != values.size()) {
        throw DimensionError("compute_gae: rewards and values differ in length");
    }
    const std::size_t t_len = rewards.size();
    GaeResult out;
    out.advantages.resize(t_len);
    out.targets.resize(t_len);
    double running = 0.0;
    for (std::size_t i = t_len; i-- > 0;) {
        const double v_next = i + 1 < t_len ? values[i + 1] : bootstrap;
        const double delta = rewards[i] + cfg.gamma * v_next - values[i];
        running = delta + cfg.gamma * cfg.lambda * running;
        out.advantages[i] = running;
        out.targets[i] = running + values[i];
    }
    return out;
}

RewardMode parse_reward_mode(const std::string& name) {
    if (name == "per_sample") return RewardMode::per_sample;
    if (name == "batch_mean") return RewardMode::batch_mean;
    throw ConfigError("unknown reward mode '" + name + "'");
}

RolloutBuffer collect_rollouts(const AgentParams& policy, std::vector<Sample> samples,
                               const AutoencoderParams& encoder, const RolloutConfig& cfg,
                               const GaeConfig& gae, std::uint64_t action_seed_base) {
    if (samples.empty()) throw ConfigError("collect_rollouts: no samples");
    if (cfg.t_max == 0) throw ConfigError("collect_rollouts: t_max must be at least 1");

    RolloutBuffer buffer;
    buffer.samples = std::move(samples);
    buffer.codes.reserve(buffer.samples.size());
    for (const Sample& s : buffer.samples) buffer.codes.push_back(encoder.encode(s.tokens));

    const std::size_t n = buffer.samples.size();
    std::vector<PruningState> state(n);
    std::vector<std::uint8_t> live(n, 1);
    std::vector<std::vector<StepRecord>> records(n);
    buffer.episodes.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
        state[e] = initial_state(buffer.codes[e]);
        if (state[e].index_map.size() <= 1) live[e] = 0;  // nothing to prune
    }

    for (std::uint32_t t = 0; t < cfg.t_max; ++t) {
        std::vector<std::size_t> stepped;
        double reward_sum = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            if (!live[e]) continue;
            const Sample& sample = buffer.samples[e];
            AgentPass pass = agent_forward(policy, state[e].codes, sample.query, true);
            StreamActionRng rng(mix_seed(action_seed_base, e), t, state[e].index_map);
            ActionSample action = sample_actions(pass.probs, t, cfg.lambda_disc, rng);

            // Token floor: an empty draw retains the single most confident
            // token, and the stored log-prob describes the corrected bits.
            if (std::find(action.bits.begin(), action.bits.end(), 1) == action.bits.end()) {
                std::size_t best = 0;
                for (std::size_t i = 1; i < pass.probs.size(); ++i) {
                    if (pass.probs[i] > pass.probs[best]) best = i;
                }
                action.bits[best] = 1;
                action.log_prob = joint_log_prob(
                    discounted_probs(pass.probs, t, cfg.lambda_disc), action.bits);
            }

            PruningState next = apply_action(state[e], action.bits);
            StepRecord rec;
            rec.sample_index = static_cast<std::uint32_t>(e);
            rec.step = t;
            rec.index_map = state[e].index_map;
            rec.bits = action.bits;
            rec.log_prob_old = action.log_prob;
            rec.value_old = pass.value;
            rec.reward = reward_transition(state[e], next, sample, cfg.reward);
            reward_sum += rec.reward;
            records[e].push_back(std::move(rec));
            stepped.push_back(e);

            state[e] = std::move(next);
            if (state[e].index_map.size() <= 1) live[e] = 0;
        }
        if (stepped.empty()) break;
        if (cfg.reward_mode == RewardMode::batch_mean) {
            const double mean = reward_sum / static_cast<double>(stepped.size());
            for (std::size_t e : stepped) records[e].back().reward = mean;
        }
    }

    for (std::size_t e = 0; e < n; ++e) {
        EpisodeStats& st = buffer.episodes[e];
        st.final_tokens = state[e].index_map.size();
        st.final_score = surrogate_score(state[e].mask, buffer.samples[e], cfg.reward.kappa);
        if (records[e].empty()) continue;  // single-token sample, nothing recorded

        std::vector<double> rewards, values;
        for (const StepRecord& r : records[e]) {
            rewards.push_back(r.reward);
            values.push_back(r.value_old);
            st.total_reward += r.reward;
        }
        GaeResult g = compute_gae(rewards, values, 0.0, gae);
        for (std::size_t i = 0; i < records[e].size(); ++i) {
            records[e][i].advantage = g.advantages[i];
            records[e][i].value_target = g.targets[i];
        }
        for (StepRecord& r : records[e]) buffer.steps.push_back(std::move(r));
    }
    return buffer;
}

namespace {

// Single pass over a record subset. `grad_target` non-null accumulates
// gradients of the total loss normalized by the subset size; `advantages`
// aligns with `idx` (possibly standardized copies of the stored ones).
PpoLosses ppo_batch(const AgentParams& policy, AgentParams* grad_target,
                    const RolloutBuffer& buffer, const std::vector<std::size_t>& idx,
                    const std::vector<double>& advantages, const PpoConfig& cfg,
                    double lambda_disc) {
    const double m = static_cast<double>(idx.size());
    PpoLosses out;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const StepRecord& rec = buffer.steps[idx[j]];
        const double adv = advantages[j];
        const Sample& sample = buffer.samples[rec.sample_index];
        Matrix z = take_rows(buffer.codes[rec.sample_index], rec.index_map);
        AgentPass pass = agent_forward(policy, z, sample.query, /*want_value=*/true);
        const std::vector<double> q = discounted_probs(pass.probs, rec.step, lambda_disc);
        const double lp_new = joint_log_prob(q, rec.bits);
        const double ratio = std::exp(lp_new - rec.log_prob_old);
        if (!std::isfinite(ratio)) {
            throw NumericError("ppo: non-finite ratio at record " + std::to_string(idx[j]) +
                               " (new logp " + std::to_string(lp_new) + ", old logp " +
                               std::to_string(rec.log_prob_old) + ")");
        }
        const double lo = 1.0 - cfg.clip_epsilon;
        const double hi = 1.0 + cfg.clip_epsilon;
        const double clipped = std::min(std::max(ratio, lo), hi);
        out.l_clip += std::min(ratio * adv, clipped * adv);
        out.clip_fraction += std::abs(ratio - 1.0) > cfg.clip_epsilon ? 1.0 : 0.0;
        out.mean_ratio += ratio;
        const double vdiff = pass.value - rec.value_target;
        out.l_vf += vdiff * vdiff;
        const double ent_scale = cfg.entropy_per_token ? 1.0 / static_cast<double>(q.size()) : 1.0;
        out.l_entropy += ent_scale * entropy_sum(q);

        if (grad_target) {
            // The min gates the policy gradient: for positive advantage the
            // unclipped branch is active up to ratio 1+eps, for negative
            // advantage down to 1-eps. Ties keep the gradient flowing, which
            // makes the objective smooth at ratio = 1.
            const bool flow = adv >= 0.0 ? ratio <= hi : ratio >= lo;
            const double w_lp = flow ? -(adv * ratio) / m : 0.0;
            const std::vector<double> g_lp = joint_log_prob_grad_q(q, rec.bits);
            const std::vector<double> g_ent = entropy_grad_q(q);
            const double disc = std::pow(lambda_disc, static_cast<double>(rec.step));
            std::vector<double> dlogits(pass.k);
            for (std::size_t i = 0; i < pass.k; ++i) {
                const double dq = w_lp * g_lp[i] - (cfg.c2 * ent_scale / m) * g_ent[i];
                dlogits[i] = dq * disc * pass.probs[i] * (1.0 - pass.probs[i]);
            }
            const double dvalue = cfg.c1 * 2.0 * vdiff / m;
            agent_backward(*grad_target, pass, dlogits, dvalue);
        }
    }
    out.l_clip /= m;
    out.l_vf /= m;
    out.l_entropy /= m;
    out.clip_fraction /= m;
    out.mean_ratio /= m;
    out.l_total = -out.l_clip + cfg.c1 * out.l_vf - cfg.c2 * out.l_entropy;
    return out;
}

}  // namespace

std::vector<double> standardize_advantages(const std::vector<double>& adv) {
    if (adv.empty()) throw StateError("standardize_advantages: empty batch");
    const double n = static_cast<double>(adv.size());
    double mean = 0.0;
    for (double v : adv) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : adv) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(adv.size(), 0.0);
    if (sd < 1e-12) return out;  // degenerate batch carries no signal
    for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) / sd;
    return out;
}

PpoLosses ppo_losses(const AgentParams& policy, const RolloutBuffer& buffer, const PpoConfig& cfg,
                     double lambda_disc) {
    if (buffer.steps.empty()) throw StateError("ppo_losses: empty buffer");
    std::vector<std::size_t> idx(buffer.steps.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::vector<double> adv(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) adv[j] = buffer.steps[j].advantage;
    return ppo_batch(policy, nullptr, buffer, idx, adv, cfg, lambda_disc);
}

PpoLosses ppo_losses_backward(AgentParams& policy, const RolloutBuffer& buffer,
                              const PpoConfig& cfg, double lambda_disc) {
    if (buffer.steps.empty()) throw StateError("ppo_losses: empty buffer");
    std::vector<std::size_t> idx(buffer.steps.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::vector<double> adv(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) adv[j] = buffer.steps[j].advantage;
    return ppo_batch(policy, &policy, buffer, idx, adv, cfg, lambda_disc);
}

PpoLosses ppo_update(AgentParams& policy, const RolloutBuffer& buffer, const PpoConfig& cfg,
                     double lambda_disc, AdamOptimizer& opt, Rng& shuffle_rng) {
    if (buffer.steps.empty()) throw StateError("ppo_update: empty buffer");
    if (cfg.minibatch == 0) throw ConfigError("ppo_update: minibatch must be at least 1");

    std::vector<std::size_t> order(buffer.steps.size());
    std::iota(order.begin(), order.end(), 0u);

    PpoLosses total;
    std::size_t batches = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        deterministic_shuffle(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
            const std::size_t end = std::min(order.size(), start + cfg.minibatch);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
            std::vector<double> adv(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) adv[j] = buffer.steps[idx[j]].advantage;
            if (cfg.advantage_norm) adv = standardize_advantages(adv);

            opt.zero_grads();
            PpoLosses batch = ppo_batch(policy, &policy, buffer, idx, adv, cfg, lambda_disc);
            ensure_finite(batch.l_total, "ppo minibatch loss");
            opt.step();

            total.l_clip += batch.l_clip;
            total.l_vf += batch.l_vf;
            total.l_entropy += batch.l_entropy;
            total.l_total += batch.l_total;
            total.clip_fraction += batch.clip_fraction;
            total.mean_ratio += batch.mean_ratio;
            ++batches;
        }
    }
    const double b = static_cast<double>(batches);
    total.l_clip /= b;
    total.l_vf /= b;
    total.l_entropy /= b;
    total.l_total /= b;
    total.clip_fraction /= b;
    total.mean_ratio /= b;
    return total;
}

std::vector<IterationRow> train_rl(AgentParams& policy, const AutoencoderParams& encoder,
                                   const TrainRlConfig& cfg, std::uint64_t seed,
                                   const RlIterCallback& on_iter,
                                   const std::function<void()>& on_abort) {
    if (cfg.rollout_batch == 0) throw ConfigError("train_rl: rollout_batch must be at least 1");
    AdamOptimizer opt(policy.params(), cfg.ppo.lr);
    Rng shuffle_rng(mix_seed(seed, 0x50504f2d53480000ULL));

    std::vector<IterationRow> rows;
    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        std::vector<Sample> samples;
        samples.reserve(cfg.rollout_batch);
        for (std::size_t b = 0; b < cfg.rollout_batch; ++b) {
            const std::uint64_t s =
                mix_seed(seed, 0x53414d504c45ULL, (iter - 1) * cfg.rollout_batch + b);
            samples.push_back(generate_sample(s, cfg.env));
        }
        const std::uint64_t action_base = mix_seed(seed, 0x414354494f4eULL, iter);

        try {
            RolloutBuffer buffer = collect_rollouts(policy, std::move(samples), encoder,
                                                    cfg.rollout, cfg.gae, action_base);
            PpoLosses upd = ppo_update(policy, buffer, cfg.ppo, cfg.rollout.lambda_disc, opt,
                                       shuffle_rng);

            IterationRow row;
            row.iteration = iter;
            double reward = 0.0, score = 0.0, tokens = 0.0;
            for (const EpisodeStats& e : buffer.episodes) {
                reward += e.total_reward;
                score += e.final_score;
                tokens += static_cast<double>(e.final_tokens);
            }
            const double n = static_cast<double>(buffer.episodes.size());
            row.mean_reward = reward / n;
            row.mean_score = score / n;
            row.mean_tokens = tokens / n;
            row.l_clip = upd.l_clip;
            row.l_vf = upd.l_vf;
            row.entropy = upd.l_entropy;
            row.clip_fraction = upd.clip_fraction;
            rows.push_back(row);
            if (on_iter) on_iter(row);
        } catch (const NumericError&) {
            if (on_abort) on_abort();
            throw;
        }
    }
    return rows;
}

}  // namespace tprl
