#include "tprl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tprl/demos.hpp"
#include "tprl/error.hpp"
#include "tprl/rng.hpp"

namespace tprl {

namespace {

// Scatters per-row bits (identity index map) into an N-length mask and
// applies the single-token floor against the raw probabilities.
std::vector<std::uint8_t> floored_mask(const std::vector<double>& probs, double tau) {
    std::vector<std::uint8_t> bits = deterministic_mask(probs, tau);
    if (std::find(bits.begin(), bits.end(), 1) == bits.end()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        bits[best] = 1;
    }
    return bits;
}

std::size_t mask_count(const std::vector<std::uint8_t>& mask) {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

std::vector<std::uint8_t> ones_mask(std::size_t n) {
    return std::vector<std::uint8_t>(n, 1);
}

std::size_t kept_count(std::size_t n, double rate) {
    auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * rate));
    return std::min(n, std::max<std::size_t>(k, 1));
}

void check_rate(double rate, const char* who) {
    if (!(rate > 0.0) || rate > 1.0) {
        throw ConfigError(std::string(who) + ": retention rate must be in (0, 1]");
    }
}

EvalReport summarize(const std::vector<std::size_t>& retained, const std::vector<double>& scores,
                     const std::vector<std::size_t>& totals) {
    EvalReport rep;
    const auto n = static_cast<double>(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        rep.mean_score += scores[i] / n;
        rep.mean_retained_tokens += static_cast<double>(retained[i]) / n;
        rep.retention_rate +=
            static_cast<double>(retained[i]) / static_cast<double>(totals[i]) / n;
    }
    return rep;
}

}  // namespace

std::vector<double> default_tau_grid() {
    std::vector<double> taus;
    for (int i = 1; i <= 9; ++i) taus.push_back(static_cast<double>(i) / 10.0);
    taus.push_back(0.55);
    taus.push_back(0.67);
    taus.push_back(0.74);
    std::sort(taus.begin(), taus.end());
    return taus;
}

std::vector<std::uint8_t> inference_mask(const AgentParams& policy, const Matrix& codes,
                                         const std::vector<double>& query, double tau) {
    return floored_mask(policy_probs(policy, codes, query), tau);
}

EvalReport evaluate(const AgentParams& policy, const AutoencoderParams& encoder,
                    const std::vector<Sample>& samples, double tau, double kappa,
                    const std::vector<double>& curve_taus) {
    if (samples.empty()) throw ConfigError("evaluate: no samples");
    if (!encoder.frozen) throw StateError("evaluate: compressor is not frozen");

    std::vector<std::size_t> retained(samples.size());
    std::vector<double> scores(samples.size());
    std::vector<std::size_t> totals(samples.size());
    std::vector<TauPoint> curve(curve_taus.size());
    for (std::size_t c = 0; c < curve_taus.size(); ++c) curve[c].tau = curve_taus[c];

    const auto n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = samples[i];
        Matrix codes = encoder.encode(sample.tokens);
        std::vector<double> probs = policy_probs(policy, codes, sample.query);

        std::vector<std::uint8_t> mask = floored_mask(probs, tau);
        retained[i] = mask_count(mask);
        scores[i] = surrogate_score(mask, sample, kappa);
        totals[i] = sample.tokens.rows;

        for (std::size_t c = 0; c < curve_taus.size(); ++c) {
            std::vector<std::uint8_t> m = floored_mask(probs, curve_taus[c]);
            curve[c].mean_tokens += static_cast<double>(mask_count(m)) / n;
            curve[c].mean_score += surrogate_score(m, sample, kappa) / n;
        }
    }

    EvalReport rep = summarize(retained, scores, totals);
    rep.curve = std::move(curve);
    return rep;
}

double full_mask_score(const std::vector<Sample>& samples, double kappa) {
    if (samples.empty()) throw ConfigError("full_mask_score: no samples");
    double total = 0.0;
    for (const Sample& sample : samples) {
        total += surrogate_score(ones_mask(sample.tokens.rows), sample, kappa);
    }
    return total / static_cast<double>(samples.size());
}

EvalReport baseline_random(const std::vector<Sample>& samples, double rate, double kappa,
                           std::uint64_t seed) {
    if (samples.empty()) throw ConfigError("baseline_random: no samples");
    check_rate(rate, "baseline_random");

    std::vector<std::size_t> retained(samples.size());
    std::vector<double> scores(samples.size());
    std::vector<std::size_t> totals(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = samples[i];
        const std::size_t n = sample.tokens.rows;
        const std::size_t k = kept_count(n, rate);

        std::vector<std::uint32_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(seed, 0x52414e444d41534bULL, i));
        deterministic_shuffle(order, rng);

        std::vector<std::uint8_t> mask(n, 0);
        for (std::size_t j = 0; j < k; ++j) mask[order[j]] = 1;
        retained[i] = k;
        scores[i] = surrogate_score(mask, sample, kappa);
        totals[i] = n;
    }
    return summarize(retained, scores, totals);
}

EvalReport baseline_heuristic(const std::vector<Sample>& samples,
                              const AutoencoderParams& encoder, double rate, double kappa,
                              double signal_scale) {
    if (samples.empty()) throw ConfigError("baseline_heuristic: no samples");
    check_rate(rate, "baseline_heuristic");

    std::vector<std::size_t> retained(samples.size());
    std::vector<double> scores(samples.size());
    std::vector<std::size_t> totals(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = samples[i];
        const std::size_t n = sample.tokens.rows;
        const std::size_t k = kept_count(n, rate);

        Matrix codes = encoder.encode(sample.tokens);
        std::vector<double> proj = query_code_direction(encoder, sample.query, signal_scale);
        std::vector<double> relevance = heuristic_relevance(codes, proj);

        std::vector<std::uint32_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return relevance[a] > relevance[b];
        });

        std::vector<std::uint8_t> mask(n, 0);
        for (std::size_t j = 0; j < k; ++j) mask[order[j]] = 1;
        retained[i] = k;
        scores[i] = surrogate_score(mask, sample, kappa);
        totals[i] = n;
    }
    return summarize(retained, scores, totals);
}

double flops_estimate(const FlopsModel& m) {
    const struct {
        const char* name;
        double value;
    } fields[] = {
        {"backbone_params", m.backbone_params},
        {"retained_visual_tokens", m.retained_visual_tokens},
        {"text_tokens", m.text_tokens},
        {"vision_cost", m.vision_cost},
        {"pruner_cost", m.pruner_cost},
        {"decode_cost", m.decode_cost},
    };
    for (const auto& f : fields) {
        if (!(f.value >= 0.0) || !std::isfinite(f.value)) {
            throw ConfigError(std::string("flops_estimate: ") + f.name +
                              " must be non-negative");
        }
    }
    return m.vision_cost + m.pruner_cost +
           2.0 * m.backbone_params * (m.retained_visual_tokens + m.text_tokens) + m.decode_cost;
}

TraceRecord trace(const AgentParams& policy, const AutoencoderParams& encoder,
                  const Sample& sample, std::size_t t_max, double lambda_disc, double kappa,
                  std::uint64_t seed) {
    if (t_max < 1) throw ConfigError("trace: t_max must be at least 1");

    TraceRecord rec;
    rec.sample_seed = sample.seed;

    Matrix codes = encoder.encode(sample.tokens);
    PruningState state = initial_state(codes);

    TraceStep start;
    start.step = 0;
    start.mask = state.mask;
    start.retained = mask_count(state.mask);
    start.score = surrogate_score(state.mask, sample, kappa);
    rec.steps.push_back(std::move(start));

    for (std::uint32_t t = 0; t < t_max; ++t) {
        if (state.index_map.size() <= 1) break;
        std::vector<double> probs = policy_probs(policy, state.codes, sample.query);
        StreamActionRng rng(seed, t, state.index_map);
        ActionSample action = sample_actions(probs, t, lambda_disc, rng);
        if (std::find(action.bits.begin(), action.bits.end(), 1) == action.bits.end()) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < probs.size(); ++i) {
                if (probs[i] > probs[best]) best = i;
            }
            action.bits[best] = 1;
        }

        state = apply_action(state, action.bits);
        TraceStep step;
        step.step = t + 1;
        step.mask = state.mask;
        step.retained = mask_count(state.mask);
        step.score = surrogate_score(state.mask, sample, kappa);
        rec.steps.push_back(std::move(step));
    }
    return rec;
}

}  // namespace tprl
