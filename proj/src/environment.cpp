#include "tprl/environment.hpp"

#include <algorithm>
#include <cmath>

#include "tprl/error.hpp"
#include "tprl/rng.hpp"

namespace tprl {

namespace {
// Arbitrary fixed tag; the projection must be identical across samples and
// runs so the query-relevance map stays learnable.
constexpr std::uint64_t kProjectionTag = 0x51764d6170303155ULL;
}  // namespace

Matrix query_projection(std::size_t d_v, std::size_t d_q) {
    Rng rng(mix_seed(kProjectionTag, d_v, d_q));
    Matrix p(d_v, d_q);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_q));
    for (double& v : p.data) v = rng.gaussian() * scale;
    return p;
}

std::vector<double> signal_direction(const std::vector<double>& query, std::size_t d_v) {
    const Matrix p = query_projection(d_v, query.size());
    std::vector<double> u(d_v, 0.0);
    for (std::size_t i = 0; i < d_v; ++i) {
        const double* row = p.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) acc += row[j] * query[j];
        u[i] = acc;
    }
    double norm = 0.0;
    for (double v : u) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        // Degenerate zero query; fall back to a fixed axis so the sample
        // stays well defined.
        std::fill(u.begin(), u.end(), 0.0);
        u[0] = 1.0;
        return u;
    }
    for (double& v : u) v /= norm;
    return u;
}

Sample generate_sample(std::uint64_t seed, const EnvConfig& cfg) {
    if (cfg.n_relevant == 0 || cfg.n_relevant > cfg.n_tokens) {
        throw ConfigError("generate_sample: n_relevant must lie in [1, n_tokens]");
    }
    if (cfg.signal_strength < 0.0) {
        throw ConfigError("generate_sample: signal_strength must be non-negative");
    }
    Sample s;
    s.seed = seed;
    Rng rng(mix_seed(seed, 0x53414d504cULL));

    s.query.resize(cfg.d_q);
    for (double& v : s.query) v = rng.gaussian();

    // Relevant set: partial Fisher-Yates over the identity permutation.
    std::vector<std::uint32_t> order(cfg.n_tokens);
    for (std::size_t i = 0; i < cfg.n_tokens; ++i) order[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < cfg.n_relevant; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(cfg.n_tokens - i));
        std::swap(order[i], order[j]);
    }
    s.relevant.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.n_relevant));
    std::sort(s.relevant.begin(), s.relevant.end());

    const std::vector<double> u = signal_direction(s.query, cfg.d_v);
    s.tokens = Matrix(cfg.n_tokens, cfg.d_v);
    std::vector<std::uint8_t> is_relevant(cfg.n_tokens, 0);
    for (std::uint32_t idx : s.relevant) is_relevant[idx] = 1;
    for (std::size_t i = 0; i < cfg.n_tokens; ++i) {
        double* row = s.tokens.row(i);
        for (std::size_t j = 0; j < cfg.d_v; ++j) row[j] = rng.gaussian();
        if (is_relevant[i]) {
            for (std::size_t j = 0; j < cfg.d_v; ++j) row[j] += cfg.signal_strength * u[j];
        }
    }
    return s;
}

double surrogate_score(const std::vector<std::uint8_t>& mask, const Sample& sample, double kappa) {
    if (mask.size() != sample.tokens.rows) {
        throw DimensionError("surrogate_score: mask length does not match token count");
    }
    if (sample.relevant.empty()) {
        throw StateError("surrogate_score: sample has no relevant tokens");
    }
    std::size_t retained = 0;
    std::size_t hits = 0;
    std::vector<std::uint8_t> is_relevant(mask.size(), 0);
    for (std::uint32_t idx : sample.relevant) is_relevant[idx] = 1;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++retained;
        if (is_relevant[i]) ++hits;
    }
    if (retained == 0) return 0.0;
    const double recall = static_cast<double>(hits) / static_cast<double>(sample.relevant.size());
    const double clutter =
        static_cast<double>(retained - hits) / static_cast<double>(std::max<std::size_t>(1, retained));
    return recall / (1.0 + kappa * clutter);
}

PruningState initial_state(const Matrix& codes) {
    PruningState st;
    st.codes = codes;
    st.mask.assign(codes.rows, 1);
    st.index_map.resize(codes.rows);
    for (std::size_t i = 0; i < codes.rows; ++i) st.index_map[i] = static_cast<std::uint32_t>(i);
    st.step = 0;
    return st;
}

PruningState apply_action(const PruningState& state, const std::vector<std::uint8_t>& bits) {
    if (bits.size() != state.index_map.size()) {
        throw DimensionError("apply_action: action length does not match surviving token count");
    }
    std::size_t keep = 0;
    for (std::uint8_t b : bits) keep += (b != 0);

    PruningState next;
    next.mask = state.mask;
    next.step = state.step + 1;
    next.codes = Matrix(keep, state.codes.cols);
    next.index_map.reserve(keep);
    std::size_t out = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) {
            const double* src = state.codes.row(i);
            double* dst = next.codes.row(out);
            std::copy(src, src + state.codes.cols, dst);
            next.index_map.push_back(state.index_map[i]);
            ++out;
        } else {
            next.mask[state.index_map[i]] = 0;
        }
    }
    return next;
}

double reward_transition(const PruningState& prev, const PruningState& next, const Sample& sample,
                         const RewardConfig& cfg) {
    const std::size_t k_prev = prev.index_map.size();
    const std::size_t k_next = next.index_map.size();
    if (k_prev == 0) throw StateError("reward_transition: previous state has no tokens");
    const double task = surrogate_score(next.mask, sample, cfg.kappa) -
                        surrogate_score(prev.mask, sample, cfg.kappa);
    const double eff = 1.0 - static_cast<double>(k_next) / static_cast<double>(k_prev);
    return cfg.alpha * task + cfg.beta * eff;
}

double reward_step(const std::vector<const PruningState*>& prev,
                   const std::vector<const PruningState*>& next,
                   const std::vector<const Sample*>& samples, const RewardConfig& cfg) {
    if (prev.size() != next.size() || prev.size() != samples.size() || prev.empty()) {
        throw DimensionError("reward_step: batch arrays must be non-empty and equally sized");
    }
    double task = 0.0;
    double eff = 0.0;
    for (std::size_t b = 0; b < prev.size(); ++b) {
        const std::size_t k_prev = prev[b]->index_map.size();
        if (k_prev == 0) throw StateError("reward_step: previous state has no tokens");
        task += surrogate_score(next[b]->mask, *samples[b], cfg.kappa) -
                surrogate_score(prev[b]->mask, *samples[b], cfg.kappa);
        eff += 1.0 - static_cast<double>(next[b]->index_map.size()) / static_cast<double>(k_prev);
    }
    const double inv = 1.0 / static_cast<double>(prev.size());
    return cfg.alpha * task * inv + cfg.beta * eff * inv;
}

}  // namespace tprl
