#pragma once

#include <cstdint>
#include <vector>

#include "tprl/matrix.hpp"

namespace tprl {

// One synthetic retrieval episode: N visual tokens, a query vector, and the
// ground-truth set of query-relevant token indices. Relevant tokens carry a
// planted signal along a query-dependent direction; the rest are pure noise.
struct Sample {
    std::uint64_t seed = 0;
    Matrix tokens;                        // n_tokens x d_v
    std::vector<double> query;            // d_q
    std::vector<std::uint32_t> relevant;  // sorted original indices
};

struct EnvConfig {
    std::size_t n_tokens = 64;
    std::size_t d_v = 64;
    std::size_t d_q = 16;
    std::size_t n_relevant = 16;
    double signal_strength = 5.0;
};

// The query-to-token-space projection is a fixed pseudo-random matrix shared
// by every sample, so relevance is a consistent function of the query.
Matrix query_projection(std::size_t d_v, std::size_t d_q);

// Projects q through query_projection and normalizes; this is the planted
// signal direction u(q).
std::vector<double> signal_direction(const std::vector<double>& query, std::size_t d_v);

Sample generate_sample(std::uint64_t seed, const EnvConfig& cfg);

// Retrieval-quality surrogate over the ORIGINAL tokens selected by `mask`:
//   recall / (1 + kappa * clutter)
// recall = |retained ∩ R| / |R|, clutter = |retained \ R| / max(1, |retained|).
// An empty mask scores 0. Codes never enter this function by construction.
double surrogate_score(const std::vector<std::uint8_t>& mask, const Sample& sample, double kappa);

// Pruning episode state. `mask` always covers the original N indices;
// `index_map` lists the surviving original indices in ascending order and
// `codes` holds their compressed rows in the same order.
struct PruningState {
    Matrix codes;                          // k x d_l
    std::vector<std::uint8_t> mask;        // length N, 1 = retained
    std::vector<std::uint32_t> index_map;  // length k
    std::uint32_t step = 0;
};

PruningState initial_state(const Matrix& codes);

// Drops the tokens whose action bit is 0. Bits align with index_map order.
// Never resurrects a token; the caller enforces the non-empty floor.
PruningState apply_action(const PruningState& state, const std::vector<std::uint8_t>& bits);

struct RewardConfig {
    double alpha = 1.0;
    double beta = 0.1;
    double kappa = 0.25;
};

// Per-sample reward for one transition: alpha * score delta + beta * token
// drop fraction. Scores are evaluated on original tokens via the masks.
double reward_transition(const PruningState& prev, const PruningState& next, const Sample& sample,
                         const RewardConfig& cfg);

// Batched form: mean score delta plus mean efficiency term across the batch.
double reward_step(const std::vector<const PruningState*>& prev,
                   const std::vector<const PruningState*>& next,
                   const std::vector<const Sample*>& samples, const RewardConfig& cfg);

}  // namespace tprl
