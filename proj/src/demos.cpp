#include "tprl/demos.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tprl/error.hpp"
#include "tprl/rng.hpp"

namespace tprl {

namespace {

void check_demo_inputs(const std::vector<DemoTrajectory>& demos,
                       const std::vector<Sample>& samples, const std::vector<Matrix>& codes) {
    if (codes.size() != samples.size()) {
        throw DimensionError("demo codes and samples must be parallel");
    }
    for (const DemoTrajectory& d : demos) {
        if (d.sample_index >= samples.size()) {
            throw StateError("demo references sample " + std::to_string(d.sample_index) +
                             " outside the dataset");
        }
    }
}

std::size_t total_labels(const std::vector<DemoTrajectory>& demos) {
    std::size_t n = 0;
    for (const DemoTrajectory& d : demos) {
        for (const DemoStep& s : d.steps) n += s.labels.size();
    }
    return n;
}

double norm_denominator(const std::vector<DemoTrajectory>& demos, BceNorm norm) {
    const std::size_t n = norm == BceNorm::trajectories ? demos.size() : total_labels(demos);
    if (n == 0) throw ConfigError("bce_loss: empty demo set");
    return static_cast<double>(n);
}

}  // namespace

std::vector<double> query_code_direction(const AutoencoderParams& encoder,
                                         const std::vector<double>& query, double signal_scale) {
    std::vector<double> u = signal_direction(query, encoder.cfg.d_v);
    Matrix probe(1, encoder.cfg.d_v);
    for (std::size_t j = 0; j < u.size(); ++j) probe.at(0, j) = signal_scale * u[j];
    Matrix code = encoder.encode(probe);
    return std::vector<double>(code.data.begin(), code.data.end());
}

std::vector<double> heuristic_relevance(const Matrix& codes, const std::vector<double>& proj_q) {
    if (codes.cols != proj_q.size()) {
        throw DimensionError("heuristic_relevance: projection width does not match code width");
    }
    double qn = 0.0;
    for (double v : proj_q) qn += v * v;
    qn = std::sqrt(qn);
    std::vector<double> scores(codes.rows, 0.0);
    if (qn == 0.0) return scores;
    for (std::size_t i = 0; i < codes.rows; ++i) {
        const double* z = codes.row(i);
        double dot = 0.0, zn = 0.0;
        for (std::size_t j = 0; j < codes.cols; ++j) {
            dot += z[j] * proj_q[j];
            zn += z[j] * z[j];
        }
        zn = std::sqrt(zn);
        scores[i] = zn == 0.0 ? 0.0 : dot / (zn * qn);
    }
    return scores;
}

DemoTrajectory generate_demo(const Sample& sample, const AutoencoderParams& encoder,
                             const HeuristicConfig& cfg, std::uint32_t sample_index) {
    if (cfg.rates.empty()) throw ConfigError("generate_demo: no pruning rates");
    double prev_rate = -1.0;
    for (double r : cfg.rates) {
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("generate_demo: rate outside [0, 1)");
        if (r <= prev_rate) throw ConfigError("generate_demo: rates must be strictly increasing");
        prev_rate = r;
    }

    const std::size_t n = sample.tokens.rows;
    Matrix codes = encoder.encode(sample.tokens);
    std::vector<double> proj = query_code_direction(encoder, sample.query, cfg.signal_scale);
    std::vector<double> scores = heuristic_relevance(codes, proj);

    // Rank once over the original tokens; higher score first, ties toward the
    // lower index. Nested survivor sets follow from the shared ranking.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<std::uint32_t> rank(n);
    for (std::size_t pos = 0; pos < n; ++pos) rank[order[pos]] = static_cast<std::uint32_t>(pos);

    DemoTrajectory traj;
    traj.sample_index = sample_index;
    std::vector<std::uint32_t> survivors(n);
    std::iota(survivors.begin(), survivors.end(), 0u);
    for (double rate : cfg.rates) {
        const std::size_t keep =
            static_cast<std::size_t>(std::ceil(static_cast<double>(n) * (1.0 - rate)));
        if (keep == 0) throw ConfigError("generate_demo: rate retains no tokens");
        DemoStep step;
        step.index_map = survivors;
        step.labels.resize(survivors.size());
        std::vector<std::uint32_t> next;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            const bool kept = rank[survivors[i]] < keep;
            step.labels[i] = kept ? 1 : 0;
            if (kept) next.push_back(survivors[i]);
        }
        traj.steps.push_back(std::move(step));
        survivors = std::move(next);
    }
    return traj;
}

namespace {

// Shared accumulation for loss and gradient; `policy` is only mutated when
// `accumulate` is set.
double bce_impl(AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                const std::vector<Sample>& samples, const std::vector<Matrix>& codes,
                BceNorm norm, bool accumulate) {
    check_demo_inputs(demos, samples, codes);
    const double denom = norm_denominator(demos, norm);
    double loss = 0.0;
    for (const DemoTrajectory& d : demos) {
        const Sample& sample = samples[d.sample_index];
        const Matrix& full_codes = codes[d.sample_index];
        if (full_codes.rows == 0) throw StateError("demo sample was not encoded");
        for (const DemoStep& step : d.steps) {
            if (step.labels.size() != step.index_map.size()) {
                throw DimensionError("demo step labels and index map differ in length");
            }
            Matrix z = take_rows(full_codes, step.index_map);
            AgentPass pass = agent_forward(policy, z, sample.query, /*want_value=*/false);
            std::vector<double> dlogits(pass.k, 0.0);
            for (std::size_t i = 0; i < pass.k; ++i) {
                const double p = clamp_prob(pass.probs[i]);
                const double a = step.labels[i] ? 1.0 : 0.0;
                loss -= a * std::log(p) + (1.0 - a) * std::log(1.0 - p);
                if (accumulate && !clamp_active(pass.probs[i])) {
                    // d/dlogit of -[a log p + (1-a) log(1-p)] with p = sigmoid(logit).
                    dlogits[i] = (pass.probs[i] - a) / denom;
                }
            }
            if (accumulate) agent_backward(policy, pass, dlogits, 0.0);
        }
    }
    return loss / denom;
}

}  // namespace

double bce_loss(const AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                const std::vector<Sample>& samples, const std::vector<Matrix>& codes,
                BceNorm norm) {
    return bce_impl(const_cast<AgentParams&>(policy), demos, samples, codes, norm,
                    /*accumulate=*/false);
}

double bce_loss_backward(AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                         const std::vector<Sample>& samples, const std::vector<Matrix>& codes,
                         BceNorm norm) {
    return bce_impl(policy, demos, samples, codes, norm, /*accumulate=*/true);
}

double label_agreement(const AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                       const std::vector<Sample>& samples, const std::vector<Matrix>& codes) {
    check_demo_inputs(demos, samples, codes);
    std::size_t hits = 0, total = 0;
    for (const DemoTrajectory& d : demos) {
        const Sample& sample = samples[d.sample_index];
        for (const DemoStep& step : d.steps) {
            Matrix z = take_rows(codes[d.sample_index], step.index_map);
            std::vector<double> probs = policy_probs(policy, z, sample.query);
            for (std::size_t i = 0; i < probs.size(); ++i) {
                const bool keep = probs[i] > 0.5;
                hits += keep == (step.labels[i] != 0) ? 1 : 0;
                ++total;
            }
        }
    }
    if (total == 0) throw ConfigError("label_agreement: empty demo set");
    return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<Matrix> encode_samples(const AutoencoderParams& encoder,
                                   const std::vector<Sample>& samples,
                                   const std::vector<std::uint8_t>* used) {
    std::vector<Matrix> codes(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (used && !(*used)[i]) continue;
        codes[i] = encoder.encode(samples[i].tokens);
    }
    return codes;
}

PretrainReport pretrain_policy(AgentParams& policy, const std::vector<DemoTrajectory>& demos,
                               const std::vector<Sample>& samples,
                               const AutoencoderParams& encoder, const PretrainConfig& cfg,
                               std::uint64_t seed) {
    if (demos.empty()) throw ConfigError("pretrain_policy: empty demo set");
    if (cfg.batch == 0) throw ConfigError("pretrain_policy: batch must be at least 1");

    std::vector<std::uint8_t> used(samples.size(), 0);
    for (const DemoTrajectory& d : demos) {
        if (d.sample_index >= samples.size()) {
            throw StateError("demo references sample " + std::to_string(d.sample_index) +
                             " outside the dataset");
        }
        used[d.sample_index] = 1;
    }
    std::vector<Matrix> codes = encode_samples(encoder, samples, &used);

    // Every tenth trajectory is held out; the rest train.
    std::vector<DemoTrajectory> train, held;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        (i % 10 == 9 ? held : train).push_back(demos[i]);
    }
    if (train.empty()) throw ConfigError("pretrain_policy: no training trajectories after split");
    const std::vector<DemoTrajectory>& eval_set = held.empty() ? train : held;

    AdamOptimizer opt(policy.policy_params(), cfg.lr);
    Rng shuffle_rng(mix_seed(seed, 0x4c664453504c4954ULL));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0u);

    PretrainReport report;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        deterministic_shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            std::vector<DemoTrajectory> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
            opt.zero_grads();
            const double loss = bce_loss_backward(policy, batch, samples, codes, cfg.norm);
            ensure_finite(loss, "behavior-cloning loss");
            opt.step();
            loss_sum += loss;
            ++batches;
        }
        PretrainEpoch row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(batches);
        row.held_loss = bce_loss(policy, eval_set, samples, codes, cfg.norm);
        row.agreement = label_agreement(policy, eval_set, samples, codes);
        report.epochs.push_back(row);
        report.final_agreement = row.agreement;
        if (row.agreement >= cfg.target_agreement) {
            report.early_stopped = true;
            break;
        }
    }
    return report;
}

}  // namespace tprl
