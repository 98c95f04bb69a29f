#include "tprl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "tprl/error.hpp"
#include "tprl/io_util.hpp"

namespace tprl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects a number, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v, int line) {
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects a non-negative integer, got '" + v + "'");
    }
    return x;
}

bool parse_bool(const std::string& key, const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' expects true or false, got '" + v + "'");
}

std::vector<double> parse_rate_list(const std::string& key, const std::string& v, int line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                              "' has an empty list element");
        }
        out.push_back(parse_double(key, item, line));
    }
    if (out.empty()) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' expects a list");
    }
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&, int)>;
    static const std::map<std::string, Setter> setters = {
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.seed = parse_u64(k, v, l); }},
        {"n_tokens", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.n_tokens = parse_u64(k, v, l); }},
        {"d_v", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.d_v = parse_u64(k, v, l); }},
        {"d_q", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.d_q = parse_u64(k, v, l); }},
        {"d_hidden", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.d_hidden = parse_u64(k, v, l); }},
        {"d_l", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.d_l = parse_u64(k, v, l); }},
        {"d_model", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.d_model = parse_u64(k, v, l); }},
        {"n_heads", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.n_heads = parse_u64(k, v, l); }},
        {"d_ff", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.d_ff = parse_u64(k, v, l); }},
        {"n_relevant", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.n_relevant = parse_u64(k, v, l); }},
        {"signal_strength", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.signal_strength = parse_double(k, v, l); }},
        {"kappa", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.kappa = parse_double(k, v, l); }},
        {"sample_count", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.sample_count = parse_u64(k, v, l); }},
        {"alpha", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.alpha = parse_double(k, v, l); }},
        {"beta", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.beta = parse_double(k, v, l); }},
        {"reward_batch", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.reward_batch = parse_u64(k, v, l); }},
        {"reward_mode", [](RunConfig& c, const std::string&, const std::string& v, int) { c.reward_mode = v; }},
        {"ae_epochs", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.ae_epochs = parse_u64(k, v, l); }},
        {"ae_lr", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.ae_lr = parse_double(k, v, l); }},
        {"demo_count", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.demo_count = parse_u64(k, v, l); }},
        {"pruning_rates", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.pruning_rates = parse_rate_list(k, v, l); }},
        {"pretrain_epochs", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.pretrain_epochs = parse_u64(k, v, l); }},
        {"pretrain_lr", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.pretrain_lr = parse_double(k, v, l); }},
        {"pretrain_batch", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.pretrain_batch = parse_u64(k, v, l); }},
        {"pretrain_target_agreement", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.pretrain_target_agreement = parse_double(k, v, l); }},
        {"bce_norm", [](RunConfig& c, const std::string&, const std::string& v, int) { c.bce_norm = v; }},
        {"gamma", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.gamma = parse_double(k, v, l); }},
        {"lambda_gae", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.lambda_gae = parse_double(k, v, l); }},
        {"lambda_disc", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.lambda_disc = parse_double(k, v, l); }},
        {"clip_epsilon", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.clip_epsilon = parse_double(k, v, l); }},
        {"c1", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.c1 = parse_double(k, v, l); }},
        {"c2", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.c2 = parse_double(k, v, l); }},
        {"t_max", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.t_max = parse_u64(k, v, l); }},
        {"ppo_epochs", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.ppo_epochs = parse_u64(k, v, l); }},
        {"minibatch_size", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.minibatch_size = parse_u64(k, v, l); }},
        {"ppo_lr", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.ppo_lr = parse_double(k, v, l); }},
        {"advantage_norm", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.advantage_norm = parse_bool(k, v, l); }},
        {"entropy_norm", [](RunConfig& c, const std::string&, const std::string& v, int) { c.entropy_norm = v; }},
        {"iterations", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.iterations = parse_u64(k, v, l); }},
        {"rollout_batch", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.rollout_batch = parse_u64(k, v, l); }},
        {"policy_arch", [](RunConfig& c, const std::string&, const std::string& v, int) { c.policy_arch = v; }},
        {"tau", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.tau = parse_double(k, v, l); }},
        {"eval_samples", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.eval_samples = parse_u64(k, v, l); }},
    };

    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        std::string s = raw;
        const std::size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value', got '" +
                              trim(raw) + "'");
        }
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
        }
        if (value.empty()) {
            throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' has no value");
        }
        it->second(cfg, key, value, line);
    }
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

void validate_config(const RunConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    auto require_unit = [&](double v, const char* key) {
        if (!(v >= 0.0 && v <= 1.0)) fail(std::string(key) + " must lie in [0, 1], got " + format_double(v));
    };
    auto require_pos = [&](std::size_t v, const char* key) {
        if (v == 0) fail(std::string(key) + " must be at least 1");
    };

    require_pos(cfg.n_tokens, "n_tokens");
    require_pos(cfg.d_v, "d_v");
    require_pos(cfg.d_q, "d_q");
    require_pos(cfg.d_hidden, "d_hidden");
    require_pos(cfg.d_l, "d_l");
    require_pos(cfg.d_model, "d_model");
    require_pos(cfg.n_heads, "n_heads");
    require_pos(cfg.d_ff, "d_ff");
    require_pos(cfg.reward_batch, "reward_batch");
    require_pos(cfg.t_max, "t_max");
    require_pos(cfg.ppo_epochs, "ppo_epochs");
    require_pos(cfg.minibatch_size, "minibatch_size");
    require_pos(cfg.rollout_batch, "rollout_batch");
    require_pos(cfg.pretrain_batch, "pretrain_batch");

    if (cfg.d_model % cfg.n_heads != 0) fail("n_heads must divide d_model");
    if (cfg.n_relevant == 0 || cfg.n_relevant > cfg.n_tokens) {
        fail("n_relevant must lie in [1, n_tokens]");
    }
    if (cfg.signal_strength < 0.0) fail("signal_strength must be non-negative");
    if (cfg.kappa < 0.0) fail("kappa must be non-negative");
    if (cfg.alpha < 0.0) fail("alpha must be non-negative");
    if (cfg.beta < 0.0) fail("beta must be non-negative");
    require_unit(cfg.gamma, "gamma");
    require_unit(cfg.lambda_gae, "lambda_gae");
    if (!(cfg.lambda_disc > 0.0 && cfg.lambda_disc <= 1.0)) {
        fail("lambda_disc must lie in (0, 1], got " + format_double(cfg.lambda_disc));
    }
    if (!(cfg.clip_epsilon > 0.0)) fail("clip_epsilon must be positive");
    if (cfg.c1 < 0.0) fail("c1 must be non-negative");
    if (cfg.c2 < 0.0) fail("c2 must be non-negative");
    if (!(cfg.ppo_lr > 0.0)) fail("ppo_lr must be positive");
    if (!(cfg.ae_lr > 0.0)) fail("ae_lr must be positive");
    if (cfg.pretrain_lr < 0.0) fail("pretrain_lr must be non-negative");
    require_unit(cfg.tau, "tau");
    require_unit(cfg.pretrain_target_agreement, "pretrain_target_agreement");

    if (cfg.pruning_rates.empty()) fail("pruning_rates must not be empty");
    double prev = 0.0;
    bool first = true;
    for (double r : cfg.pruning_rates) {
        if (!(r > 0.0 && r < 1.0)) {
            fail("pruning_rates entries must lie in (0, 1), got " + format_double(r));
        }
        if (!first && r <= prev) fail("pruning_rates must be strictly increasing");
        prev = r;
        first = false;
    }

    if (cfg.reward_mode != "per_sample" && cfg.reward_mode != "batch_mean") {
        fail("reward_mode must be per_sample or batch_mean, got '" + cfg.reward_mode + "'");
    }
    if (cfg.bce_norm != "trajectories" && cfg.bce_norm != "tokens") {
        fail("bce_norm must be trajectories or tokens, got '" + cfg.bce_norm + "'");
    }
    if (cfg.entropy_norm != "tokens" && cfg.entropy_norm != "sum") {
        fail("entropy_norm must be tokens or sum, got '" + cfg.entropy_norm + "'");
    }
    if (cfg.policy_arch != "attention" && cfg.policy_arch != "mlp_only") {
        fail("policy_arch must be attention or mlp_only, got '" + cfg.policy_arch + "'");
    }
    if (cfg.demo_count > cfg.sample_count) fail("demo_count must not exceed sample_count");
    require_pos(cfg.sample_count, "sample_count");
    require_pos(cfg.eval_samples, "eval_samples");
    require_pos(cfg.demo_count, "demo_count");
    if (cfg.eval_samples >= cfg.sample_count) {
        fail("eval_samples must leave a non-empty training split");
    }
    if (cfg.demo_count > cfg.sample_count - cfg.eval_samples) {
        fail("demo_count must fit inside the training split");
    }
}

std::string config_echo(const RunConfig& cfg) {
    std::ostringstream out;
    auto put = [&](const char* key, const std::string& v) { out << key << " = " << v << "\n"; };
    auto putu = [&](const char* key, std::uint64_t v) { put(key, std::to_string(v)); };
    auto putd = [&](const char* key, double v) { put(key, format_double(v)); };

    putu("seed", cfg.seed);
    putu("n_tokens", cfg.n_tokens);
    putu("d_v", cfg.d_v);
    putu("d_q", cfg.d_q);
    putu("d_hidden", cfg.d_hidden);
    putu("d_l", cfg.d_l);
    putu("d_model", cfg.d_model);
    putu("n_heads", cfg.n_heads);
    putu("d_ff", cfg.d_ff);
    putu("n_relevant", cfg.n_relevant);
    putd("signal_strength", cfg.signal_strength);
    putd("kappa", cfg.kappa);
    putu("sample_count", cfg.sample_count);
    putd("alpha", cfg.alpha);
    putd("beta", cfg.beta);
    putu("reward_batch", cfg.reward_batch);
    put("reward_mode", cfg.reward_mode);
    putu("ae_epochs", cfg.ae_epochs);
    putd("ae_lr", cfg.ae_lr);
    putu("demo_count", cfg.demo_count);
    {
        std::string rates;
        for (std::size_t i = 0; i < cfg.pruning_rates.size(); ++i) {
            if (i) rates += ",";
            rates += format_double(cfg.pruning_rates[i]);
        }
        put("pruning_rates", rates);
    }
    putu("pretrain_epochs", cfg.pretrain_epochs);
    putd("pretrain_lr", cfg.pretrain_lr);
    putu("pretrain_batch", cfg.pretrain_batch);
    putd("pretrain_target_agreement", cfg.pretrain_target_agreement);
    put("bce_norm", cfg.bce_norm);
    putd("gamma", cfg.gamma);
    putd("lambda_gae", cfg.lambda_gae);
    putd("lambda_disc", cfg.lambda_disc);
    putd("clip_epsilon", cfg.clip_epsilon);
    putd("c1", cfg.c1);
    putd("c2", cfg.c2);
    putu("t_max", cfg.t_max);
    putu("ppo_epochs", cfg.ppo_epochs);
    putu("minibatch_size", cfg.minibatch_size);
    putd("ppo_lr", cfg.ppo_lr);
    put("advantage_norm", cfg.advantage_norm ? "true" : "false");
    put("entropy_norm", cfg.entropy_norm);
    putu("iterations", cfg.iterations);
    putu("rollout_batch", cfg.rollout_batch);
    put("policy_arch", cfg.policy_arch);
    putd("tau", cfg.tau);
    putu("eval_samples", cfg.eval_samples);
    return out.str();
}

}  // namespace tprl
