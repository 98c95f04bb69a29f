// Command-line surface over the pipeline phases. Every subcommand loads the
// run configuration, applies --seed/--tau overrides, echoes the effective
// config next to its outputs and writes artifacts atomically, so identical
// invocations produce byte-identical files.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tprl/config.hpp"
#include "tprl/dataset.hpp"
#include "tprl/error.hpp"
#include "tprl/io_util.hpp"
#include "tprl/model_io.hpp"
#include "tprl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tprl;

namespace {

constexpr const char* kDataFile = "data.bin";
constexpr const char* kEncoderFile = "autoencoder.ckpt";
constexpr const char* kDemosFile = "demos.bin";
constexpr const char* kPretrainedFile = "policy-pretrained.ckpt";
constexpr const char* kPolicyFile = "policy.ckpt";
constexpr const char* kAbortFile = "policy-abort.ckpt";

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config,-c", args.config_path, "run configuration file");
    cmd->add_option("--out,-o", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed,-s", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

RunConfig effective_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) {
        if (!fs::exists(args.config_path)) {
            throw ConfigError("config file not found: " + args.config_path);
        }
        cfg = load_config(args.config_path);
    }
    if (args.seed_set) cfg.seed = args.seed;
    validate_config(cfg);
    return cfg;
}

void write_echo(const CommonArgs& args, const RunConfig& cfg, const std::string& phase) {
    fs::create_directories(args.out_dir);
    write_file_atomic(fs::path(args.out_dir) / (phase + ".config.txt"), config_echo(cfg));
}

fs::path require_artifact(const CommonArgs& args, const char* file, const char* producer) {
    fs::path path = fs::path(args.out_dir) / file;
    if (!fs::exists(path)) {
        throw DependencyError(std::string("missing ") + path.string() + "; run " + producer +
                              " first");
    }
    return path;
}

void check_data_matches(const RunConfig& cfg, const DataFile& df, const char* file) {
    if (df.n_tokens != cfg.n_tokens || df.d_v != cfg.d_v || df.d_q != cfg.d_q) {
        throw ConfigError(std::string(file) + " dimensions disagree with the config");
    }
}

void check_encoder_matches(const RunConfig& cfg, const AutoencoderParams& enc) {
    if (enc.cfg.d_v != cfg.d_v || enc.cfg.d_hidden != cfg.d_hidden || enc.cfg.d_l != cfg.d_l) {
        throw ConfigError("autoencoder checkpoint dimensions disagree with the config");
    }
}

void check_policy_matches(const RunConfig& cfg, const AgentParams& policy) {
    const AgentConfig want = agent_config(cfg);
    if (policy.cfg.d_l != want.d_l || policy.cfg.d_q != want.d_q ||
        policy.cfg.d_model != want.d_model || policy.cfg.heads != want.heads ||
        policy.cfg.d_ff != want.d_ff || policy.cfg.mlp_only != want.mlp_only) {
        throw ConfigError("policy checkpoint architecture disagrees with the config");
    }
}

std::string metric_line(std::initializer_list<std::pair<const char*, std::string>> kv) {
    std::string line;
    for (const auto& [key, value] : kv) {
        if (!line.empty()) line += ' ';
        line += key;
        line += '=';
        line += value;
    }
    return line;
}

std::string fmt_u(std::size_t v) { return std::to_string(v); }

int cmd_gen_data(const CommonArgs& args) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "gen-data");

    DataFile df;
    df.n_tokens = cfg.n_tokens;
    df.d_v = cfg.d_v;
    df.d_q = cfg.d_q;
    df.samples = make_dataset(cfg);
    fs::path path = fs::path(args.out_dir) / kDataFile;
    save_data(path, df);
    std::cout << metric_line({{"samples", fmt_u(df.samples.size())},
                              {"train", fmt_u(train_split(cfg))},
                              {"held_out", fmt_u(cfg.eval_samples)},
                              {"file", path.string()}})
              << "\n";
    return 0;
}

int cmd_train_ae(const CommonArgs& args) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "train-ae");
    fs::path data_path = require_artifact(args, kDataFile, "gen-data");
    DataFile df = load_data(data_path);
    check_data_matches(cfg, df, kDataFile);
    if (df.samples.size() < cfg.sample_count) {
        throw ConfigError("data.bin holds fewer samples than sample_count");
    }

    std::ostringstream log;
    ReconReport report;
    AutoencoderParams encoder =
        run_train_ae(cfg, df.samples, &report, [&](std::size_t epoch, const ReconReport& r) {
            log << metric_line({{"epoch", fmt_u(epoch)},
                                {"mse", format_double(r.mse)},
                                {"rel_err", format_double(r.rel_err)}})
                << "\n";
        });
    fs::path path = fs::path(args.out_dir) / kEncoderFile;
    save_autoencoder(path, encoder);
    write_file_atomic(fs::path(args.out_dir) / "ae-log.txt", log.str());
    std::cout << metric_line({{"epochs", fmt_u(report.epochs)},
                              {"held_mse", format_double(report.mse)},
                              {"held_rel_err", format_double(report.rel_err)},
                              {"file", path.string()}})
              << "\n";
    return 0;
}

int cmd_gen_demos(const CommonArgs& args) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "gen-demos");
    DataFile df = load_data(require_artifact(args, kDataFile, "gen-data"));
    check_data_matches(cfg, df, kDataFile);
    AutoencoderParams encoder =
        load_autoencoder(require_artifact(args, kEncoderFile, "train-ae"));
    check_encoder_matches(cfg, encoder);
    if (df.samples.size() < cfg.demo_count) {
        throw ConfigError("data.bin holds fewer samples than demo_count");
    }

    DataFile out;
    out.n_tokens = cfg.n_tokens;
    out.d_v = cfg.d_v;
    out.d_q = cfg.d_q;
    out.samples.assign(df.samples.begin(),
                       df.samples.begin() + static_cast<std::ptrdiff_t>(cfg.demo_count));
    out.demos = run_gen_demos(cfg, df.samples, encoder);
    fs::path path = fs::path(args.out_dir) / kDemosFile;
    save_data(path, out);
    std::cout << metric_line({{"demos", fmt_u(out.demos.size())}, {"file", path.string()}})
              << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& args) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "pretrain-policy");
    DataFile df = load_data(require_artifact(args, kDemosFile, "gen-demos"));
    check_data_matches(cfg, df, kDemosFile);
    if (df.demos.empty()) throw DependencyError("demos.bin carries no demos; run gen-demos first");
    AutoencoderParams encoder =
        load_autoencoder(require_artifact(args, kEncoderFile, "train-ae"));
    check_encoder_matches(cfg, encoder);

    PretrainReport report;
    AgentParams policy = run_pretrain(cfg, df.demos, df.samples, encoder, &report);

    std::ostringstream log;
    for (const PretrainEpoch& e : report.epochs) {
        log << metric_line({{"epoch", fmt_u(e.epoch)},
                            {"train_loss", format_double(e.train_loss)},
                            {"held_loss", format_double(e.held_loss)},
                            {"agreement", format_double(e.agreement)}})
            << "\n";
    }
    fs::path path = fs::path(args.out_dir) / kPretrainedFile;
    save_agent(path, policy);
    write_file_atomic(fs::path(args.out_dir) / "pretrain-log.txt", log.str());
    std::cout << metric_line({{"epochs", fmt_u(report.epochs.size())},
                              {"final_agreement", format_double(report.final_agreement)},
                              {"early_stopped", report.early_stopped ? "1" : "0"},
                              {"file", path.string()}})
              << "\n";
    return 0;
}

int cmd_train_ppo(const CommonArgs& args, bool from_scratch, const std::string& policy_path) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "train-ppo");
    AutoencoderParams encoder =
        load_autoencoder(require_artifact(args, kEncoderFile, "train-ae"));
    check_encoder_matches(cfg, encoder);

    AgentParams policy;
    if (from_scratch) {
        policy = scratch_policy(cfg);
    } else {
        fs::path input = policy_path.empty()
                             ? fs::path(args.out_dir) / kPretrainedFile
                             : fs::path(policy_path);
        if (!fs::exists(input)) {
            throw DependencyError("missing " + input.string() +
                                  "; run pretrain-policy first or pass --from-scratch");
        }
        policy = load_agent(input);
        check_policy_matches(cfg, policy);
    }

    std::ostringstream log;
    auto on_iter = [&](const IterationRow& row) {
        std::string line = metric_line({{"iteration", fmt_u(row.iteration)},
                                        {"mean_reward", format_double(row.mean_reward)},
                                        {"mean_score", format_double(row.mean_score)},
                                        {"mean_tokens", format_double(row.mean_tokens)},
                                        {"l_clip", format_double(row.l_clip)},
                                        {"l_vf", format_double(row.l_vf)},
                                        {"entropy", format_double(row.entropy)},
                                        {"clip_fraction", format_double(row.clip_fraction)}});
        log << line << "\n";
        std::cout << line << "\n";
    };
    auto on_abort = [&]() {
        save_agent(fs::path(args.out_dir) / kAbortFile, policy);
        write_file_atomic(fs::path(args.out_dir) / "ppo-log.txt", log.str());
    };

    run_train_ppo(cfg, policy, encoder, nullptr, on_iter, on_abort);

    fs::path path = fs::path(args.out_dir) / kPolicyFile;
    save_agent(path, policy);
    write_file_atomic(fs::path(args.out_dir) / "ppo-log.txt", log.str());
    std::cout << metric_line({{"iterations", fmt_u(cfg.iterations)},
                              {"from_scratch", from_scratch ? "1" : "0"},
                              {"file", path.string()}})
              << "\n";
    return 0;
}

AgentParams load_eval_policy(const CommonArgs& args, const RunConfig& cfg,
                             const std::string& policy_path) {
    fs::path input =
        policy_path.empty() ? fs::path(args.out_dir) / kPolicyFile : fs::path(policy_path);
    if (!fs::exists(input)) {
        throw DependencyError("missing " + input.string() + "; run train-ppo first");
    }
    AgentParams policy = load_agent(input);
    check_policy_matches(cfg, policy);
    return policy;
}

int cmd_eval(const CommonArgs& args, const std::string& policy_path, bool has_tau,
             double tau_override) {
    RunConfig cfg = effective_config(args);
    if (has_tau) {
        cfg.tau = tau_override;
        validate_config(cfg);
    }
    write_echo(args, cfg, "eval");
    DataFile df = load_data(require_artifact(args, kDataFile, "gen-data"));
    check_data_matches(cfg, df, kDataFile);
    if (df.samples.size() < cfg.sample_count) {
        throw ConfigError("data.bin holds fewer samples than sample_count");
    }
    AutoencoderParams encoder =
        load_autoencoder(require_artifact(args, kEncoderFile, "train-ae"));
    check_encoder_matches(cfg, encoder);
    AgentParams policy = load_eval_policy(args, cfg, policy_path);

    EvalOutcome out = run_eval(cfg, policy, encoder, df.samples);

    std::ostringstream records_txt, records_csv;
    records_csv << "tau,mean_tokens,mean_score\n";
    for (const TauPoint& p : out.policy.curve) {
        records_txt << metric_line({{"tau", format_double(p.tau)},
                                    {"mean_tokens", format_double(p.mean_tokens)},
                                    {"mean_score", format_double(p.mean_score)}})
                    << "\n";
        records_csv << format_double(p.tau) << ',' << format_double(p.mean_tokens) << ','
                    << format_double(p.mean_score) << "\n";
    }

    const std::vector<std::pair<const char*, std::string>> summary = {
        {"samples", fmt_u(cfg.eval_samples)},
        {"tau", format_double(cfg.tau)},
        {"mean_score", format_double(out.policy.mean_score)},
        {"mean_tokens", format_double(out.policy.mean_retained_tokens)},
        {"retention", format_double(out.policy.retention_rate)},
        {"relative_score", format_double(out.relative_score)},
        {"full_score", format_double(out.full_score)},
        {"random_matched", format_double(out.random_matched.mean_score)},
        {"heuristic_matched", format_double(out.heuristic_matched.mean_score)},
    };
    std::ostringstream summary_txt, summary_csv_head, summary_csv_row;
    for (const auto& [key, value] : summary) {
        summary_txt << key << '=' << value << "\n";
        if (summary_csv_head.tellp() > 0) {
            summary_csv_head << ',';
            summary_csv_row << ',';
        }
        summary_csv_head << key;
        summary_csv_row << value;
    }

    fs::path base(args.out_dir);
    write_file_atomic(base / "eval-records.txt", records_txt.str());
    write_file_atomic(base / "eval-records.csv", records_csv.str());
    write_file_atomic(base / "eval-summary.txt", summary_txt.str());
    write_file_atomic(base / "eval-summary.csv",
                      summary_csv_head.str() + "\n" + summary_csv_row.str() + "\n");
    std::cout << summary_txt.str();
    return 0;
}

int cmd_trace(const CommonArgs& args, const std::string& policy_path, std::size_t sample_index) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "trace");
    DataFile df = load_data(require_artifact(args, kDataFile, "gen-data"));
    check_data_matches(cfg, df, kDataFile);
    if (df.samples.size() < cfg.sample_count) {
        throw ConfigError("data.bin holds fewer samples than sample_count");
    }
    AutoencoderParams encoder =
        load_autoencoder(require_artifact(args, kEncoderFile, "train-ae"));
    check_encoder_matches(cfg, encoder);
    AgentParams policy = load_eval_policy(args, cfg, policy_path);

    if (sample_index >= cfg.eval_samples) {
        throw ConfigError("trace sample index exceeds the held-out split");
    }
    const Sample& sample = df.samples[train_split(cfg) + sample_index];
    TraceRecord rec =
        trace(policy, encoder, sample, cfg.t_max, cfg.lambda_disc, cfg.kappa, cfg.seed);

    std::ostringstream txt, csv;
    csv << "step,retained,score,mask\n";
    for (const TraceStep& st : rec.steps) {
        std::string mask;
        mask.reserve(st.mask.size());
        for (std::uint8_t bit : st.mask) mask += bit ? '1' : '0';
        std::string line = metric_line({{"step", fmt_u(st.step)},
                                        {"retained", fmt_u(st.retained)},
                                        {"score", format_double(st.score)},
                                        {"mask", mask}});
        txt << line << "\n";
        std::cout << line << "\n";
        csv << st.step << ',' << st.retained << ',' << format_double(st.score) << ',' << mask
            << "\n";
    }
    fs::path base(args.out_dir);
    write_file_atomic(base / "trace-records.txt", txt.str());
    write_file_atomic(base / "trace-records.csv", csv.str());
    std::cout << metric_line({{"sample_seed", std::to_string(rec.sample_seed)},
                              {"steps", fmt_u(rec.steps.size())},
                              {"final_retained", fmt_u(rec.steps.back().retained)},
                              {"final_score", format_double(rec.steps.back().score)}})
              << "\n";
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& axis,
               const std::vector<std::size_t>& grid) {
    RunConfig cfg = effective_config(args);
    write_echo(args, cfg, "ablate-" + axis);

    std::vector<AblationCell> cells;
    if (axis == "tmax") {
        cells = ablation_tmax(cfg, grid.empty() ? std::vector<std::size_t>{1, 2, 3, 4, 5} : grid);
    } else if (axis == "dimension") {
        cells = ablation_dimension(cfg,
                                   grid.empty() ? std::vector<std::size_t>{2, 4, 8, 16} : grid);
    } else if (axis == "arch") {
        if (!grid.empty()) throw ConfigError("ablate: the arch axis takes no grid");
        cells = ablation_arch(cfg);
    } else if (axis == "init") {
        if (!grid.empty()) throw ConfigError("ablate: the init axis takes no grid");
        cells = ablation_init(cfg);
    } else {
        throw ConfigError("ablate: unknown axis '" + axis + "'");
    }

    std::ostringstream txt, csv;
    csv << "cell,mean_score,mean_tokens,relative_score\n";
    for (const AblationCell& cell : cells) {
        std::string line = metric_line({{"cell", cell.label},
                                        {"mean_score", format_double(cell.mean_score)},
                                        {"mean_tokens", format_double(cell.mean_tokens)},
                                        {"relative_score", format_double(cell.relative_score)}});
        txt << line << "\n";
        std::cout << line << "\n";
        csv << cell.label << ',' << format_double(cell.mean_score) << ','
            << format_double(cell.mean_tokens) << ',' << format_double(cell.relative_score)
            << "\n";
    }
    fs::path base(args.out_dir);
    write_file_atomic(base / ("ablation-" + axis + ".txt"), txt.str());
    write_file_atomic(base / ("ablation-" + axis + ".csv"), csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-pruning RL pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    bool from_scratch = false;
    std::string policy_path;
    std::string axis;
    std::vector<std::size_t> grid;
    double tau_override = -1.0;
    std::size_t sample_index = 0;

    CLI::App* gen_data = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen_data, args);
    CLI::App* train_ae = app.add_subcommand("train-ae", "train and freeze the compressor");
    add_common(train_ae, args);
    CLI::App* gen_demos = app.add_subcommand("gen-demos", "generate heuristic demonstrations");
    add_common(gen_demos, args);
    CLI::App* pretrain = app.add_subcommand("pretrain-policy", "behavior-clone the policy");
    add_common(pretrain, args);
    CLI::App* train_ppo = app.add_subcommand("train-ppo", "PPO fine-tuning");
    add_common(train_ppo, args);
    train_ppo->add_flag("--from-scratch", from_scratch,
                        "start from a fresh policy instead of the pretrained checkpoint");
    train_ppo->add_option("--policy", policy_path, "input policy checkpoint");
    CLI::App* eval = app.add_subcommand("eval", "held-out evaluation with baselines");
    add_common(eval, args);
    eval->add_option("--policy", policy_path, "policy checkpoint to evaluate");
    eval->add_option("--tau", tau_override, "override the inference threshold");
    CLI::App* tracecmd = app.add_subcommand("trace", "record one stochastic rollout");
    add_common(tracecmd, args);
    tracecmd->add_option("--policy", policy_path, "policy checkpoint to trace");
    tracecmd->add_option("--sample", sample_index, "held-out sample index")
        ->capture_default_str();
    CLI::App* ablate = app.add_subcommand("ablate", "grid sweeps over one axis");
    add_common(ablate, args);
    ablate->add_option("--axis", axis, "tmax | dimension | arch | init")->required();
    ablate->add_option("--grid", grid, "comma-separated axis values")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen_data->parsed()) return cmd_gen_data(args);
        if (train_ae->parsed()) return cmd_train_ae(args);
        if (gen_demos->parsed()) return cmd_gen_demos(args);
        if (pretrain->parsed()) return cmd_pretrain(args);
        if (train_ppo->parsed()) return cmd_train_ppo(args, from_scratch, policy_path);
        if (eval->parsed()) {
            return cmd_eval(args, policy_path, eval->count("--tau") > 0, tau_override);
        }
        if (tracecmd->parsed()) return cmd_trace(args, policy_path, sample_index);
        if (ablate->parsed()) return cmd_ablate(args, axis, grid);
    } catch (const ConfigError& e) {
        std::cerr << "tprl: error: config: " << e.what() << "\n";
        return 3;
    } catch (const DependencyError& e) {
        std::cerr << "tprl: error: dependency: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "tprl: error: numeric: " << e.what() << "\n";
        return 5;
    } catch (const IoError& e) {
        std::cerr << "tprl: error: io: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "tprl: error: internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
