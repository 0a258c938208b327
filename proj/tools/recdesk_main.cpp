#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "recdesk/control.hpp"
#include "recdesk/errors.hpp"
#include "recdesk/kpi.hpp"
#include "recdesk/runner.hpp"
#include "recdesk/scenario.hpp"
#include "recdesk/twin.hpp"

namespace fs = std::filesystem;
using namespace recdesk;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CommonOpts {
    std::string config_path;
    control::TrainConfig cfg;
    twin::FaultConfig faults;
};

// Defaults < config file < explicit flags.
void add_config_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON file of config overrides");
    cmd->add_option("--seed", o.cfg.seed, "run seed");
    cmd->add_option("--episodes", o.cfg.episodes, "training episodes");
    cmd->add_option("--batch", o.cfg.batch, "minibatch size");
    cmd->add_option("--gamma", o.cfg.gamma, "discount factor");
    cmd->add_option("--tau", o.cfg.tau, "target net blend rate");
    cmd->add_option("--actor-lr", o.cfg.actor_lr, "actor learning rate");
    cmd->add_option("--critic-lr", o.cfg.critic_lr, "critic learning rate");
    cmd->add_option("--sigma", o.cfg.sigma, "initial exploration noise");
    cmd->add_option("--sigma-decay", o.cfg.sigma_decay, "per-episode noise decay");
    cmd->add_option("--lambda-peak", o.cfg.lambda_peak, "community peak penalty weight");
    cmd->add_option("--lambda-ev", o.cfg.lambda_ev, "EV shortfall penalty weight");
    cmd->add_option("--update-every", o.cfg.update_every, "env steps per gradient step");
    cmd->add_option("--replay-capacity", o.cfg.replay_capacity, "replay buffer size");
    cmd->add_option("--dropout", o.faults.dropout_rate, "telemetry dropout probability");
    cmd->add_option("--noise", o.faults.noise_sigma, "telemetry relative noise sigma");
    cmd->add_option("--skew", o.faults.skew_s, "telemetry clock skew bound, seconds");
    cmd->add_option("--fault-seed", o.faults.seed, "fault injection seed");
}

void resolve_config(CLI::App* cmd, CommonOpts& o) {
    if (o.config_path.empty()) return;
    control::TrainConfig file_cfg; // defaults
    twin::FaultConfig file_faults;
    runner::apply_config_overrides(file_cfg, file_faults, slurp(o.config_path));
    // Flags the user typed beat the file; everything else takes the file's
    // value. Compare against the parse result: an untouched option keeps the
    // default, a typed one has count() > 0.
    auto keep = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    control::TrainConfig merged = file_cfg;
    twin::FaultConfig mf = file_faults;
    if (keep("--seed")) merged.seed = o.cfg.seed;
    if (keep("--episodes")) merged.episodes = o.cfg.episodes;
    if (keep("--batch")) merged.batch = o.cfg.batch;
    if (keep("--gamma")) merged.gamma = o.cfg.gamma;
    if (keep("--tau")) merged.tau = o.cfg.tau;
    if (keep("--actor-lr")) merged.actor_lr = o.cfg.actor_lr;
    if (keep("--critic-lr")) merged.critic_lr = o.cfg.critic_lr;
    if (keep("--sigma")) merged.sigma = o.cfg.sigma;
    if (keep("--sigma-decay")) merged.sigma_decay = o.cfg.sigma_decay;
    if (keep("--lambda-peak")) merged.lambda_peak = o.cfg.lambda_peak;
    if (keep("--lambda-ev")) merged.lambda_ev = o.cfg.lambda_ev;
    if (keep("--update-every")) merged.update_every = o.cfg.update_every;
    if (keep("--replay-capacity")) merged.replay_capacity = o.cfg.replay_capacity;
    if (keep("--dropout")) mf.dropout_rate = o.faults.dropout_rate;
    if (keep("--noise")) mf.noise_sigma = o.faults.noise_sigma;
    if (keep("--skew")) mf.skew_s = o.faults.skew_s;
    if (keep("--fault-seed")) mf.seed = o.faults.seed;
    o.cfg = merged;
    o.faults = mf;
}

int run(int argc, char** argv) {
    CLI::App app{"Renewable-energy-community control testbed"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic scenario");
    std::uint64_t gen_seed = 42;
    int gen_buildings = 4, gen_days = 30;
    std::string gen_out = "scenario.json";
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--buildings", gen_buildings, "number of buildings")->check(CLI::Range(1, 64));
    gen->add_option("--days", gen_days, "episode length in days")->check(CLI::Range(1, 365));
    gen->add_option("--out", gen_out, "output path");

    // train
    auto* train = app.add_subcommand("train", "train the multi-agent controller");
    std::string train_scn, train_out = "run";
    train->add_option("--scenario", train_scn, "scenario path")->required();
    train->add_option("--out", train_out, "run directory");
    CommonOpts train_opts;
    add_config_flags(train, train_opts);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a controller for one episode");
    std::string eval_run, eval_scn, eval_policy, eval_out, eval_ctrl = "maddpg";
    eval->add_option("--run", eval_run, "train run directory (supplies scenario and policy)");
    eval->add_option("--scenario", eval_scn, "scenario path (overrides the run's)");
    eval->add_option("--policy", eval_policy, "checkpoint path (overrides the run's)");
    eval->add_option("--controller", eval_ctrl, "maddpg | rbc | none");
    eval->add_option("--out", eval_out, "output directory (default: the run directory)");
    CommonOpts eval_opts;
    add_config_flags(eval, eval_opts);

    // report
    auto* report = app.add_subcommand("report", "render the KPI table of a finished run");
    std::string report_run;
    bool report_json = false;
    report->add_option("--run", report_run, "run directory")->required();
    report->add_flag("--json", report_json, "print the raw JSON report instead");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        scenario::ScenarioSpec s = scenario::generate_synthetic(gen_seed, gen_buildings, gen_days);
        std::ofstream out(gen_out, std::ios::binary);
        if (!out) throw StorageError("cannot write " + gen_out);
        out << scenario::serialize_scenario(s);
        std::cout << "wrote " << gen_out << " (" << gen_buildings << " buildings, " << gen_days
                  << " days, seed " << gen_seed << ")\n";
        return 0;
    }

    if (train->parsed()) {
        resolve_config(train, train_opts);
        scenario::ScenarioSpec s = scenario::load_scenario(train_scn);
        runner::TrainOutcome out =
            runner::run_train(s, train_opts.cfg, train_opts.faults, train_out, &std::cout);
        std::cout << "run directory: " << out.run_dir << "\n";
        return 0;
    }

    if (eval->parsed()) {
        resolve_config(eval, eval_opts);
        auto ctrl = runner::controller_from_name(eval_ctrl);
        if (!ctrl) throw ValidationError("unknown controller '" + eval_ctrl + "'");
        runner::EvalSpec spec;
        spec.controller = *ctrl;
        spec.faults = eval_opts.faults;
        spec.cfg = eval_opts.cfg;
        if (!eval_run.empty()) {
            spec.scenario_path = (fs::path(eval_run) / "scenario.json").string();
            spec.policy_path = (fs::path(eval_run) / "policy.ckpt").string();
            spec.out_dir = eval_run;
        }
        if (!eval_scn.empty()) spec.scenario_path = eval_scn;
        if (!eval_policy.empty()) spec.policy_path = eval_policy;
        if (!eval_out.empty()) spec.out_dir = eval_out;
        if (spec.scenario_path.empty())
            throw ValidationError("eval needs --run or --scenario");
        if (spec.out_dir.empty()) throw ValidationError("eval needs --run or --out");
        runner::run_evaluate(spec, &std::cout);
        return 0;
    }

    if (report->parsed()) {
        if (report_json) {
            std::cout << slurp((fs::path(report_run) / "kpi.json").string());
        } else {
            std::cout << kpi::render_table(runner::load_report(report_run));
        }
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifacts& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
