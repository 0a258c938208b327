#pragma once

#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "recdesk/audit.hpp"
#include "recdesk/control.hpp"
#include "recdesk/kpi.hpp"
#include "recdesk/scenario.hpp"
#include "recdesk/twin.hpp"

namespace recdesk::runner {

enum class Controller { maddpg, rbc, none };

const char* controller_name(Controller c);
std::optional<Controller> controller_from_name(const std::string& s);

struct EpisodeOptions {
    Controller controller = Controller::none;
    // `none` is the no-control reference: zero actions straight into the twin,
    // no supervisor in the path.
    bool vet = true;
    bool explore = false;
    double sigma = 0.0;
    twin::FaultConfig faults;
    const control::PolicyParams* policy = nullptr;    // maddpg only
    std::vector<std::mt19937_64>* noise = nullptr;    // one engine per agent, explore only
    control::ReplayBuffer* replay = nullptr;          // collect transitions
    control::Trainer* trainer = nullptr;              // learn while running
    const control::TrainConfig* cfg = nullptr;        // reward shaping + update cadence
    audit::Writer* audit = nullptr;
};

struct EpisodeResult {
    std::vector<twin::GridExchange> exchange; // one row per settled step
    std::vector<double> unmet_kwh;            // per building, end of episode
    double total_cost = 0.0;
    double mean_completeness = 1.0;
    double mean_reward = 0.0;
    int interventions = 0;
    int gradient_steps = 0;
    double mean_critic_loss = 0.0;
};

// One full pass over the scenario's grid: telemetry, flexibility estimates,
// acting, vetting, twin stepping and (optionally) learning. Fresh pipeline
// and session history every call so training and evaluation see the same
// cold-start distribution.
EpisodeResult run_episode(const scenario::ScenarioSpec& scn, const EpisodeOptions& opt);

// Parses a JSON object of config overrides ({"episodes": 3, "dropout_rate":
// 0.1, ...}) into the two config structs. Unknown keys are errors.
void apply_config_overrides(control::TrainConfig& cfg, twin::FaultConfig& faults,
                            const std::string& json_text);

struct TrainOutcome {
    std::string run_dir;
    kpi::NormalizedReport report;
};

// Trains for cfg.episodes exploratory episodes, then runs one greedy episode
// (audited) and one `none` baseline, and persists scenario.json,
// manifest.json, policy.ckpt, audit.jsonl, kpi.json and kpi.txt under
// out_dir. Everything except the manifest timestamp is a pure function of
// (scenario, cfg, faults).
TrainOutcome run_train(const scenario::ScenarioSpec& scn, const control::TrainConfig& cfg,
                       const twin::FaultConfig& faults, const std::string& out_dir,
                       std::ostream* log = nullptr);

struct EvalSpec {
    std::string scenario_path;
    std::string policy_path; // required for maddpg
    Controller controller = Controller::maddpg;
    twin::FaultConfig faults;
    control::TrainConfig cfg; // reward shaping for logs; seed reused
    std::string out_dir;
};

// Single deterministic episode plus the `none` reference, normalized report
// written to out_dir along with copies of the inputs so the directory stands
// alone.
kpi::NormalizedReport run_evaluate(const EvalSpec& spec, std::ostream* log = nullptr);

// Loads the report back from a finished run directory.
kpi::NormalizedReport load_report(const std::string& run_dir); // MissingArtifacts

} // namespace recdesk::runner
