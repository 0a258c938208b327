#include "recdesk/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "recdesk/errors.hpp"
#include "recdesk/flexibility.hpp"
#include "recdesk/rng.hpp"
#include "recdesk/supervisor.hpp"
#include "recdesk/telemetry.hpp"
#include "recdesk/timeutil.hpp"

namespace recdesk::runner {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* controller_name(Controller c) {
    switch (c) {
        case Controller::maddpg: return "maddpg";
        case Controller::rbc: return "rbc";
        case Controller::none: return "none";
    }
    return "?";
}

std::optional<Controller> controller_from_name(const std::string& s) {
    if (s == "maddpg") return Controller::maddpg;
    if (s == "rbc") return Controller::rbc;
    if (s == "none") return Controller::none;
    return std::nullopt;
}

namespace {

// Everything the reward at step t needs but that is only known at t+1 (EV
// shortfalls settle when the vehicle actually leaves).
struct PendingTransition {
    std::vector<double> obs;     // joint
    std::vector<double> actions; // joint, as executed
    std::vector<double> cost;    // per building
    double community_kwh = 0.0;
};

struct EvContext {
    supervisor::EvPlan plan;     // connected=false when no vehicle
    int session = -1;            // twin session index while connected
    int arrival_step = 0;
    double arrival_soc = 0.0;
};

} // namespace

EpisodeResult run_episode(const scenario::ScenarioSpec& scn, const EpisodeOptions& opt) {
    const int n = static_cast<int>(scn.buildings.size());
    const int T = scn.grid.steps;
    const double dt_h = scn.grid.interval_hours();

    if (opt.controller == Controller::maddpg) {
        if (!opt.policy) throw ValidationError("maddpg episode needs a policy");
        if (opt.policy->n_agents != n)
            throw ShapeMismatch("policy trained for " + std::to_string(opt.policy->n_agents) +
                                " agents, scenario has " + std::to_string(n));
        if (opt.policy->obs_dim != telemetry::kObsDim)
            throw ShapeMismatch("policy observation width " +
                                std::to_string(opt.policy->obs_dim) + " != " +
                                std::to_string(telemetry::kObsDim));
        if (opt.explore && !opt.noise)
            throw ValidationError("exploration needs per-agent noise engines");
    }
    if ((opt.replay || opt.trainer) && !opt.cfg)
        throw ValidationError("training episode needs a TrainConfig");

    twin::CommunitySim sim(scn);
    telemetry::Pipeline pipe(scn);
    twin::FaultInjector injector(opt.faults);
    supervisor::Envelope env;

    std::vector<flexibility::SessionHistory> hist(n);
    std::vector<EvContext> ev(n);
    std::vector<std::vector<double>> obs(n);
    std::vector<twin::Action> proposed(n), applied(n);

    std::optional<PendingTransition> pending;
    EpisodeResult res;
    res.unmet_kwh.assign(n, 0.0);
    double completeness_sum = 0.0;
    double reward_sum = 0.0;
    std::int64_t reward_count = 0;
    double critic_loss_sum = 0.0;
    std::int64_t critic_loss_count = 0;

    const int obs_dim = telemetry::kObsDim;

    auto settle_pending = [&](const std::vector<double>& unmet_now,
                              const std::vector<double>& next_obs, bool done) {
        if (!pending) return;
        control::Transition tr;
        tr.obs = std::move(pending->obs);
        tr.actions = std::move(pending->actions);
        tr.next_obs = next_obs;
        tr.done = done;
        tr.rewards.resize(n);
        for (int i = 0; i < n; ++i) {
            const double r = opt.cfg ? control::reward(pending->cost[i], pending->community_kwh,
                                                       n, unmet_now[i], *opt.cfg)
                                     : 0.0;
            tr.rewards[i] = r;
            reward_sum += r;
            ++reward_count;
        }
        if (opt.replay) opt.replay->push(std::move(tr));
        pending.reset();
    };

    for (int t = 0; t < T; ++t) {
        std::vector<double> unmet_now = sim.sync_sessions();

        // Plug transitions: refresh plans on arrival, log completed sessions
        // on departure so later estimates tighten.
        for (int b = 0; b < n; ++b) {
            const twin::EvState& es = sim.state().buildings[b].ev;
            const auto* schedule = scn.sessions_for(scn.buildings[b].id);
            if (es.connected && !ev[b].plan.connected) {
                const auto& sess = (*schedule)[static_cast<std::size_t>(es.session)];
                ev[b].session = es.session;
                ev[b].arrival_step = t;
                ev[b].arrival_soc = es.soc;
                auto day = flexibility::day_type_for(scn.grid, t, scn.holidays);
                auto est = flexibility::estimate_flexibility(hist[b], day, 0.9, 10,
                                                             scn.flex_defaults,
                                                             sess.ev_capacity_kwh);
                auto eff = flexibility::resolve_preferences(
                    est, std::nullopt, scn.grid, t, es.soc, sess.ev_capacity_kwh,
                    scn.flex_defaults.energy_kwh.value_or(0.0));
                ev[b].plan = {true, eff.departure_step, eff.target_soc, sess.ev_capacity_kwh};
            } else if (!es.connected && ev[b].plan.connected) {
                const auto& sess = (*schedule)[static_cast<std::size_t>(ev[b].session)];
                flexibility::SessionObs so;
                so.session_id = scn.buildings[b].id + "#" + std::to_string(ev[b].session);
                so.arrival_min = scn.grid.step_minutes_of_day(ev[b].arrival_step);
                so.duration_min = (t - ev[b].arrival_step) * scn.grid.interval_minutes;
                so.energy_kwh =
                    std::max(0.0, sess.soc_target - ev[b].arrival_soc) * sess.ev_capacity_kwh;
                hist[b].update(flexibility::day_type_for(scn.grid, ev[b].arrival_step,
                                                         scn.holidays),
                               so);
                ev[b].plan = {};
                ev[b].session = -1;
            }
        }

        // Observations for step t come from the frame settled at t-1.
        const telemetry::AlignedFrame* prev =
            (t > 0 && pipe.has_frame(t - 1)) ? &pipe.frame(t - 1) : nullptr;
        const int obs_age = t == 0 ? 0 : (t - 1) - pipe.last_step();
        std::vector<double> joint_obs;
        joint_obs.reserve(static_cast<std::size_t>(n) * obs_dim);
        for (int b = 0; b < n; ++b) {
            const auto& spec = scn.buildings[b];
            const twin::EvState& es = sim.state().buildings[b].ev;
            telemetry::ObsContext c;
            c.step = t;
            c.price_now = scn.tariff.import_price[static_cast<std::size_t>(t)];
            c.price_next = scn.tariff.import_price[static_cast<std::size_t>(std::min(t + 1, T - 1))];
            if (spec.pv)
                c.pv_forecast_kwh = pipe.predict(b, telemetry::Metric::pv_kwh, t).value_kwh;
            c.load_forecast_kwh = pipe.predict(b, telemetry::Metric::load_kwh, t).value_kwh;
            c.battery_soc = spec.battery ? spec.battery->soc_init : 0.0;
            if (prev && spec.battery) {
                auto it = prev->values[b].find(telemetry::Metric::battery_soc);
                if (it != prev->values[b].end()) c.battery_soc = it->second.value;
            }
            c.ev_connected = es.connected;
            c.ev_soc = es.soc;
            c.ev_capacity_kwh = ev[b].plan.capacity_kwh;
            c.ev_target_soc = ev[b].plan.target_soc;
            c.intervals_to_departure =
                es.connected ? std::max(0, ev[b].plan.departure_step - t) : 0;
            c.completeness = prev ? prev->completeness[b] : 0.0;
            obs[b] = telemetry::encode_observation(scn.grid, c);
            joint_obs.insert(joint_obs.end(), obs[b].begin(), obs[b].end());
            completeness_sum += c.completeness;
        }

        settle_pending(unmet_now, joint_obs, false);

        for (int b = 0; b < n; ++b) {
            const auto& spec = scn.buildings[b];
            const twin::EvState& es = sim.state().buildings[b].ev;
            const bool v2g = spec.charger && spec.charger->v2g_enabled;
            switch (opt.controller) {
                case Controller::maddpg: {
                    static std::mt19937_64 dummy; // untouched when explore is off
                    std::mt19937_64& eng = opt.explore ? (*opt.noise)[b] : dummy;
                    proposed[b] = control::act(*opt.policy, b, obs[b], opt.explore, eng,
                                               opt.sigma, v2g);
                    break;
                }
                case Controller::rbc:
                    proposed[b] = control::rbc_act(obs[b][7], obs[b][6], es.connected, es.soc,
                                                   ev[b].plan.target_soc, spec, dt_h);
                    break;
                case Controller::none:
                    proposed[b] = {0.0, 0.0};
                    break;
            }
        }

        std::vector<std::vector<supervisor::Intervention>> notes(n);
        if (opt.vet) {
            for (int b = 0; b < n; ++b) {
                const auto& spec = scn.buildings[b];
                const twin::EvState& es = sim.state().buildings[b].ev;
                twin::Action fallback = control::rbc_act(obs[b][7], obs[b][6], es.connected,
                                                         es.soc, ev[b].plan.target_soc, spec,
                                                         dt_h);
                auto vr = supervisor::vet_action(proposed[b], spec, sim.state().buildings[b],
                                                 ev[b].plan, t, obs_age, env, fallback, dt_h);
                applied[b] = vr.applied;
                notes[b] = std::move(vr.interventions);
                res.interventions += static_cast<int>(notes[b].size());
            }
        } else {
            applied = proposed;
        }

        twin::StepOutcome out = sim.step(applied);

        auto readings = injector.degrade(twin::emit_readings(scn, out));
        pipe.ingest(std::move(readings), t);

        if (opt.audit) {
            for (int b = 0; b < n; ++b) {
                audit::Record rec;
                rec.step = t;
                rec.ts = format_iso8601(scn.grid.step_time(t));
                rec.building = scn.buildings[b].id;
                rec.observation = obs[b];
                rec.proposed = proposed[b];
                rec.vetted = applied[b];
                rec.interventions = notes[b];
                opt.audit->append(rec);
            }
        }

        PendingTransition p;
        p.obs = std::move(joint_obs);
        p.actions.reserve(static_cast<std::size_t>(n) * 2);
        for (int b = 0; b < n; ++b) {
            p.actions.push_back(applied[b].battery_cmd);
            p.actions.push_back(applied[b].ev_cmd);
        }
        p.cost = out.cost;
        p.community_kwh = out.exchange.community_kwh;
        pending = std::move(p);
        res.total_cost += std::accumulate(out.cost.begin(), out.cost.end(), 0.0);

        if (opt.trainer && opt.replay && (t + 1) % opt.cfg->update_every == 0 &&
            opt.replay->size() >= static_cast<std::size_t>(opt.cfg->batch)) {
            control::StepLosses losses = opt.trainer->train_step(*opt.replay);
            ++res.gradient_steps;
            for (double l : losses.critic_loss) {
                critic_loss_sum += l;
                ++critic_loss_count;
            }
        }
    }

    std::vector<double> final_unmet = sim.finish();
    settle_pending(final_unmet, std::vector<double>(static_cast<std::size_t>(n) * obs_dim, 0.0),
                   true);

    res.exchange = sim.state().exchange;
    for (int b = 0; b < n; ++b) res.unmet_kwh[b] = sim.unmet_kwh(b);
    res.mean_completeness = T > 0 ? completeness_sum / (static_cast<double>(T) * n) : 1.0;
    res.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
    res.mean_critic_loss =
        critic_loss_count ? critic_loss_sum / static_cast<double>(critic_loss_count) : 0.0;
    return res;
}

// ------------------------------------------------------------------- config

void apply_config_overrides(control::TrainConfig& cfg, twin::FaultConfig& faults,
                            const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        try {
            if (k == "gamma") cfg.gamma = v.get<double>();
            else if (k == "tau") cfg.tau = v.get<double>();
            else if (k == "actor_lr") cfg.actor_lr = v.get<double>();
            else if (k == "critic_lr") cfg.critic_lr = v.get<double>();
            else if (k == "batch") cfg.batch = v.get<int>();
            else if (k == "sigma") cfg.sigma = v.get<double>();
            else if (k == "sigma_decay") cfg.sigma_decay = v.get<double>();
            else if (k == "episodes") cfg.episodes = v.get<int>();
            else if (k == "lambda_peak") cfg.lambda_peak = v.get<double>();
            else if (k == "lambda_ev") cfg.lambda_ev = v.get<double>();
            else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (k == "update_every") cfg.update_every = v.get<int>();
            else if (k == "replay_capacity") cfg.replay_capacity = v.get<std::size_t>();
            else if (k == "dropout_rate") faults.dropout_rate = v.get<double>();
            else if (k == "noise_sigma") faults.noise_sigma = v.get<double>();
            else if (k == "skew_s") faults.skew_s = v.get<double>();
            else if (k == "fault_seed") faults.seed = v.get<std::uint64_t>();
            else throw ParseError("config: unknown key '" + k + "'");
        } catch (const json::exception& e) {
            throw ParseError("config: bad value for '" + k + "': " + e.what());
        }
    }
}

namespace {

json config_json(const control::TrainConfig& c) {
    return {{"gamma", c.gamma},
            {"tau", c.tau},
            {"actor_lr", c.actor_lr},
            {"critic_lr", c.critic_lr},
            {"batch", c.batch},
            {"sigma", c.sigma},
            {"sigma_decay", c.sigma_decay},
            {"episodes", c.episodes},
            {"lambda_peak", c.lambda_peak},
            {"lambda_ev", c.lambda_ev},
            {"seed", c.seed},
            {"update_every", c.update_every},
            {"replay_capacity", c.replay_capacity}};
}

json faults_json(const twin::FaultConfig& f) {
    return {{"dropout_rate", f.dropout_rate},
            {"noise_sigma", f.noise_sigma},
            {"skew_s", f.skew_s},
            {"fault_seed", f.seed}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StorageError("cannot write " + path.string());
    out << text;
    if (!out) throw StorageError("short write to " + path.string());
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

void write_manifest(const fs::path& dir, const std::string& kind, std::uint64_t scenario_hash,
                    const control::TrainConfig& cfg, const twin::FaultConfig& faults,
                    const std::string& controller) {
    json m;
    m["run_id"] = kind + "-" + hex64(scenario_hash ^ cfg.hash());
    m["kind"] = kind;
    m["created_at"] = format_iso8601(static_cast<double>(std::time(nullptr)));
    m["code_version"] = "0.1.0";
    m["scenario"] = {{"path", "scenario.json"}, {"fnv1a64", hex64(scenario_hash)}};
    m["controller"] = controller;
    m["config"] = config_json(cfg);
    m["faults"] = faults_json(faults);
    m["artifacts"] = {"scenario.json", "manifest.json", "policy.ckpt", "audit.jsonl",
                      "kpi.json", "kpi.txt"};
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::mt19937_64> noise_engines(const scenario::ScenarioSpec& scn,
                                           std::uint64_t seed) {
    std::vector<std::mt19937_64> engines;
    engines.reserve(scn.buildings.size());
    for (const auto& b : scn.buildings)
        engines.emplace_back(derive_seed(seed, "noise/" + b.id));
    return engines;
}

} // namespace

TrainOutcome run_train(const scenario::ScenarioSpec& scn, const control::TrainConfig& cfg,
                       const twin::FaultConfig& faults, const std::string& out_dir,
                       std::ostream* log) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    std::vector<std::string> ids;
    for (const auto& b : scn.buildings) ids.push_back(b.id);

    control::PolicyParams policy =
        control::init_policy(ids, telemetry::kObsDim, 2, cfg.seed);
    control::Trainer trainer(std::move(policy), cfg);
    control::ReplayBuffer replay(cfg.replay_capacity, derive_seed(cfg.seed, "replay"));
    auto noise = noise_engines(scn, cfg.seed);

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        EpisodeOptions opt;
        opt.controller = Controller::maddpg;
        opt.vet = true;
        opt.explore = true;
        opt.sigma = cfg.sigma * std::pow(cfg.sigma_decay, ep);
        opt.faults = faults;
        opt.policy = &trainer.params();
        opt.noise = &noise;
        opt.replay = &replay;
        opt.trainer = &trainer;
        opt.cfg = &cfg;
        EpisodeResult r = run_episode(scn, opt);
        if (log) {
            *log << "episode " << (ep + 1) << "/" << cfg.episodes << "  sigma "
                 << opt.sigma << "  reward " << r.mean_reward << "  cost " << r.total_cost
                 << "  unmet "
                 << std::accumulate(r.unmet_kwh.begin(), r.unmet_kwh.end(), 0.0)
                 << "  updates " << r.gradient_steps << "  critic_loss "
                 << r.mean_critic_loss << "\n";
        }
    }

    audit::Writer auditor((dir / "audit.jsonl").string());
    EpisodeOptions greedy;
    greedy.controller = Controller::maddpg;
    greedy.vet = true;
    greedy.faults = faults;
    greedy.policy = &trainer.params();
    greedy.cfg = &cfg;
    greedy.audit = &auditor;
    EpisodeResult control_run = run_episode(scn, greedy);
    auditor.flush();

    EpisodeOptions base;
    base.controller = Controller::none;
    base.vet = false;
    base.faults = faults;
    EpisodeResult baseline_run = run_episode(scn, base);

    kpi::KpiReport control_kpis = kpi::compute_kpis(control_run.exchange, scn);
    kpi::KpiReport baseline_kpis = kpi::compute_kpis(baseline_run.exchange, scn);
    kpi::NormalizedReport report = kpi::normalize_report(control_kpis, baseline_kpis);

    const std::string scn_bytes = scenario::serialize_scenario(scn);
    write_text(dir / "scenario.json", scn_bytes);
    control::save_checkpoint(trainer.params(), (dir / "policy.ckpt").string());
    write_text(dir / "kpi.json", kpi::normalized_to_json(report));
    write_text(dir / "kpi.txt", kpi::render_table(report));
    write_manifest(dir, "train", fnv1a64(scn_bytes), cfg, faults, "maddpg");

    if (log) {
        *log << "greedy episode: cost " << control_run.total_cost << ", interventions "
             << control_run.interventions << ", unmet "
             << std::accumulate(control_run.unmet_kwh.begin(), control_run.unmet_kwh.end(), 0.0)
             << " kWh (baseline "
             << std::accumulate(baseline_run.unmet_kwh.begin(), baseline_run.unmet_kwh.end(),
                                0.0)
             << " kWh)\n";
        *log << kpi::render_table(report);
    }
    return {dir.string(), std::move(report)};
}

kpi::NormalizedReport run_evaluate(const EvalSpec& spec, std::ostream* log) {
    scenario::ScenarioSpec scn = scenario::load_scenario(spec.scenario_path);
    const fs::path dir(spec.out_dir);
    fs::create_directories(dir);

    control::PolicyParams policy;
    if (spec.controller == Controller::maddpg) {
        if (spec.policy_path.empty())
            throw ValidationError("maddpg evaluation needs a checkpoint");
        policy = control::load_checkpoint(spec.policy_path);
    }

    audit::Writer auditor((dir / "audit.jsonl").string());
    EpisodeOptions opt;
    opt.controller = spec.controller;
    opt.vet = spec.controller != Controller::none;
    opt.faults = spec.faults;
    opt.policy = spec.controller == Controller::maddpg ? &policy : nullptr;
    opt.cfg = &spec.cfg;
    opt.audit = &auditor;
    EpisodeResult control_run = run_episode(scn, opt);
    auditor.flush();

    EpisodeOptions base;
    base.controller = Controller::none;
    base.vet = false;
    base.faults = spec.faults;
    EpisodeResult baseline_run = run_episode(scn, base);

    kpi::KpiReport control_kpis = kpi::compute_kpis(control_run.exchange, scn);
    kpi::KpiReport baseline_kpis = kpi::compute_kpis(baseline_run.exchange, scn);
    kpi::NormalizedReport report = kpi::normalize_report(control_kpis, baseline_kpis);

    const std::string scn_bytes = scenario::serialize_scenario(scn);
    write_text(dir / "scenario.json", scn_bytes);
    if (spec.controller == Controller::maddpg &&
        !fs::exists(dir / "policy.ckpt"))
        control::save_checkpoint(policy, (dir / "policy.ckpt").string());
    write_text(dir / "kpi.json", kpi::normalized_to_json(report));
    write_text(dir / "kpi.txt", kpi::render_table(report));
    write_manifest(dir, "eval", fnv1a64(scn_bytes), spec.cfg, spec.faults,
                   controller_name(spec.controller));

    if (log) {
        *log << "controller " << controller_name(spec.controller) << ": cost "
             << control_run.total_cost << ", interventions " << control_run.interventions
             << ", completeness " << control_run.mean_completeness << ", unmet "
             << std::accumulate(control_run.unmet_kwh.begin(), control_run.unmet_kwh.end(), 0.0)
             << " kWh\n";
        *log << kpi::render_table(report);
    }
    return report;
}

kpi::NormalizedReport load_report(const std::string& run_dir) {
    const fs::path p = fs::path(run_dir) / "kpi.json";
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingArtifacts("no kpi.json under " + run_dir);
    std::ostringstream buf;
    buf << in.rdbuf();
    return kpi::normalized_from_json(buf.str());
}

} // namespace recdesk::runner
