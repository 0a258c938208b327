#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "recdesk/audit.hpp"
#include "recdesk/errors.hpp"
#include "recdesk/runner.hpp"
#include "recdesk/telemetry.hpp"

using namespace recdesk;
using namespace recdesk::runner;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int serial = 0;
        path = fs::temp_directory_path() /
               ("recdesk-runner-" + std::to_string(++serial) + "-" +
                std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

scenario::ScenarioSpec ten_step_home() {
    scenario::ScenarioSpec s;
    s.grid.start = 1736121600.0; // Monday 2025-01-06 00:00 UTC
    s.grid.interval_minutes = 15;
    s.grid.steps = 10;
    scenario::BuildingSpec b;
    b.id = "b1";
    b.load_profile = {0.4};
    scenario::BatterySpec bat;
    bat.capacity_kwh = 9.6;
    bat.rated_kw = 3.0;
    bat.eta_charge = 0.95;
    bat.eta_discharge = 0.95;
    bat.soc_init = 0.5;
    b.battery = bat;
    s.buildings.push_back(b);
    s.tariff.import_price.assign(10, 0.1);
    s.tariff.export_price.assign(10, 0.02);
    return s;
}

} // namespace

TEST_SUITE("runner") {

TEST_CASE("controller names round trip") {
    for (auto c : {Controller::maddpg, Controller::rbc, Controller::none}) {
        auto back = controller_from_name(controller_name(c));
        REQUIRE(back.has_value());
        CHECK(*back == c);
    }
    CHECK_FALSE(controller_from_name("pid").has_value());
}

TEST_CASE("the uncontrolled reference settles every interval") {
    auto scn = scenario::generate_synthetic(7, 2, 1);
    EpisodeOptions opt;
    opt.controller = Controller::none;
    opt.vet = false;
    auto a = run_episode(scn, opt);
    CHECK(a.exchange.size() == static_cast<std::size_t>(scn.grid.steps));
    CHECK(a.interventions == 0);
    CHECK(a.gradient_steps == 0);

    auto b = run_episode(scn, opt);
    REQUIRE(b.exchange.size() == a.exchange.size());
    CHECK(b.total_cost == a.total_cost);
    for (std::size_t t = 0; t < a.exchange.size(); ++t)
        CHECK(a.exchange[t].community_kwh == b.exchange[t].community_kwh);
}

TEST_CASE("rule-based control audits one record per building per step") {
    auto scn = ten_step_home();
    TempDir tmp;
    audit::Writer auditor(tmp.sub("audit.jsonl"));
    EpisodeOptions opt;
    opt.controller = Controller::rbc;
    opt.audit = &auditor;
    auto res = run_episode(scn, opt);
    auditor.flush();
    CHECK(res.exchange.size() == 10);
    CHECK(auditor.count() == 10);

    auto records = audit::read_log(tmp.sub("audit.jsonl"));
    REQUIRE(records.size() == 10);
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].step == static_cast<int>(i));
        CHECK(records[i].building == "b1");
        CHECK(records[i].observation.size() == static_cast<std::size_t>(telemetry::kObsDim));
    }
}

TEST_CASE("audit records survive the jsonl round trip") {
    audit::Record r;
    r.step = 3;
    r.ts = "2025-01-06T00:45:00Z";
    r.building = "b2";
    r.observation = {0.5, -1.25, 0.0};
    r.proposed = {1.7, -0.4};
    r.vetted = {1.0, 0.0};
    supervisor::Intervention iv;
    iv.step = 3;
    iv.building = "b2";
    iv.reason = supervisor::Reason::overrated_power;
    iv.proposed = r.proposed;
    iv.applied = r.vetted;
    r.interventions.push_back(iv);

    auto line = audit::to_jsonl(r);
    CHECK(line.find('\n') == std::string::npos);
    auto back = audit::record_from_json(line);
    CHECK(back == r);

    CHECK_THROWS_AS(audit::record_from_json("{broken"), ParseError);
    CHECK_THROWS_AS(audit::record_from_json(R"({"step": 1})"), ParseError);
}

TEST_CASE("the audit log refuses to rewind") {
    TempDir tmp;
    audit::Writer w(tmp.sub("log.jsonl"));
    audit::Record r;
    r.step = 5;
    w.append(r);
    r.step = 5;
    w.append(r); // same step, different building: fine
    r.step = 4;
    CHECK_THROWS_AS(w.append(r), StorageError);
    CHECK(w.count() == 2);
}

TEST_CASE("bad episode configurations are rejected up front") {
    auto scn = scenario::generate_synthetic(7, 2, 1);
    EpisodeOptions opt;
    opt.controller = Controller::maddpg;
    CHECK_THROWS_AS(run_episode(scn, opt), ValidationError); // no policy

    auto wrong_agents = control::init_policy({"x"}, telemetry::kObsDim, 2, 1);
    opt.policy = &wrong_agents;
    CHECK_THROWS_AS(run_episode(scn, opt), ShapeMismatch);

    auto wrong_width = control::init_policy({"b1", "b2"}, 5, 2, 1);
    opt.policy = &wrong_width;
    CHECK_THROWS_AS(run_episode(scn, opt), ShapeMismatch);

    auto good = control::init_policy({"b1", "b2"}, telemetry::kObsDim, 2, 1);
    opt.policy = &good;
    opt.explore = true;
    CHECK_THROWS_AS(run_episode(scn, opt), ValidationError); // no noise engines

    EpisodeOptions rep;
    rep.controller = Controller::none;
    control::ReplayBuffer buf(16, 1);
    rep.replay = &buf;
    CHECK_THROWS_AS(run_episode(scn, rep), ValidationError); // replay without cfg
}

TEST_CASE("telemetry faults degrade completeness but never the episode") {
    auto scn = scenario::generate_synthetic(11, 2, 1);
    EpisodeOptions opt;
    opt.controller = Controller::rbc;
    opt.faults.dropout_rate = 0.3;
    opt.faults.noise_sigma = 0.02;
    opt.faults.skew_s = 30.0;
    auto res = run_episode(scn, opt);
    CHECK(res.exchange.size() == static_cast<std::size_t>(scn.grid.steps));
    CHECK(res.mean_completeness < 1.0);
    CHECK(res.mean_completeness > 0.3);
}

TEST_CASE("config overrides land in the right struct") {
    control::TrainConfig cfg;
    twin::FaultConfig faults;
    apply_config_overrides(cfg, faults,
                           R"({"episodes": 3, "batch": 64, "seed": 9, "gamma": 0.5,
                               "dropout_rate": 0.1, "skew_s": 12.5, "fault_seed": 4})");
    CHECK(cfg.episodes == 3);
    CHECK(cfg.batch == 64);
    CHECK(cfg.seed == 9);
    CHECK(cfg.gamma == 0.5);
    CHECK(faults.dropout_rate == 0.1);
    CHECK(faults.skew_s == 12.5);
    CHECK(faults.seed == 4);

    CHECK_THROWS_AS(apply_config_overrides(cfg, faults, R"({"bogus": 1})"), ParseError);
    CHECK_THROWS_AS(apply_config_overrides(cfg, faults, "[1]"), ParseError);
    CHECK_THROWS_AS(apply_config_overrides(cfg, faults, R"({"batch": "big"})"), ParseError);
    CHECK_THROWS_AS(apply_config_overrides(cfg, faults, "{nope"), ParseError);
}

TEST_CASE("training twice from the same inputs writes identical artifacts") {
    auto scn = scenario::generate_synthetic(42, 2, 1);
    control::TrainConfig cfg;
    cfg.episodes = 2;
    cfg.batch = 32;
    cfg.update_every = 16;
    twin::FaultConfig faults;

    TempDir tmp;
    auto one = run_train(scn, cfg, faults, tmp.sub("a"));
    auto two = run_train(scn, cfg, faults, tmp.sub("b"));

    CHECK(slurp(tmp.sub("a") + "/kpi.json") == slurp(tmp.sub("b") + "/kpi.json"));
    CHECK(slurp(tmp.sub("a") + "/policy.ckpt") == slurp(tmp.sub("b") + "/policy.ckpt"));
    CHECK(slurp(tmp.sub("a") + "/scenario.json") == slurp(tmp.sub("b") + "/scenario.json"));
    CHECK(slurp(tmp.sub("a") + "/audit.jsonl") == slurp(tmp.sub("b") + "/audit.jsonl"));

    // The run directory is complete and reloadable.
    for (const char* f : {"scenario.json", "manifest.json", "policy.ckpt", "audit.jsonl",
                          "kpi.json", "kpi.txt"})
        CHECK(fs::exists(fs::path(tmp.sub("a")) / f));
    auto loaded = load_report(tmp.sub("a"));
    CHECK(loaded.c.raw == one.report.c.raw);
    CHECK(loaded.r.baseline == two.report.r.baseline);

    // Re-evaluating from the run's own artifacts reproduces the report bytes.
    EvalSpec ev;
    ev.scenario_path = tmp.sub("a") + "/scenario.json";
    ev.policy_path = tmp.sub("a") + "/policy.ckpt";
    ev.controller = Controller::maddpg;
    ev.cfg = cfg;
    ev.out_dir = tmp.sub("c");
    run_evaluate(ev);
    CHECK(slurp(tmp.sub("c") + "/kpi.json") == slurp(tmp.sub("a") + "/kpi.json"));
    CHECK(slurp(tmp.sub("c") + "/policy.ckpt") == slurp(tmp.sub("a") + "/policy.ckpt"));
}

TEST_CASE("evaluating the reference against itself is a flat report") {
    auto scn = scenario::generate_synthetic(5, 2, 1);
    TempDir tmp;
    scenario::save_scenario(scn, tmp.sub("scn.json"));

    EvalSpec ev;
    ev.scenario_path = tmp.sub("scn.json");
    ev.controller = Controller::none;
    ev.out_dir = tmp.sub("out");
    auto rep = run_evaluate(ev);

    for (const auto* e : {&rep.c, &rep.p, &rep.r}) {
        CHECK(e->raw == e->baseline);
        if (e->delta_pct) CHECK(*e->delta_pct == 0.0);
    }
    REQUIRE(rep.z.delta_pct.has_value());
    CHECK(*rep.z.delta_pct == 0.0);
    for (const auto& b : rep.buildings) {
        CHECK(b.d.raw == b.d.baseline);
        if (b.d.delta_pct) CHECK(*b.d.delta_pct == 0.0);
        CHECK(*b.z.delta_pct == 0.0);
    }
}

TEST_CASE("a maddpg evaluation without a checkpoint is refused") {
    auto scn = scenario::generate_synthetic(5, 2, 1);
    TempDir tmp;
    scenario::save_scenario(scn, tmp.sub("scn.json"));
    EvalSpec ev;
    ev.scenario_path = tmp.sub("scn.json");
    ev.controller = Controller::maddpg;
    ev.out_dir = tmp.sub("out");
    CHECK_THROWS_AS(run_evaluate(ev), ValidationError);
}

TEST_CASE("reports cannot load from an empty directory") {
    TempDir tmp;
    CHECK_THROWS_AS(load_report(tmp.sub("missing")), MissingArtifacts);
}

} // TEST_SUITE
