#include "recdesk/twin.hpp"

#include <algorithm>
#include <cmath>

#include "recdesk/errors.hpp"
#include "recdesk/rng.hpp"

namespace recdesk::twin {

namespace {

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

double sanitize_cmd(double cmd, double lo, double hi) {
    if (!std::isfinite(cmd)) return 0.0;
    return clampd(cmd, lo, hi);
}

// Shared storage arithmetic. cmd > 0 charges. Bounds are enforced by the
// min() terms; the final clamp only mops up last-ulp residue.
struct StorageOut {
    double soc;
    double ac_kwh;
    double internal_kwh;
};

StorageOut step_storage(double soc, double cmd, double cap, double rated, double soc_lo,
                        double soc_hi, double eta_c, double eta_d, double dt_h) {
    StorageOut out{soc, 0.0, 0.0};
    if (cmd > 0.0) {
        const double gain = std::min(cmd * rated * dt_h * eta_c, std::max(0.0, soc_hi - soc) * cap);
        out.internal_kwh = gain;
        out.ac_kwh = gain / eta_c;
        out.soc = clampd(soc + gain / cap, soc_lo, soc_hi);
    } else if (cmd < 0.0) {
        const double draw =
            std::min(-cmd * rated * dt_h / eta_d, std::max(0.0, soc - soc_lo) * cap);
        out.internal_kwh = draw;
        out.ac_kwh = -draw * eta_d;
        out.soc = clampd(soc - draw / cap, soc_lo, soc_hi);
    }
    return out;
}

} // namespace

BatteryStepResult step_battery(const scenario::BatterySpec& b, BatteryState s, double cmd,
                               double dt_h) {
    cmd = sanitize_cmd(cmd, -1.0, 1.0);
    const StorageOut o = step_storage(s.soc, cmd, b.capacity_kwh, b.rated_kw, b.soc_min, b.soc_max,
                                      b.eta_charge, b.eta_discharge, dt_h);
    return {BatteryState{o.soc}, o.ac_kwh, o.internal_kwh};
}

EvState advance_sessions(EvState s, const std::vector<scenario::EvSessionSpec>& schedule, int step,
                         double* unmet_delta) {
    double settled = 0.0;
    if (s.connected && s.session >= 0 && schedule[s.session].departure_step <= step) {
        const auto& sess = schedule[s.session];
        double shortfall = std::max(0.0, sess.soc_target - s.soc) * sess.ev_capacity_kwh;
        if (shortfall < 1e-9) shortfall = 0.0; // sub-micro-Wh dust from clamps
        s.unmet_kwh_at_departure += shortfall;
        settled += shortfall;
        s.carry_soc = s.soc;
        s.connected = false;
        s.session = -1;
    }
    while (s.next_session < (int)schedule.size() &&
           schedule[s.next_session].departure_step <= step) {
        // Whole session fell inside a window we never stepped through
        // (possible only with degenerate schedules); settle it as missed.
        const auto& sess = schedule[s.next_session];
        double arrival = sess.soc_arrival;
        if (std::isfinite(s.carry_soc) && s.next_session > 0)
            arrival = clampd(sess.soc_arrival +
                                 (s.carry_soc - schedule[s.next_session - 1].soc_target),
                             0.0, 1.0);
        double shortfall = std::max(0.0, sess.soc_target - arrival) * sess.ev_capacity_kwh;
        if (shortfall < 1e-9) shortfall = 0.0;
        s.unmet_kwh_at_departure += shortfall;
        settled += shortfall;
        s.carry_soc = arrival;
        ++s.next_session;
    }
    if (!s.connected && s.next_session < (int)schedule.size() &&
        schedule[s.next_session].arrival_step <= step) {
        const auto& sess = schedule[s.next_session];
        double soc = sess.soc_arrival;
        if (std::isfinite(s.carry_soc) && s.next_session > 0)
            soc = clampd(sess.soc_arrival + (s.carry_soc - schedule[s.next_session - 1].soc_target),
                         0.0, 1.0);
        s.connected = true;
        s.soc = soc;
        s.reserve_soc = soc;
        s.session = s.next_session;
        ++s.next_session;
    }
    if (unmet_delta) *unmet_delta = settled;
    return s;
}

EvStepResult step_ev(const scenario::ChargerSpec& c, EvState s,
                     const std::vector<scenario::EvSessionSpec>& schedule, int step, double cmd,
                     double dt_h) {
    EvStepResult out;
    out.state = advance_sessions(s, schedule, step, &out.unmet_kwh_now);
    if (!out.state.connected) return out;

    const auto& sess = schedule[out.state.session];
    cmd = sanitize_cmd(cmd, c.v2g_enabled ? -1.0 : 0.0, 1.0);
    const double floor = c.v2g_enabled ? out.state.reserve_soc : 0.0;
    const StorageOut o = step_storage(out.state.soc, cmd, sess.ev_capacity_kwh, c.rated_kw, floor,
                                      1.0, c.eta_charge, c.eta_discharge, dt_h);
    out.state.soc = o.soc;
    out.ac_kwh = o.ac_kwh;
    out.internal_kwh = o.internal_kwh;
    return out;
}

BuildingStepResult step_building(const scenario::BuildingSpec& spec,
                                 const std::vector<scenario::EvSessionSpec>& schedule,
                                 const BuildingState& s, const Action& a, int step, double dt_h) {
    BuildingStepResult r;
    r.state = s;
    r.load_kwh = spec.load_profile[step];
    r.pv_kwh = spec.pv ? spec.pv->profile[step] : 0.0;
    if (spec.battery) {
        const auto b = step_battery(*spec.battery, s.battery, a.battery_cmd, dt_h);
        r.state.battery = b.state;
        r.battery_ac_kwh = b.ac_kwh;
    }
    if (spec.charger) {
        const auto e = step_ev(*spec.charger, s.ev, schedule, step, a.ev_cmd, dt_h);
        r.state.ev = e.state;
        r.ev_ac_kwh = e.ac_kwh;
        r.unmet_kwh_now = e.unmet_kwh_now;
    }
    r.net_kwh = r.load_kwh - r.pv_kwh + r.battery_ac_kwh + r.ev_ac_kwh;
    return r;
}

CommunitySim::CommunitySim(const scenario::ScenarioSpec& s) : scn_(&s) {
    static const std::vector<scenario::EvSessionSpec> kNone;
    state_.buildings.resize(s.buildings.size());
    for (std::size_t b = 0; b < s.buildings.size(); ++b) {
        if (s.buildings[b].battery) state_.buildings[b].battery.soc = s.buildings[b].battery->soc_init;
        const auto* sched = s.sessions_for(s.buildings[b].id);
        schedules_.push_back(sched ? sched : &kNone);
    }
}

std::vector<double> CommunitySim::sync_sessions() {
    std::vector<double> settled(state_.buildings.size(), 0.0);
    for (std::size_t b = 0; b < state_.buildings.size(); ++b) {
        double d = 0.0;
        state_.buildings[b].ev = advance_sessions(state_.buildings[b].ev, *schedules_[b],
                                                  state_.step, &d);
        settled[b] = d;
    }
    return settled;
}

StepOutcome CommunitySim::step(const std::vector<Action>& actions) {
    if (done()) throw EpisodeOver("episode over at step " + std::to_string(state_.step));
    if (actions.size() != state_.buildings.size())
        throw ValidationError("need one action per building");

    const int t = state_.step;
    const double dt_h = scn_->grid.interval_hours();

    StepOutcome out;
    out.step = t;
    out.exchange.net_kwh.resize(state_.buildings.size());
    out.exchange.consumption_kwh.resize(state_.buildings.size());
    out.cost.resize(state_.buildings.size());

    for (std::size_t b = 0; b < state_.buildings.size(); ++b) {
        auto r = step_building(scn_->buildings[b], *schedules_[b], state_.buildings[b], actions[b],
                               t, dt_h);
        state_.buildings[b] = r.state;
        out.exchange.net_kwh[b] = r.net_kwh;
        out.exchange.consumption_kwh[b] = r.load_kwh + std::max(0.0, r.battery_ac_kwh) +
                                          std::max(0.0, r.ev_ac_kwh);
        out.exchange.community_kwh += r.net_kwh;
        const double imp = std::max(0.0, r.net_kwh);
        const double exp = std::max(0.0, -r.net_kwh);
        out.cost[b] = scn_->tariff.import_price[t] * imp - scn_->tariff.export_price[t] * exp;
        out.exchange.import_cost += scn_->tariff.import_price[t] * imp;
        out.exchange.export_credit += scn_->tariff.export_price[t] * exp;
        out.buildings.push_back(std::move(r));
    }
    state_.exchange.push_back(out.exchange);
    ++state_.step;
    return out;
}

std::vector<double> CommunitySim::finish() {
    finished_ = true;
    return sync_sessions(); // state_.step == steps settles end-of-grid departures
}

std::vector<telemetry::RawReading> emit_readings(const scenario::ScenarioSpec& s,
                                                 const StepOutcome& o) {
    using telemetry::Metric;
    std::vector<telemetry::RawReading> out;
    const double ts = s.grid.step_time(o.step + 1); // meters report at interval end
    const double dt_h = s.grid.interval_hours();
    for (std::size_t b = 0; b < o.buildings.size(); ++b) {
        const auto& br = o.buildings[b];
        const auto& id = s.buildings[b].id;
        out.push_back({id, Metric::load_kwh, ts, br.load_kwh});
        if (s.buildings[b].pv) out.push_back({id, Metric::pv_kwh, ts, br.pv_kwh});
        if (s.buildings[b].battery)
            out.push_back({id, Metric::battery_soc, ts, br.state.battery.soc});
        if (br.state.ev.connected) {
            out.push_back({id, Metric::ev_soc, ts, br.state.ev.soc});
            out.push_back({id, Metric::ev_power_kw, ts, br.ev_ac_kwh / dt_h});
        }
    }
    return out;
}

FaultInjector::FaultInjector(const FaultConfig& cfg)
    : cfg_(cfg), eng_(derive_seed(cfg.seed, "faults")) {}

std::vector<telemetry::RawReading> FaultInjector::degrade(
    const std::vector<telemetry::RawReading>& in) {
    std::vector<telemetry::RawReading> out;
    out.reserve(in.size());
    for (const auto& r : in) {
        if (uniform01(eng_) < cfg_.dropout_rate) continue;
        telemetry::RawReading d = r;
        d.value = r.value * (1.0 + cfg_.noise_sigma * normal01(eng_));
        d.ts = r.ts + uniform_range(eng_, -cfg_.skew_s, cfg_.skew_s);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<telemetry::RawReading> inject_faults(const std::vector<telemetry::RawReading>& in,
                                                 const FaultConfig& cfg) {
    FaultInjector fi(cfg);
    return fi.degrade(in);
}

} // namespace recdesk::twin
