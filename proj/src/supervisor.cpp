#include "recdesk/supervisor.hpp"

#include <algorithm>
#include <cmath>

namespace recdesk::supervisor {

const char* reason_name(Reason r) {
    switch (r) {
    case Reason::overrated_power: return "overrated_power";
    case Reason::soc_bound: return "soc_bound";
    case Reason::ev_reserve: return "ev_reserve";
    case Reason::infeasible_target: return "infeasible_target";
    case Reason::stale_data: return "stale_data";
    case Reason::invalid_value: return "invalid_value";
    }
    return "?";
}

bool feasibility_watchdog(const twin::EvState& ev, const EvPlan& plan,
                          const scenario::ChargerSpec& charger, int step, double dt_h,
                          double margin) {
    if (!ev.connected) return false;
    const double required = std::max(0.0, plan.target_soc - ev.soc) * plan.capacity_kwh;
    if (required <= 0.0) return false;
    const int remaining = std::max(0, plan.departure_step - step);
    const double deliverable = remaining * charger.rated_kw * dt_h * charger.eta_charge;
    // >= not >: at exact equality only an unbroken full-power run still works,
    // so the override must engage now, not one step too late.
    return required >= deliverable * margin;
}

VetResult vet_action(const twin::Action& proposed, const scenario::BuildingSpec& spec,
                     const twin::BuildingState& state, const EvPlan& plan, int step,
                     int observation_age, const Envelope& env, const twin::Action& rbc_fallback,
                     double dt_h) {
    VetResult res;
    res.applied = proposed;
    auto note = [&](Reason reason, const twin::Action& before) {
        res.interventions.push_back({step, spec.id, reason, before, res.applied});
    };

    const bool invalid =
        !std::isfinite(proposed.battery_cmd) || !std::isfinite(proposed.ev_cmd);
    if (invalid || observation_age > env.max_obs_age) {
        res.applied = rbc_fallback;
        if (!std::isfinite(res.applied.battery_cmd)) res.applied.battery_cmd = 0.0;
        if (!std::isfinite(res.applied.ev_cmd)) res.applied.ev_cmd = 0.0;
        note(invalid ? Reason::invalid_value : Reason::stale_data, proposed);
    }

    // Range clamp against the charger's legal direction and unit commands.
    {
        const twin::Action before = res.applied;
        res.applied.battery_cmd = std::clamp(res.applied.battery_cmd, -1.0, 1.0);
        const bool v2g = spec.charger && spec.charger->v2g_enabled;
        res.applied.ev_cmd = std::clamp(res.applied.ev_cmd, v2g ? -1.0 : 0.0, 1.0);
        if (res.applied != before) note(Reason::overrated_power, before);
    }

    // Project onto commands whose post-step SoC stays inside bounds, using
    // the same closed-form arithmetic the plant applies.
    if (spec.battery) {
        const auto& b = *spec.battery;
        const twin::Action before = res.applied;
        const double full = b.rated_kw * dt_h;
        if (res.applied.battery_cmd > 0.0) {
            const double room = std::max(0.0, b.soc_max - state.battery.soc) * b.capacity_kwh;
            const double lim = room / (full * b.eta_charge);
            res.applied.battery_cmd = std::min(res.applied.battery_cmd, lim);
        } else if (res.applied.battery_cmd < 0.0) {
            const double avail = std::max(0.0, state.battery.soc - b.soc_min) * b.capacity_kwh;
            const double lim = avail * b.eta_discharge / full;
            res.applied.battery_cmd = std::max(res.applied.battery_cmd, -lim);
        }
        if (res.applied != before) note(Reason::soc_bound, before);
    } else if (res.applied.battery_cmd != 0.0) {
        // No battery: rated power is zero, so any command is over rating.
        const twin::Action before = res.applied;
        res.applied.battery_cmd = 0.0;
        note(Reason::overrated_power, before);
    }

    if (spec.charger && state.ev.connected && plan.capacity_kwh > 0.0) {
        const auto& c = *spec.charger;
        const double full = c.rated_kw * dt_h;
        if (res.applied.ev_cmd > 0.0) {
            const twin::Action before = res.applied;
            const double room = std::max(0.0, 1.0 - state.ev.soc) * plan.capacity_kwh;
            res.applied.ev_cmd = std::min(res.applied.ev_cmd, room / (full * c.eta_charge));
            if (res.applied != before) note(Reason::soc_bound, before);
        } else if (res.applied.ev_cmd < 0.0) {
            const twin::Action before = res.applied;
            const double avail =
                std::max(0.0, state.ev.soc - state.ev.reserve_soc) * plan.capacity_kwh;
            res.applied.ev_cmd = std::max(res.applied.ev_cmd, -avail * c.eta_discharge / full);
            if (res.applied != before) note(Reason::ev_reserve, before);
        }
    } else if (res.applied.ev_cmd != 0.0) {
        // Disconnected or chargerless: the command has nothing to act on.
        const twin::Action before = res.applied;
        res.applied.ev_cmd = 0.0;
        note(Reason::overrated_power, before);
    }

    if (spec.charger && plan.connected && state.ev.connected &&
        feasibility_watchdog(state.ev, plan, *spec.charger, step, dt_h,
                             env.feasibility_margin) &&
        res.applied.ev_cmd < 1.0) {
        const twin::Action before = res.applied;
        res.applied.ev_cmd = 1.0;
        note(Reason::infeasible_target, before);
    }

    return res;
}

} // namespace recdesk::supervisor
