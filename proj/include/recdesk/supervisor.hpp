#pragma once

#include <string>
#include <vector>

#include "recdesk/scenario.hpp"
#include "recdesk/twin.hpp"

namespace recdesk::supervisor {

enum class Reason { overrated_power, soc_bound, ev_reserve, infeasible_target, stale_data,
                    invalid_value };

const char* reason_name(Reason r);

struct Intervention {
    int step = 0;
    std::string building;
    Reason reason = Reason::invalid_value;
    twin::Action proposed;
    twin::Action applied;

    bool operator==(const Intervention&) const = default;
};

struct Envelope {
    int max_obs_age = 2;          // intervals
    double feasibility_margin = 1.0; // 1 = trigger exactly at the deliverable limit
};

// EV planning context for the vet pass; departure/target come from resolved
// user preferences or the flexibility estimate.
struct EvPlan {
    bool connected = false;
    int departure_step = 0;
    double target_soc = 0.0;
    double capacity_kwh = 0.0;
};

struct VetResult {
    twin::Action applied;
    std::vector<Intervention> interventions;
};

// Total: any input (NaN, huge, stale) yields a safe action. Checks run in a
// fixed order so intervention counts are reproducible: invalid values,
// staleness, range clamp, SoC/reserve projection, feasibility watchdog.
// `rbc_fallback` is the substitute on full fallback; it passes through the
// same projection so the result is safe regardless of its source.
VetResult vet_action(const twin::Action& proposed, const scenario::BuildingSpec& spec,
                     const twin::BuildingState& state, const EvPlan& plan, int step,
                     int observation_age, const Envelope& env, const twin::Action& rbc_fallback,
                     double dt_h);

// True when target SoC is unreachable even at full power for the remaining
// intervals (margin scales the deliverable side).
bool feasibility_watchdog(const twin::EvState& ev, const EvPlan& plan,
                          const scenario::ChargerSpec& charger, int step, double dt_h,
                          double margin);

} // namespace recdesk::supervisor
