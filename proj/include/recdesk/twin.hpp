#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "recdesk/scenario.hpp"
#include "recdesk/telemetry.hpp"

namespace recdesk::twin {

// Control command for one building, as fractions of rated power.
// battery_cmd in [-1,1]; ev_cmd in [0,1], or [-1,1] when the charger is
// V2G-capable. + = charge. Out-of-range and non-finite commands are clipped
// (never rejected) at this layer.
struct Action {
    double battery_cmd = 0.0;
    double ev_cmd = 0.0;

    bool operator==(const Action&) const = default;
};

struct BatteryState {
    double soc = 0.0;
};

struct BatteryStepResult {
    BatteryState state;
    double ac_kwh = 0.0;       // signed, + = drawn from the building bus
    double internal_kwh = 0.0; // cell-side energy moved (always >= 0)
};

BatteryStepResult step_battery(const scenario::BatterySpec& b, BatteryState s, double cmd,
                               double dt_h);

struct EvState {
    bool connected = false;
    double soc = 0.0;
    int session = -1; // index into the building's session list, -1 = none
    double reserve_soc = 0.0;
    double unmet_kwh_at_departure = 0.0; // cumulative over the episode
    int next_session = 0;
    // SoC the vehicle left with last time; drives arrival SoC continuity.
    double carry_soc = std::numeric_limits<double>::quiet_NaN();
};

struct EvStepResult {
    EvState state;
    double ac_kwh = 0.0;
    double internal_kwh = 0.0;
    double unmet_kwh_now = 0.0; // shortfall settled by departures during this call
};

// Processes arrivals/departures due at `step`. Idempotent for a given step.
// Departure settles max(0, target - soc) * capacity into the unmet
// accumulator; the vehicle's SoC carries over to its next arrival.
EvState advance_sessions(EvState s, const std::vector<scenario::EvSessionSpec>& schedule, int step,
                         double* unmet_delta = nullptr);

EvStepResult step_ev(const scenario::ChargerSpec& c, EvState s,
                     const std::vector<scenario::EvSessionSpec>& schedule, int step, double cmd,
                     double dt_h);

struct BuildingState {
    BatteryState battery;
    EvState ev;
};

struct BuildingStepResult {
    BuildingState state;
    double load_kwh = 0.0;
    double pv_kwh = 0.0;
    double battery_ac_kwh = 0.0;
    double ev_ac_kwh = 0.0;
    double net_kwh = 0.0; // + = import
    double unmet_kwh_now = 0.0;
};

BuildingStepResult step_building(const scenario::BuildingSpec& spec,
                                 const std::vector<scenario::EvSessionSpec>& schedule,
                                 const BuildingState& s, const Action& a, int step, double dt_h);

// One settled interval of community exchange.
struct GridExchange {
    std::vector<double> net_kwh;         // per building, signed
    std::vector<double> consumption_kwh; // load + positive battery/EV AC draw
    double community_kwh = 0.0;
    double import_cost = 0.0;   // community total, this step
    double export_credit = 0.0;
};

struct SimState {
    int step = 0;
    std::vector<BuildingState> buildings;
    std::vector<GridExchange> exchange; // one per completed step
};

struct StepOutcome {
    int step = 0;
    std::vector<BuildingStepResult> buildings;
    std::vector<double> cost; // per building: p_imp*imports - p_exp*exports
    GridExchange exchange;
};

class CommunitySim {
public:
    explicit CommunitySim(const scenario::ScenarioSpec& s);

    const SimState& state() const { return state_; }
    const scenario::ScenarioSpec& scn() const { return *scn_; }
    bool done() const { return state_.step >= scn_->grid.steps; }

    // EV plug transitions for the step about to execute; call any number of
    // times before step(). Returns shortfall settled by departures just
    // processed (per building).
    std::vector<double> sync_sessions();

    StepOutcome step(const std::vector<Action>& actions); // throws EpisodeOver

    // Settles departures scheduled at grid end after the final step.
    std::vector<double> finish();

    double unmet_kwh(int building) const {
        return state_.buildings[building].ev.unmet_kwh_at_departure;
    }

private:
    const scenario::ScenarioSpec* scn_;
    SimState state_;
    std::vector<const std::vector<scenario::EvSessionSpec>*> schedules_;
    bool finished_ = false;
};

// Sensor emissions for one settled step: readings stamped at interval end.
std::vector<telemetry::RawReading> emit_readings(const scenario::ScenarioSpec& s,
                                                 const StepOutcome& o);

struct FaultConfig {
    double dropout_rate = 0.0;
    double noise_sigma = 0.0; // relative
    double skew_s = 0.0;      // uniform in [-skew_s, +skew_s]
    std::uint64_t seed = 0;

    bool operator==(const FaultConfig&) const = default;
};

// Stateful so a stream degraded step-by-step equals the same stream degraded
// in one call.
class FaultInjector {
public:
    explicit FaultInjector(const FaultConfig& cfg);
    std::vector<telemetry::RawReading> degrade(const std::vector<telemetry::RawReading>& in);

private:
    FaultConfig cfg_;
    std::mt19937_64 eng_;
};

std::vector<telemetry::RawReading> inject_faults(const std::vector<telemetry::RawReading>& in,
                                                 const FaultConfig& cfg);

} // namespace recdesk::twin
