#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recdesk/timeutil.hpp"

namespace recdesk::scenario {

// Static world description. Immutable after load; safe to share read-only
// across concurrent runs.

struct PvSpec {
    double peak_kw = 0.0;
    std::vector<double> profile; // kWh per interval

    bool operator==(const PvSpec&) const = default;
};

struct BatterySpec {
    double capacity_kwh = 0.0;
    double rated_kw = 0.0;
    double soc_min = 0.0;
    double soc_max = 1.0;
    double eta_charge = 1.0;
    double eta_discharge = 1.0;
    double soc_init = 0.5;

    bool operator==(const BatterySpec&) const = default;
};

// Charger ratings are powers; rated_kw is the AC-side kW limit.
struct ChargerSpec {
    double rated_kw = 7.4;
    bool v2g_enabled = false;
    double eta_charge = 1.0;
    double eta_discharge = 1.0;

    bool operator==(const ChargerSpec&) const = default;
};

struct BuildingSpec {
    std::string id;
    std::vector<double> load_profile; // kWh per interval
    std::optional<PvSpec> pv;
    std::optional<BatterySpec> battery;
    std::optional<ChargerSpec> charger;

    bool operator==(const BuildingSpec&) const = default;
};

struct EvSessionSpec {
    int arrival_step = 0;
    int departure_step = 0;
    double soc_arrival = 0.0;
    double soc_target = 1.0;
    double ev_capacity_kwh = 0.0;

    bool operator==(const EvSessionSpec&) const = default;
};

struct TariffSpec {
    std::vector<double> import_price; // currency per kWh
    std::vector<double> export_price;

    bool operator==(const TariffSpec&) const = default;
};

// Cold-start assumptions for the flexibility estimator when a building has
// no recorded sessions yet. energy_kwh empty means "assume a full charge".
struct FlexDefaults {
    int arrival_min = 1080;  // 18:00
    int duration_min = 840;  // 14 h
    std::optional<double> energy_kwh;

    bool operator==(const FlexDefaults&) const = default;
};

struct BuildingSessions {
    std::string building;
    std::vector<EvSessionSpec> sessions;

    bool operator==(const BuildingSessions&) const = default;
};

struct ScenarioSpec {
    TimeGrid grid;
    std::vector<BuildingSpec> buildings;
    std::vector<BuildingSessions> sessions;
    TariffSpec tariff;
    std::uint64_t seed = 0;
    std::vector<std::string> holidays; // ISO dates, used for day-typing
    FlexDefaults flex_defaults;

    const std::vector<EvSessionSpec>* sessions_for(const std::string& building_id) const;

    bool operator==(const ScenarioSpec&) const = default;
};

struct Violation {
    std::string path;
    std::string message;
};

// Total function: empty iff every invariant holds.
std::vector<Violation> validate_scenario(const ScenarioSpec& s);

// Throws ParseError on malformed documents, ValidationError (naming the
// first violated invariant and field path) on invalid ones.
ScenarioSpec load_scenario(const std::string& path);
ScenarioSpec parse_scenario(const std::string& json_text, const std::string& base_dir);

std::string serialize_scenario(const ScenarioSpec& s);
void save_scenario(const ScenarioSpec& s, const std::string& path);

// Deterministic synthetic community: residential double-peak loads, midday
// PV, evening-peaked prices, and overnight EV sessions jittered around an
// 18:00 arrival / 08:00 departure.
ScenarioSpec generate_synthetic(std::uint64_t seed, int buildings, int days);

} // namespace recdesk::scenario
