#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recdesk/scenario.hpp"
#include "recdesk/twin.hpp"

namespace recdesk::kpi {

struct EmptyRun : std::runtime_error { using std::runtime_error::runtime_error; };

struct BuildingKpis {
    std::string building;
    double d_kwh = 0.0;        // imported energy
    double c_cost = 0.0;       // net electricity cost
    double z_self = 0.0;       // self-sufficiency, 1 - imports/consumption
    double consumption_kwh = 0.0;
};

struct CommunityKpis {
    double d_kwh = 0.0; // community-netted imports (not reported, feeds z)
    double c_cost = 0.0;
    double z_self = 0.0;
    double p_kwh = 0.0; // mean daily peak import
    double r_kwh = 0.0; // total ramping
    double consumption_kwh = 0.0;
};

struct KpiReport {
    std::vector<BuildingKpis> buildings;
    CommunityKpis community;
};

// Raw value plus percentage delta vs baseline. The delta is absent when the
// baseline value is not strictly positive (ratio meaningless there); z deltas
// are percentage-point differences and always present.
struct Entry {
    double raw = 0.0;
    double baseline = 0.0;
    std::optional<double> delta_pct;
};

struct NormalizedBuilding {
    std::string building;
    Entry d, c, z;
};

struct NormalizedReport {
    std::vector<NormalizedBuilding> buildings;
    Entry c, z, p, r; // community level
};

KpiReport compute_kpis(const std::vector<twin::GridExchange>& series,
                       const scenario::ScenarioSpec& s);

NormalizedReport normalize_report(const KpiReport& control, const KpiReport& baseline);

std::string report_to_json(const KpiReport& raw);
std::string normalized_to_json(const NormalizedReport& rep);
NormalizedReport normalized_from_json(const std::string& text);

// Aligned text table: KPI rows, one column per building plus REC. Cells the
// table does not define stay blank (per-building P/R, community D).
std::string render_table(const NormalizedReport& rep);

} // namespace recdesk::kpi
