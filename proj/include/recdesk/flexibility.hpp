#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recdesk/scenario.hpp"
#include "recdesk/timeutil.hpp"

namespace recdesk::flexibility {

enum class DayType { weekday, weekend, holiday };
enum class Basis { estimated, pessimistic_default, user_override };

const char* day_type_name(DayType d);

DayType day_type_for(const TimeGrid& grid, int step, const std::vector<std::string>& holidays);

struct SessionObs {
    std::string session_id;
    double arrival_min = 0.0; // minutes since midnight
    double duration_min = 0.0;
    double energy_kwh = 0.0;
};

// Completed-session log for one building, bucketed by day type. Duplicate
// session ids are ignored so replays cannot double-count.
class SessionHistory {
public:
    void update(DayType d, const SessionObs& obs);
    const std::vector<SessionObs>& entries(DayType d) const;
    int count(DayType d) const;

private:
    std::map<DayType, std::vector<SessionObs>> by_type_;
    std::set<std::string> seen_;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct FlexEstimate {
    DayType day_type = DayType::weekday;
    double confidence = 0.9;
    Interval arrival_min;
    Interval duration_min;
    Interval energy_kwh;
    Basis basis = Basis::pessimistic_default;
    int sample_count = 0;
};

// Nearest-rank order statistics at ranks ceil(n(1-c)/2) and ceil(n(1+c)/2),
// 1-indexed and clamped. Below n_min samples the estimate degenerates to the
// hardest plausible session: earliest arrival, max duration, max energy
// (scenario defaults when the history is empty).
FlexEstimate estimate_flexibility(const SessionHistory& h, DayType day_type, double c, int n_min,
                                  const scenario::FlexDefaults& defaults,
                                  double full_energy_kwh);

Interval nearest_rank_interval(std::vector<double> values, double c);

struct UserPreference {
    std::optional<double> departure_min; // minutes since midnight
    std::optional<double> target_soc;
    std::optional<int> earliest_start_step;
};

// What the planner actually uses for the session in progress.
struct EffectiveParams {
    int departure_step = 0;
    double target_soc = 1.0;
    Basis basis = Basis::pessimistic_default;
};

// Field-wise merge: declared preferences win over the estimate. Estimate
// fields convert to concrete parameters against the session at hand:
// departure from the low end of the duration interval (conservative), target
// from the high end of the energy interval. energy_floor_kwh is a caution
// floor under the energy estimate (a scenario-declared worst case): history
// tracks needs already seen, and an arrival below every previous one would
// otherwise get a target short of what the user actually wants.
EffectiveParams resolve_preferences(const FlexEstimate& est,
                                    const std::optional<UserPreference>& pref,
                                    const TimeGrid& grid, int arrival_step, double soc_arrival,
                                    double ev_capacity_kwh, double energy_floor_kwh = 0.0);

} // namespace recdesk::flexibility
