#include "recdesk/flexibility.hpp"

#include <algorithm>
#include <cmath>

#include "recdesk/errors.hpp"

namespace recdesk::flexibility {

const char* day_type_name(DayType d) {
    switch (d) {
    case DayType::weekday: return "weekday";
    case DayType::weekend: return "weekend";
    case DayType::holiday: return "holiday";
    }
    return "?";
}

DayType day_type_for(const TimeGrid& grid, int step, const std::vector<std::string>& holidays) {
    const std::string date = format_iso8601(grid.step_time(step)).substr(0, 10);
    for (const auto& h : holidays)
        if (h == date) return DayType::holiday;
    return grid.step_day_of_week(step) >= 5 ? DayType::weekend : DayType::weekday;
}

void SessionHistory::update(DayType d, const SessionObs& obs) {
    if (!seen_.insert(obs.session_id).second) return;
    by_type_[d].push_back(obs);
}

const std::vector<SessionObs>& SessionHistory::entries(DayType d) const {
    static const std::vector<SessionObs> kEmpty;
    auto it = by_type_.find(d);
    return it == by_type_.end() ? kEmpty : it->second;
}

int SessionHistory::count(DayType d) const { return (int)entries(d).size(); }

Interval nearest_rank_interval(std::vector<double> values, double c) {
    if (values.empty()) throw ValidationError("nearest_rank_interval: empty sample");
    std::sort(values.begin(), values.end());
    const int n = (int)values.size();
    auto rank = [n](double q) {
        int r = (int)std::ceil(n * q);
        return std::clamp(r, 1, n);
    };
    return {values[rank((1.0 - c) / 2.0) - 1], values[rank((1.0 + c) / 2.0) - 1]};
}

FlexEstimate estimate_flexibility(const SessionHistory& h, DayType day_type, double c, int n_min,
                                  const scenario::FlexDefaults& defaults,
                                  double full_energy_kwh) {
    FlexEstimate est;
    est.day_type = day_type;
    est.confidence = c;
    const auto& entries = h.entries(day_type);
    est.sample_count = (int)entries.size();

    if (est.sample_count < n_min) {
        est.basis = Basis::pessimistic_default;
        double arrival = defaults.arrival_min;
        double duration = defaults.duration_min;
        double energy = defaults.energy_kwh.value_or(full_energy_kwh);
        if (!entries.empty()) {
            arrival = entries[0].arrival_min;
            duration = entries[0].duration_min;
            energy = entries[0].energy_kwh;
            for (const auto& e : entries) {
                arrival = std::min(arrival, e.arrival_min);
                duration = std::max(duration, e.duration_min);
                energy = std::max(energy, e.energy_kwh);
            }
        }
        est.arrival_min = {arrival, arrival};
        est.duration_min = {duration, duration};
        est.energy_kwh = {energy, energy};
        return est;
    }

    est.basis = Basis::estimated;
    std::vector<double> arr, dur, ener;
    for (const auto& e : entries) {
        arr.push_back(e.arrival_min);
        dur.push_back(e.duration_min);
        ener.push_back(e.energy_kwh);
    }
    est.arrival_min = nearest_rank_interval(std::move(arr), c);
    est.duration_min = nearest_rank_interval(std::move(dur), c);
    est.energy_kwh = nearest_rank_interval(std::move(ener), c);
    return est;
}

EffectiveParams resolve_preferences(const FlexEstimate& est,
                                    const std::optional<UserPreference>& pref,
                                    const TimeGrid& grid, int arrival_step, double soc_arrival,
                                    double ev_capacity_kwh, double energy_floor_kwh) {
    EffectiveParams out;
    out.basis = est.basis;

    const int duration_steps =
        std::max(1, (int)std::floor(est.duration_min.lo / grid.interval_minutes));
    out.departure_step = std::min(arrival_step + duration_steps, grid.steps);
    const double energy = std::max(est.energy_kwh.hi, energy_floor_kwh);
    out.target_soc = std::min(1.0, soc_arrival + energy / ev_capacity_kwh);

    if (pref) {
        bool overridden = false;
        if (pref->departure_min) {
            // Declared clock time; first occurrence at or after arrival.
            const int arr_mod = grid.step_minutes_of_day(arrival_step);
            int offset_min = (int)std::llround(*pref->departure_min) - arr_mod;
            while (offset_min <= 0) offset_min += 1440;
            out.departure_step =
                std::min(arrival_step + offset_min / grid.interval_minutes, grid.steps);
            overridden = true;
        }
        if (pref->target_soc) {
            out.target_soc = std::clamp(*pref->target_soc, 0.0, 1.0);
            overridden = true;
        }
        if (overridden) out.basis = Basis::user_override;
    }
    return out;
}

} // namespace recdesk::flexibility
