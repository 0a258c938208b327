#pragma once

#include <cstdint>
#include <string>

namespace recdesk {

// All timestamps are UTC. Internally a timestamp is seconds since the Unix
// epoch as a double (sub-second offsets appear once clock skew is injected).

// Civil date <-> epoch day conversions (proleptic Gregorian, UTC).
std::int64_t days_from_civil(int y, unsigned m, unsigned d);
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d);

// "YYYY-MM-DDTHH:MM:SSZ", optionally with ".mmm" fractional seconds.
// Throws ParseError on malformed input.
double parse_iso8601(const std::string& s);
std::string format_iso8601(double unix_seconds);

// 0 = Monday ... 6 = Sunday, for the UTC day containing the timestamp.
int day_of_week(double unix_seconds);

// Minutes since UTC midnight of the timestamp's day.
int minutes_of_day(double unix_seconds);

struct TimeGrid {
    double start = 0.0;       // unix seconds, UTC
    int interval_minutes = 15;
    int steps = 0;

    double interval_seconds() const { return interval_minutes * 60.0; }
    double interval_hours() const { return interval_minutes / 60.0; }
    int steps_per_day() const { return 1440 / interval_minutes; }
    int steps_per_week() const { return 7 * steps_per_day(); }

    double step_time(int k) const { return start + k * interval_seconds(); }

    // Calendar features of step k.
    int step_minutes_of_day(int k) const { return minutes_of_day(step_time(k)); }
    int step_day_of_week(int k) const { return day_of_week(step_time(k)); }

    // Hour-of-week slot in [0, 7*steps_per_day): used by the forecast tables.
    int hour_of_week_slot(int k) const {
        return step_day_of_week(k) * steps_per_day() +
               step_minutes_of_day(k) / interval_minutes;
    }

    bool operator==(const TimeGrid&) const = default;
};

} // namespace recdesk
