#include "recdesk/timeutil.hpp"

#include <cmath>
#include <cstdio>

#include "recdesk/errors.hpp"

namespace recdesk {

// Howard Hinnant's branchless civil-date algorithms.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

double parse_iso8601(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double sec = 0.0;
    char tail = '\0';
    int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%lf%c", &y, &mo, &d, &h, &mi, &sec, &tail);
    if (n < 6 || (n == 7 && tail != 'Z'))
        throw ParseError("not an ISO-8601 UTC timestamp: '" + s + "'");
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
        sec < 0.0 || sec >= 61.0)
        throw ParseError("ISO-8601 field out of range: '" + s + "'");
    const std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
    return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + sec;
}

std::string format_iso8601(double unix_seconds) {
    double day_floor = std::floor(unix_seconds / 86400.0);
    double in_day = unix_seconds - day_floor * 86400.0;
    int y;
    unsigned m, d;
    civil_from_days(static_cast<std::int64_t>(day_floor), y, m, d);
    int h = static_cast<int>(in_day / 3600.0);
    int mi = static_cast<int>((in_day - h * 3600.0) / 60.0);
    double sec = in_day - h * 3600.0 - mi * 60.0;
    // Millisecond precision is enough for skewed sensor timestamps; whole
    // seconds are written without a fractional part so grid-aligned times
    // round-trip to the exact same string.
    double sec_rounded = std::round(sec * 1000.0) / 1000.0;
    if (sec_rounded >= 60.0) sec_rounded = 59.999;
    char buf[48];
    if (std::abs(sec_rounded - std::round(sec_rounded)) < 1e-9) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d, h, mi,
                      static_cast<int>(std::round(sec_rounded)));
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%06.3fZ", y, m, d, h, mi,
                      sec_rounded);
    }
    return buf;
}

int day_of_week(double unix_seconds) {
    const std::int64_t days = static_cast<std::int64_t>(std::floor(unix_seconds / 86400.0));
    // 1970-01-01 was a Thursday; map so that 0 = Monday.
    std::int64_t dow = (days + 3) % 7;
    if (dow < 0) dow += 7;
    return static_cast<int>(dow);
}

int minutes_of_day(double unix_seconds) {
    double day_floor = std::floor(unix_seconds / 86400.0);
    double in_day = unix_seconds - day_floor * 86400.0;
    return static_cast<int>(in_day / 60.0);
}

} // namespace recdesk
