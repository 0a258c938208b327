#include <doctest.h>

#include "recdesk/errors.hpp"
#include "recdesk/timeutil.hpp"

using namespace recdesk;

TEST_SUITE("timeutil") {

TEST_CASE("iso8601 parse against a known epoch value") {
    // 2025-01-06 is five days after 2025-01-01 (epoch 1735689600).
    CHECK(parse_iso8601("2025-01-06T00:00:00Z") == 1736121600.0);
    CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0.0);
    CHECK(parse_iso8601("2025-01-06T00:00:00.500Z") == doctest::Approx(1736121600.5));
    CHECK(parse_iso8601("2025-01-06T18:45:30Z") ==
          doctest::Approx(1736121600.0 + 18 * 3600 + 45 * 60 + 30));
}

TEST_CASE("format/parse round trip") {
    for (double t : {0.0, 1736121600.0, 951827696.0, 4102444799.0}) {
        CHECK(parse_iso8601(format_iso8601(t)) == t);
    }
    CHECK(format_iso8601(1736121600.0) == "2025-01-06T00:00:00Z");
}

TEST_CASE("malformed timestamps are rejected") {
    CHECK_THROWS_AS(parse_iso8601("not a date"), ParseError);
    CHECK_THROWS_AS(parse_iso8601("2025-13-01T00:00:00Z"), ParseError);
    CHECK_THROWS_AS(parse_iso8601("2025-01-06 00:00:00"), ParseError);
    CHECK_THROWS_AS(parse_iso8601(""), ParseError);
}

TEST_CASE("civil date conversions, including leap years") {
    CHECK(days_from_civil(1970, 1, 1) == 0);
    CHECK(days_from_civil(2024, 2, 29) - days_from_civil(2024, 2, 28) == 1);
    CHECK(days_from_civil(2024, 3, 1) - days_from_civil(2024, 2, 28) == 2);
    CHECK(days_from_civil(2025, 3, 1) - days_from_civil(2025, 2, 28) == 1);
    for (std::int64_t z : {0LL, 20094LL, -719162LL, 11017LL}) {
        int y;
        unsigned m, d;
        civil_from_days(z, y, m, d);
        CHECK(days_from_civil(y, m, d) == z);
    }
}

TEST_CASE("weekday and minutes-of-day") {
    const double monday = parse_iso8601("2025-01-06T00:00:00Z");
    CHECK(day_of_week(monday) == 0);
    CHECK(day_of_week(monday + 5 * 86400.0) == 5); // Saturday
    CHECK(day_of_week(monday + 6 * 86400.0) == 6); // Sunday
    CHECK(minutes_of_day(parse_iso8601("2025-01-06T18:45:00Z")) == 1125);
    CHECK(minutes_of_day(monday) == 0);
}

TEST_CASE("grid derived quantities") {
    TimeGrid g{parse_iso8601("2025-01-06T00:00:00Z"), 15, 2880};
    CHECK(g.steps_per_day() == 96);
    CHECK(g.steps_per_week() == 672);
    CHECK(g.interval_hours() == 0.25);
    CHECK(g.step_time(96) == g.start + 86400.0);
    CHECK(g.step_day_of_week(0) == 0);
    CHECK(g.step_day_of_week(96) == 1);
    CHECK(g.step_minutes_of_day(75) == 75 * 15 % 1440);
    CHECK(g.hour_of_week_slot(0) == 0);
    CHECK(g.hour_of_week_slot(96) == 96);
    CHECK(g.hour_of_week_slot(671) == 671);
    // One week later the slot wraps around.
    CHECK(g.hour_of_week_slot(672) == 0);
}

} // TEST_SUITE
