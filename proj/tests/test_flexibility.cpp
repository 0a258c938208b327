#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "recdesk/errors.hpp"
#include "recdesk/flexibility.hpp"
#include "recdesk/rng.hpp"

using namespace recdesk;
using namespace recdesk::flexibility;

namespace {

TimeGrid week_grid() {
    TimeGrid g;
    g.start = parse_iso8601("2025-01-06T00:00:00Z"); // Monday
    g.interval_minutes = 15;
    g.steps = 672;
    return g;
}

// Counting formulation of the same statistic: the smallest 1-based rank r
// with r >= n*q.
Interval counting_interval(std::vector<double> values, double c) {
    std::sort(values.begin(), values.end());
    const int n = (int)values.size();
    auto rank = [n](double q) {
        int r = 1;
        while (double(r) < n * q && r < n) ++r;
        return r;
    };
    return {values[rank((1.0 - c) / 2.0) - 1], values[rank((1.0 + c) / 2.0) - 1]};
}

SessionHistory history_of(int n, DayType d = DayType::weekday) {
    SessionHistory h;
    for (int i = 0; i < n; ++i) {
        SessionObs o;
        o.session_id = "s" + std::to_string(i);
        o.arrival_min = 1000.0 + i;
        o.duration_min = 700.0 + i;
        o.energy_kwh = 5.0 + 0.1 * i;
        h.update(d, o);
    }
    return h;
}

} // namespace

TEST_SUITE("flexibility") {

TEST_CASE("nearest-rank interval on twenty ordered samples") {
    std::vector<double> v;
    for (int i = 0; i < 20; ++i) v.push_back(1000.0 + i);
    auto iv = nearest_rank_interval(v, 0.9);
    // ranks ceil(20*0.05)=1 and ceil(20*0.95)=19
    CHECK(iv.lo == 1000.0);
    CHECK(iv.hi == 1018.0);
}

TEST_CASE("nearest-rank matches the counting definition") {
    std::mt19937_64 eng(21);
    for (int trial = 0; trial < 400; ++trial) {
        const int n = 1 + int(uniform01(eng) * 60);
        const double c = uniform_range(eng, 0.05, 0.99);
        std::vector<double> v(n);
        for (auto& x : v) x = uniform_range(eng, -50.0, 50.0);
        auto a = nearest_rank_interval(v, c);
        auto b = counting_interval(v, c);
        CAPTURE(n);
        CAPTURE(c);
        CHECK(a.lo == b.lo);
        CHECK(a.hi == b.hi);
        CHECK(a.lo <= a.hi);
        // Both endpoints are actual samples.
        CHECK(std::count(v.begin(), v.end(), a.lo) > 0);
        CHECK(std::count(v.begin(), v.end(), a.hi) > 0);
    }
}

TEST_CASE("interval widens with confidence") {
    std::mt19937_64 eng(22);
    std::vector<double> v(37);
    for (auto& x : v) x = uniform_range(eng, 0.0, 100.0);
    double prev_lo = 1e300, prev_hi = -1e300;
    for (double c : {0.5, 0.7, 0.9, 0.99}) {
        auto iv = nearest_rank_interval(v, c);
        CHECK(iv.lo <= prev_lo);
        CHECK(iv.hi >= prev_hi);
        prev_lo = iv.lo;
        prev_hi = iv.hi;
    }
}

TEST_CASE("identical samples give a degenerate interval") {
    std::vector<double> v(15, 42.5);
    auto iv = nearest_rank_interval(v, 0.9);
    CHECK(iv.lo == 42.5);
    CHECK(iv.hi == 42.5);
    CHECK_THROWS_AS(nearest_rank_interval({}, 0.9), ValidationError);
}

TEST_CASE("coverage stays near the requested confidence") {
    std::mt19937_64 eng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 50 + int(uniform01(eng) * 200);
        const double c = uniform_range(eng, 0.5, 0.95);
        std::vector<double> v(n);
        for (auto& x : v) x = normal01(eng);
        auto iv = nearest_rank_interval(v, c);
        int inside = 0;
        for (double x : v)
            if (x >= iv.lo && x <= iv.hi) ++inside;
        CHECK(double(inside) / n >= c - 0.05);
    }
}

TEST_CASE("estimation with enough history uses the order statistics") {
    auto h = history_of(20);
    scenario::FlexDefaults defaults;
    auto est = estimate_flexibility(h, DayType::weekday, 0.9, 10, defaults, 40.0);
    CHECK(est.basis == Basis::estimated);
    CHECK(est.sample_count == 20);
    CHECK(est.arrival_min.lo == 1000.0);
    CHECK(est.arrival_min.hi == 1018.0);
    CHECK(est.duration_min.lo == 700.0);
    CHECK(est.duration_min.hi == 718.0);
}

TEST_CASE("thin history falls back to the hardest observed session") {
    SessionHistory h;
    h.update(DayType::weekday, {"a", 1100.0, 600.0, 8.0});
    h.update(DayType::weekday, {"b", 1040.0, 720.0, 6.0});
    scenario::FlexDefaults defaults;
    auto est = estimate_flexibility(h, DayType::weekday, 0.9, 10, defaults, 40.0);
    CHECK(est.basis == Basis::pessimistic_default);
    CHECK(est.sample_count == 2);
    CHECK(est.arrival_min.lo == 1040.0); // earliest arrival seen
    CHECK(est.arrival_min.hi == 1040.0);
    CHECK(est.duration_min.lo == 720.0); // longest stay seen
    CHECK(est.energy_kwh.hi == 8.0);     // biggest demand seen
}

TEST_CASE("empty history falls back to the configured defaults") {
    SessionHistory h;
    scenario::FlexDefaults defaults; // 18:00 arrival, 14 h, full charge
    auto est = estimate_flexibility(h, DayType::weekend, 0.9, 10, defaults, 40.0);
    CHECK(est.basis == Basis::pessimistic_default);
    CHECK(est.sample_count == 0);
    CHECK(est.arrival_min.lo == 1080.0);
    CHECK(est.duration_min.lo == 840.0);
    CHECK(est.energy_kwh.hi == 40.0); // assume a full battery is wanted

    defaults.energy_kwh = 12.0;
    est = estimate_flexibility(h, DayType::weekend, 0.9, 10, defaults, 40.0);
    CHECK(est.energy_kwh.hi == 12.0);
}

TEST_CASE("histories keyed by day type stay separate") {
    SessionHistory h;
    h.update(DayType::weekday, {"a", 1100.0, 600.0, 8.0});
    h.update(DayType::weekend, {"b", 900.0, 300.0, 4.0});
    CHECK(h.count(DayType::weekday) == 1);
    CHECK(h.count(DayType::weekend) == 1);
    CHECK(h.count(DayType::holiday) == 0);
    CHECK(h.entries(DayType::weekday)[0].session_id == "a");
}

TEST_CASE("replayed sessions do not double-count") {
    SessionHistory h;
    h.update(DayType::weekday, {"a", 1100.0, 600.0, 8.0});
    h.update(DayType::weekday, {"a", 1100.0, 600.0, 8.0});
    h.update(DayType::weekday, {"a", 999.0, 1.0, 1.0}); // same id, new payload
    CHECK(h.count(DayType::weekday) == 1);
    CHECK(h.entries(DayType::weekday)[0].arrival_min == 1100.0);
}

TEST_CASE("day typing distinguishes weekdays, weekends and holidays") {
    auto g = week_grid();
    std::vector<std::string> holidays = {"2025-01-08"};
    CHECK(day_type_for(g, 0, holidays) == DayType::weekday);       // Monday
    CHECK(day_type_for(g, 5 * 96, holidays) == DayType::weekend);  // Saturday
    CHECK(day_type_for(g, 6 * 96 + 95, holidays) == DayType::weekend);
    CHECK(day_type_for(g, 2 * 96, holidays) == DayType::holiday);  // the 8th
    CHECK(day_type_for(g, 2 * 96, {}) == DayType::weekday);
}

TEST_CASE("estimates resolve into session parameters") {
    auto g = week_grid();
    FlexEstimate est;
    est.basis = Basis::estimated;
    est.duration_min = {600.0, 700.0};
    est.energy_kwh = {10.0, 16.0};
    auto p = resolve_preferences(est, std::nullopt, g, 72, 0.3, 40.0);
    CHECK(p.basis == Basis::estimated);
    CHECK(p.departure_step == 72 + 40); // floor(600 / 15)
    CHECK(p.target_soc == doctest::Approx(0.3 + 16.0 / 40.0).epsilon(1e-12));

    SUBCASE("departure never leaves the grid") {
        auto q = resolve_preferences(est, std::nullopt, g, 660, 0.3, 40.0);
        CHECK(q.departure_step == 672);
    }
    SUBCASE("target caps at a full battery") {
        auto q = resolve_preferences(est, std::nullopt, g, 72, 0.9, 40.0);
        CHECK(q.target_soc == 1.0);
    }
    SUBCASE("a vanishing duration still books one interval") {
        est.duration_min = {3.0, 3.0};
        auto q = resolve_preferences(est, std::nullopt, g, 72, 0.3, 40.0);
        CHECK(q.departure_step == 73);
    }
}

TEST_CASE("declared preferences override the estimate field-wise") {
    auto g = week_grid();
    FlexEstimate est;
    est.basis = Basis::estimated;
    est.duration_min = {600.0, 700.0};
    est.energy_kwh = {10.0, 16.0};

    // Arrival at 18:00 on day 0 -> step 72.
    UserPreference pref;
    pref.departure_min = 480.0; // 08:00, i.e. the next morning
    auto p = resolve_preferences(est, pref, g, 72, 0.3, 40.0);
    CHECK(p.basis == Basis::user_override);
    CHECK(p.departure_step == 72 + 56); // 14 h ahead
    // Unstated target falls through to the estimate.
    CHECK(p.target_soc == doctest::Approx(0.7).epsilon(1e-12));

    UserPreference both;
    both.departure_min = 480.0;
    both.target_soc = 1.4;
    auto q = resolve_preferences(est, both, g, 72, 0.3, 40.0);
    CHECK(q.target_soc == 1.0); // clamped
    CHECK(q.basis == Basis::user_override);

    // An empty preference object changes nothing.
    auto r = resolve_preferences(est, UserPreference{}, g, 72, 0.3, 40.0);
    CHECK(r.basis == Basis::estimated);
    CHECK(r.departure_step == 72 + 40);
}

} // TEST_SUITE
