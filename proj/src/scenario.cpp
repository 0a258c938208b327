#include "recdesk/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "recdesk/errors.hpp"
#include "recdesk/rng.hpp"

namespace recdesk::scenario {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::vector<EvSessionSpec>* ScenarioSpec::sessions_for(const std::string& building_id) const {
    for (const auto& bs : sessions)
        if (bs.building == building_id) return &bs.sessions;
    return nullptr;
}

// ---------------------------------------------------------------------------
// series I/O

static std::vector<double> read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open series csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty series csv: " + path);
    std::vector<double> out;
    int expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError(path + ": malformed row '" + line + "'");
        int step = 0;
        double value = 0.0;
        try {
            step = std::stoi(line.substr(0, comma));
            value = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ParseError(path + ": malformed row '" + line + "'");
        }
        if (step != expect)
            throw ParseError(path + ": expected step " + std::to_string(expect) +
                             ", got " + std::to_string(step));
        out.push_back(value);
        ++expect;
    }
    return out;
}

static std::vector<double> parse_series(const json& j, const std::string& base_dir,
                                        const std::string& path) {
    if (j.is_array()) {
        std::vector<double> out;
        out.reserve(j.size());
        for (const auto& v : j) {
            if (!v.is_number()) throw ParseError(path + ": non-numeric series element");
            out.push_back(v.get<double>());
        }
        return out;
    }
    if (j.is_object() && j.contains("csv")) {
        fs::path p = j.at("csv").get<std::string>();
        if (p.is_relative()) p = fs::path(base_dir) / p;
        return read_series_csv(p.string());
    }
    throw ParseError(path + ": series must be an array or {\"csv\": path}");
}

// ---------------------------------------------------------------------------
// JSON <-> spec

static json series_json(const std::vector<double>& v) {
    return json(v);
}

static ScenarioSpec from_json(const json& j, const std::string& base_dir) {
    ScenarioSpec s;
    try {
        const auto& g = j.at("grid");
        s.grid.start = parse_iso8601(g.at("start").get<std::string>());
        s.grid.interval_minutes = g.at("interval_minutes").get<int>();
        s.grid.steps = g.at("steps").get<int>();

        for (const auto& bj : j.at("buildings")) {
            BuildingSpec b;
            b.id = bj.at("id").get<std::string>();
            b.load_profile = parse_series(bj.at("load_profile"), base_dir,
                                          "buildings." + b.id + ".load_profile");
            if (bj.contains("pv") && !bj.at("pv").is_null()) {
                PvSpec pv;
                pv.peak_kw = bj.at("pv").at("peak_kw").get<double>();
                pv.profile = parse_series(bj.at("pv").at("profile"), base_dir,
                                          "buildings." + b.id + ".pv.profile");
                b.pv = pv;
            }
            if (bj.contains("battery") && !bj.at("battery").is_null()) {
                const auto& q = bj.at("battery");
                BatterySpec bat;
                bat.capacity_kwh = q.at("capacity_kwh").get<double>();
                bat.rated_kw = q.at("rated_kw").get<double>();
                bat.soc_min = q.at("soc_min").get<double>();
                bat.soc_max = q.at("soc_max").get<double>();
                bat.eta_charge = q.at("eta_charge").get<double>();
                bat.eta_discharge = q.at("eta_discharge").get<double>();
                bat.soc_init = q.at("soc_init").get<double>();
                b.battery = bat;
            }
            if (bj.contains("charger") && !bj.at("charger").is_null()) {
                const auto& q = bj.at("charger");
                ChargerSpec ch;
                ch.rated_kw = q.at("rated_kw").get<double>();
                ch.v2g_enabled = q.value("v2g_enabled", false);
                ch.eta_charge = q.at("eta_charge").get<double>();
                ch.eta_discharge = q.at("eta_discharge").get<double>();
                b.charger = ch;
            }
            s.buildings.push_back(std::move(b));
        }

        if (j.contains("sessions")) {
            for (const auto& [bid, arr] : j.at("sessions").items()) {
                BuildingSessions bs;
                bs.building = bid;
                for (const auto& sj : arr) {
                    EvSessionSpec e;
                    e.arrival_step = sj.at("arrival_step").get<int>();
                    e.departure_step = sj.at("departure_step").get<int>();
                    e.soc_arrival = sj.at("soc_arrival").get<double>();
                    e.soc_target = sj.at("soc_target").get<double>();
                    e.ev_capacity_kwh = sj.at("ev_capacity_kwh").get<double>();
                    bs.sessions.push_back(e);
                }
                s.sessions.push_back(std::move(bs));
            }
        }

        const auto& t = j.at("tariff");
        s.tariff.import_price = parse_series(t.at("import_price"), base_dir, "tariff.import_price");
        s.tariff.export_price = parse_series(t.at("export_price"), base_dir, "tariff.export_price");

        s.seed = j.at("seed").get<std::uint64_t>();

        if (j.contains("holidays"))
            for (const auto& h : j.at("holidays")) s.holidays.push_back(h.get<std::string>());

        if (j.contains("flex_defaults")) {
            const auto& f = j.at("flex_defaults");
            s.flex_defaults.arrival_min = f.at("arrival_min").get<int>();
            s.flex_defaults.duration_min = f.at("duration_min").get<int>();
            if (f.contains("energy_kwh") && !f.at("energy_kwh").is_null())
                s.flex_defaults.energy_kwh = f.at("energy_kwh").get<double>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario document: ") + e.what());
    }
    return s;
}

static json to_json(const ScenarioSpec& s) {
    json j;
    j["grid"] = {{"start", format_iso8601(s.grid.start)},
                 {"interval_minutes", s.grid.interval_minutes},
                 {"steps", s.grid.steps}};
    j["buildings"] = json::array();
    for (const auto& b : s.buildings) {
        json bj;
        bj["id"] = b.id;
        bj["load_profile"] = series_json(b.load_profile);
        if (b.pv)
            bj["pv"] = {{"peak_kw", b.pv->peak_kw}, {"profile", series_json(b.pv->profile)}};
        if (b.battery) {
            const auto& q = *b.battery;
            bj["battery"] = {{"capacity_kwh", q.capacity_kwh}, {"rated_kw", q.rated_kw},
                             {"soc_min", q.soc_min},           {"soc_max", q.soc_max},
                             {"eta_charge", q.eta_charge},     {"eta_discharge", q.eta_discharge},
                             {"soc_init", q.soc_init}};
        }
        if (b.charger) {
            const auto& q = *b.charger;
            bj["charger"] = {{"rated_kw", q.rated_kw},
                             {"v2g_enabled", q.v2g_enabled},
                             {"eta_charge", q.eta_charge},
                             {"eta_discharge", q.eta_discharge}};
        }
        j["buildings"].push_back(std::move(bj));
    }
    json sess = json::object();
    for (const auto& bs : s.sessions) {
        json arr = json::array();
        for (const auto& e : bs.sessions)
            arr.push_back({{"arrival_step", e.arrival_step},
                           {"departure_step", e.departure_step},
                           {"soc_arrival", e.soc_arrival},
                           {"soc_target", e.soc_target},
                           {"ev_capacity_kwh", e.ev_capacity_kwh}});
        sess[bs.building] = std::move(arr);
    }
    j["sessions"] = std::move(sess);
    j["tariff"] = {{"import_price", series_json(s.tariff.import_price)},
                   {"export_price", series_json(s.tariff.export_price)}};
    j["seed"] = s.seed;
    j["holidays"] = s.holidays;
    j["flex_defaults"] = {{"arrival_min", s.flex_defaults.arrival_min},
                          {"duration_min", s.flex_defaults.duration_min},
                          {"energy_kwh", s.flex_defaults.energy_kwh
                                             ? json(*s.flex_defaults.energy_kwh)
                                             : json(nullptr)}};
    return j;
}

// ---------------------------------------------------------------------------
// validation

static void check_series(std::vector<Violation>& out, const std::string& path,
                         const std::vector<double>& v, int steps, bool nonneg) {
    if ((int)v.size() != steps) {
        out.push_back({path, "length " + std::to_string(v.size()) + " != grid.steps " +
                                 std::to_string(steps)});
        return;
    }
    if (nonneg)
        for (int i = 0; i < (int)v.size(); ++i)
            if (!(v[i] >= 0.0)) {
                out.push_back({path + "[" + std::to_string(i) + "]", "negative or NaN value"});
                break;
            }
}

std::vector<Violation> validate_scenario(const ScenarioSpec& s) {
    std::vector<Violation> out;
    const int steps = s.grid.steps;

    if (s.grid.interval_minutes <= 0 || 1440 % s.grid.interval_minutes != 0)
        out.push_back({"grid.interval_minutes", "must be positive and divide 1440"});
    if (steps < 1) out.push_back({"grid.steps", "must be >= 1"});
    if (s.buildings.empty()) out.push_back({"buildings", "at least one building required"});

    for (std::size_t i = 0; i < s.buildings.size(); ++i)
        for (std::size_t k = i + 1; k < s.buildings.size(); ++k)
            if (s.buildings[i].id == s.buildings[k].id)
                out.push_back({"buildings[" + std::to_string(k) + "].id",
                               "duplicate id '" + s.buildings[k].id + "'"});

    const double dt_h = s.grid.interval_minutes / 60.0;
    for (std::size_t i = 0; i < s.buildings.size(); ++i) {
        const auto& b = s.buildings[i];
        const std::string bp = "buildings[" + std::to_string(i) + "]";
        check_series(out, bp + ".load_profile", b.load_profile, steps, true);
        if (b.pv) {
            if (!(b.pv->peak_kw >= 0))
                out.push_back({bp + ".pv.peak_kw", "must be >= 0"});
            check_series(out, bp + ".pv.profile", b.pv->profile, steps, true);
            if ((int)b.pv->profile.size() == steps) {
                const double cap = b.pv->peak_kw * dt_h * (1.0 + 1e-12);
                for (int k = 0; k < steps; ++k)
                    if (b.pv->profile[k] > cap) {
                        out.push_back({bp + ".pv.profile[" + std::to_string(k) + "]",
                                       "exceeds peak_kw over one interval"});
                        break;
                    }
            }
        }
        if (b.battery) {
            const auto& q = *b.battery;
            if (!(q.capacity_kwh > 0)) out.push_back({bp + ".battery.capacity_kwh", "must be > 0"});
            if (!(q.rated_kw > 0)) out.push_back({bp + ".battery.rated_kw", "must be > 0"});
            if (!(0.0 <= q.soc_min && q.soc_min < q.soc_max && q.soc_max <= 1.0))
                out.push_back({bp + ".battery", "requires 0 <= soc_min < soc_max <= 1"});
            if (!(q.eta_charge > 0 && q.eta_charge <= 1))
                out.push_back({bp + ".battery.eta_charge", "must be in (0, 1]"});
            if (!(q.eta_discharge > 0 && q.eta_discharge <= 1))
                out.push_back({bp + ".battery.eta_discharge", "must be in (0, 1]"});
            if (!(q.soc_min <= q.soc_init && q.soc_init <= q.soc_max))
                out.push_back({bp + ".battery.soc_init", "must lie in [soc_min, soc_max]"});
        }
        if (b.charger) {
            const auto& q = *b.charger;
            if (!(q.rated_kw > 0)) out.push_back({bp + ".charger.rated_kw", "must be > 0"});
            if (!(q.eta_charge > 0 && q.eta_charge <= 1))
                out.push_back({bp + ".charger.eta_charge", "must be in (0, 1]"});
            if (!(q.eta_discharge > 0 && q.eta_discharge <= 1))
                out.push_back({bp + ".charger.eta_discharge", "must be in (0, 1]"});
        }
    }

    for (const auto& bs : s.sessions) {
        const std::string sp = "sessions." + bs.building;
        const BuildingSpec* owner = nullptr;
        for (const auto& b : s.buildings)
            if (b.id == bs.building) owner = &b;
        if (!owner) {
            out.push_back({sp, "references unknown building"});
            continue;
        }
        if (!owner->charger && !bs.sessions.empty())
            out.push_back({sp, "building has no charger"});
        for (std::size_t i = 0; i < bs.sessions.size(); ++i) {
            const auto& e = bs.sessions[i];
            const std::string ep = sp + "[" + std::to_string(i) + "]";
            if (!(e.arrival_step >= 0 && e.arrival_step < e.departure_step &&
                  e.departure_step <= steps))
                out.push_back({ep, "requires 0 <= arrival_step < departure_step <= grid.steps"});
            if (!(0.0 <= e.soc_arrival && e.soc_arrival <= e.soc_target && e.soc_target <= 1.0))
                out.push_back({ep, "requires 0 <= soc_arrival <= soc_target <= 1"});
            if (!(e.ev_capacity_kwh > 0)) out.push_back({ep + ".ev_capacity_kwh", "must be > 0"});
            if (i > 0 && bs.sessions[i - 1].departure_step > e.arrival_step)
                out.push_back({ep, "overlaps sessions[" + std::to_string(i - 1) + "]"});
        }
    }

    check_series(out, "tariff.import_price", s.tariff.import_price, steps, true);
    check_series(out, "tariff.export_price", s.tariff.export_price, steps, true);

    for (std::size_t i = 0; i < s.holidays.size(); ++i) {
        const auto& h = s.holidays[i];
        int y, m, d;
        if (std::sscanf(h.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 ||
            d > 31)
            out.push_back({"holidays[" + std::to_string(i) + "]", "not an ISO date"});
    }

    if (!(s.flex_defaults.arrival_min >= 0 && s.flex_defaults.arrival_min < 1440))
        out.push_back({"flex_defaults.arrival_min", "must be in [0, 1440)"});
    if (!(s.flex_defaults.duration_min > 0))
        out.push_back({"flex_defaults.duration_min", "must be > 0"});

    return out;
}

static void throw_if_invalid(const ScenarioSpec& s) {
    auto v = validate_scenario(s);
    if (!v.empty())
        throw ValidationError(v.front().path + ": " + v.front().message +
                              (v.size() > 1 ? " (+" + std::to_string(v.size() - 1) + " more)"
                                            : ""));
}

ScenarioSpec parse_scenario(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario json: ") + e.what());
    }
    ScenarioSpec s = from_json(j, base_dir);
    throw_if_invalid(s);
    return s;
}

ScenarioSpec load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), fs::path(path).parent_path().string());
}

std::string serialize_scenario(const ScenarioSpec& s) {
    return to_json(s).dump(2) + "\n";
}

void save_scenario(const ScenarioSpec& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StorageError("cannot write scenario: " + path);
    out << serialize_scenario(s);
    if (!out) throw StorageError("short write: " + path);
}

// ---------------------------------------------------------------------------
// synthetic generator

namespace {

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// Residential double-peak weekday shape, flatter and later on weekends. kW.
double load_shape_kw(int minutes, bool weekend) {
    if (!weekend) {
        if (minutes < 390) return 0.35;   // night
        if (minutes < 540) return 1.10;   // morning ramp
        if (minutes < 1020) return 0.50;  // workday trough
        if (minutes < 1320) return 2.00;  // evening peak
        return 0.60;
    }
    if (minutes < 480) return 0.40;
    if (minutes < 720) return 1.00;
    if (minutes < 1020) return 0.85;
    if (minutes < 1320) return 1.80;
    return 0.65;
}

double price_shape(int minutes) {
    const int h = minutes / 60;
    if (h < 7) return 0.08;
    if (h < 9) return 0.18;
    if (h < 17) return 0.14;
    if (h < 18) return 0.22;
    if (h < 22) return 0.32;
    return 0.12;
}

} // namespace

ScenarioSpec generate_synthetic(std::uint64_t seed, int buildings, int days) {
    if (buildings < 1) throw ValidationError("generate_synthetic: buildings must be >= 1");
    if (days < 1) throw ValidationError("generate_synthetic: days must be >= 1");

    ScenarioSpec s;
    s.grid.start = parse_iso8601("2025-01-06T00:00:00Z"); // a Monday
    s.grid.interval_minutes = 15;
    s.grid.steps = days * s.grid.steps_per_day();
    s.seed = seed;
    s.flex_defaults = FlexDefaults{};
    // Worst charging need any generated session can have: target 0.85, the
    // arrival SoC floor is 0.45, capacity 40. Planning never aims lower.
    s.flex_defaults.energy_kwh = (0.85 - 0.45) * 40.0;

    const int spd = s.grid.steps_per_day();
    const double dt_h = s.grid.interval_hours();
    const double pv_peaks[3] = {4.5, 3.5, 2.5};

    // Prices: one shared engine so the tariff is independent of building count.
    {
        std::mt19937_64 eng(derive_seed(seed, "tariff"));
        s.tariff.import_price.resize(s.grid.steps);
        s.tariff.export_price.assign(s.grid.steps, 0.0);
        for (int d = 0; d < days; ++d) {
            const double day_mult = clampd(1.0 + 0.08 * normal01(eng), 0.85, 1.15);
            for (int k = 0; k < spd; ++k) {
                const int t = d * spd + k;
                const double wiggle = 0.002 * normal01(eng);
                s.tariff.import_price[t] =
                    clampd(price_shape(s.grid.step_minutes_of_day(t)) * day_mult + wiggle, 0.01,
                           1.0);
            }
        }
    }

    for (int b = 0; b < buildings; ++b) {
        BuildingSpec bs;
        bs.id = "b" + std::to_string(b + 1);

        std::mt19937_64 eng(derive_seed(seed, "load/" + bs.id));
        const double scale = 0.9 + 0.15 * (b % 4);
        bs.load_profile.resize(s.grid.steps);
        for (int t = 0; t < s.grid.steps; ++t) {
            const bool weekend = s.grid.step_day_of_week(t) >= 5;
            const double kw = load_shape_kw(s.grid.step_minutes_of_day(t), weekend) * scale *
                              (1.0 + 0.10 * normal01(eng));
            bs.load_profile[t] = std::max(0.02, kw) * dt_h;
        }

        if (b % 4 != 3) {
            PvSpec pv;
            pv.peak_kw = pv_peaks[b % 3];
            pv.profile.resize(s.grid.steps, 0.0);
            std::mt19937_64 pveng(derive_seed(seed, "pv/" + bs.id));
            double weather = 1.0;
            for (int t = 0; t < s.grid.steps; ++t) {
                const int mod = s.grid.step_minutes_of_day(t);
                if (mod == 0) weather = clampd(0.8 + 0.25 * normal01(pveng), 0.55, 1.0);
                const int rise = 450, set = 1050; // 07:30 .. 17:30
                if (mod >= rise && mod < set) {
                    const double frac = double(mod - rise) / (set - rise);
                    const double bell = std::pow(std::sin(frac * M_PI), 1.35);
                    const double jitter = clampd(1.0 + 0.04 * normal01(pveng), 0.9, 1.1);
                    pv.profile[t] =
                        clampd(pv.peak_kw * bell * weather * jitter, 0.0, pv.peak_kw) * dt_h;
                }
            }
            bs.pv = pv;
        }

        bs.battery = BatterySpec{9.6, 3.3, 0.1, 0.95, 0.95, 0.95, 0.5};
        bs.charger = ChargerSpec{7.4, false, 0.92, 0.92};
        s.buildings.push_back(std::move(bs));
    }

    for (int b = 0; b < buildings; ++b) {
        BuildingSessions bsess;
        bsess.building = s.buildings[b].id;
        std::mt19937_64 eng(derive_seed(seed, "ev/" + bsess.building));
        int prev_departure = 0;
        for (int d = 0; d < days; ++d) {
            EvSessionSpec e;
            const int arr_min = (int)clampd(1080.0 + 45.0 * normal01(eng), 960.0, 1260.0);
            const int dep_min = (int)clampd(480.0 + 30.0 * normal01(eng), 360.0, 600.0);
            e.arrival_step = d * spd + arr_min / s.grid.interval_minutes;
            e.departure_step = (d + 1) * spd + dep_min / s.grid.interval_minutes;
            e.arrival_step = std::max(e.arrival_step, prev_departure);
            e.departure_step = std::min(e.departure_step, s.grid.steps);
            if (e.departure_step <= e.arrival_step) continue;
            e.soc_arrival = clampd(0.62 + 0.08 * normal01(eng), 0.45, 0.78);
            e.soc_target = 0.85;
            e.ev_capacity_kwh = 40.0;
            prev_departure = e.departure_step;
            bsess.sessions.push_back(e);
        }
        s.sessions.push_back(std::move(bsess));
    }

    throw_if_invalid(s);
    return s;
}

} // namespace recdesk::scenario
