#include "recdesk/kpi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "recdesk/errors.hpp"

namespace recdesk::kpi {

using json = nlohmann::ordered_json;

static double pos(double x) { return x > 0.0 ? x : 0.0; }

KpiReport compute_kpis(const std::vector<twin::GridExchange>& series,
                       const scenario::ScenarioSpec& s) {
    if (series.empty()) throw EmptyRun("no settled intervals to evaluate");
    const std::size_t n = s.buildings.size();
    const std::size_t steps = series.size();
    for (std::size_t t = 0; t < steps; ++t) {
        if (series[t].net_kwh.size() != n || series[t].consumption_kwh.size() != n)
            throw ShapeMismatch("exchange row " + std::to_string(t) +
                                " does not match the scenario's building count");
    }
    if (s.tariff.import_price.size() < steps || s.tariff.export_price.size() < steps)
        throw ShapeMismatch("tariff series shorter than the run");

    KpiReport rep;
    rep.buildings.resize(n);
    for (std::size_t i = 0; i < n; ++i) rep.buildings[i].building = s.buildings[i].id;

    for (std::size_t t = 0; t < steps; ++t) {
        const double pi = s.tariff.import_price[t];
        const double pe = s.tariff.export_price[t];
        for (std::size_t i = 0; i < n; ++i) {
            const double net = series[t].net_kwh[i];
            rep.buildings[i].d_kwh += pos(net);
            rep.buildings[i].c_cost += pi * pos(net) - pe * pos(-net);
            rep.buildings[i].consumption_kwh += series[t].consumption_kwh[i];
        }
        const double cm = series[t].community_kwh;
        rep.community.d_kwh += pos(cm);
        rep.community.c_cost += pi * pos(cm) - pe * pos(-cm);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& b = rep.buildings[i];
        // A building that consumes nothing imports nothing; call it fully
        // self-sufficient rather than dividing by zero.
        b.z_self = b.consumption_kwh > 0.0 ? 1.0 - b.d_kwh / b.consumption_kwh : 1.0;
        rep.community.consumption_kwh += b.consumption_kwh;
    }
    rep.community.z_self = rep.community.consumption_kwh > 0.0
                               ? 1.0 - rep.community.d_kwh / rep.community.consumption_kwh
                               : 1.0;

    const int spd = s.grid.steps_per_day();
    double peak_sum = 0.0;
    int days = 0;
    for (std::size_t t0 = 0; t0 < steps; t0 += static_cast<std::size_t>(spd)) {
        double day_max = 0.0;
        const std::size_t end = std::min(steps, t0 + static_cast<std::size_t>(spd));
        for (std::size_t t = t0; t < end; ++t)
            day_max = std::max(day_max, pos(series[t].community_kwh));
        peak_sum += day_max;
        ++days;
    }
    rep.community.p_kwh = peak_sum / days;

    for (std::size_t t = 1; t < steps; ++t)
        rep.community.r_kwh += std::fabs(series[t].community_kwh - series[t - 1].community_kwh);
    return rep;
}

static Entry make_entry(double control, double baseline, bool ratio) {
    Entry e;
    e.raw = control;
    e.baseline = baseline;
    if (ratio) {
        if (baseline > 0.0) e.delta_pct = (control / baseline - 1.0) * 100.0;
    } else {
        e.delta_pct = (control - baseline) * 100.0; // percentage points
    }
    return e;
}

NormalizedReport normalize_report(const KpiReport& control, const KpiReport& baseline) {
    if (control.buildings.size() != baseline.buildings.size())
        throw ShapeMismatch("control and baseline report different building counts");
    NormalizedReport rep;
    rep.buildings.resize(control.buildings.size());
    for (std::size_t i = 0; i < control.buildings.size(); ++i) {
        const auto& c = control.buildings[i];
        const auto& b = baseline.buildings[i];
        if (c.building != b.building)
            throw ShapeMismatch("building order mismatch at index " + std::to_string(i));
        rep.buildings[i].building = c.building;
        rep.buildings[i].d = make_entry(c.d_kwh, b.d_kwh, true);
        rep.buildings[i].c = make_entry(c.c_cost, b.c_cost, true);
        rep.buildings[i].z = make_entry(c.z_self, b.z_self, false);
    }
    rep.c = make_entry(control.community.c_cost, baseline.community.c_cost, true);
    rep.z = make_entry(control.community.z_self, baseline.community.z_self, false);
    rep.p = make_entry(control.community.p_kwh, baseline.community.p_kwh, true);
    rep.r = make_entry(control.community.r_kwh, baseline.community.r_kwh, true);
    return rep;
}

// ------------------------------------------------------------- serialization

static json building_json(const BuildingKpis& b) {
    return {{"building", b.building},
            {"d_kwh", b.d_kwh},
            {"c_cost", b.c_cost},
            {"z_self", b.z_self},
            {"consumption_kwh", b.consumption_kwh}};
}

std::string report_to_json(const KpiReport& raw) {
    json j;
    j["buildings"] = json::array();
    for (const auto& b : raw.buildings) j["buildings"].push_back(building_json(b));
    j["community"] = {{"c_cost", raw.community.c_cost},
                      {"z_self", raw.community.z_self},
                      {"p_kwh", raw.community.p_kwh},
                      {"r_kwh", raw.community.r_kwh},
                      {"d_kwh", raw.community.d_kwh},
                      {"consumption_kwh", raw.community.consumption_kwh}};
    return j.dump(2) + "\n";
}

static json entry_json(const Entry& e) {
    json j = {{"raw", e.raw}, {"baseline", e.baseline}};
    if (e.delta_pct) j["delta_pct"] = *e.delta_pct;
    return j;
}

static Entry entry_from(const json& j) {
    Entry e;
    e.raw = j.at("raw").get<double>();
    e.baseline = j.at("baseline").get<double>();
    if (j.contains("delta_pct")) e.delta_pct = j.at("delta_pct").get<double>();
    return e;
}

std::string normalized_to_json(const NormalizedReport& rep) {
    json j;
    j["buildings"] = json::array();
    for (const auto& b : rep.buildings) {
        j["buildings"].push_back({{"building", b.building},
                                  {"d", entry_json(b.d)},
                                  {"c", entry_json(b.c)},
                                  {"z", entry_json(b.z)}});
    }
    j["community"] = {{"c", entry_json(rep.c)},
                      {"z", entry_json(rep.z)},
                      {"p", entry_json(rep.p)},
                      {"r", entry_json(rep.r)}};
    return j.dump(2) + "\n";
}

NormalizedReport normalized_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("kpi report: ") + e.what());
    }
    NormalizedReport rep;
    for (const auto& bj : j.at("buildings")) {
        NormalizedBuilding b;
        b.building = bj.at("building").get<std::string>();
        b.d = entry_from(bj.at("d"));
        b.c = entry_from(bj.at("c"));
        b.z = entry_from(bj.at("z"));
        rep.buildings.push_back(std::move(b));
    }
    rep.c = entry_from(j.at("community").at("c"));
    rep.z = entry_from(j.at("community").at("z"));
    rep.p = entry_from(j.at("community").at("p"));
    rep.r = entry_from(j.at("community").at("r"));
    return rep;
}

// --------------------------------------------------------------- text table

static std::string fmt_raw(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

static std::string fmt_delta(const Entry& e, bool pp) {
    if (!e.delta_pct) return fmt_raw(e.raw) + " (n/a)";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%+.2f%s", *e.delta_pct, pp ? "pp" : "%");
    return buf;
}

std::string render_table(const NormalizedReport& rep) {
    std::vector<std::string> header = {"KPI"};
    for (const auto& b : rep.buildings) header.push_back(b.building);
    header.push_back("REC");

    const std::size_t cols = header.size();
    std::vector<std::vector<std::string>> rows;
    auto blank_row = [&](const std::string& name) {
        std::vector<std::string> r(cols);
        r[0] = name;
        return r;
    };

    auto d = blank_row("D");
    auto c = blank_row("C");
    auto z = blank_row("Z");
    auto p = blank_row("P");
    auto r = blank_row("R");
    for (std::size_t i = 0; i < rep.buildings.size(); ++i) {
        d[i + 1] = fmt_delta(rep.buildings[i].d, false);
        c[i + 1] = fmt_delta(rep.buildings[i].c, false);
        z[i + 1] = fmt_delta(rep.buildings[i].z, true);
    }
    c[cols - 1] = fmt_delta(rep.c, false);
    z[cols - 1] = fmt_delta(rep.z, true);
    p[cols - 1] = fmt_delta(rep.p, false);
    r[cols - 1] = fmt_delta(rep.r, false);
    rows = {d, c, z, p, r};

    std::vector<std::size_t> width(cols, 0);
    for (std::size_t j = 0; j < cols; ++j) width[j] = header[j].size();
    for (const auto& row : rows)
        for (std::size_t j = 0; j < cols; ++j) width[j] = std::max(width[j], row[j].size());

    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t j = 0; j < cols; ++j) {
            out << (j ? "  " : "");
            out << row[j];
            out << std::string(width[j] - row[j].size(), ' ');
        }
        out << "\n";
    };
    emit(header);
    {
        std::vector<std::string> rule(cols);
        for (std::size_t j = 0; j < cols; ++j) rule[j] = std::string(width[j], '-');
        emit(rule);
    }
    for (const auto& row : rows) emit(row);
    return out.str();
}

} // namespace recdesk::kpi
