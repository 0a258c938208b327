#include "recdesk/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "recdesk/errors.hpp"

namespace recdesk::telemetry {

const char* metric_name(Metric m) {
    switch (m) {
    case Metric::load_kwh: return "load_kwh";
    case Metric::pv_kwh: return "pv_kwh";
    case Metric::battery_soc: return "battery_soc";
    case Metric::ev_soc: return "ev_soc";
    case Metric::ev_power_kw: return "ev_power_kw";
    case Metric::price: return "price";
    }
    return "?";
}

std::optional<Metric> metric_from_name(const std::string& name) {
    for (Metric m : {Metric::load_kwh, Metric::pv_kwh, Metric::battery_soc, Metric::ev_soc,
                     Metric::ev_power_kw, Metric::price})
        if (name == metric_name(m)) return m;
    return std::nullopt;
}

const char* flag_name(QualityFlag f) {
    switch (f) {
    case QualityFlag::measured: return "measured";
    case QualityFlag::carried_forward: return "carried_forward";
    case QualityFlag::pattern_imputed: return "pattern_imputed";
    case QualityFlag::default_imputed: return "default_imputed";
    case QualityFlag::rejected_anomaly: return "rejected_anomaly";
    }
    return "?";
}

static bool ev_connected_at(const scenario::ScenarioSpec& s, int building, int step) {
    const auto* sched = s.sessions_for(s.buildings[building].id);
    if (!sched) return false;
    for (const auto& e : *sched)
        if (e.arrival_step <= step && step < e.departure_step) return true;
    return false;
}

std::vector<Metric> expected_metrics(const scenario::ScenarioSpec& s, int building, int step) {
    std::vector<Metric> out{Metric::load_kwh};
    const auto& b = s.buildings[building];
    if (b.pv) out.push_back(Metric::pv_kwh);
    if (b.battery) out.push_back(Metric::battery_soc);
    if (b.charger && ev_connected_at(s, building, step)) {
        out.push_back(Metric::ev_soc);
        out.push_back(Metric::ev_power_kw);
    }
    return out;
}

int bucket_index(const TimeGrid& grid, double ts) {
    const double dt = grid.interval_seconds();
    const double rel = ts - grid.start;
    int k = (int)std::floor(rel / dt);
    const double offset = rel - k * dt;
    // Meters stamp at interval end; a slightly-late clock should not push the
    // sample into the next interval.
    if (offset <= 30.0 && k >= 1) --k;
    return k;
}

static bool is_state_metric(Metric m) {
    return m == Metric::battery_soc || m == Metric::ev_soc;
}

AlignResult align_to_grid(const std::vector<RawReading>& readings,
                          const scenario::ScenarioSpec& s) {
    std::map<std::string, int> by_id;
    for (std::size_t b = 0; b < s.buildings.size(); ++b) by_id[s.buildings[b].id] = (int)b;

    struct Sample {
        double ts;
        std::size_t seq;
        double value;
    };
    // (step, building, metric) -> samples
    std::map<int, std::vector<std::map<Metric, std::vector<Sample>>>> buckets;

    AlignResult res;
    for (std::size_t i = 0; i < readings.size(); ++i) {
        const auto& r = readings[i];
        auto it = by_id.find(r.source_id);
        if (it == by_id.end()) {
            ++res.unknown_source;
            continue;
        }
        const int k = bucket_index(s.grid, r.ts);
        if (k < 0 || k >= s.grid.steps) {
            ++res.out_of_range;
            continue;
        }
        auto& frame = buckets[k];
        if (frame.empty()) frame.resize(s.buildings.size());
        frame[it->second][r.metric].push_back({r.ts, i, r.value});
    }

    res.frames.resize(s.grid.steps);
    for (int k = 0; k < s.grid.steps; ++k) {
        auto& f = res.frames[k];
        f.step = k;
        f.values.resize(s.buildings.size());
        f.completeness.assign(s.buildings.size(), 0.0);
        auto it = buckets.find(k);
        if (it == buckets.end()) continue;
        for (std::size_t b = 0; b < s.buildings.size(); ++b) {
            for (auto& [metric, samples] : it->second[b]) {
                if (samples.empty()) continue;
                double v;
                if (is_state_metric(metric)) {
                    auto last = std::max_element(samples.begin(), samples.end(),
                                                 [](const Sample& a, const Sample& z) {
                                                     return a.ts != z.ts ? a.ts < z.ts
                                                                         : a.seq < z.seq;
                                                 });
                    v = last->value;
                } else {
                    std::sort(samples.begin(), samples.end(),
                              [](const Sample& a, const Sample& z) {
                                  return a.ts != z.ts ? a.ts < z.ts : a.seq < z.seq;
                              });
                    double sum = 0.0;
                    for (const auto& smp : samples) sum += smp.value;
                    v = sum / (double)samples.size();
                }
                f.values[b][metric] = {v, QualityFlag::measured};
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

double mad(std::vector<double> v) {
    if (v.empty()) return 0.0;
    auto median = [](std::vector<double>& x) {
        std::sort(x.begin(), x.end());
        const std::size_t n = x.size();
        return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
    };
    const double med = median(v);
    for (auto& x : v) x = std::fabs(x - med);
    return median(v);
}

AnomalyFilter::AnomalyFilter(const scenario::ScenarioSpec& s)
    : scn_(&s), window_(s.grid.steps_per_day()), state_(s.buildings.size()),
      scale_(s.buildings.size()) {
    const double dt_h = s.grid.interval_hours();
    for (std::size_t b = 0; b < s.buildings.size(); ++b) {
        const auto& bs = s.buildings[b];
        double max_load = 0.0;
        for (double v : bs.load_profile) max_load = std::max(max_load, v);
        scale_[b][Metric::load_kwh] = std::max(max_load, 1e-6);
        if (bs.pv) scale_[b][Metric::pv_kwh] = std::max(bs.pv->peak_kw * dt_h, 1e-6);
        scale_[b][Metric::battery_soc] = 1.0;
        scale_[b][Metric::ev_soc] = 1.0;
        if (bs.charger) scale_[b][Metric::ev_power_kw] = bs.charger->rated_kw;
    }
}

void AnomalyFilter::filter(AlignedFrame& frame) {
    const double dt_h = scn_->grid.interval_hours();
    for (std::size_t b = 0; b < frame.values.size(); ++b) {
        const auto& bs = scn_->buildings[b];
        for (auto& [metric, av] : frame.values[b]) {
            if (av.flag != QualityFlag::measured) continue;
            const double v = av.value;
            bool reject = !std::isfinite(v);

            if (!reject) switch (metric) {
                case Metric::load_kwh: reject = v < 0.0; break;
                case Metric::pv_kwh:
                    reject = v < 0.0 ||
                             (bs.pv && v > bs.pv->peak_kw * dt_h * 1.05);
                    break;
                case Metric::battery_soc:
                case Metric::ev_soc: reject = v < 0.0 || v > 1.0; break;
                case Metric::ev_power_kw:
                    reject = bs.charger && std::fabs(v) > bs.charger->rated_kw * 1.05;
                    break;
                case Metric::price: reject = v < 0.0; break;
                }

            auto& st = state_[b][metric];
            if (!reject && st.has_accepted && (int)st.deltas.size() >= 8) {
                std::vector<double> window(st.deltas.begin(), st.deltas.end());
                const double scale = scale_[b].count(metric) ? scale_[b][metric] : 1.0;
                const double threshold = std::max(6.0 * mad(std::move(window)), 0.2 * scale);
                if (std::fabs(v - st.last_accepted) > threshold) reject = true;
            }

            // Raw deltas feed the dispersion window either way, so one spike
            // cannot poison the baseline yet the window tracks real variance.
            if (std::isfinite(v)) {
                if (st.has_last_raw) {
                    st.deltas.push_back(v - st.last_raw);
                    while ((int)st.deltas.size() > window_) st.deltas.pop_front();
                }
                st.last_raw = v;
                st.has_last_raw = true;
            }

            if (reject) {
                av.flag = QualityFlag::rejected_anomaly;
                ++rejected_;
            } else {
                st.last_accepted = v;
                st.has_accepted = true;
            }
        }
    }
}

// ---------------------------------------------------------------------------

Imputer::Imputer(const scenario::ScenarioSpec& s) : scn_(&s), state_(s.buildings.size()) {
    for (std::size_t b = 0; b < s.buildings.size(); ++b) {
        const auto& bs = s.buildings[b];
        auto add = [&](Metric m, std::vector<double> profile) {
            state_[b].emplace(m, SeriesState{forecast::ForecastModel(s.grid, std::move(profile)),
                                             0, false, 0.0});
        };
        add(Metric::load_kwh, bs.load_profile);
        if (bs.pv) add(Metric::pv_kwh, bs.pv->profile);
        if (bs.battery) add(Metric::battery_soc, {bs.battery->soc_init});
        if (bs.charger) {
            add(Metric::ev_soc, {0.0});
            add(Metric::ev_power_kw, {0.0});
        }
    }
}

double Imputer::default_value(int building, Metric m, int step) const {
    const auto& bs = scn_->buildings[building];
    switch (m) {
    case Metric::load_kwh: return bs.load_profile[step];
    case Metric::pv_kwh: return bs.pv ? bs.pv->profile[step] : 0.0;
    case Metric::battery_soc: return bs.battery ? bs.battery->soc_init : 0.0;
    default: return 0.0;
    }
}

void Imputer::impute(AlignedFrame& frame) {
    for (std::size_t b = 0; b < frame.values.size(); ++b) {
        const auto expected = expected_metrics(*scn_, (int)b, frame.step);
        int measured = 0;
        for (Metric m : expected) {
            auto it = frame.values[b].find(m);
            const bool present = it != frame.values[b].end() &&
                                 it->second.flag == QualityFlag::measured;
            auto& st = state_[b].at(m);
            if (present) {
                ++measured;
                st.gap_run = 0;
                st.has_last = true;
                st.last_value = it->second.value;
                st.model.observe(frame.step, it->second.value);
                continue;
            }
            ++st.gap_run;
            AlignedValue filled;
            if (st.gap_run <= 4 && st.has_last) {
                filled = {st.last_value, QualityFlag::carried_forward};
            } else if (auto mean = st.model.slot_mean(frame.step)) {
                filled = {*mean, QualityFlag::pattern_imputed};
            } else {
                filled = {default_value((int)b, m, frame.step), QualityFlag::default_imputed};
            }
            frame.values[b][m] = filled;
        }
        frame.completeness[b] =
            expected.empty() ? 1.0 : (double)measured / (double)expected.size();
    }
}

const forecast::ForecastModel& Imputer::model(int building, Metric m) const {
    return state_[building].at(m).model;
}

// ---------------------------------------------------------------------------

std::vector<double> encode_observation(const TimeGrid& grid, const ObsContext& c) {
    constexpr double kTau = 6.283185307179586476925286766559;
    std::vector<double> o(kObsDim, 0.0);
    const double mod = grid.step_minutes_of_day(c.step);
    const double dow = grid.step_day_of_week(c.step);
    o[0] = std::sin(kTau * mod / 1440.0);
    o[1] = std::cos(kTau * mod / 1440.0);
    o[2] = std::sin(kTau * dow / 7.0);
    o[3] = std::cos(kTau * dow / 7.0);
    o[4] = c.price_now;
    o[5] = c.price_next;
    o[6] = c.pv_forecast_kwh;
    o[7] = c.load_forecast_kwh;
    o[8] = c.battery_soc;
    if (c.ev_connected) {
        o[9] = 1.0;
        o[10] = c.ev_soc;
        o[11] = std::max(0.0, c.ev_target_soc - c.ev_soc) * c.ev_capacity_kwh;
        o[12] = (double)c.intervals_to_departure;
    }
    o[13] = c.completeness;
    for (double& x : o)
        if (!std::isfinite(x)) x = 0.0; // encoders must never emit NaN
    return o;
}

// ---------------------------------------------------------------------------

std::vector<RawReading> load_readings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open readings csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty readings csv: " + path);
    std::vector<RawReading> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> cols;
        std::size_t pos = 0;
        for (int i = 0; i < 3; ++i) {
            auto comma = line.find(',', pos);
            if (comma == std::string::npos)
                throw ParseError(path + ": malformed row '" + line + "'");
            cols[i] = line.substr(pos, comma - pos);
            pos = comma + 1;
        }
        cols[3] = line.substr(pos);
        auto metric = metric_from_name(cols[2]);
        if (!metric) throw ParseError(path + ": unknown metric '" + cols[2] + "'");
        RawReading r;
        r.ts = parse_iso8601(cols[0]);
        r.source_id = cols[1];
        r.metric = *metric;
        try {
            r.value = std::stod(cols[3]);
        } catch (const std::exception&) {
            throw ParseError(path + ": bad value '" + cols[3] + "'");
        }
        out.push_back(std::move(r));
    }
    return out;
}

void save_readings_csv(const std::vector<RawReading>& readings, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StorageError("cannot write readings csv: " + path);
    out << "timestamp,source_id,metric,value\n";
    char buf[64];
    for (const auto& r : readings) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        out << format_iso8601(r.ts) << ',' << r.source_id << ',' << metric_name(r.metric) << ','
            << buf << '\n';
    }
    if (!out) throw StorageError("short write: " + path);
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(const scenario::ScenarioSpec& s)
    : scn_(&s), filter_(s), imputer_(s) {
    frames_.resize(s.grid.steps);
}

const AlignedFrame& Pipeline::ingest(std::vector<RawReading> readings, int step) {
    if (step != last_step_ + 1)
        throw ValidationError("pipeline steps must be ingested in order");

    std::map<std::string, int> by_id;
    for (std::size_t b = 0; b < scn_->buildings.size(); ++b) by_id[scn_->buildings[b].id] = (int)b;

    AlignedFrame f;
    f.step = step;
    f.values.resize(scn_->buildings.size());
    f.completeness.assign(scn_->buildings.size(), 0.0);

    struct Sample {
        double ts;
        std::size_t seq;
        double value;
    };
    std::vector<std::map<Metric, std::vector<Sample>>> samples(scn_->buildings.size());
    for (std::size_t i = 0; i < readings.size(); ++i) {
        const auto& r = readings[i];
        auto it = by_id.find(r.source_id);
        if (it == by_id.end()) {
            ++unknown_source_;
            continue;
        }
        if (bucket_index(scn_->grid, r.ts) != step) continue; // stragglers: not this frame
        samples[it->second][r.metric].push_back({r.ts, i, r.value});
    }
    for (std::size_t b = 0; b < samples.size(); ++b) {
        for (auto& [metric, smp] : samples[b]) {
            if (smp.empty()) continue;
            std::sort(smp.begin(), smp.end(), [](const Sample& a, const Sample& z) {
                return a.ts != z.ts ? a.ts < z.ts : a.seq < z.seq;
            });
            double v;
            if (is_state_metric(metric)) {
                v = smp.back().value;
            } else {
                double sum = 0.0;
                for (const auto& x : smp) sum += x.value;
                v = sum / (double)smp.size();
            }
            f.values[b][metric] = {v, QualityFlag::measured};
        }
    }

    filter_.filter(f);
    imputer_.impute(f);
    frames_[step] = std::move(f);
    last_step_ = step;
    return frames_[step];
}

bool Pipeline::has_frame(int step) const {
    return step >= 0 && step <= last_step_;
}

const AlignedFrame& Pipeline::frame(int step) const {
    if (!has_frame(step)) throw ValidationError("no frame for step " + std::to_string(step));
    return frames_[step];
}

forecast::Forecast Pipeline::predict(int building, Metric m, int step) const {
    return imputer_.model(building, m).predict(step);
}

} // namespace recdesk::telemetry
