#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "recdesk/forecast.hpp"
#include "recdesk/scenario.hpp"
#include "recdesk/timeutil.hpp"

namespace recdesk::telemetry {

enum class Metric { load_kwh, pv_kwh, battery_soc, ev_soc, ev_power_kw, price };

const char* metric_name(Metric m);
std::optional<Metric> metric_from_name(const std::string& name);

struct RawReading {
    std::string source_id;
    Metric metric = Metric::load_kwh;
    double ts = 0.0; // unix seconds UTC
    double value = 0.0;
};

enum class QualityFlag { measured, carried_forward, pattern_imputed, default_imputed,
                         rejected_anomaly };

const char* flag_name(QualityFlag f);

struct AlignedValue {
    double value = 0.0;
    QualityFlag flag = QualityFlag::measured;

    bool operator==(const AlignedValue&) const = default;
};

// One grid interval across the community. values[b] holds the per-metric
// entries for building b; completeness[b] = measured fraction of the metrics
// the scenario expects from that building at this step.
struct AlignedFrame {
    int step = -1;
    std::vector<std::map<Metric, AlignedValue>> values;
    std::vector<double> completeness;
};

// Which metrics a building is expected to report during `step` (EV metrics
// only while a vehicle is plugged in per the session schedule).
std::vector<Metric> expected_metrics(const scenario::ScenarioSpec& s, int building, int step);

// --- alignment -------------------------------------------------------------

// Buckets by floor((ts-start)/interval), with readings stamped up to 30 s
// past an interval end credited back to that interval (meter clocks lag).
int bucket_index(const TimeGrid& grid, double ts);

// Batch alignment; buckets outside [0, steps) are dropped and counted.
// Flow metrics average their in-interval readings, state metrics take the
// last one (ties broken by arrival order).
struct AlignResult {
    std::vector<AlignedFrame> frames; // one per grid step, missing entries absent
    int unknown_source = 0;
    int out_of_range = 0;
};
AlignResult align_to_grid(const std::vector<RawReading>& readings,
                          const scenario::ScenarioSpec& s);

// --- anomaly filtering -----------------------------------------------------

// Physical bounds plus a robust spike test: reject when |value - last
// accepted| exceeds max(6*MAD of the trailing day of raw deltas, floor),
// where floor = 20% of the metric's full scale. Needs >= 8 deltas before the
// statistical test applies.
class AnomalyFilter {
public:
    explicit AnomalyFilter(const scenario::ScenarioSpec& s);

    // Marks offending entries rejected_anomaly in place; feeds its own
    // history from the raw (pre-rejection) values. Frames must arrive in
    // step order.
    void filter(AlignedFrame& frame);

    int rejected_count() const { return rejected_; }

private:
    struct SeriesState {
        bool has_last_raw = false;
        double last_raw = 0.0;
        bool has_accepted = false;
        double last_accepted = 0.0;
        std::deque<double> deltas; // raw deltas, trailing one day
    };
    const scenario::ScenarioSpec* scn_;
    int window_ = 96;
    std::vector<std::map<Metric, SeriesState>> state_;
    std::vector<std::map<Metric, double>> scale_; // per building+metric full scale
    int rejected_ = 0;
};

double mad(std::vector<double> v); // median absolute deviation (helper, exposed for tests)

// --- imputation ------------------------------------------------------------

// Causal gap filling: runs of <= 4 missing intervals carry the last
// observation forward; longer runs switch to the hour-of-week mean of the
// trailing 4 weeks; with no usable history the scenario default profile
// fills in. Rejected values count as missing.
class Imputer {
public:
    explicit Imputer(const scenario::ScenarioSpec& s);

    // Completes `frame` so every expected metric is present, updates
    // completeness, and feeds measured values to the per-series models.
    // Frames must arrive in step order.
    void impute(AlignedFrame& frame);

    const forecast::ForecastModel& model(int building, Metric m) const;

private:
    struct SeriesState {
        forecast::ForecastModel model;
        int gap_run = 0;
        bool has_last = false;
        double last_value = 0.0;
    };
    double default_value(int building, Metric m, int step) const;
    const scenario::ScenarioSpec* scn_;
    std::vector<std::map<Metric, SeriesState>> state_;
};

// --- observation encoding --------------------------------------------------

inline constexpr int kObsDim = 14;

// Fixed layout, stable between training and execution:
//   [0] sin hour-of-day      [7] load forecast (kWh)
//   [1] cos hour-of-day      [8] battery SoC
//   [2] sin day-of-week      [9] EV connected (0/1)
//   [3] cos day-of-week     [10] EV SoC
//   [4] import price now    [11] EV required energy (kWh)
//   [5] import price next   [12] intervals to departure
//   [6] PV forecast (kWh)   [13] completeness
struct ObsContext {
    int step = 0;
    double price_now = 0.0;
    double price_next = 0.0;
    double pv_forecast_kwh = 0.0;
    double load_forecast_kwh = 0.0;
    double battery_soc = 0.0;
    bool ev_connected = false;
    double ev_soc = 0.0;
    double ev_capacity_kwh = 0.0;
    double ev_target_soc = 0.0;
    int intervals_to_departure = 0;
    double completeness = 1.0;
};

std::vector<double> encode_observation(const TimeGrid& grid, const ObsContext& c);

// --- replay adapter --------------------------------------------------------

// CSV `timestamp,source_id,metric,value`, ISO-8601 UTC timestamps.
std::vector<RawReading> load_readings_csv(const std::string& path);
void save_readings_csv(const std::vector<RawReading>& readings, const std::string& path);

// --- pipeline --------------------------------------------------------------

// Align -> filter -> impute, one step at a time, keeping finished frames.
class Pipeline {
public:
    explicit Pipeline(const scenario::ScenarioSpec& s);

    // Readings whose interval just closed. Steps must be fed in order.
    const AlignedFrame& ingest(std::vector<RawReading> readings, int step);

    bool has_frame(int step) const;
    const AlignedFrame& frame(int step) const;
    int last_step() const { return last_step_; }

    forecast::Forecast predict(int building, Metric m, int step) const;

    int unknown_source_count() const { return unknown_source_; }
    int rejected_count() const { return filter_.rejected_count(); }

private:
    const scenario::ScenarioSpec* scn_;
    AnomalyFilter filter_;
    Imputer imputer_;
    std::vector<AlignedFrame> frames_;
    int last_step_ = -1;
    int unknown_source_ = 0;
};

} // namespace recdesk::telemetry
