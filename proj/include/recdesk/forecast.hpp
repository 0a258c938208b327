#pragma once

#include <deque>
#include <optional>
#include <utility>
#include <vector>

#include "recdesk/timeutil.hpp"

namespace recdesk::forecast {

enum class Source { hour_of_week, persistence, default_profile };

struct Forecast {
    double value_kwh = 0.0;
    Source source = Source::default_profile;
};

// Trailing-mean estimator over 7x(steps/day) hour-of-week slots, one
// instance per building+metric. Only measured values should be fed in;
// imputed values would teach the model its own guesses.
class ForecastModel {
public:
    ForecastModel(const TimeGrid& grid, std::vector<double> default_profile);

    void observe(int step, double value);

    // Mean of same-slot samples from the trailing 4 weeks before `step`.
    std::optional<double> slot_mean(int step) const;
    int slot_count(int step) const;

    // Tiers: slot mean, else last measured value, else default profile.
    Forecast predict(int step) const;

private:
    TimeGrid grid_;
    std::vector<double> default_profile_;
    std::vector<std::deque<std::pair<int, double>>> slots_; // (step, value)
    double last_value_ = 0.0;
    int last_step_ = -1;
    bool has_last_ = false;
    int window_steps_ = 0; // 4 weeks
};

// Batch fit from (step, value) pairs of measured data, in any order.
ForecastModel fit_profile(const TimeGrid& grid, std::vector<double> default_profile,
                          std::vector<std::pair<int, double>> measured);

} // namespace recdesk::forecast
