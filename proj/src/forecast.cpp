#include "recdesk/forecast.hpp"

#include <algorithm>

namespace recdesk::forecast {

ForecastModel::ForecastModel(const TimeGrid& grid, std::vector<double> default_profile)
    : grid_(grid), default_profile_(std::move(default_profile)),
      slots_(grid.steps_per_week()), window_steps_(4 * grid.steps_per_week()) {}

void ForecastModel::observe(int step, double value) {
    auto& slot = slots_[grid_.hour_of_week_slot(step)];
    slot.emplace_back(step, value);
    while (slot.size() > 4 || (!slot.empty() && slot.front().first <= step - window_steps_))
        slot.pop_front();
    if (!has_last_ || step >= last_step_) {
        last_value_ = value;
        last_step_ = step;
        has_last_ = true;
    }
}

std::optional<double> ForecastModel::slot_mean(int step) const {
    const auto& slot = slots_[grid_.hour_of_week_slot(step)];
    double sum = 0.0;
    int n = 0;
    bool all_equal = true;
    double first = 0.0;
    for (const auto& [s, v] : slot) {
        if (s >= step || s < step - window_steps_) continue;
        if (n == 0) first = v;
        else if (v != first) all_equal = false;
        sum += v;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return all_equal ? first : sum / n; // exact fixpoint for periodic series
}

int ForecastModel::slot_count(int step) const {
    const auto& slot = slots_[grid_.hour_of_week_slot(step)];
    int n = 0;
    for (const auto& [s, v] : slot)
        if (s < step && s >= step - window_steps_) ++n;
    return n;
}

Forecast ForecastModel::predict(int step) const {
    if (auto m = slot_mean(step)) return {*m, Source::hour_of_week};
    if (has_last_) return {last_value_, Source::persistence};
    double v = 0.0;
    if (!default_profile_.empty())
        v = default_profile_[std::size_t(step) % default_profile_.size()];
    return {v, Source::default_profile};
}

ForecastModel fit_profile(const TimeGrid& grid, std::vector<double> default_profile,
                          std::vector<std::pair<int, double>> measured) {
    // Sorting makes the fit invariant to input permutation.
    std::sort(measured.begin(), measured.end());
    ForecastModel m(grid, std::move(default_profile));
    for (const auto& [step, value] : measured) m.observe(step, value);
    return m;
}

} // namespace recdesk::forecast
