#include "blackout/baselines.hpp"

#include <chrono>
#include <optional>

namespace blackout {

namespace {

std::optional<double> last_observed_before(const Panel& panel, int d, int t)
{
    for (int s = std::min(t, panel.num_steps()) - 1; s >= 0; --s) {
        if (panel.observed(s, d)) return panel.value(s, d);
    }
    return std::nullopt;
}

std::optional<double> first_observed_after(const Panel& panel, int d, int t)
{
    for (int s = std::max(t + 1, 0); s < panel.num_steps(); ++s) {
        if (panel.observed(s, d)) return panel.value(s, d);
    }
    return std::nullopt;
}

double pre_blackout_value(const Panel& panel, const BlackoutWindow& window)
{
    if (auto v = last_observed_before(panel, window.detector, window.start)) return *v;
    if (auto v = first_observed_after(panel, window.detector, window.end)) return *v;
    throw InvalidArgument("detector '" +
                          panel.detector_ids()[static_cast<std::size_t>(window.detector)] +
                          "' has no observation to carry forward");
}

}  // namespace

Matrix locf_impute(const Panel& panel)
{
    Matrix out = panel.values();
    for (int d = 0; d < panel.num_detectors(); ++d) {
        int first = -1;
        for (int t = 0; t < panel.num_steps(); ++t) {
            if (panel.observed(t, d)) {
                first = t;
                break;
            }
        }
        if (first < 0)
            throw InvalidArgument("detector '" + panel.detector_ids()[static_cast<std::size_t>(d)] +
                                  "' is never observed");
        double carry = panel.value(first, d);
        for (int t = 0; t < panel.num_steps(); ++t) {
            if (panel.observed(t, d)) carry = panel.value(t, d);
            else out(t, d) = carry;
        }
    }
    return out;
}

double locf_forecast(const Panel& panel, const BlackoutWindow& window, int k)
{
    if (k < 1) throw InvalidArgument("forecast horizon must be at least 1");
    return pre_blackout_value(panel, window);
}

InterpResult linear_interp_impute(const Panel& panel, const BlackoutWindow& window)
{
    const int d = window.detector;
    const int n = window.length();
    InterpResult out;
    const auto before = window.start >= 1 && panel.observed(window.start - 1, d)
                            ? std::optional<double>(panel.value(window.start - 1, d))
                            : std::nullopt;
    const auto after = window.end + 1 < panel.num_steps() && panel.observed(window.end + 1, d)
                           ? std::optional<double>(panel.value(window.end + 1, d))
                           : std::nullopt;
    if (!before || !after) {
        out.fell_back_to_locf = true;
        out.values.assign(static_cast<std::size_t>(n), pre_blackout_value(panel, window));
        return out;
    }
    out.values.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        const double w = static_cast<double>(i) / (n + 1);
        out.values.push_back((1.0 - w) * *before + w * *after);
    }
    return out;
}

std::string_view to_string(SeasonalBranch branch)
{
    switch (branch) {
    case SeasonalBranch::DailyLag: return "daily";
    case SeasonalBranch::WeeklyLag: return "weekly";
    case SeasonalBranch::LastObserved: return "last_observed";
    }
    return "unknown";
}

SeasonalForecast seasonal_naive_forecast(const Panel& panel, const BlackoutWindow& window, int k)
{
    if (k < 1) throw InvalidArgument("forecast horizon must be at least 1");
    const int target = window.end + k;
    const int d = window.detector;
    auto lagged = [&](std::chrono::seconds lag) -> std::optional<double> {
        const int steps = panel.steps_for(lag);
        if (steps <= 0) return std::nullopt;
        const int idx = target - steps;
        if (idx < 0 || idx >= panel.num_steps() || !panel.observed(idx, d)) return std::nullopt;
        return panel.value(idx, d);
    };
    if (auto v = lagged(std::chrono::hours(24))) return {*v, SeasonalBranch::DailyLag};
    if (auto v = lagged(std::chrono::hours(24 * 7))) return {*v, SeasonalBranch::WeeklyLag};
    return {pre_blackout_value(panel, window), SeasonalBranch::LastObserved};
}

}  // namespace blackout
