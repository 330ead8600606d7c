#pragma once

#include "blackout/panel.hpp"
#include "blackout/window.hpp"

#include <string_view>
#include <vector>

namespace blackout {

/// Fills every missing cell with the latest earlier observation in its
/// column; leading gaps take the first observation. Throws InvalidArgument
/// naming the detector when a column has no observation at all.
Matrix locf_impute(const Panel& panel);

/// Last observed value of the window's detector before the blackout.
double locf_forecast(const Panel& panel, const BlackoutWindow& window, int k);

struct InterpResult {
    std::vector<double> values;
    bool fell_back_to_locf = false;
};

/// Straight line between the last observation before the window and the
/// first one after it, evaluated at the interior steps.
InterpResult linear_interp_impute(const Panel& panel, const BlackoutWindow& window);

enum class SeasonalBranch { DailyLag, WeeklyLag, LastObserved };
std::string_view to_string(SeasonalBranch branch);

struct SeasonalForecast {
    double value = 0.0;
    SeasonalBranch branch = SeasonalBranch::LastObserved;
};

/// Value observed one day before the target, else one week before, else
/// the last pre-blackout observation.
SeasonalForecast seasonal_naive_forecast(const Panel& panel, const BlackoutWindow& window, int k);

}  // namespace blackout
