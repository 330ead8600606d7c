#pragma once

#include <map>
#include <string>

namespace blackout {

/// One evaluation unit: a contiguous blackout on one detector plus the
/// aligned post-blackout forecast targets.
struct BlackoutWindow {
    std::string window_id;
    int detector = 0;
    int start = 0;  // inclusive
    int end = 0;    // inclusive
    std::map<int, int> forecast_targets;  // horizon -> end + horizon
    int month = 1;
    int start_hour = 0;

    int length() const { return end - start + 1; }
};

}  // namespace blackout
