#pragma once

#include "blackout/common.hpp"

#include <chrono>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace blackout {

/// Naive local calendar instant (no timezone semantics).
using Timestamp = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DDTHH:MM[:SS]` (a space is accepted in place of `T`).
Timestamp parse_timestamp(std::string_view text);
/// Formats as `YYYY-MM-DDTHH:MM:SS`.
std::string format_timestamp(Timestamp ts);

/// Contiguous artificial blackout on one detector, inclusive bounds.
struct MaskInterval {
    int detector = 0;
    int start = 0;
    int end = 0;
};

/// A T x D panel of sensor readings together with its observation masks.
///
/// Unobserved cells always hold NaN, so an artificially masked panel
/// carries no trace of the ground truth it was derived from. Instances are
/// immutable; every manipulation returns a new panel.
class Panel {
public:
    Panel() = default;

    /// Validates all invariants: observed cells finite, artificial cells
    /// unobserved, timestamps strictly increasing with constant spacing.
    Panel(Matrix values, BoolMatrix observed, BoolMatrix artificial,
          std::vector<Timestamp> timestamps, std::vector<std::string> detector_ids);

    /// Builds a panel from raw values where NaN marks a missing cell.
    static Panel from_values(const Matrix& values, std::vector<Timestamp> timestamps,
                             std::vector<std::string> detector_ids);

    int num_steps() const { return static_cast<int>(values_.rows()); }
    int num_detectors() const { return static_cast<int>(values_.cols()); }

    const Matrix& values() const { return values_; }
    const BoolMatrix& observed_mask() const { return observed_; }
    const BoolMatrix& artificial_mask() const { return artificial_; }
    const std::vector<Timestamp>& timestamps() const { return timestamps_; }
    const std::vector<std::string>& detector_ids() const { return detector_ids_; }

    bool observed(int t, int d) const { return observed_(t, d); }
    bool artificial(int t, int d) const { return artificial_(t, d); }
    double value(int t, int d) const { return values_(t, d); }

    /// Sampling interval; zero for panels with fewer than two rows.
    std::chrono::seconds interval() const { return interval_; }

    /// Number of steps spanning `span`, or -1 when `span` is not a multiple
    /// of the sampling interval.
    int steps_for(std::chrono::seconds span) const;

private:
    Matrix values_;
    BoolMatrix observed_;
    BoolMatrix artificial_;
    std::vector<Timestamp> timestamps_;
    std::vector<std::string> detector_ids_;
    std::chrono::seconds interval_{0};
};

/// Per-timestep covariates f_t, shared by every detector.
struct TimeFeatures {
    Matrix F;  // T x p
    int dim() const { return static_cast<int>(F.cols()); }
};

/// Per-detector covariates g_d; q = 0 disables the static term.
struct StaticFeatures {
    Matrix G;  // D x q
    int dim() const { return static_cast<int>(G.cols()); }
    static StaticFeatures none(int num_detectors) { return {Matrix(num_detectors, 0)}; }
};

Panel load_panel(const std::filesystem::path& path);
Panel parse_panel_csv(std::string_view text);

void save_panel(const Panel& panel, const std::filesystem::path& path);
std::string panel_to_csv(const Panel& panel);

/// Writes a 0/1 overlay with the same header and timestamps as the panel.
std::string mask_to_csv(const Panel& panel, const BoolMatrix& mask);
void save_mask(const Panel& panel, const BoolMatrix& mask, const std::filesystem::path& path);
BoolMatrix parse_mask_csv(std::string_view text, const Panel& panel);

/// Row t = [sin 2pi tod, cos 2pi tod, sin 2pi dow/7, cos 2pi dow/7] with
/// day-of-week counted from Monday and including the fraction of the day.
TimeFeatures build_time_features(std::span<const Timestamp> timestamps);

/// Returns a copy with every interval hidden: observed set false,
/// artificial set true and the value replaced by NaN. Throws
/// InvalidArgument when an interval touches a cell that is not observed.
Panel apply_artificial_mask(const Panel& panel, std::span<const MaskInterval> windows);

/// Month of year (1-12) and hour of day (0-23) of a timestamp.
int month_of(Timestamp ts);
int hour_of(Timestamp ts);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace blackout
