#include "blackout/panel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace blackout {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
}

std::vector<std::string_view> split_lines(std::string_view text)
{
    std::vector<std::string_view> lines;
    for (auto line : split(text, '\n')) {
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

bool parse_int(std::string_view s, int& out)
{
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

// Empty cells and non-numeric sentinels (NA, NaN, null, ...) are missing.
// Empty cells (and the usual NaN spellings) are missing; anything else must
// be a finite number.
bool parse_cell(std::string_view s, double& out)
{
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty() || s == "NaN" || s == "nan" || s == "NA") return false;
    const auto* begin = s.data();
    if (*begin == '+') ++begin;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end || !std::isfinite(out))
        throw ParseError("invalid number '" + std::string(s) + "'");
    return true;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << contents;
}

std::string header_line(const Panel& panel)
{
    std::string line = "timestamp";
    for (const auto& id : panel.detector_ids()) {
        line += ',';
        line += id;
    }
    line += '\n';
    return line;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text)
{
    // YYYY-MM-DD[T ]HH:MM[:SS]
    auto fail = [&]() -> Timestamp {
        throw ParseError("malformed timestamp '" + std::string(text) + "'");
    };
    if (text.size() != 16 && text.size() != 19) return fail();
    if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':')
        return fail();
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (!parse_int(text.substr(0, 4), year) || !parse_int(text.substr(5, 2), month) ||
        !parse_int(text.substr(8, 2), day) || !parse_int(text.substr(11, 2), hour) ||
        !parse_int(text.substr(14, 2), minute))
        return fail();
    if (text.size() == 19) {
        if (text[16] != ':' || !parse_int(text.substr(17, 2), second)) return fail();
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 59) return fail();
    return sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second};
}

std::string format_timestamp(Timestamp ts)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{ts - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

int month_of(Timestamp ts)
{
    using namespace std::chrono;
    return static_cast<int>(static_cast<unsigned>(year_month_day{floor<days>(ts)}.month()));
}

int hour_of(Timestamp ts)
{
    using namespace std::chrono;
    return static_cast<int>(hh_mm_ss{ts - floor<days>(ts)}.hours().count());
}

std::string format_double(double v)
{
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

Panel::Panel(Matrix values, BoolMatrix observed, BoolMatrix artificial,
             std::vector<Timestamp> timestamps, std::vector<std::string> detector_ids)
    : values_(std::move(values)),
      observed_(std::move(observed)),
      artificial_(std::move(artificial)),
      timestamps_(std::move(timestamps)),
      detector_ids_(std::move(detector_ids))
{
    const auto T = values_.rows();
    const auto D = values_.cols();
    if (observed_.rows() != T || observed_.cols() != D || artificial_.rows() != T ||
        artificial_.cols() != D)
        throw InvalidArgument("panel mask dimensions do not match values");
    if (static_cast<Eigen::Index>(timestamps_.size()) != T)
        throw InvalidArgument("panel needs one timestamp per row");
    if (static_cast<Eigen::Index>(detector_ids_.size()) != D)
        throw InvalidArgument("panel needs one detector id per column");
    if (T >= 2) {
        interval_ = timestamps_[1] - timestamps_[0];
        if (interval_.count() <= 0) throw InvalidArgument("timestamps must be strictly increasing");
        for (Eigen::Index t = 2; t < T; ++t) {
            if (timestamps_[t] - timestamps_[t - 1] != interval_)
                throw InvalidArgument("non-constant spacing at row " + std::to_string(t));
        }
    }
    for (Eigen::Index d = 0; d < D; ++d) {
        for (Eigen::Index t = 0; t < T; ++t) {
            if (observed_(t, d)) {
                if (!std::isfinite(values_(t, d)))
                    throw InvalidArgument("non-finite value at observed cell (" + std::to_string(t) +
                                          ", " + std::to_string(d) + ")");
                if (artificial_(t, d))
                    throw InvalidArgument("artificially masked cell marked observed");
            } else {
                values_(t, d) = kNaN;
            }
        }
    }
}

Panel Panel::from_values(const Matrix& values, std::vector<Timestamp> timestamps,
                         std::vector<std::string> detector_ids)
{
    BoolMatrix observed = values.array().isFinite();
    BoolMatrix artificial = BoolMatrix::Constant(values.rows(), values.cols(), false);
    return Panel(values, std::move(observed), std::move(artificial), std::move(timestamps),
                 std::move(detector_ids));
}

int Panel::steps_for(std::chrono::seconds span) const
{
    if (interval_.count() <= 0 || span.count() % interval_.count() != 0) return -1;
    return static_cast<int>(span.count() / interval_.count());
}

Panel parse_panel_csv(std::string_view text)
{
    const auto lines = split_lines(text);
    if (lines.empty()) throw ParseError("empty panel file");
    const auto header = split(lines[0], ',');
    if (header.size() < 2) throw ParseError("header must name at least one detector column");
    std::vector<std::string> ids;
    for (std::size_t i = 1; i < header.size(); ++i) ids.emplace_back(header[i]);
    const auto D = static_cast<Eigen::Index>(ids.size());
    const auto T = static_cast<Eigen::Index>(lines.size() - 1);

    Matrix values = Matrix::Constant(T, D, kNaN);
    BoolMatrix observed = BoolMatrix::Constant(T, D, false);
    std::vector<Timestamp> stamps;
    stamps.reserve(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto row = std::to_string(t);
        const auto fields = split(lines[static_cast<std::size_t>(t) + 1], ',');
        if (static_cast<Eigen::Index>(fields.size()) != D + 1)
            throw ParseError("ragged row at row " + row + ": expected " + std::to_string(D + 1) +
                             " fields, found " + std::to_string(fields.size()));
        try {
            stamps.push_back(parse_timestamp(fields[0]));
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " at row " + row);
        }
        if (t >= 1 && stamps[t] <= stamps[t - 1])
            throw ParseError("timestamps not strictly increasing at row " + row);
        if (t >= 2 && stamps[t] - stamps[t - 1] != stamps[1] - stamps[0])
            throw ParseError("non-constant spacing at row " + row);
        for (Eigen::Index d = 0; d < D; ++d) {
            double v = 0.0;
            bool present = false;
            try {
                present = parse_cell(fields[static_cast<std::size_t>(d) + 1], v);
            } catch (const ParseError& e) {
                throw ParseError(std::string(e.what()) + " at row " + row + ", column " + ids[static_cast<std::size_t>(d)]);
            }
            if (present) {
                values(t, d) = v;
                observed(t, d) = true;
            }
        }
    }
    BoolMatrix artificial = BoolMatrix::Constant(T, D, false);
    return Panel(std::move(values), std::move(observed), std::move(artificial), std::move(stamps),
                 std::move(ids));
}

Panel load_panel(const std::filesystem::path& path)
{
    try {
        return parse_panel_csv(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string panel_to_csv(const Panel& panel)
{
    std::string out = header_line(panel);
    for (int t = 0; t < panel.num_steps(); ++t) {
        out += format_timestamp(panel.timestamps()[static_cast<std::size_t>(t)]);
        for (int d = 0; d < panel.num_detectors(); ++d) {
            out += ',';
            if (panel.observed(t, d)) out += format_double(panel.value(t, d));
        }
        out += '\n';
    }
    return out;
}

void save_panel(const Panel& panel, const std::filesystem::path& path)
{
    write_file(path, panel_to_csv(panel));
}

std::string mask_to_csv(const Panel& panel, const BoolMatrix& mask)
{
    if (mask.rows() != panel.num_steps() || mask.cols() != panel.num_detectors())
        throw InvalidArgument("mask dimensions do not match panel");
    std::string out = header_line(panel);
    for (int t = 0; t < panel.num_steps(); ++t) {
        out += format_timestamp(panel.timestamps()[static_cast<std::size_t>(t)]);
        for (int d = 0; d < panel.num_detectors(); ++d) {
            out += mask(t, d) ? ",1" : ",0";
        }
        out += '\n';
    }
    return out;
}

void save_mask(const Panel& panel, const BoolMatrix& mask, const std::filesystem::path& path)
{
    write_file(path, mask_to_csv(panel, mask));
}

BoolMatrix parse_mask_csv(std::string_view text, const Panel& panel)
{
    const auto lines = split_lines(text);
    if (static_cast<int>(lines.size()) != panel.num_steps() + 1)
        throw ParseError("mask overlay row count does not match panel");
    BoolMatrix mask = BoolMatrix::Constant(panel.num_steps(), panel.num_detectors(), false);
    for (int t = 0; t < panel.num_steps(); ++t) {
        const auto fields = split(lines[static_cast<std::size_t>(t) + 1], ',');
        if (static_cast<int>(fields.size()) != panel.num_detectors() + 1)
            throw ParseError("ragged row at row " + std::to_string(t));
        for (int d = 0; d < panel.num_detectors(); ++d) {
            const auto f = fields[static_cast<std::size_t>(d) + 1];
            if (f != "0" && f != "1")
                throw ParseError("mask cell must be 0 or 1 at row " + std::to_string(t));
            mask(t, d) = f == "1";
        }
    }
    return mask;
}

TimeFeatures build_time_features(std::span<const Timestamp> timestamps)
{
    using namespace std::chrono;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    TimeFeatures out{Matrix(static_cast<Eigen::Index>(timestamps.size()), 4)};
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        const auto day_point = floor<days>(timestamps[i]);
        const double tod = duration<double>(timestamps[i] - day_point).count() / 86400.0;
        // 1970-01-01 was a Thursday; shift so Monday is 0.
        const auto day_index = day_point.time_since_epoch().count();
        const double dow = static_cast<double>(((day_index + 3) % 7 + 7) % 7) + tod;
        const auto t = static_cast<Eigen::Index>(i);
        out.F(t, 0) = std::sin(two_pi * tod);
        out.F(t, 1) = std::cos(two_pi * tod);
        out.F(t, 2) = std::sin(two_pi * dow / 7.0);
        out.F(t, 3) = std::cos(two_pi * dow / 7.0);
    }
    return out;
}

Panel apply_artificial_mask(const Panel& panel, std::span<const MaskInterval> windows)
{
    Matrix values = panel.values();
    BoolMatrix observed = panel.observed_mask();
    BoolMatrix artificial = panel.artificial_mask();
    for (const auto& w : windows) {
        const auto name = "window (detector " + std::to_string(w.detector) + ", " +
                          std::to_string(w.start) + ".." + std::to_string(w.end) + ")";
        if (w.detector < 0 || w.detector >= panel.num_detectors() || w.start < 0 ||
            w.end >= panel.num_steps() || w.start > w.end)
            throw InvalidArgument(name + " is out of range");
        for (int t = w.start; t <= w.end; ++t) {
            if (!panel.observed(t, w.detector))
                throw InvalidArgument(name + " covers a cell that is not observed (row " +
                                      std::to_string(t) + ")");
            observed(t, w.detector) = false;
            artificial(t, w.detector) = true;
            values(t, w.detector) = kNaN;
        }
    }
    return Panel(std::move(values), std::move(observed), std::move(artificial), panel.timestamps(),
                 panel.detector_ids());
}

}  // namespace blackout
