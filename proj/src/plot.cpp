#include "blackout/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace blackout {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 80;
constexpr double kRight = 170;
constexpr double kTop = 50;
constexpr double kBottom = 70;

const char* const kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb"};

const char* color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v)
    {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish(bool include_zero)
    {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (include_zero) {
            lo = std::min(lo, 0.0);
            hi = std::max(hi, 0.0);
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.05 * (hi - lo);
        if (!(include_zero && lo == 0.0)) lo -= pad;
        hi += pad;
    }
};

// Round step from {1, 2, 5} x 10^n giving about five ticks.
double nice_step(double span)
{
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

class Canvas {
public:
    Canvas(const PlotLabels& labels, Range y) : y_(y)
    {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n";
        out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out_ << "<text x=\"" << num(kWidth / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
             << escape(labels.title) << "</text>\n";
        out_ << "<text x=\"" << num(kLeft + plot_w() / 2) << "\" y=\"" << num(kHeight - 18)
             << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(labels.x_label) << "</text>\n";
        out_ << "<text transform=\"translate(20," << num(kTop + plot_h() / 2)
             << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">" << escape(labels.y_label)
             << "</text>\n";
        const double step = nice_step(y_.hi - y_.lo);
        for (double v = std::ceil(y_.lo / step) * step; v <= y_.hi + 1e-12; v += step) {
            const double py = sy(v);
            out_ << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kLeft + plot_w()) << "\" y1=\"" << num(py)
                 << "\" y2=\"" << num(py) << "\" stroke=\"#e0e0e0\"/>\n";
            out_ << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py + 4)
                 << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(std::abs(v) < 1e-12 ? 0.0 : v)
                 << "</text>\n";
        }
        out_ << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w())
             << "\" height=\"" << num(plot_h()) << "\" fill=\"none\" stroke=\"black\"/>\n";
    }

    static double plot_w() { return kWidth - kLeft - kRight; }
    static double plot_h() { return kHeight - kTop - kBottom; }
    double sy(double v) const { return kTop + plot_h() * (1.0 - (v - y_.lo) / (y_.hi - y_.lo)); }

    std::ostringstream& raw() { return out_; }

    void error_bar(double px, double lo, double hi)
    {
        out_ << "<line x1=\"" << num(px) << "\" x2=\"" << num(px) << "\" y1=\"" << num(sy(lo)) << "\" y2=\""
             << num(sy(hi)) << "\" stroke=\"black\"/>\n";
        for (double v : {lo, hi})
            out_ << "<line x1=\"" << num(px - 4) << "\" x2=\"" << num(px + 4) << "\" y1=\"" << num(sy(v))
                 << "\" y2=\"" << num(sy(v)) << "\" stroke=\"black\"/>\n";
    }

    void legend(const std::vector<PlotSeries>& series)
    {
        for (std::size_t i = 0; i < series.size(); ++i) {
            const double y = kTop + 10 + 20.0 * static_cast<double>(i);
            out_ << "<rect x=\"" << num(kWidth - kRight + 15) << "\" y=\"" << num(y) << "\" width=\"12\" height=\"12\" fill=\""
                 << color(i) << "\"/>\n";
            out_ << "<text x=\"" << num(kWidth - kRight + 32) << "\" y=\"" << num(y + 10) << "\" font-size=\"12\">"
                 << escape(series[i].name) << "</text>\n";
        }
    }

    std::string finish()
    {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    Range y_;
    std::ostringstream out_;
};

bool has_bars(const PlotSeries& s, std::size_t i)
{
    return i < s.low.size() && i < s.high.size() && std::isfinite(s.low[i]) && std::isfinite(s.high[i]);
}

}  // namespace

std::string bar_chart_svg(const PlotLabels& labels, const std::vector<std::string>& categories,
                          const std::vector<PlotSeries>& series)
{
    Range y;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            y.add(s.y[i]);
            if (has_bars(s, i)) {
                y.add(s.low[i]);
                y.add(s.high[i]);
            }
        }
    }
    y.finish(true);
    Canvas c(labels, y);
    const double group_w = Canvas::plot_w() / std::max<std::size_t>(categories.size(), 1);
    const double bar_w = 0.8 * group_w / std::max<std::size_t>(series.size(), 1);
    for (std::size_t g = 0; g < categories.size(); ++g) {
        const double gx = kLeft + group_w * static_cast<double>(g);
        c.raw() << "<text x=\"" << num(gx + group_w / 2) << "\" y=\"" << num(kTop + Canvas::plot_h() + 18)
                << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(categories[g]) << "</text>\n";
        for (std::size_t si = 0; si < series.size(); ++si) {
            const auto& s = series[si];
            if (g >= s.y.size() || !std::isfinite(s.y[g])) continue;
            const double x = gx + 0.1 * group_w + bar_w * static_cast<double>(si);
            const double top = c.sy(std::max(s.y[g], 0.0));
            const double bottom = c.sy(std::min(s.y[g], 0.0));
            c.raw() << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_w)
                    << "\" height=\"" << num(bottom - top) << "\" fill=\"" << color(si) << "\"/>\n";
            if (has_bars(s, g)) c.error_bar(x + bar_w / 2, s.low[g], s.high[g]);
        }
    }
    c.legend(series);
    return c.finish();
}

std::string line_chart_svg(const PlotLabels& labels, const std::vector<PlotSeries>& series,
                           std::optional<double> reference_y)
{
    Range x, y;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.y.size() && i < s.x.size(); ++i) {
            x.add(s.x[i]);
            y.add(s.y[i]);
            if (has_bars(s, i)) {
                y.add(s.low[i]);
                y.add(s.high[i]);
            }
        }
    }
    if (reference_y) y.add(*reference_y);
    x.finish(false);
    y.finish(false);
    Canvas c(labels, y);
    auto sx = [&](double v) { return kLeft + Canvas::plot_w() * (v - x.lo) / (x.hi - x.lo); };

    const double step = nice_step(x.hi - x.lo);
    for (double v = std::ceil(x.lo / step) * step; v <= x.hi + 1e-12; v += step)
        c.raw() << "<text x=\"" << num(sx(v)) << "\" y=\"" << num(kTop + Canvas::plot_h() + 18)
                << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(std::abs(v) < 1e-12 ? 0.0 : v)
                << "</text>\n";
    if (reference_y)
        c.raw() << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kLeft + Canvas::plot_w()) << "\" y1=\""
                << num(c.sy(*reference_y)) << "\" y2=\"" << num(c.sy(*reference_y))
                << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const std::size_t n = std::min(s.x.size(), s.y.size());
        std::ostringstream pts;
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.y[i])) continue;
            pts << num(sx(s.x[i])) << ',' << num(c.sy(s.y[i])) << ' ';
        }
        c.raw() << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color(si)
                << "\" stroke-width=\"2\"/>\n";
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.y[i])) continue;
            if (has_bars(s, i)) c.error_bar(sx(s.x[i]), s.low[i], s.high[i]);
            c.raw() << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(c.sy(s.y[i]))
                    << "\" r=\"3.5\" fill=\"" << color(si) << "\"/>\n";
        }
    }
    c.legend(series);
    return c.finish();
}

}  // namespace blackout
