#include "support.hpp"

#include "blackout/panel.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace blackout;
using namespace testsupport;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string dense_csv(int T, int D)
{
    std::string out = "timestamp";
    for (int d = 0; d < D; ++d) out += ",s" + std::to_string(d);
    out += '\n';
    const auto stamps = regular_timestamps(T);
    for (int t = 0; t < T; ++t) {
        out += format_timestamp(stamps[t]);
        for (int d = 0; d < D; ++d) out += "," + std::to_string(10 * t + d) + ".5";
        out += '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("csv with one empty cell has exactly one unobserved entry")
{
    const auto p = parse_panel_csv("timestamp,a,b\n"
                                   "2015-01-01T00:00:00,1.0,2.0\n"
                                   "2015-01-01T00:05:00,,4.0\n"
                                   "2015-01-01T00:10:00,5.0,6.0\n");
    CHECK(p.num_steps() == 3);
    CHECK(p.num_detectors() == 2);
    CHECK((!p.observed_mask()).count() == 1);
    CHECK_FALSE(p.observed(1, 0));
    CHECK(std::isnan(p.value(1, 0)));
    CHECK(p.detector_ids() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("non-constant spacing is rejected with the offending row")
{
    const std::string csv = "timestamp,a\n"
                            "2015-01-01T00:00:00,1\n"
                            "2015-01-01T00:05:00,2\n"
                            "2015-01-01T00:15:00,3\n";
    CHECK_THROWS_WITH_AS(parse_panel_csv(csv), "non-constant spacing at row 2", ParseError);
}

TEST_CASE("dense csv is fully observed with no artificial cells")
{
    const auto p = parse_panel_csv(dense_csv(10, 4));
    CHECK(p.observed_mask().all());
    CHECK_FALSE(p.artificial_mask().any());
    CHECK(p.interval() == std::chrono::seconds(300));
}

TEST_CASE("malformed rows are reported")
{
    CHECK_THROWS_AS(parse_panel_csv("timestamp,a,b\n2015-01-01T00:00:00,1\n"), ParseError);
    CHECK_THROWS_AS(parse_panel_csv("timestamp,a\nyesterday,1\n"), ParseError);
    CHECK_THROWS_AS(parse_panel_csv("timestamp,a\n2015-01-01T00:00:00,abc\n"), ParseError);
    CHECK_THROWS_AS(parse_panel_csv(""), ParseError);
}

TEST_CASE("csv round trip is byte identical")
{
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const auto p = random_panel(uniform_int(rng, 1, 30), uniform_int(rng, 1, 5), 0.3, rng);
        const std::string first = panel_to_csv(p);
        const auto back = parse_panel_csv(first);
        CHECK(panel_to_csv(back) == first);
        CHECK((back.observed_mask() == p.observed_mask()).all());
        for (int t = 0; t < p.num_steps(); ++t)
            for (int d = 0; d < p.num_detectors(); ++d)
                if (p.observed(t, d)) CHECK(back.value(t, d) == p.value(t, d));
    }
    const auto dir = std::filesystem::temp_directory_path() / "blackout_panel_roundtrip";
    std::filesystem::create_directories(dir);
    const auto p = parse_panel_csv(dense_csv(6, 3));
    save_panel(p, dir / "p.csv");
    CHECK(panel_to_csv(load_panel(dir / "p.csv")) == panel_to_csv(p));
    CHECK_THROWS_AS(load_panel(dir / "missing.csv"), ParseError);
}

TEST_CASE("time features at known instants")
{
    // 2015-01-05 is a Monday.
    const auto f = build_time_features(std::vector<Timestamp>{parse_timestamp("2015-01-05T00:00:00"),
                                                              parse_timestamp("2015-01-05T06:00:00")});
    CHECK(f.dim() == 4);
    CHECK(f.F(0, 0) == doctest::Approx(0.0));
    CHECK(f.F(0, 1) == doctest::Approx(1.0));
    CHECK(f.F(0, 2) == doctest::Approx(0.0));
    CHECK(f.F(0, 3) == doctest::Approx(1.0));
    CHECK(f.F(1, 0) == doctest::Approx(1.0));
    CHECK(f.F(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("time feature pairs have unit norm")
{
    std::mt19937_64 rng(3);
    std::vector<Timestamp> ts;
    const auto t0 = parse_timestamp("2015-01-01T00:00:00");
    for (int i = 0; i < 200; ++i) ts.push_back(t0 + std::chrono::seconds(uniform_int(rng, 0, 400 * 86400)));
    const auto f = build_time_features(ts);
    for (int i = 0; i < 200; ++i) {
        CHECK(std::hypot(f.F(i, 0), f.F(i, 1)) == doctest::Approx(1.0));
        CHECK(std::hypot(f.F(i, 2), f.F(i, 3)) == doctest::Approx(1.0));
    }
}

TEST_CASE("artificial masking")
{
    std::mt19937_64 rng(5);
    const auto p = Panel::from_values(random_matrix(12, 3, rng), regular_timestamps(12), detector_names(3));

    SUBCASE("empty window list leaves the panel unchanged")
    {
        const auto q = apply_artificial_mask(p, {});
        CHECK((q.observed_mask() == p.observed_mask()).all());
        CHECK_FALSE(q.artificial_mask().any());
        CHECK(q.values() == p.values());
    }
    SUBCASE("one window of length 3")
    {
        const std::vector<MaskInterval> w{{0, 4, 6}};
        const auto q = apply_artificial_mask(p, w);
        CHECK((!q.observed_mask()).count() == 3);
        CHECK(q.artificial_mask().count() == 3);
        for (int t = 4; t <= 6; ++t) {
            CHECK(q.artificial(t, 0));
            CHECK(std::isnan(q.value(t, 0)));
        }
    }
    SUBCASE("values outside windows are untouched and counts add up")
    {
        const std::vector<MaskInterval> w{{0, 0, 1}, {1, 3, 8}, {2, 10, 11}, {0, 5, 5}};
        const auto q = apply_artificial_mask(p, w);
        CHECK(q.artificial_mask().count() == 2 + 6 + 2 + 1);
        for (int t = 0; t < 12; ++t)
            for (int d = 0; d < 3; ++d)
                if (!q.artificial(t, d)) CHECK(q.value(t, d) == p.value(t, d));
    }
    SUBCASE("window over a naturally missing cell is an error")
    {
        Matrix v = p.values();
        v(7, 2) = kNaN;
        const auto gappy = Panel::from_values(v, regular_timestamps(12), detector_names(3));
        const std::vector<MaskInterval> w{{2, 6, 8}};
        CHECK_THROWS_AS(apply_artificial_mask(gappy, w), InvalidArgument);
    }
}

TEST_CASE("panel invariants are enforced")
{
    Matrix v = Matrix::Ones(3, 2);
    BoolMatrix obs = BoolMatrix::Constant(3, 2, true);
    BoolMatrix art = BoolMatrix::Constant(3, 2, false);
    art(1, 1) = true;
    CHECK_THROWS_AS(Panel(v, obs, art, regular_timestamps(3), detector_names(2)), InvalidArgument);
    art(1, 1) = false;
    v(0, 0) = kNaN;
    CHECK_THROWS_AS(Panel(v, obs, art, regular_timestamps(3), detector_names(2)), InvalidArgument);
    auto ts = regular_timestamps(3);
    std::swap(ts[1], ts[2]);
    CHECK_THROWS_AS(Panel::from_values(Matrix::Ones(3, 2), ts, detector_names(2)), InvalidArgument);
}

TEST_CASE("calendar helpers")
{
    CHECK(month_of(parse_timestamp("2015-07-31T23:55:00")) == 7);
    CHECK(hour_of(parse_timestamp("2015-07-31T23:55:00")) == 23);
    CHECK(parse_timestamp("2015-03-01 04:05") == parse_timestamp("2015-03-01T04:05:00"));
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678})
        CHECK(std::stod(format_double(x)) == x);
}
