// PRNG stream, text helpers, time windows.

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace mobiscope;

TEST(SplitMix64, PublishedStreamForSeed1234567) {
    SplitMix64 rng(1234567);
    const std::uint64_t expected[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL,
                                      4593380528125082431ULL, 16408922859458223821ULL};
    for (auto e : expected) EXPECT_EQ(rng.next(), e);
}

TEST(SplitMix64, UniformStaysInHalfOpenUnitInterval) {
    SplitMix64 rng(7);
    double lo = 1, hi = 0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    EXPECT_LT(lo, 1e-3);
    EXPECT_GT(hi, 1 - 1e-3);
}

TEST(SplitMix64, BelowCoversRangeWithoutEscaping) {
    SplitMix64 rng(11);
    std::vector<int> seen(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++seen[v];
    }
    for (int c : seen) EXPECT_GT(c, 800);
}

TEST(SplitMix64, NormalHasUnitMoments) {
    SplitMix64 rng(3);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(SplitMix64, SameSeedSameStream) {
    SplitMix64 a(99), b(99);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Text, FormatDoubleRoundTripsShortest) {
    SplitMix64 rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12, 12));
        const auto back = text::parse_double(text::format_double(v));
        ASSERT_TRUE(back);
        ASSERT_EQ(*back, v);
    }
    EXPECT_EQ(text::format_double(0.5), "0.5");
    EXPECT_EQ(text::format_double(3), "3");
}

TEST(Text, ParseRejectsJunk) {
    EXPECT_FALSE(text::parse_double("1.5x"));
    EXPECT_FALSE(text::parse_double(""));
    EXPECT_FALSE(text::parse_int("12.0"));
    EXPECT_EQ(text::parse_int(" 42 "), 42);
    EXPECT_EQ(text::parse_double(" -2.25"), -2.25);
}

TEST(Text, CsvEscapeAndSplitAreInverse) {
    const std::vector<std::string> fields = {"plain", "with,comma", "with \"quote\"", "", "trailing space "};
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) line += (i ? "," : "") + text::csv_escape(fields[i]);
    EXPECT_EQ(text::split_csv(line), fields);
}

TEST(Text, ReadCsvKeepsCommentsAndChecksWidth) {
    std::istringstream ok("# mobiscope a=1\nx,y\n1,2\n\n3,4\n");
    const auto t = text::read_csv(ok, "t");
    EXPECT_EQ(t.comments.size(), 1u);
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.require("Y", "t"), 1u);

    std::istringstream bad("x,y\n1,2,3\n");
    EXPECT_THROW(text::read_csv(bad, "t"), FormatError);
    std::istringstream empty("# only a comment\n");
    EXPECT_THROW(text::read_csv(empty, "t"), FormatError);
}

TEST(Time, ClockParsing) {
    EXPECT_EQ(parse_clock("20:00"), 72000);
    EXPECT_EQ(parse_clock("08:00"), 28800);
    EXPECT_EQ(format_clock(72000), "20:00");
    EXPECT_THROW(parse_clock("24:00"), ConfigError);
    EXPECT_THROW(parse_clock("8"), ConfigError);
}

TEST(Time, UtcDatesAndEpochs) {
    EXPECT_EQ(parse_utc_time("2013-01-01"), 1356998400);
    EXPECT_EQ(parse_utc_time("2013-07-01"), 1372636800);
    EXPECT_EQ(parse_utc_time("1357016400"), 1357016400);
    EXPECT_THROW(parse_utc_time("January"), ConfigError);
}

TEST(Time, WindowIsHalfOpen) {
    const TimeWindow w;
    EXPECT_TRUE(w.contains(w.start));
    EXPECT_FALSE(w.contains(w.end));
    EXPECT_TRUE(w.contains(w.end - 1));
    EXPECT_FALSE(w.contains(w.start - 1));
}

TEST(Time, MonthsOfDefaultWindow) {
    const auto months = utc_months(TimeWindow{});
    ASSERT_EQ(months.size(), 6u);
    EXPECT_EQ(months.front().month, 1);
    EXPECT_EQ(months.back().month, 6);
    EXPECT_EQ(months.back().end, 1372636800);
    for (std::size_t i = 1; i < months.size(); ++i) EXPECT_EQ(months[i].start, months[i - 1].end);
}

TEST(Time, PartialMonthsAreClipped) {
    const TimeWindow w{parse_utc_time("2013-01-15"), parse_utc_time("2013-03-02")};
    const auto months = utc_months(w);
    ASSERT_EQ(months.size(), 3u);
    EXPECT_EQ(months[0].start, w.start);
    EXPECT_EQ(months[2].end, w.end);
}

TEST(NightWindow, BoundariesInWinterLocalTime) {
    const NightWindow night;
    EXPECT_TRUE(night.contains(1358301600));   // 20:00:00 CST
    EXPECT_FALSE(night.contains(1358301599));  // 19:59:59
    EXPECT_TRUE(night.contains(1358344799));   // 07:59:59 next morning
    EXPECT_FALSE(night.contains(1358344800));  // 08:00:00
}

TEST(NightWindow, FollowsDaylightSavingTime) {
    const NightWindow night;
    EXPECT_TRUE(night.contains(1371344400));   // 20:00 CDT
    EXPECT_FALSE(night.contains(1371344399));
    EXPECT_TRUE(night.contains(1362920399));   // 07:59:59 CDT on the change day
    EXPECT_FALSE(night.contains(1362920400));
    // 2012-12-31T23:00:00 local is 1357016400 UTC.
    EXPECT_EQ(night.local_seconds_of_day(1357016400), 23 * 3600);
}

TEST(NightWindow, NonWrappingWindowAndBadInput) {
    const NightWindow day(parse_clock("09:00"), parse_clock("17:00"), "UTC");
    EXPECT_TRUE(day.contains(parse_utc_time("2013-01-01") + 9 * 3600));
    EXPECT_FALSE(day.contains(parse_utc_time("2013-01-01") + 17 * 3600));
    EXPECT_THROW(NightWindow(0, 0, "UTC"), std::invalid_argument);
    EXPECT_THROW(NightWindow(0, 3600, "Not/AZone"), ConfigError);
}
