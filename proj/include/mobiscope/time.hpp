#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <absl/time/civil_time.h>
#include <absl/time/time.h>

#include "mobiscope/error.hpp"
#include "mobiscope/text.hpp"

namespace mobiscope {

/// Half-open UTC interval [start, end) in epoch seconds.
struct TimeWindow {
    std::int64_t start = 1356998400;  // 2013-01-01T00:00:00Z
    std::int64_t end = 1372636800;    // 2013-07-01T00:00:00Z

    bool contains(std::int64_t t) const noexcept { return t >= start && t < end; }
    bool operator==(const TimeWindow&) const = default;
};

inline absl::TimeZone load_time_zone(const std::string& name) {
    absl::TimeZone tz;
    if (!absl::LoadTimeZone(name, &tz)) throw ConfigError("unknown time zone: " + name);
    return tz;
}

/// Local wall-clock interval [start, end) in seconds of day; wraps past
/// midnight when start > end. Defaults to 20:00-08:00 America/Chicago.
struct NightWindow {
    int start_sec = 20 * 3600;
    int end_sec = 8 * 3600;
    std::string tz_name = "America/Chicago";
    absl::TimeZone tz = load_time_zone("America/Chicago");

    NightWindow() = default;
    NightWindow(int start, int end, const std::string& zone)
        : start_sec(start), end_sec(end), tz_name(zone), tz(load_time_zone(zone)) {
        if (start < 0 || start >= 86400 || end < 0 || end >= 86400 || start == end)
            throw std::invalid_argument("night window bounds must be distinct seconds of day");
    }

    int local_seconds_of_day(std::int64_t epoch) const {
        const absl::CivilSecond cs = absl::ToCivilSecond(absl::FromUnixSeconds(epoch), tz);
        return cs.hour() * 3600 + cs.minute() * 60 + cs.second();
    }

    bool contains(std::int64_t epoch) const {
        const int s = local_seconds_of_day(epoch);
        if (start_sec < end_sec) return s >= start_sec && s < end_sec;
        return s >= start_sec || s < end_sec;
    }
};

/// "HH:MM" -> seconds of day.
inline int parse_clock(std::string_view s) {
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) throw ConfigError("expected HH:MM, got " + std::string(s));
    auto h = text::parse_int(s.substr(0, colon));
    auto m = text::parse_int(s.substr(colon + 1));
    if (!h || !m || *h < 0 || *h > 23 || *m < 0 || *m > 59)
        throw ConfigError("expected HH:MM, got " + std::string(s));
    return static_cast<int>(*h * 3600 + *m * 60);
}

inline std::string format_clock(int sec) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:%02d", sec / 3600, (sec / 60) % 60);
    return buf;
}

/// Accepts epoch seconds or an ISO date "YYYY-MM-DD" (UTC midnight).
inline std::int64_t parse_utc_time(std::string_view s) {
    const std::string t = text::trim(s);
    if (auto v = text::parse_int(t)) return *v;
    absl::CivilDay day;
    if (!absl::ParseCivilTime(t, &day)) throw ConfigError("expected epoch seconds or YYYY-MM-DD, got " + t);
    return absl::ToUnixSeconds(absl::FromCivil(day, absl::UTCTimeZone()));
}

inline std::string format_utc_date(std::int64_t epoch) {
    return absl::FormatTime("%Y-%m-%dT%H:%M:%SZ", absl::FromUnixSeconds(epoch), absl::UTCTimeZone());
}

struct MonthSpan {
    int year;
    int month;
    std::int64_t start;  // clipped to the window
    std::int64_t end;    // exclusive, clipped to the window
};

/// Calendar (UTC) months intersecting the window, in order.
inline std::vector<MonthSpan> utc_months(const TimeWindow& w) {
    std::vector<MonthSpan> out;
    if (w.end <= w.start) return out;
    const absl::TimeZone utc = absl::UTCTimeZone();
    absl::CivilMonth m = absl::ToCivilMonth(absl::FromUnixSeconds(w.start), utc);
    while (true) {
        const std::int64_t ms = absl::ToUnixSeconds(absl::FromCivil(m, utc));
        if (ms >= w.end) break;
        const std::int64_t me = absl::ToUnixSeconds(absl::FromCivil(m + 1, utc));
        out.push_back({static_cast<int>(m.year()), m.month(), std::max(ms, w.start), std::min(me, w.end)});
        ++m;
    }
    return out;
}

} // namespace mobiscope
