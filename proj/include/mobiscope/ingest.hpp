#pragma once

// Post-log ingestion: JSONL parsing with per-line accounting, spatial and
// temporal clipping, optional exact-duplicate removal, per-user grouping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/time.hpp"

namespace mobiscope {

struct PostRecord {
    std::string user_id;
    std::string profile_name;
    std::int64_t timestamp = 0;
    double lon = 0;
    double lat = 0;
    std::optional<std::string> text;

    GeoPoint point() const noexcept { return {lon, lat}; }
    bool operator==(const PostRecord&) const = default;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::size_t rejected_malformed = 0;
    std::size_t rejected_out_of_range = 0;
    std::size_t distinct_users = 0;

    std::size_t lines() const noexcept { return accepted + rejected_malformed + rejected_out_of_range; }
    bool operator==(const IngestReport&) const = default;

    nlohmann::json to_json() const {
        return {{"accepted", accepted},
                {"rejected_malformed", rejected_malformed},
                {"rejected_out_of_range", rejected_out_of_range},
                {"distinct_users", distinct_users}};
    }
};

enum class LineStatus { Accepted, Malformed, OutOfRange };

/// Classifies one line. Required keys: user_id (string), name (string),
/// ts (integer), lon, lat (numbers); optional text (string or null).
inline LineStatus parse_post_line(std::string_view line, PostRecord& out) {
    nlohmann::json j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return LineStatus::Malformed;
    const auto uid = j.find("user_id");
    const auto name = j.find("name");
    const auto ts = j.find("ts");
    const auto lon = j.find("lon");
    const auto lat = j.find("lat");
    if (uid == j.end() || name == j.end() || ts == j.end() || lon == j.end() || lat == j.end())
        return LineStatus::Malformed;
    if (!uid->is_string() || !name->is_string() || !ts->is_number_integer() || !lon->is_number() ||
        !lat->is_number())
        return LineStatus::Malformed;
    std::optional<std::string> text;
    if (const auto t = j.find("text"); t != j.end() && !t->is_null()) {
        if (!t->is_string()) return LineStatus::Malformed;
        text = t->get<std::string>();
    }
    PostRecord rec;
    rec.user_id = uid->get<std::string>();
    rec.profile_name = name->get<std::string>();
    rec.timestamp = ts->get<std::int64_t>();
    rec.lon = lon->get<double>();
    rec.lat = lat->get<double>();
    rec.text = std::move(text);
    if (rec.timestamp < 0 || !rec.point().valid()) return LineStatus::OutOfRange;
    out = std::move(rec);
    return LineStatus::Accepted;
}

struct ParsedPosts {
    std::vector<PostRecord> records;
    IngestReport report;
};

/// Parses a JSONL stream. Bad lines are counted, never fatal; a stream
/// read failure (badbit) throws. Lines starting with {"_meta" carry
/// checkpoint metadata and are skipped uncounted.
inline ParsedPosts parse_posts(std::istream& in) {
    ParsedPosts out;
    std::set<std::string> users;
    std::string line;
    while (std::getline(in, line)) {
        if (line.starts_with("{\"_meta\"")) continue;
        PostRecord rec;
        switch (parse_post_line(line, rec)) {
        case LineStatus::Accepted:
            users.insert(rec.user_id);
            out.records.push_back(std::move(rec));
            ++out.report.accepted;
            break;
        case LineStatus::Malformed:
            ++out.report.rejected_malformed;
            break;
        case LineStatus::OutOfRange:
            ++out.report.rejected_out_of_range;
            break;
        }
    }
    if (in.bad()) throw Error("post stream: read error");
    out.report.distinct_users = users.size();
    return out;
}

inline nlohmann::json to_json(const PostRecord& r) {
    nlohmann::json j = {{"user_id", r.user_id}, {"name", r.profile_name}, {"ts", r.timestamp}, {"lon", r.lon},
                        {"lat", r.lat}};
    if (r.text) j["text"] = *r.text;
    return j;
}

/// Canonical JSONL, one record per line, fixed key order.
inline void write_posts(std::ostream& out, std::span<const PostRecord> records) {
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["user_id"] = r.user_id;
        j["name"] = r.profile_name;
        j["ts"] = r.timestamp;
        j["lon"] = r.lon;
        j["lat"] = r.lat;
        if (r.text) j["text"] = *r.text;
        out << j.dump() << '\n';
    }
}

inline std::vector<PostRecord> filter_bbox(std::span<const PostRecord> records, const BBox& bbox) {
    bbox.validate();
    std::vector<PostRecord> out;
    for (const auto& r : records)
        if (bbox.contains(r.point())) out.push_back(r);
    return out;
}

inline std::vector<PostRecord> filter_window(std::span<const PostRecord> records, const TimeWindow& w) {
    if (w.end <= w.start) throw std::invalid_argument("empty time window");
    std::vector<PostRecord> out;
    for (const auto& r : records)
        if (w.contains(r.timestamp)) out.push_back(r);
    return out;
}

/// Drops repeats of (user_id, ts, lon, lat), keeping the first occurrence.
inline std::vector<PostRecord> dedup_exact(std::span<const PostRecord> records) {
    std::set<std::tuple<std::string, std::int64_t, double, double>> seen;
    std::vector<PostRecord> out;
    for (const auto& r : records)
        if (seen.emplace(r.user_id, r.timestamp, r.lon, r.lat).second) out.push_back(r);
    return out;
}

using UserGroups = std::map<std::string, std::vector<PostRecord>>;

/// Partitions by user; each list is stably sorted by timestamp.
inline UserGroups group_by_user(std::span<const PostRecord> records) {
    UserGroups groups;
    for (const auto& r : records) groups[r.user_id].push_back(r);
    for (auto& [_, list] : groups)
        std::stable_sort(list.begin(), list.end(),
                         [](const PostRecord& a, const PostRecord& b) { return a.timestamp < b.timestamp; });
    return groups;
}

} // namespace mobiscope
