#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/ingest.hpp"

namespace mobiscope {

struct Sample {
    GeoPoint point;
    std::int64_t timestamp = 0;
    std::optional<std::string> text;

    bool operator==(const Sample&) const = default;
};

/// Time-ordered observations of one user. Position between samples is
/// piecewise constant: the user stays at sample i until sample i+1.
struct Trajectory {
    std::string user_id;
    std::string profile_name;
    std::vector<Sample> samples;

    bool operator==(const Trajectory&) const = default;
};

struct TrajectorySet {
    std::vector<Trajectory> trajectories;  // ascending user_id
    std::size_t dropped = 0;               // users below min_posts
};

/// One trajectory per user with at least `min_posts` records. The profile
/// name is the most recent non-empty name among the user's posts.
inline TrajectorySet build_trajectories(const UserGroups& groups, std::size_t min_posts = 24) {
    TrajectorySet out;
    for (const auto& [user, records] : groups) {
        if (records.size() < min_posts || records.empty()) {
            ++out.dropped;
            continue;
        }
        Trajectory t;
        t.user_id = user;
        t.samples.reserve(records.size());
        for (const auto& r : records) {
            t.samples.push_back({r.point(), r.timestamp, r.text});
            if (!r.profile_name.empty()) t.profile_name = r.profile_name;
        }
        out.trajectories.push_back(std::move(t));
    }
    return out;
}

/// Position at time t: the latest sample with timestamp <= t.
inline std::optional<GeoPoint> location_at(const Trajectory& traj, std::int64_t t) {
    auto it = std::upper_bound(traj.samples.begin(), traj.samples.end(), t,
                               [](std::int64_t v, const Sample& s) { return v < s.timestamp; });
    if (it == traj.samples.begin()) return std::nullopt;
    return std::prev(it)->point;
}

inline std::vector<ProjectedPoint> projected_samples(const Trajectory& traj) {
    std::vector<ProjectedPoint> out;
    out.reserve(traj.samples.size());
    for (const auto& s : traj.samples) out.push_back(project_albers(s.point));
    return out;
}

/// JSONL checkpoint: a {"_meta": {...}} line, then one trajectory per line
/// as {"user_id", "name", "samples": [[lon, lat, ts(, text)], ...]}.
inline void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs, const nlohmann::ordered_json& meta) {
    out << nlohmann::ordered_json{{"_meta", meta}}.dump() << '\n';
    for (const auto& t : trajs) {
        nlohmann::ordered_json j;
        j["user_id"] = t.user_id;
        j["name"] = t.profile_name;
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& s : t.samples) {
            nlohmann::json row = {s.point.lon, s.point.lat, s.timestamp};
            if (s.text) row.push_back(*s.text);
            samples.push_back(std::move(row));
        }
        j["samples"] = std::move(samples);
        out << j.dump() << '\n';
    }
}

struct TrajectoryFile {
    nlohmann::json meta;
    std::vector<Trajectory> trajectories;
};

inline TrajectoryFile read_trajectories(std::istream& in) {
    TrajectoryFile f;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw FormatError("trajectory file: line " + std::to_string(line_no) + " is not a JSON object");
        if (j.contains("_meta")) {
            f.meta = j["_meta"];
            continue;
        }
        try {
            Trajectory t;
            t.user_id = j.at("user_id").get<std::string>();
            t.profile_name = j.at("name").get<std::string>();
            for (const auto& row : j.at("samples")) {
                Sample s;
                s.point = {row.at(0).get<double>(), row.at(1).get<double>()};
                s.timestamp = row.at(2).get<std::int64_t>();
                if (row.size() > 3) s.text = row.at(3).get<std::string>();
                t.samples.push_back(std::move(s));
            }
            f.trajectories.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("trajectory file: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (in.bad()) throw Error("trajectory file: read error");
    return f;
}

} // namespace mobiscope
