#pragma once

// Geometric mobility measures: frequency-weighted centroid and radius of
// gyration in Albers meters, and the month-by-month cumulative series.

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/text.hpp"
#include "mobiscope/time.hpp"
#include "mobiscope/trajectory.hpp"

namespace mobiscope {

struct MobilityMetrics {
    std::string user_id;
    ProjectedPoint centroid;
    double gyradius_m = 0;
    std::size_t n_samples = 0;

    bool operator==(const MobilityMetrics&) const = default;
};

/// Arithmetic mean; every sample counts, duplicates included. Accumulated as
/// offsets from the first point, so coincident points give that point exactly.
inline ProjectedPoint centroid(std::span<const ProjectedPoint> pts) {
    if (pts.empty()) throw std::invalid_argument("centroid of an empty trajectory");
    const ProjectedPoint o = pts.front();
    double sx = 0, sy = 0;
    for (const auto& p : pts) {
        sx += p.x - o.x;
        sy += p.y - o.y;
    }
    const double n = static_cast<double>(pts.size());
    return {o.x + sx / n, o.y + sy / n};
}

/// sqrt of the mean squared distance to the centroid.
inline double radius_of_gyration(std::span<const ProjectedPoint> pts) {
    const ProjectedPoint c = centroid(pts);
    double acc = 0;
    for (const auto& p : pts) acc += squared_distance(p, c);
    return std::sqrt(acc / static_cast<double>(pts.size()));
}

inline ProjectedPoint centroid(const Trajectory& traj) { return centroid(projected_samples(traj)); }

inline double radius_of_gyration(const Trajectory& traj) { return radius_of_gyration(projected_samples(traj)); }

inline MobilityMetrics compute_metrics(const Trajectory& traj) {
    const auto pts = projected_samples(traj);
    return {traj.user_id, centroid(pts), radius_of_gyration(pts), pts.size()};
}

struct MonthlyValue {
    int year = 0;
    int month = 0;
    double mean = 0;  // 0 when n_users == 0
    std::size_t n_users = 0;

    bool operator==(const MonthlyValue&) const = default;
};

/// For each UTC month of the window, every user's gyradius over all samples
/// before the month's end, averaged across users that have at least
/// `min_samples` such samples. Users are reduced in user_id order.
inline std::vector<MonthlyValue> monthly_cumulative_gyradius(std::span<const Trajectory> trajs, const TimeWindow& window,
                                                             std::size_t min_samples = 1) {
    std::vector<std::size_t> order(trajs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return trajs[a].user_id < trajs[b].user_id; });
    std::vector<std::vector<ProjectedPoint>> projected(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) projected[i] = projected_samples(trajs[i]);

    std::vector<MonthlyValue> out;
    for (const auto& m : utc_months(window)) {
        MonthlyValue v{m.year, m.month, 0, 0};
        double sum = 0;
        for (std::size_t i : order) {
            const auto& samples = trajs[i].samples;
            const auto upto = static_cast<std::size_t>(
                std::lower_bound(samples.begin(), samples.end(), m.end,
                                 [](const Sample& s, std::int64_t t) { return s.timestamp < t; }) -
                samples.begin());
            if (upto == 0 || upto < min_samples) continue;
            sum += radius_of_gyration(std::span<const ProjectedPoint>(projected[i].data(), upto));
            ++v.n_users;
        }
        if (v.n_users > 0) v.mean = sum / static_cast<double>(v.n_users);
        out.push_back(v);
    }
    return out;
}

/// CSV: user_id,gyradius_m,n_samples,centroid_x,centroid_y
inline void write_metrics_csv(std::ostream& out, std::span<const MobilityMetrics> rows, const std::string& meta_line) {
    if (!meta_line.empty()) out << meta_line << '\n';
    out << "user_id,gyradius_m,n_samples,centroid_x,centroid_y\n";
    for (const auto& m : rows) {
        out << text::csv_escape(m.user_id) << ',' << text::format_double(m.gyradius_m) << ',' << m.n_samples << ','
            << text::format_double(m.centroid.x) << ',' << text::format_double(m.centroid.y) << '\n';
    }
}

inline std::vector<MobilityMetrics> read_metrics_csv(std::istream& in) {
    const auto t = text::read_csv(in, "metrics CSV");
    const auto cu = t.require("user_id", "metrics CSV"), cg = t.require("gyradius_m", "metrics CSV"),
               cn = t.require("n_samples", "metrics CSV"), cx = t.require("centroid_x", "metrics CSV"),
               cy = t.require("centroid_y", "metrics CSV");
    std::vector<MobilityMetrics> out;
    for (const auto& r : t.rows) {
        auto g = text::parse_double(r[cg]);
        auto n = text::parse_int(r[cn]);
        auto x = text::parse_double(r[cx]);
        auto y = text::parse_double(r[cy]);
        if (!g || !n || !x || !y || *n < 0) throw FormatError("metrics CSV: bad numeric field for user " + r[cu]);
        out.push_back({r[cu], {*x, *y}, *g, static_cast<std::size_t>(*n)});
    }
    return out;
}

inline void write_monthly_csv(std::ostream& out, std::span<const MonthlyValue> rows, const std::string& value_name,
                              const std::string& meta_line) {
    if (!meta_line.empty()) out << meta_line << '\n';
    out << "year,month," << value_name << ",n_users\n";
    for (const auto& v : rows)
        out << v.year << ',' << v.month << ',' << text::format_double(v.mean) << ',' << v.n_users << '\n';
}

inline std::vector<MonthlyValue> read_monthly_csv(std::istream& in) {
    const auto t = text::read_csv(in, "monthly CSV");
    if (t.header.size() != 4) throw FormatError("monthly CSV: expected 4 columns");
    std::vector<MonthlyValue> out;
    for (const auto& r : t.rows) {
        auto y = text::parse_int(r[0]);
        auto m = text::parse_int(r[1]);
        auto v = text::parse_double(r[2]);
        auto n = text::parse_int(r[3]);
        if (!y || !m || !v || !n) throw FormatError("monthly CSV: bad row");
        out.push_back({static_cast<int>(*y), static_cast<int>(*m), *v, static_cast<std::size_t>(*n)});
    }
    return out;
}

} // namespace mobiscope
