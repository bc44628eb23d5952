#pragma once

// DBSCAN over projected sample locations, activity centers, and night-time
// home detection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/mobility.hpp"
#include "mobiscope/time.hpp"
#include "mobiscope/trajectory.hpp"

namespace mobiscope {

struct DbscanParams {
    double eps_m = 100;
    std::size_t min_pts = 3;

    void validate() const {
        if (!(eps_m > 0) || !std::isfinite(eps_m)) throw std::invalid_argument("DBSCAN eps must be > 0");
        if (min_pts < 1) throw std::invalid_argument("DBSCAN min_pts must be >= 1");
    }
};

inline constexpr int kNoise = -1;

namespace detail {

/// Hash grid with cell side eps: all neighbors of a point lie in its own
/// cell or the 8 surrounding ones.
class EpsGrid {
public:
    EpsGrid(std::span<const ProjectedPoint> pts, double eps) : pts_(pts), eps_(eps), eps2_(eps * eps) {
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell(pts[i].x), cell(pts[i].y))].push_back(i);
    }

    /// Indices within eps (inclusive, self included), ascending.
    void neighbors(std::size_t i, std::vector<std::size_t>& out) const {
        out.clear();
        const auto cx = cell(pts_[i].x), cy = cell(pts_[i].y);
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                auto it = cells_.find(key(cx + dx, cy + dy));
                if (it == cells_.end()) continue;
                for (std::size_t j : it->second)
                    if (squared_distance(pts_[i], pts_[j]) <= eps2_) out.push_back(j);
            }
        }
        std::sort(out.begin(), out.end());
    }

private:
    using Cell = std::pair<std::int64_t, std::int64_t>;
    struct CellHash {
        std::size_t operator()(const Cell& c) const noexcept {
            return std::hash<std::uint64_t>{}(static_cast<std::uint64_t>(c.first) * 0x9E3779B97F4A7C15ULL ^
                                              static_cast<std::uint64_t>(c.second));
        }
    };

    std::int64_t cell(double v) const noexcept { return static_cast<std::int64_t>(std::floor(v / eps_)); }
    static Cell key(std::int64_t cx, std::int64_t cy) noexcept { return {cx, cy}; }

    std::span<const ProjectedPoint> pts_;
    double eps_, eps2_;
    std::unordered_map<Cell, std::vector<std::size_t>, CellHash> cells_;
};

} // namespace detail

/// Labels each point with a cluster index (0, 1, ... in order of the first
/// core point encountered) or kNoise. Neighborhoods are inclusive of the
/// point itself. Expansion visits neighbors in ascending index order, so a
/// border point belongs to the first cluster that reaches it.
inline std::vector<int> dbscan(std::span<const ProjectedPoint> pts, const DbscanParams& params) {
    params.validate();
    constexpr int kUnvisited = -2;
    std::vector<int> labels(pts.size(), kUnvisited);
    if (pts.empty()) return labels;
    for (const auto& p : pts)
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("DBSCAN: non-finite coordinate");

    const detail::EpsGrid grid(pts, params.eps_m);
    std::vector<std::size_t> nb, queue;
    int cluster = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (labels[i] != kUnvisited) continue;
        grid.neighbors(i, nb);
        if (nb.size() < params.min_pts) {
            labels[i] = kNoise;
            continue;
        }
        labels[i] = cluster;
        queue.assign(nb.begin(), nb.end());
        for (std::size_t k = 0; k < queue.size(); ++k) {
            const std::size_t j = queue[k];
            if (labels[j] == kNoise) labels[j] = cluster;
            if (labels[j] != kUnvisited) continue;
            labels[j] = cluster;
            grid.neighbors(j, nb);
            if (nb.size() >= params.min_pts) queue.insert(queue.end(), nb.begin(), nb.end());
        }
        ++cluster;
    }
    return labels;
}

struct ActivityCenter {
    ProjectedPoint center;
    std::size_t member_count = 0;
    std::size_t night_count = 0;

    bool operator==(const ActivityCenter&) const = default;
};

namespace detail {

struct ClusterStats {
    int label;
    ProjectedPoint origin;  // first member; sums are offsets from it
    double sx = 0, sy = 0;
    std::size_t members = 0;
    std::size_t night = 0;

    ProjectedPoint center() const {
        const double n = static_cast<double>(members);
        return {origin.x + sx / n, origin.y + sy / n};
    }
};

inline std::vector<ClusterStats> cluster_stats(std::span<const ProjectedPoint> pts, std::span<const int> labels,
                                               const std::vector<bool>& night) {
    int n_clusters = 0;
    for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
    std::vector<ClusterStats> stats(static_cast<std::size_t>(n_clusters));
    for (int c = 0; c < n_clusters; ++c) stats[static_cast<std::size_t>(c)].label = c;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (labels[i] < 0) continue;
        auto& s = stats[static_cast<std::size_t>(labels[i])];
        if (s.members == 0) s.origin = pts[i];
        s.sx += pts[i].x - s.origin.x;
        s.sy += pts[i].y - s.origin.y;
        ++s.members;
        if (night[i]) ++s.night;
    }
    return stats;
}

} // namespace detail

/// One center per DBSCAN cluster over all of the user's samples, ordered by
/// descending member_count then ascending cluster index.
inline std::vector<ActivityCenter> activity_centers(const Trajectory& traj, const DbscanParams& params,
                                                    const NightWindow& night) {
    const auto pts = projected_samples(traj);
    const auto labels = dbscan(pts, params);
    std::vector<bool> is_night(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) is_night[i] = night.contains(traj.samples[i].timestamp);
    auto stats = detail::cluster_stats(pts, labels, is_night);
    std::stable_sort(stats.begin(), stats.end(),
                     [](const auto& a, const auto& b) { return a.members > b.members; });
    std::vector<ActivityCenter> out;
    out.reserve(stats.size());
    for (const auto& s : stats) out.push_back({s.center(), s.members, s.night});
    return out;
}

enum class HomeMode {
    NightClusters,  // DBSCAN over night-window samples only
    Centers,        // all-hours centers, pick the one with most night visits
};

inline HomeMode parse_home_mode(const std::string& s) {
    if (s == "night") return HomeMode::NightClusters;
    if (s == "centers") return HomeMode::Centers;
    throw ConfigError("home_mode must be 'night' or 'centers', got '" + s + "'");
}

inline std::string to_string(HomeMode m) { return m == HomeMode::NightClusters ? "night" : "centers"; }

struct HomeDetection {
    std::string user_id;
    std::optional<ActivityCenter> home;
};

/// Night-cluster mode: DBSCAN on the night-window samples; the largest
/// cluster is home. Ties go to the candidate with more all-hours samples
/// within eps of its centroid, then to the lower cluster index.
inline HomeDetection detect_home(const Trajectory& traj, const DbscanParams& params, const NightWindow& night,
                                 HomeMode mode = HomeMode::NightClusters) {
    params.validate();
    HomeDetection out{traj.user_id, std::nullopt};
    if (traj.samples.empty()) return out;
    const auto all = projected_samples(traj);

    if (mode == HomeMode::Centers) {
        const auto centers = activity_centers(traj, params, night);
        const ActivityCenter* best = nullptr;
        for (const auto& c : centers) {
            if (c.night_count == 0) continue;
            if (!best || c.night_count > best->night_count ||
                (c.night_count == best->night_count && c.member_count > best->member_count))
                best = &c;
        }
        if (best) out.home = *best;
        return out;
    }

    std::vector<ProjectedPoint> night_pts;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (night.contains(traj.samples[i].timestamp)) night_pts.push_back(all[i]);
    const auto labels = dbscan(night_pts, params);
    const auto stats = detail::cluster_stats(night_pts, labels, std::vector<bool>(night_pts.size(), true));
    if (stats.empty()) return out;

    const double eps2 = params.eps_m * params.eps_m;
    auto support = [&](const ProjectedPoint& c) {
        return static_cast<std::size_t>(
            std::count_if(all.begin(), all.end(), [&](const ProjectedPoint& p) { return squared_distance(p, c) <= eps2; }));
    };
    std::size_t best = 0;
    std::size_t best_support = support(stats[0].center());
    for (std::size_t k = 1; k < stats.size(); ++k) {
        if (stats[k].members < stats[best].members) continue;
        const std::size_t s = support(stats[k].center());
        if (stats[k].members > stats[best].members || s > best_support) {
            best = k;
            best_support = s;
        }
    }
    out.home = ActivityCenter{stats[best].center(), stats[best].members, stats[best].night};
    return out;
}

/// Activity centers and detected home of one user.
struct UserCenters {
    std::string user_id;
    std::vector<ActivityCenter> centers;
    std::optional<ActivityCenter> home;

    bool operator==(const UserCenters&) const = default;
};

/// Average number of activity centers per user over each UTC month of the
/// window, clustering the cumulative sample set up to the month's end.
inline std::vector<MonthlyValue> monthly_cumulative_center_count(std::span<const Trajectory> trajs,
                                                                 const TimeWindow& window, const DbscanParams& params,
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
            const auto labels = dbscan(std::span<const ProjectedPoint>(projected[i].data(), upto), params);
            int n = 0;
            for (int l : labels) n = std::max(n, l + 1);
            sum += n;
            ++v.n_users;
        }
        if (v.n_users > 0) v.mean = sum / static_cast<double>(v.n_users);
        out.push_back(v);
    }
    return out;
}

/// GeoJSON FeatureCollection of WGS84 points. Activity centers carry
/// is_home=false and a rank; the detected home is a separate feature with
/// is_home=true. Projected x/y are kept so the checkpoint re-reads exactly.
inline void write_centers_geojson(std::ostream& out, std::span<const UserCenters> users, const nlohmann::ordered_json& meta) {
    nlohmann::ordered_json features = nlohmann::ordered_json::array();
    auto feature = [](const std::string& uid, const ActivityCenter& c, bool is_home, std::size_t rank) {
        const GeoPoint g = unproject_albers(c.center);
        nlohmann::ordered_json props;
        props["user_id"] = uid;
        props["member_count"] = c.member_count;
        props["night_count"] = c.night_count;
        props["is_home"] = is_home;
        props["rank"] = rank;
        props["x"] = c.center.x;
        props["y"] = c.center.y;
        nlohmann::ordered_json f;
        f["type"] = "Feature";
        f["geometry"] = {{"type", "Point"}, {"coordinates", {g.lon, g.lat}}};
        f["properties"] = props;
        return f;
    };
    for (const auto& u : users) {
        for (std::size_t k = 0; k < u.centers.size(); ++k) features.push_back(feature(u.user_id, u.centers[k], false, k));
        if (u.home) features.push_back(feature(u.user_id, *u.home, true, 0));
    }
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& u : users) ids.push_back(u.user_id);
    nlohmann::ordered_json doc;
    doc["type"] = "FeatureCollection";
    doc["metadata"] = meta;
    doc["user_ids"] = std::move(ids);
    doc["features"] = std::move(features);
    out << doc.dump() << '\n';
}

struct CentersFile {
    nlohmann::json meta;
    std::vector<UserCenters> users;  // in file order
};

inline CentersFile read_centers_geojson(std::istream& in) {
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("centers GeoJSON: ") + e.what());
    }
    CentersFile f;
    f.meta = doc.value("metadata", nlohmann::json::object());
    try {
        std::unordered_map<std::string, std::size_t> slot;
        for (const auto& id : doc.value("user_ids", nlohmann::json::array())) {
            slot.emplace(id.get<std::string>(), f.users.size());
            f.users.push_back({id.get<std::string>(), {}, std::nullopt});
        }
        for (const auto& feat : doc.at("features")) {
            const auto& p = feat.at("properties");
            const std::string uid = p.at("user_id").get<std::string>();
            auto [it, fresh] = slot.emplace(uid, f.users.size());
            if (fresh) f.users.push_back({uid, {}, std::nullopt});
            UserCenters& user = f.users[it->second];
            ActivityCenter c{{p.at("x").get<double>(), p.at("y").get<double>()},
                             p.at("member_count").get<std::size_t>(),
                             p.at("night_count").get<std::size_t>()};
            if (p.at("is_home").get<bool>()) {
                user.home = c;
            } else {
                user.centers.push_back(c);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("centers GeoJSON: ") + e.what());
    }
    return f;
}

} // namespace mobiscope
