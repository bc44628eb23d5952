#pragma once

// Shared generators and fixtures for the unit tests.

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mobiscope.hpp"

namespace testing_support {

using namespace mobiscope;

inline std::vector<ProjectedPoint> random_points(SplitMix64& rng, std::size_t n, double spread, double cx = 0,
                                                 double cy = 0) {
    std::vector<ProjectedPoint> pts(n);
    for (auto& p : pts) p = {cx + rng.uniform(-spread, spread), cy + rng.uniform(-spread, spread)};
    return pts;
}

/// Points scattered around a handful of blobs, so DBSCAN has real clusters,
/// border points and noise.
inline std::vector<ProjectedPoint> blobby_points(SplitMix64& rng, std::size_t n, double scale) {
    const std::size_t n_blobs = 1 + rng.below(5);
    std::vector<ProjectedPoint> centers = random_points(rng, n_blobs, 10 * scale);
    std::vector<ProjectedPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() < 0.2) {
            pts.push_back({rng.uniform(-12 * scale, 12 * scale), rng.uniform(-12 * scale, 12 * scale)});
        } else {
            const auto& c = centers[rng.below(n_blobs)];
            pts.push_back({rng.normal(c.x, scale), rng.normal(c.y, scale)});
        }
    }
    return pts;
}

inline Trajectory trajectory_at(const std::string& user, std::span<const GeoPoint> pts, std::int64_t t0 = 1357000000,
                                std::int64_t step = 3600) {
    Trajectory t;
    t.user_id = user;
    t.profile_name = "Test User";
    for (std::size_t i = 0; i < pts.size(); ++i) t.samples.push_back({pts[i], t0 + static_cast<std::int64_t>(i) * step, {}});
    return t;
}

/// Continuous three-segment power law through (lower, 1) evaluated at `n`
/// log-spaced radii over [lower, upper), each value scaled by (1 + noise * N(0,1)).
/// Returned as a density whose bin centers are the evaluation radii.
inline LogLogDensity planted_density(SplitMix64& rng, std::size_t n, std::span<const double> bounds_km,
                                     std::span<const double> slopes, double noise) {
    LogLogDensity d;
    const double lo = std::log10(bounds_km.front()), hi = std::log10(bounds_km.back());
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::pow(10.0, lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
        double log_density = 0;
        for (std::size_t s = 0; s < slopes.size(); ++s) {
            const double a = bounds_km[s], b = bounds_km[s + 1];
            if (r <= a) break;
            log_density += slopes[s] * (std::log10(std::min(r, b)) - std::log10(a));
        }
        d.centers.push_back(r);
        d.density.push_back(std::pow(10.0, log_density) * (1 + noise * rng.normal(0, 1)));
        d.counts.push_back(1);
    }
    d.n_values = n;
    return d;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mobiscope_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace testing_support
