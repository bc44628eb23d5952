#pragma once

// Synthetic population with planted ground truth: reference tables, posts
// and the truth file the pipeline is scored against.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <absl/time/civil_time.h>
#include <absl/time/time.h>
#include <json.hpp>

#include "mobiscope/clustering.hpp"
#include "mobiscope/demographics.hpp"
#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/ingest.hpp"
#include "mobiscope/mobility.hpp"
#include "mobiscope/rng.hpp"
#include "mobiscope/time.hpp"

namespace mobiscope {

// ------------------------------------------------------------ planted gyradius law

/// Continuous density over gyradius (km) made of power-law pieces
/// C_k r^slope_k on [bounds[k], bounds[k+1]).
struct PiecewisePowerLaw {
    std::array<double, 4> bounds_km{0.1, 25, 1000, 2000};
    std::array<double, 3> slopes{-0.02, -0.99, -8.87};

    /// Integral of r^a over [lo, hi].
    static double power_integral(double a, double lo, double hi) {
        if (std::abs(a + 1) < 1e-12) return std::log(hi / lo);
        return (std::pow(hi, a + 1) - std::pow(lo, a + 1)) / (a + 1);
    }

    /// Multipliers C_k making the density continuous, with C_0 = 1.
    std::array<double, 3> coefficients() const {
        std::array<double, 3> c{1, 0, 0};
        for (std::size_t k = 1; k < 3; ++k)
            c[k] = c[k - 1] * std::pow(bounds_km[k], slopes[k - 1]) / std::pow(bounds_km[k], slopes[k]);
        return c;
    }

    std::array<double, 3> segment_masses() const {
        const auto c = coefficients();
        std::array<double, 3> m{};
        double total = 0;
        for (std::size_t k = 0; k < 3; ++k) total += m[k] = c[k] * power_integral(slopes[k], bounds_km[k], bounds_km[k + 1]);
        for (auto& v : m) v /= total;
        return m;
    }

    /// Normalized density at r (km); 0 outside the support.
    double pdf(double r_km) const {
        if (!(r_km >= bounds_km[0]) || !(r_km < bounds_km[3])) return 0;
        const auto c = coefficients();
        double total = 0;
        for (std::size_t k = 0; k < 3; ++k) total += c[k] * power_integral(slopes[k], bounds_km[k], bounds_km[k + 1]);
        std::size_t k = r_km < bounds_km[1] ? 0 : r_km < bounds_km[2] ? 1 : 2;
        return c[k] * std::pow(r_km, slopes[k]) / total;
    }

    /// Inverse CDF of the mixture that puts weight w[k] on segment k, each
    /// segment keeping its power-law shape.
    double quantile(double u, const std::array<double, 3>& w) const {
        u = std::clamp(u, 0.0, 1.0);
        double acc = 0;
        std::size_t k = 0;
        while (k < 2 && (w[k] <= 0 || u > acc + w[k])) {
            acc += w[k];
            ++k;
        }
        const double v = w[k] > 0 ? std::clamp((u - acc) / w[k], 0.0, 1.0) : 0.0;
        const double lo = bounds_km[k], hi = bounds_km[k + 1], a = slopes[k];
        if (std::abs(a + 1) < 1e-12) return lo * std::pow(hi / lo, v);
        const double p = a + 1;
        return std::pow(std::pow(lo, p) + v * (std::pow(hi, p) - std::pow(lo, p)), 1 / p);
    }

    double quantile(double u) const { return quantile(u, segment_masses()); }

    std::size_t segment_of(double r_km) const { return r_km < bounds_km[1] ? 0 : r_km < bounds_km[2] ? 1 : 2; }
};

/// n stratified draws (one per quantile stratum midpoint) in seeded
/// random order, in kilometers.
inline std::vector<double> stratified_gyradius_targets(std::size_t n, const PiecewisePowerLaw& law,
                                                       const std::array<double, 3>& weights, SplitMix64& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = law.quantile((static_cast<double>(perm[i]) + 0.5) / static_cast<double>(n), weights);
    return out;
}

inline constexpr std::array<std::string_view, 3> kRegimeLabels = {"local", "regional", "national"};

// ------------------------------------------------------------ reference tables

struct ReferenceData {
    std::vector<TractPolygon> tracts;
    TractDemoTable demo;
    SurnameTable surnames;
    GenderTable genders;
    AgeTable ages;

    DemographicTables tables() const { return {surnames, demo, genders, ages, TractIndex(tracts)}; }
};

namespace detail {

inline std::string make_word(SplitMix64& rng, std::set<std::string>& used) {
    static constexpr std::string_view onsets[] = {"B", "D", "F", "G", "K", "L", "M", "N", "P", "R", "S", "T",
                                                  "V", "Z", "BR", "DR", "KR", "ST", "TH", "SH", "CH", "GR"};
    static constexpr std::string_view vowels[] = {"A", "E", "I", "O", "U", "AI", "OU", "EA"};
    static constexpr std::string_view codas[] = {"", "", "", "N", "R", "L", "S", "M", "K", "T"};
    for (;;) {
        std::string w;
        const std::size_t syllables = 2 + rng.below(2);
        for (std::size_t s = 0; s < syllables; ++s) {
            w += onsets[rng.below(std::size(onsets))];
            w += vowels[rng.below(std::size(vowels))];
        }
        w += codas[rng.below(std::size(codas))];
        if (used.insert(w).second) return w;
    }
}

inline std::string capitalized(std::string_view key) {
    std::string out(key);
    for (std::size_t i = 1; i < out.size(); ++i) out[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[i])));
    return out;
}

} // namespace detail

/// A 10 x 10 grid of square tracts over Chicago with spatially segregated
/// race counts, plus surname, gender and age tables built so that every
/// (race, gender, age group) label is reachable.
inline ReferenceData make_reference_data(std::uint64_t seed, int reference_year = 2013) {
    SplitMix64 rng(seed ^ 0x5EEDF00DULL);
    ReferenceData ref;
    constexpr int kSide = 10;
    constexpr double lon0 = -87.85, lat0 = 41.70, step = 0.03;
    for (int j = 0; j < kSide; ++j) {
        for (int i = 0; i < kSide; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "17031%02d%02d00", j, i);
            const double x0 = lon0 + step * i, y0 = lat0 + step * j;
            ref.tracts.push_back({id, {{{x0, y0}, {x0 + step, y0}, {x0 + step, y0 + step}, {x0, y0 + step}, {x0, y0}}}});

            const double north = j / double(kSide - 1), east = i / double(kSide - 1);
            const double dc = std::hypot(north - 0.5, east - 0.5);
            std::array<double, kRaceCount> share = {0.15 + 0.6 * north * east, 0.05 + 0.6 * (1 - north) * east,
                                                    0.05 + 0.45 * (1 - east) * (1 - 0.5 * north),
                                                    0.03 + 0.2 * std::max(0.0, 0.5 - dc), 0.03};
            for (auto& s : share) s *= rng.uniform(0.8, 1.2);
            const double sum = std::accumulate(share.begin(), share.end(), 0.0);
            TractDemo d;
            d.geoid = id;
            d.total_pop = 1500 + static_cast<std::int64_t>(rng.below(4500));
            std::int64_t assigned = 0;
            std::size_t largest = 0;
            for (std::size_t r = 0; r < kRaceCount; ++r) {
                d.pop_by_race[r] = std::max<std::int64_t>(
                    static_cast<std::int64_t>(std::floor(share[r] / sum * static_cast<double>(d.total_pop))),
                    d.total_pop / 50);
                assigned += d.pop_by_race[r];
                if (d.pop_by_race[r] > d.pop_by_race[largest]) largest = r;
            }
            d.pop_by_race[largest] += d.total_pop - assigned;
            ref.demo.add(std::move(d));
        }
    }

    std::set<std::string> used;
    for (std::size_t race = 0; race < kRaceCount; ++race) {
        for (int k = 0; k < 10; ++k) {
            RaceVector w{};
            const double dominant = rng.uniform(0.90, 0.98);
            for (std::size_t r = 0; r < kRaceCount; ++r) w[r] = r == race ? dominant : (1 - dominant) / 4;
            ref.surnames.add(detail::make_word(rng, used), w);
        }
    }
    for (int k = 0; k < 15; ++k) {
        RaceVector w{};
        for (auto& v : w) v = rng.uniform(0.05, 1.0);
        ref.surnames.add(detail::make_word(rng, used), w);
    }

    const int y_le20_lo = reference_year - 20, y_mid_lo = reference_year - 60, y_min = reference_year - 100;
    const std::array<std::pair<int, int>, kAgeGroupCount> ranges = {
        std::pair{y_le20_lo, reference_year - 1}, std::pair{y_mid_lo, y_le20_lo - 1}, std::pair{y_min, y_mid_lo - 1}};
    auto add_ages = [&](const std::string& name, const std::array<double, kAgeGroupCount>& mass) {
        const double total = rng.uniform(2000, 20000);
        for (std::size_t g = 0; g < kAgeGroupCount; ++g) {
            const auto [lo, hi] = ranges[g];
            const int years = hi - lo + 1;
            for (int y = lo; y <= hi; y += 5) {
                const double c = total * mass[g] * 5 / years * rng.uniform(0.8, 1.2);
                ref.ages.add(name, y, static_cast<std::int64_t>(std::llround(c)));
            }
        }
    };
    auto add_gender = [&](const std::string& name, std::optional<Gender> g) {
        const auto total = static_cast<std::int64_t>(rng.uniform(1000, 50000));
        if (!g) {
            ref.genders.add({name, total, total});
            return;
        }
        const auto major = static_cast<std::int64_t>(std::llround(static_cast<double>(total) * rng.uniform(0.95, 0.99)));
        const auto minor = total - major;
        ref.genders.add({name, *g == Gender::Male ? major : minor, *g == Gender::Male ? minor : major});
    };
    for (Gender g : {Gender::Male, Gender::Female}) {
        for (std::size_t a = 0; a < kAgeGroupCount; ++a) {
            for (int k = 0; k < 6; ++k) {
                const auto name = detail::make_word(rng, used);
                add_gender(name, g);
                std::array<double, kAgeGroupCount> mass{};
                const double dominant = rng.uniform(0.85, 0.95);
                for (std::size_t b = 0; b < kAgeGroupCount; ++b) mass[b] = b == a ? dominant : (1 - dominant) / 2;
                add_ages(name, mass);
            }
        }
        for (int k = 0; k < 4; ++k) {
            const auto name = detail::make_word(rng, used);
            add_gender(name, g);
            add_ages(name, {0.45, 0.45, 0.10});
        }
    }
    for (std::size_t a = 0; a < kAgeGroupCount; ++a) {
        for (int k = 0; k < 2; ++k) {
            const auto name = detail::make_word(rng, used);
            add_gender(name, std::nullopt);
            std::array<double, kAgeGroupCount> mass{};
            for (std::size_t b = 0; b < kAgeGroupCount; ++b) mass[b] = b == a ? 0.9 : 0.05;
            add_ages(name, mass);
        }
    }
    for (int k = 0; k < 2; ++k) {
        const auto name = detail::make_word(rng, used);
        add_gender(name, std::nullopt);
        add_ages(name, {0.45, 0.45, 0.10});
    }
    return ref;
}

// ------------------------------------------------------------ spec and truth

struct SynthSpec {
    std::uint64_t seed = 20130101;
    std::size_t n_users = 500;
    double jitter_m = 25;
    bool single_center = false;  // every post at home
    std::size_t min_posts = 24;  // every user gets at least this many posts
    std::size_t min_home_night = 20, max_home_night = 40;
    std::size_t max_home_day = 10;
    std::size_t min_work_day = 25, max_work_day = 60;
    std::size_t max_work_night = 5;
    std::size_t max_secondary = 3;
    double pseudonym_fraction = 0.1;
    double gender_unknown_fraction = 0.05;
    double age_unknown_fraction = 0.15;
    std::array<double, kAgeGroupCount> age_weights{0.3, 0.6, 0.1};
    PiecewisePowerLaw gyradius;
    std::array<double, 3> regime_weights = PiecewisePowerLaw{}.segment_masses();
    double home_margin_m = 300;
    TimeWindow window;
    NightWindow night;
    BBox bbox;
    int reference_year = 2013;
    double age_threshold = 0.6;

    void validate() const {
        if (!(jitter_m >= 0) || !std::isfinite(jitter_m)) throw ConfigError("synth: jitter must be >= 0");
        if (min_home_night > max_home_night || min_work_day > max_work_day)
            throw ConfigError("synth: post-count ranges must have min <= max");
        double sum = 0;
        for (double w : regime_weights) {
            if (!(w >= 0)) throw ConfigError("synth: regime weights must be >= 0");
            sum += w;
        }
        if (std::abs(sum - 1) > 1e-9) throw ConfigError("synth: regime weights must sum to 1");
        for (double f : {pseudonym_fraction, gender_unknown_fraction, age_unknown_fraction})
            if (!(f >= 0 && f <= 1)) throw ConfigError("synth: fractions must lie in [0, 1]");
        if (window.end <= window.start) throw ConfigError("synth: empty time window");
        bbox.validate();
    }
};

struct TruthCenter {
    std::string kind;  // home, work, secondary
    GeoPoint point;
    std::size_t n_posts = 0;

    bool operator==(const TruthCenter&) const = default;
};

struct UserTruth {
    std::string user_id;
    std::string profile_name;
    GeoPoint home;
    ProjectedPoint home_xy;
    std::string home_geoid;
    std::vector<TruthCenter> centers;  // home first
    std::optional<Race> race;
    std::optional<Gender> gender;
    std::optional<AgeGroup> age_group;
    std::string regime;
    double target_gyradius_m = 0;
    double planted_gyradius_m = 0;  // noise-free gyradius of the center layout
    std::size_t n_posts = 0;

    bool operator==(const UserTruth&) const = default;
};

struct GroundTruth {
    nlohmann::json meta;
    std::vector<UserTruth> users;
};

struct SynthOutput {
    std::vector<PostRecord> posts;  // ascending timestamp
    GroundTruth truth;
};

namespace detail {

struct NameBuckets {
    // key: gender (0, 1, 2 = none) * 4 + age (0..2, 3 = none)
    std::map<int, std::vector<std::string>> forenames;

    static int key(std::optional<Gender> g, std::optional<AgeGroup> a) {
        return (g ? static_cast<int>(*g) : 2) * 4 + (a ? static_cast<int>(*a) : 3);
    }
};

inline NameBuckets bucket_forenames(const DemographicTables& tables, int reference_year, double threshold) {
    NameBuckets b;
    for (const auto& name : tables.genders.names()) {
        std::optional<Gender> g;
        if (auto c = infer_gender(name, tables.genders)) g = c->gender;
        std::optional<AgeGroup> a;
        if (auto c = infer_age_group(name, tables.ages, reference_year, threshold)) a = c->group;
        b.forenames[NameBuckets::key(g, a)].push_back(name);
    }
    return b;
}

inline double point_segment_distance(const ProjectedPoint& p, const ProjectedPoint& a, const ProjectedPoint& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, {a.x + t * dx, a.y + t * dy});
}

inline std::optional<GeoPoint> interior_point(const TractPolygon& poly, const TractIndex& index, double margin_m,
                                              SplitMix64& rng) {
    const BBox b = polygon_bounds(poly);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const GeoPoint p{rng.uniform(b.min_lon, b.max_lon), rng.uniform(b.min_lat, b.max_lat)};
        if (index.lookup(p) != poly.geoid) continue;
        const ProjectedPoint q = project_albers(p);
        bool ok = true;
        for (const Ring& ring : poly.rings)
            for (std::size_t i = 0; ok && i + 1 < ring.size(); ++i)
                ok = point_segment_distance(q, project_albers(ring[i]), project_albers(ring[i + 1])) >= margin_m;
        if (ok) return p;
    }
    return std::nullopt;
}

struct Layout {
    ProjectedPoint offset;  // from home, meters
    std::size_t n_day = 0, n_night = 0;
};

inline double layout_gyradius(std::span<const Layout> parts) {
    std::vector<ProjectedPoint> pts;
    std::vector<double> w;
    double n = 0, mx = 0, my = 0;
    for (const auto& p : parts) {
        const double c = static_cast<double>(p.n_day + p.n_night);
        n += c;
        mx += c * p.offset.x;
        my += c * p.offset.y;
    }
    if (n == 0) return 0;
    mx /= n;
    my /= n;
    double acc = 0;
    for (const auto& p : parts)
        acc += static_cast<double>(p.n_day + p.n_night) * squared_distance(p.offset, {mx, my});
    return std::sqrt(acc / n);
}

inline std::string pseudonym(SplitMix64& rng) {
    static constexpr std::string_view stems[] = {"xX_", "the_real_", "", "@", "DJ"};
    static constexpr std::string_view words[] = {"sunset", "windy", "lakeview", "bulls", "deepdish", "elTrain",
                                                 "gamer", "foodie", "runner", "beats"};
    std::string s(stems[rng.below(std::size(stems))]);
    s += words[rng.below(std::size(words))];
    s += std::to_string(10 + rng.below(990));
    if (s.starts_with("xX_")) s += "_Xx";
    return s;
}

/// Replaces the first plain vowel with an accented form that folds back to it.
inline std::string accented(const std::string& word) {
    static const std::map<char, std::string> accents = {
        {'a', "\xC3\xA1"}, {'e', "\xC3\xA9"}, {'i', "\xC3\xAD"}, {'o', "\xC3\xB6"}, {'u', "\xC3\xBC"}};
    for (std::size_t i = 1; i < word.size(); ++i)
        if (auto it = accents.find(word[i]); it != accents.end()) return word.substr(0, i) + it->second + word.substr(i + 1);
    return word;
}

} // namespace detail

/// Deterministic population for `spec` over `tables` (tract polygons,
/// demographics, surnames, forenames). Posts are returned in timestamp order.
inline SynthOutput generate(const SynthSpec& spec, const DemographicTables& tables) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    SynthOutput out;
    out.truth.meta = {{"seed", spec.seed},
                      {"n_users", spec.n_users},
                      {"jitter_m", spec.jitter_m},
                      {"single_center", spec.single_center},
                      {"min_posts", spec.min_posts},
                      {"regime_weights", spec.regime_weights},
                      {"planted_slopes", spec.gyradius.slopes},
                      {"planted_bounds_km", spec.gyradius.bounds_km},
                      {"timezone", spec.night.tz_name}};
    if (spec.n_users == 0) return out;

    std::vector<const TractDemo*> homes_pool;
    std::vector<const TractPolygon*> home_polys;
    std::vector<double> home_cum;
    for (const auto& poly : tables.tract_index.polygons()) {
        const TractDemo* d = tables.tracts.find(poly.geoid);
        if (!d || d->total_pop <= 0) continue;
        homes_pool.push_back(d);
        home_polys.push_back(&poly);
        home_cum.push_back((home_cum.empty() ? 0.0 : home_cum.back()) + static_cast<double>(d->total_pop));
    }
    if (homes_pool.empty()) throw GenerationError("synth: no tract has both a polygon and population");

    const auto buckets = detail::bucket_forenames(tables, spec.reference_year, spec.age_threshold);
    const auto surnames = tables.surnames.records();
    std::unordered_map<std::string, std::array<std::vector<std::size_t>, kRaceCount>> surname_by_tract;
    std::set<std::string> used_words;
    for (const auto& s : surnames) used_words.insert(s.surname);

    const auto targets_km = stratified_gyradius_targets(spec.n_users, spec.gyradius, spec.regime_weights, rng);
    const double night_len = (spec.night.end_sec - spec.night.start_sec + 86400) % 86400;
    const absl::CivilDay first_day(absl::ToCivilDay(absl::FromUnixSeconds(spec.window.start), spec.night.tz));
    const auto n_days = static_cast<std::uint64_t>((spec.window.end - spec.window.start) / 86400 + 1);

    auto draw_time = [&](bool at_night, const std::string& user) -> std::int64_t {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const absl::CivilDay day = first_day + static_cast<absl::civil_diff_t>(rng.below(n_days));
            const double offset = at_night ? spec.night.start_sec + rng.uniform() * night_len
                                           : spec.night.end_sec + rng.uniform() * (86400 - night_len);
            const absl::CivilSecond cs = absl::CivilSecond(day) + static_cast<absl::civil_diff_t>(offset);
            const std::int64_t t = absl::ToUnixSeconds(absl::FromCivil(cs, spec.night.tz));
            if (spec.window.contains(t) && spec.night.contains(t) == at_night) return t;
        }
        throw GenerationError("synth: could not place a post time for user " + user);
    };

    for (std::size_t u = 0; u < spec.n_users; ++u) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "u%06zu", u + 1);
        UserTruth truth;
        truth.user_id = idbuf;

        const auto pick = static_cast<std::size_t>(
            std::upper_bound(home_cum.begin(), home_cum.end(), rng.uniform() * home_cum.back()) - home_cum.begin());
        const std::size_t ti = std::min(pick, homes_pool.size() - 1);
        const TractDemo& tract = *homes_pool[ti];
        auto home = detail::interior_point(*home_polys[ti], tables.tract_index, spec.home_margin_m, rng);
        if (!home) throw GenerationError("synth: no interior home point in tract " + tract.geoid + " for user " + truth.user_id);
        truth.home = *home;
        truth.home_xy = project_albers(*home);
        truth.home_geoid = tract.geoid;

        // Planted labels, then names realizing them under the tables.
        std::string profile;
        if (rng.uniform() < spec.pseudonym_fraction) {
            profile = detail::pseudonym(rng);
        } else {
            double pick_r = rng.uniform() * static_cast<double>(tract.total_pop);
            std::size_t race = 0;
            while (race + 1 < kRaceCount && pick_r >= static_cast<double>(tract.pop_by_race[race])) {
                pick_r -= static_cast<double>(tract.pop_by_race[race]);
                ++race;
            }
            auto [it, fresh] = surname_by_tract.try_emplace(tract.geoid);
            if (fresh) {
                for (std::size_t s = 0; s < surnames.size(); ++s)
                    if (auto post = bisg_posterior(surnames[s], tract, tables.tracts.totals()))
                        it->second[static_cast<std::size_t>(post->argmax)].push_back(s);
            }
            const auto& sur_pool = it->second[race];
            if (sur_pool.empty())
                throw GenerationError("synth: user " + truth.user_id + ": no surname classifies as " +
                                      std::string(kRaceLabels[race]) + " in tract " + tract.geoid);
            truth.race = static_cast<Race>(race);

            std::optional<Gender> g;
            if (rng.uniform() >= spec.gender_unknown_fraction) g = rng.uniform() < 0.5 ? Gender::Male : Gender::Female;
            std::optional<AgeGroup> a;
            if (rng.uniform() >= spec.age_unknown_fraction) {
                double r = rng.uniform() * (spec.age_weights[0] + spec.age_weights[1] + spec.age_weights[2]);
                std::size_t k = 0;
                while (k + 1 < kAgeGroupCount && r >= spec.age_weights[k]) r -= spec.age_weights[k++];
                a = static_cast<AgeGroup>(k);
            }
            auto fb = buckets.forenames.find(detail::NameBuckets::key(g, a));
            if (fb == buckets.forenames.end() || fb->second.empty())
                throw GenerationError("synth: user " + truth.user_id + ": no forename with planted gender " +
                                      (g ? std::string(to_string(*g)) : "unidentified") + " and age group " +
                                      (a ? std::string(to_string(*a)) : "unidentified"));
            truth.gender = g;
            truth.age_group = a;

            std::string fore = detail::capitalized(fb->second[rng.below(fb->second.size())]);
            std::string sur = detail::capitalized(surnames[sur_pool[rng.below(sur_pool.size())]].surname);
            const double style = rng.uniform();
            if (style < 0.05) sur = detail::accented(sur);
            else if (style < 0.10) sur += "!";
            profile = fore + " ";
            if (rng.uniform() < 0.2) profile += detail::capitalized(detail::make_word(rng, used_words)) + " ";
            profile += sur;
            if (rng.uniform() < 0.1)
                for (auto& ch : profile) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
        truth.profile_name = profile;

        // Center layout in meters around home, scaled to the planted gyradius.
        const double target_m = targets_km[u] * 1000;
        const std::size_t regime = spec.gyradius.segment_of(targets_km[u]);
        truth.regime = std::string(kRegimeLabels[regime]);
        truth.target_gyradius_m = target_m;
        std::vector<detail::Layout> parts;
        parts.push_back({{0, 0},
                         spec.single_center ? 0 : static_cast<std::size_t>(rng.below(spec.max_home_day + 1)),
                         spec.min_home_night + static_cast<std::size_t>(rng.below(spec.max_home_night - spec.min_home_night + 1))});
        const std::size_t home_posts = parts[0].n_day + parts[0].n_night;
        if (spec.single_center && home_posts < spec.min_posts) parts[0].n_day += spec.min_posts - home_posts;
        if (!spec.single_center) {
            detail::Layout work;
            work.n_day = spec.min_work_day + static_cast<std::size_t>(rng.below(spec.max_work_day - spec.min_work_day + 1));
            work.n_night = static_cast<std::size_t>(rng.below(spec.max_work_night + 1));
            const double theta = rng.uniform(0, 2 * std::numbers::pi);
            double d_w = regime == 0 ? target_m * rng.uniform(0.5, 1.5) : rng.uniform(2000, 15000);
            work.offset = {d_w * std::cos(theta), d_w * std::sin(theta)};
            parts.push_back(work);

            const std::size_t k_lo = regime == 0 ? 0 : regime == 1 ? 1 : 2;
            const std::size_t k_hi = regime == 0 ? 2 : 3;
            const std::size_t lo = std::min(k_lo, spec.max_secondary), hi = std::min(k_hi, spec.max_secondary);
            const std::size_t n_sec = lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
            std::vector<detail::Layout> unit(n_sec);
            for (auto& s : unit)
                s.n_day = regime == 2 ? 15 + rng.below(21) : regime == 1 ? 5 + rng.below(16) : 3 + rng.below(10);

            auto inside = [&](const ProjectedPoint& off) {
                return spec.bbox.contains(unproject_albers({truth.home_xy.x + off.x, truth.home_xy.y + off.y}));
            };
            auto with_scale = [&](const std::vector<detail::Layout>& dirs, double s) {
                std::vector<detail::Layout> all = parts;
                for (const auto& v : dirs) all.push_back({{s * v.offset.x, s * v.offset.y}, v.n_day, 0});
                return all;
            };
            std::vector<detail::Layout> chosen;
            double chosen_scale = 0;
            bool solved = false;
            for (int attempt = 0; attempt < 200 && !solved; ++attempt) {
                for (auto& s : unit) {
                    const double th = rng.uniform(0, 2 * std::numbers::pi), m = rng.uniform(0.6, 1.4);
                    s.offset = {m * std::cos(th), m * std::sin(th)};
                }
                if (n_sec == 0) {
                    // Home and work only: the gyradius is linear in the work distance.
                    const double g1 = detail::layout_gyradius(parts) / std::hypot(parts[1].offset.x, parts[1].offset.y);
                    const double d = target_m / g1;
                    const double th = rng.uniform(0, 2 * std::numbers::pi);
                    parts[1].offset = {d * std::cos(th), d * std::sin(th)};
                    if (inside(parts[1].offset)) solved = true;
                    continue;
                }
                // g^2 is quadratic in the travel scale s; shrink the work
                // distance until the target is reachable.
                double a = 0, b = 0, c = 0;
                for (int shrink = 0; shrink < 80; ++shrink) {
                    const double g0 = std::pow(detail::layout_gyradius(with_scale(unit, 0)), 2);
                    const double g1 = std::pow(detail::layout_gyradius(with_scale(unit, 1)), 2);
                    const double g2 = std::pow(detail::layout_gyradius(with_scale(unit, 2)), 2);
                    c = g0;
                    a = (g2 - 2 * g1 + g0) / 2;
                    b = g1 - a - c;
                    if (c < target_m * target_m) break;
                    parts[1].offset = {parts[1].offset.x / 2, parts[1].offset.y / 2};
                }
                const double disc = b * b - 4 * a * (c - target_m * target_m);
                if (!(a > 0) || disc < 0) continue;
                const double s = (-b + std::sqrt(disc)) / (2 * a);
                chosen = unit;
                chosen_scale = s;
                solved = inside(parts[1].offset);
                for (const auto& v : unit) solved = solved && inside({s * v.offset.x, s * v.offset.y});
            }
            if (n_sec > 0) {
                if (chosen.empty()) throw GenerationError("synth: could not lay out centers for user " + truth.user_id);
                if (!solved) {
                    // Pull the travel centers in until all of them fall inside the bbox.
                    auto all_inside = [&](double s) {
                        for (const auto& v : chosen)
                            if (!inside({s * v.offset.x, s * v.offset.y})) return false;
                        return true;
                    };
                    while (chosen_scale > 1 && !all_inside(chosen_scale)) chosen_scale *= 0.95;
                }
                for (const auto& v : chosen)
                    parts.push_back({{chosen_scale * v.offset.x, chosen_scale * v.offset.y}, v.n_day, 0});
            } else if (!solved) {
                throw GenerationError("synth: could not lay out centers for user " + truth.user_id);
            }
        }
        truth.planted_gyradius_m = detail::layout_gyradius(parts);

        // Posts.
        static constexpr std::array<std::string_view, 3> kinds = {"home", "work", "secondary"};
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const auto& part = parts[p];
            const ProjectedPoint c{truth.home_xy.x + part.offset.x, truth.home_xy.y + part.offset.y};
            const GeoPoint cg = p == 0 ? truth.home : unproject_albers(c);
            truth.centers.push_back({std::string(kinds[std::min<std::size_t>(p, 2)]), cg, part.n_day + part.n_night});
            for (std::size_t k = 0; k < part.n_day + part.n_night; ++k) {
                const bool at_night = k < part.n_night;
                PostRecord rec;
                rec.user_id = truth.user_id;
                rec.profile_name = profile;
                rec.timestamp = draw_time(at_night, truth.user_id);
                GeoPoint g = cg;
                if (spec.jitter_m > 0) {
                    const double jx = rng.normal(0, spec.jitter_m), jy = rng.normal(0, spec.jitter_m);
                    g = unproject_albers({c.x + jx, c.y + jy});
                }
                rec.lon = g.lon;
                rec.lat = g.lat;
                if (rng.below(5) == 0) rec.text = "post " + std::to_string(k + 1) + " from " + std::string(kinds[std::min<std::size_t>(p, 2)]);
                out.posts.push_back(std::move(rec));
                ++truth.n_posts;
            }
        }
        out.truth.users.push_back(std::move(truth));
    }
    std::stable_sort(out.posts.begin(), out.posts.end(),
                     [](const PostRecord& a, const PostRecord& b) { return a.timestamp < b.timestamp; });
    return out;
}

// ------------------------------------------------------------ truth I/O

inline nlohmann::ordered_json to_json(const UserTruth& t) {
    nlohmann::ordered_json j;
    j["user_id"] = t.user_id;
    j["name"] = t.profile_name;
    j["home"] = {{"lon", t.home.lon}, {"lat", t.home.lat}, {"x", t.home_xy.x}, {"y", t.home_xy.y}, {"geoid", t.home_geoid}};
    nlohmann::ordered_json centers = nlohmann::ordered_json::array();
    for (const auto& c : t.centers)
        centers.push_back({{"kind", c.kind}, {"lon", c.point.lon}, {"lat", c.point.lat}, {"n_posts", c.n_posts}});
    j["centers"] = centers;
    j["race"] = t.race ? nlohmann::ordered_json(to_string(*t.race)) : nlohmann::ordered_json(nullptr);
    j["gender"] = t.gender ? nlohmann::ordered_json(to_string(*t.gender)) : nlohmann::ordered_json(nullptr);
    j["age_group"] = t.age_group ? nlohmann::ordered_json(to_string(*t.age_group)) : nlohmann::ordered_json(nullptr);
    j["regime"] = t.regime;
    j["target_gyradius_m"] = t.target_gyradius_m;
    j["planted_gyradius_m"] = t.planted_gyradius_m;
    j["n_posts"] = t.n_posts;
    return j;
}

/// JSONL: {"_meta": {...}} then one user per line.
inline void write_truth(std::ostream& out, const GroundTruth& truth) {
    out << nlohmann::json{{"_meta", truth.meta}}.dump() << '\n';
    for (const auto& u : truth.users) out << to_json(u).dump() << '\n';
}

inline GroundTruth read_truth(std::istream& in) {
    GroundTruth truth;
    std::string line;
    std::size_t line_no = 0;
    auto label = [](const nlohmann::json& v, auto parse, const char* what) {
        using T = typename decltype(parse(std::string_view{}))::value_type;
        if (v.is_null()) return std::optional<T>{};
        auto r = parse(v.get<std::string>());
        if (!r) throw FormatError(std::string("truth file: bad ") + what + " label");
        return r;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw FormatError("truth file: line " + std::to_string(line_no) + " is not a JSON object");
        if (j.contains("_meta")) {
            truth.meta = j["_meta"];
            continue;
        }
        try {
            UserTruth t;
            t.user_id = j.at("user_id").get<std::string>();
            t.profile_name = j.at("name").get<std::string>();
            const auto& h = j.at("home");
            t.home = {h.at("lon").get<double>(), h.at("lat").get<double>()};
            t.home_xy = {h.at("x").get<double>(), h.at("y").get<double>()};
            t.home_geoid = h.at("geoid").get<std::string>();
            for (const auto& c : j.at("centers"))
                t.centers.push_back({c.at("kind").get<std::string>(), {c.at("lon").get<double>(), c.at("lat").get<double>()},
                                     c.at("n_posts").get<std::size_t>()});
            t.race = label(j.at("race"), parse_race, "race");
            t.gender = label(j.at("gender"), parse_gender, "gender");
            t.age_group = label(j.at("age_group"), parse_age_group, "age");
            t.regime = j.at("regime").get<std::string>();
            t.target_gyradius_m = j.at("target_gyradius_m").get<double>();
            t.planted_gyradius_m = j.at("planted_gyradius_m").get<double>();
            t.n_posts = j.at("n_posts").get<std::size_t>();
            truth.users.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("truth file: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (in.bad()) throw Error("truth file: read error");
    return truth;
}

// ------------------------------------------------------------ scoring

struct AccuracyReport {
    std::size_t n_users = 0;
    std::size_t n_classifiable = 0;  // names that pass parse_name
    double home_recovery_rate = 1;
    double race_accuracy = 1;
    double gender_accuracy = 1;
    double age_accuracy = 1;
    std::array<double, 4> gyradius_within{1, 1, 1, 1};  // relative error <= 1%, 5%, 10%, 25%

    static constexpr std::array<double, 4> kGyradiusTolerances{0.01, 0.05, 0.10, 0.25};

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["n_users"] = n_users;
        j["n_classifiable"] = n_classifiable;
        nlohmann::ordered_json rates;
        rates["home_recovery_rate"] = home_recovery_rate;
        rates["race_accuracy"] = race_accuracy;
        rates["gender_accuracy"] = gender_accuracy;
        rates["age_accuracy"] = age_accuracy;
        rates["gyradius_within_1pct"] = gyradius_within[0];
        rates["gyradius_within_5pct"] = gyradius_within[1];
        rates["gyradius_within_10pct"] = gyradius_within[2];
        rates["gyradius_within_25pct"] = gyradius_within[3];
        j["rates"] = rates;
        return j;
    }
};

/// Scores pipeline outputs against the truth. Every input must cover
/// exactly the truth's users. Rates over an empty population are 1.
inline AccuracyReport score(std::span<const MobilityMetrics> metrics, std::span<const UserCenters> centers,
                            std::span<const DemographicProfile> profiles, const GroundTruth& truth, double eps_m) {
    std::map<std::string, const UserTruth*> by_user;
    for (const auto& u : truth.users) by_user.emplace(u.user_id, &u);
    auto check = [&](auto&& ids, const char* what) {
        std::set<std::string> seen;
        for (const auto& id : ids) {
            if (!by_user.count(id)) throw std::invalid_argument(std::string("score: ") + what + " has user " + id + " absent from truth");
            seen.insert(id);
        }
        if (seen.size() != by_user.size())
            throw std::invalid_argument(std::string("score: ") + what + " covers " + std::to_string(seen.size()) +
                                        " of " + std::to_string(by_user.size()) + " truth users");
    };
    auto ids_of = [](auto rows) {
        std::vector<std::string> v;
        for (const auto& r : rows) v.push_back(r.user_id);
        return v;
    };
    check(ids_of(metrics), "metrics");
    check(ids_of(centers), "centers");
    check(ids_of(profiles), "profiles");

    AccuracyReport r;
    r.n_users = by_user.size();
    if (r.n_users == 0) return r;
    const double n = static_cast<double>(r.n_users);

    std::size_t home_hits = 0;
    for (const auto& c : centers)
        if (c.home && distance(c.home->center, by_user[c.user_id]->home_xy) <= eps_m) ++home_hits;
    r.home_recovery_rate = static_cast<double>(home_hits) / n;

    std::size_t race_ok = 0, gender_ok = 0, age_ok = 0;
    for (const auto& p : profiles) {
        const UserTruth& t = *by_user[p.user_id];
        if (!parse_name(t.profile_name)) continue;
        ++r.n_classifiable;
        race_ok += p.race == t.race;
        gender_ok += p.gender == t.gender;
        age_ok += p.age_group == t.age_group;
    }
    if (r.n_classifiable > 0) {
        const double m = static_cast<double>(r.n_classifiable);
        r.race_accuracy = static_cast<double>(race_ok) / m;
        r.gender_accuracy = static_cast<double>(gender_ok) / m;
        r.age_accuracy = static_cast<double>(age_ok) / m;
    }

    std::array<std::size_t, 4> within{};
    for (const auto& m : metrics) {
        const double planted = by_user[m.user_id]->planted_gyradius_m;
        const double err = planted > 0 ? std::abs(m.gyradius_m - planted) / planted : (m.gyradius_m == 0 ? 0.0 : INFINITY);
        for (std::size_t k = 0; k < 4; ++k) within[k] += err <= AccuracyReport::kGyradiusTolerances[k];
    }
    for (std::size_t k = 0; k < 4; ++k) r.gyradius_within[k] = static_cast<double>(within[k]) / n;
    return r;
}

} // namespace mobiscope
