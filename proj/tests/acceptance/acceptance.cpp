// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "../support.hpp"

using namespace mobiscope;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& why) {
        if (!ok && pass) detail = why;
        pass = pass && ok;
    }
};

// 1. Gyradius against a two-pass evaluation.

double two_pass_gyradius(const std::vector<ProjectedPoint>& pts) {
    long double mx = 0, my = 0;
    for (const auto& p : pts) mx += p.x, my += p.y;
    mx /= pts.size();
    my /= pts.size();
    long double ss = 0;
    for (const auto& p : pts) ss += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
    return static_cast<double>(std::sqrt(ss / pts.size()));
}

Outcome gyradius_oracle() {
    Outcome o;
    SplitMix64 rng(101);
    double worst = 0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 3 + rng.below(498);
        const GeoPoint c{rng.uniform(-120, -75), rng.uniform(28, 47)};
        const double spread = std::pow(10.0, rng.uniform(-3, 1));
        Trajectory t;
        t.user_id = "u";
        std::vector<ProjectedPoint> xy;
        for (std::size_t i = 0; i < n; ++i) {
            const GeoPoint g{c.lon + rng.uniform(-spread, spread), c.lat + rng.uniform(-spread, spread) / 2};
            t.samples.push_back({g, static_cast<std::int64_t>(i), {}});
            xy.push_back(project_albers(g));
        }
        const double got = radius_of_gyration(t), want = two_pass_gyradius(xy);
        worst = std::max(worst, std::abs(got - want) / want);
    }
    o.require(worst <= 1e-9, "relative error " + num(worst));
    const std::vector<ProjectedPoint> a = {{0, 0}, {5, 0}}, b = {{1, 1}, {4, 5}}, c = {{-3, 7}, {-3, 7.5}};
    o.require(radius_of_gyration(a) == 2.5 && radius_of_gyration(b) == 2.5 && radius_of_gyration(c) == 0.25,
              "two-point case is not d/2");
    if (o.pass) o.detail = "1000 trajectories, worst relative error " + num(worst);
    return o;
}

// 2. DBSCAN against a naive reference.

double sq(const ProjectedPoint& a, const ProjectedPoint& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

std::vector<int> naive_dbscan(const std::vector<ProjectedPoint>& pts, double eps, std::size_t min_pts) {
    const std::size_t n = pts.size();
    auto near = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j)
            if (sq(pts[i], pts[j]) <= eps * eps) out.push_back(j);
        return out;
    };
    std::vector<int> label(n, -2);
    int c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != -2) continue;
        auto seeds = near(i);
        if (seeds.size() < min_pts) {
            label[i] = kNoise;
            continue;
        }
        label[i] = c;
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const auto j = seeds[k];
            if (label[j] == kNoise) label[j] = c;
            if (label[j] != -2) continue;
            label[j] = c;
            auto more = near(j);
            if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
        }
        ++c;
    }
    return label;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> fwd, back;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == kNoise) != (b[i] == kNoise)) return false;
        if (a[i] == kNoise) continue;
        auto [f, fi] = fwd.emplace(a[i], b[i]);
        auto [r, ri] = back.emplace(b[i], a[i]);
        if (f->second != b[i] || r->second != a[i]) return false;
    }
    return true;
}

std::vector<bool> core_flags(const std::vector<ProjectedPoint>& pts, double eps, std::size_t min_pts) {
    std::vector<bool> core(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t k = 0;
        for (const auto& q : pts) k += sq(pts[i], q) <= eps * eps;
        core[i] = k >= min_pts;
    }
    return core;
}

Outcome dbscan_equivalence() {
    Outcome o;
    SplitMix64 rng(202);
    std::size_t runs = 0;
    for (int set = 0; set < 50; ++set) {
        const auto pts = testing_support::blobby_points(rng, 50 + rng.below(451), 80 + rng.uniform(0, 200));
        for (double eps : {50.0, 100.0, 500.0}) {
            for (std::size_t min_pts : {3u, 5u}) {
                const DbscanParams params{eps, min_pts};
                const auto labels = dbscan(pts, params);
                o.require(same_partition(labels, naive_dbscan(pts, eps, min_pts)),
                          "partition differs from naive at set " + std::to_string(set));
                const auto core = core_flags(pts, eps, min_pts);
                for (int s = 0; s < 5; ++s) {
                    std::vector<std::size_t> perm(pts.size());
                    std::iota(perm.begin(), perm.end(), 0);
                    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
                    std::vector<ProjectedPoint> shuffled(pts.size());
                    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = pts[perm[i]];
                    const auto sl = dbscan(shuffled, params);
                    // Noise status and the clustering of core points must not move.
                    std::vector<int> core_a, core_b;
                    bool noise_same = true;
                    for (std::size_t i = 0; i < perm.size(); ++i) {
                        noise_same = noise_same && (sl[i] == kNoise) == (labels[perm[i]] == kNoise);
                        if (core[perm[i]]) {
                            core_a.push_back(labels[perm[i]]);
                            core_b.push_back(sl[i]);
                        }
                    }
                    o.require(noise_same && same_partition(core_a, core_b),
                              "core/noise status changed under shuffle at set " + std::to_string(set));
                }
                ++runs;
            }
        }
    }
    if (o.pass) o.detail = std::to_string(runs) + " configurations, 5 shuffles each";
    return o;
}

// 3. Home recovery on planted users.

constexpr std::int64_t kJan1Local0000 = 1357020000;  // 2013-01-01 00:00 CST
constexpr std::int64_t kDay = 86400;

double recovery_rate(double jitter, std::uint64_t seed) {
    SplitMix64 rng(seed);
    const DbscanParams params{100, 3};
    std::size_t hit = 0;
    const int users = 500;
    for (int u = 0; u < users; ++u) {
        const ProjectedPoint home = project_albers({rng.uniform(-88, -87.5), rng.uniform(41.7, 42.0)});
        const ProjectedPoint decoy{home.x + rng.uniform(1000, 20000) * (rng.uniform() < 0.5 ? -1 : 1),
                                   home.y + rng.uniform(-20000, 20000)};
        Trajectory t;
        t.user_id = "u" + std::to_string(u);
        auto post = [&](const ProjectedPoint& at, std::int64_t ts) {
            t.samples.push_back({unproject_albers({rng.normal(at.x, jitter), rng.normal(at.y, jitter)}), ts, {}});
        };
        const int night = 20 + static_cast<int>(rng.below(21));
        for (int i = 0; i < night; ++i) {
            // 20:00-07:59 local
            const std::int64_t off = (20 * 3600 + static_cast<std::int64_t>(rng.below(12 * 3600))) % kDay;
            post(home, kJan1Local0000 + static_cast<std::int64_t>(rng.below(300)) * kDay + off);
        }
        // The decoy gets more posts than home, all during the day.
        for (int i = 0; i < night + 10 + static_cast<int>(rng.below(30)); ++i)
            post(decoy, kJan1Local0000 + static_cast<std::int64_t>(rng.below(300)) * kDay + 9 * 3600 +
                            static_cast<std::int64_t>(rng.below(10 * 3600)));
        std::sort(t.samples.begin(), t.samples.end(),
                  [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        const auto h = detect_home(t, params, NightWindow{});
        hit += h.home && distance(h.home->center, home) <= params.eps_m;
    }
    return static_cast<double>(hit) / users;
}

Outcome home_recovery() {
    Outcome o;
    const double jittered = recovery_rate(100.0 / 4, 303), exact = recovery_rate(0, 304);
    o.require(jittered >= 0.95, "jittered recovery " + num(jittered));
    o.require(exact == 1.0, "zero-jitter recovery " + num(exact));
    o.detail = "jitter eps/4: " + num(jittered) + ", jitter 0: " + num(exact);
    return o;
}

// 4. BISG.

Outcome bisg() {
    Outcome o;
    SplitMix64 rng(404);
    double worst = 0;
    std::size_t stable = 0;
    for (int k = 0; k < 1000; ++k) {
        RaceVector prior{};
        for (auto& p : prior) p = rng.uniform() < 0.2 ? 0 : rng.uniform();
        prior[rng.below(kRaceCount)] += 0.01;
        const double s = std::accumulate(prior.begin(), prior.end(), 0.0);
        for (auto& p : prior) p /= s;
        TractDemo tract{"T", {}, 0};
        for (auto& c : tract.pop_by_race) c = rng.uniform() < 0.2 ? 0 : static_cast<std::int64_t>(rng.below(5000));
        tract.pop_by_race[rng.below(kRaceCount)] += 1;
        tract.total_pop = std::accumulate(tract.pop_by_race.begin(), tract.pop_by_race.end(), std::int64_t{0});
        NationalTotals national;
        for (auto& v : national.by_race) v = 1000 + static_cast<double>(rng.below(1000000));
        const auto post = bisg_posterior(prior, tract, national);
        if (!post) {
            // Only when prior and tract share no race.
            bool overlap = false;
            for (std::size_t r = 0; r < kRaceCount; ++r) overlap = overlap || (prior[r] > 0 && tract.pop_by_race[r] > 0);
            o.require(!overlap, "no posterior on case " + std::to_string(k));
            ++stable;
            continue;
        }
        worst = std::max(worst, std::abs(std::accumulate(post->prob.begin(), post->prob.end(), 0.0) - 1));
        TractDemo scaled = tract;
        const auto f = static_cast<std::int64_t>(2 + rng.below(50));
        for (auto& c : scaled.pop_by_race) c *= f;
        scaled.total_pop *= f;
        const auto post2 = bisg_posterior(prior, scaled, national);
        stable += post2 && classify_race(*post2) == classify_race(*post);
    }
    o.require(worst <= 1e-12, "posterior sum off by " + num(worst));
    o.require(stable == 1000, "scaling changed the class in " + std::to_string(1000 - stable) + " cases");
    const TractDemo hand{"H", {1, 4, 0, 0, 0}, 5};
    const NationalTotals nat{{10, 10, 10, 10, 10}};
    const auto h = bisg_posterior(RaceVector{0.5, 0.5, 0, 0, 0}, hand, nat);
    o.require(h && h->prob == RaceVector{0.2, 0.8, 0, 0, 0},
              "hand-worked case is not (0.2, 0.8)");
    if (o.pass) o.detail = "1000 cases, worst sum error " + num(worst) + ", hand case exact";
    return o;
}

// 5. Name classification on a planted population.

Outcome name_classification() {
    Outcome o;
    const auto ref = make_reference_data(505);
    const auto tables = ref.tables();
    SynthSpec spec;
    spec.seed = 505;
    spec.n_users = 2000;
    const auto out = generate(spec, tables);
    std::vector<Trajectory> trajs;
    std::vector<UserCenters> homes;
    for (const auto& u : out.truth.users) {
        Trajectory t;
        t.user_id = u.user_id;
        t.profile_name = u.profile_name;
        trajs.push_back(t);
        homes.push_back({u.user_id, {}, ActivityCenter{u.home_xy, 1, 1}});
    }
    const auto result = profile_users(trajs, homes, tables, {spec.reference_year, spec.age_threshold});
    std::size_t eligible = 0, agree = 0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& u = out.truth.users[i];
        if (!parse_name(u.profile_name)) continue;
        ++eligible;
        const auto& p = result.profiles[i];
        agree += p.race == u.race && p.gender == u.gender && p.age_group == u.age_group;
    }
    const double rate = eligible ? static_cast<double>(agree) / eligible : 0;
    o.require(eligible > 1000, "too few parseable names: " + std::to_string(eligible));
    o.require(rate >= 0.99, "label agreement " + num(rate));
    const auto& b = result.breakdown;
    o.require(b.total_users == trajs.size() && b.reconciles(), "identified/unidentified counts do not reconcile");
    o.detail = std::to_string(agree) + "/" + std::to_string(eligible) + " labels match, breakdown reconciles=" +
               (b.reconciles() ? "yes" : "no");
    return o;
}

// 6. Segment fit recovery.

Outcome segment_fit() {
    Outcome o;
    constexpr double bounds[] = {0.1, 25, 1000, 2000};
    constexpr double slopes[] = {-0.02, -0.99, -8.87};
    SplitMix64 rng(606);
    const auto d = testing_support::planted_density(rng, 5000, bounds, slopes, 0.01);
    const auto fit = fit_segments(d, std::span(bounds + 1, 3), bounds[0]);
    std::string got;
    for (std::size_t s = 0; s < 3; ++s) {
        o.require(fit.slope[s].has_value() && std::abs(*fit.slope[s] - slopes[s]) <= 0.05,
                  "segment " + std::to_string(s + 1) + " slope off");
        got += (s ? ", " : "") + (fit.slope[s] ? num(*fit.slope[s]) : std::string("none"));
    }
    o.detail = "slopes (" + got + ")";
    return o;
}

// 7. KDE.

double kernel_peak(double h) { return 1.0 / (2 * std::numbers::pi * h * h); }

Outcome kde() {
    Outcome o;
    SplitMix64 rng(707);
    const double h = 500;
    const auto pts = testing_support::random_points(rng, 400, 3000, 10000, 10000);
    const double m = 4 * h;
    const auto r = kde_raster(pts, h, 100, {7000 - m, 7000 - m, 13000 + m, 13000 + m});
    o.require(std::abs(r.mass() - 400) <= 4, "mass " + num(r.mass()));

    const std::vector<ProjectedPoint> two = {{1234.5, 2345.6}, {2100, 1900}};
    const auto r2 = kde_raster(two, h, 50, {-2500, -2500, 6500, 6500});
    double worst = 0;
    for (std::size_t row = 0; row < r2.n_rows; ++row) {
        for (std::size_t c = 0; c < r2.n_cols; ++c) {
            double v = 0;
            for (const auto& p : two) {
                const double dx = r2.center_x(c) - p.x, dy = r2.center_y(row) - p.y;
                v += kernel_peak(h) * std::exp(-(dx * dx + dy * dy) / (2 * h * h));
            }
            worst = std::max(worst, std::abs(r2.at(row, c) - v) / (two.size() * kernel_peak(h)));
        }
    }
    o.require(worst <= 4e-4, "2-point oracle error " + num(worst) + " of n x peak");

    const auto a = testing_support::random_points(rng, 60, 2000), b = testing_support::random_points(rng, 35, 2000);
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    const Extent e{-3000, -3000, 3000, 3000};
    const auto ra = kde_raster(a, 300, 50, e), rb = kde_raster(b, 300, 50, e), rab = kde_raster(ab, 300, 50, e);
    double lin = 0;
    for (std::size_t i = 0; i < rab.values.size(); ++i)
        lin = std::max(lin, std::abs(rab.values[i] - ra.values[i] - rb.values[i]) / kernel_peak(300));
    o.require(lin <= 1e-12, "linearity error " + num(lin));
    if (o.pass) {
        std::ostringstream s;
        s << "mass " << r.mass() << "/400, 2-point error " << worst << " of n x peak, linearity " << lin;
        o.detail = s.str();
    }
    return o;
}

// 8. Statistics.

Outcome statistics() {
    Outcome o;
    SplitMix64 rng(808);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> x(3 + rng.below(50)), up, down;
        for (auto& v : x) v = rng.uniform(-100, 100);
        const double slope = rng.uniform(0.1, 10), icpt = rng.uniform(-50, 50);
        for (double v : x) up.push_back(slope * v + icpt), down.push_back(-slope * v + icpt);
        o.require(std::abs(pearson_correlation(x, up) - 1) <= 1e-12, "affine data does not give 1");
        o.require(std::abs(pearson_correlation(x, down) + 1) <= 1e-12, "affine data does not give -1");
    }
    // Hand computation: sxy 3, sxx 5, syy 5, so r = 0.6.
    const std::vector<double> fx = {1, 2, 3, 4}, fy = {2, 1, 4, 3};
    const double r = pearson_correlation(fx, fy);
    o.require(std::abs(r - 0.6) <= 1e-12, "fixture gives " + num(r));
    for (int k = 0; k < 200; ++k) {
        std::vector<std::size_t> counts(1 + rng.below(500));
        for (auto& c : counts) c = rng.below(30);
        const auto hist = activity_center_histogram(counts);
        double s = 0;
        for (const auto& [n, f] : hist.fraction) s += f;
        o.require(std::abs(s - 1) <= 1e-12, "histogram fractions sum to " + num(s));
    }
    if (o.pass) o.detail = "affine +-1, fixture r = 0.6, 200 histograms sum to 1";
    return o;
}

// 9. Determinism.

Outcome determinism() {
    Outcome o;
    TempDir a, b;
    PipelineConfig cfg;
    cfg.set("synth_users", "300");
    for (const auto* d : {&a, &b}) {
        Pipeline p(cfg, d->path());
        p.run("synth");
        p.run_all();
        p.run("score");
    }
    std::size_t compared = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), a.path());
        const auto other = b.path() / rel;
        o.require(std::filesystem::exists(other) && slurp(entry.path()) == slurp(other), rel.string() + " differs");
        ++compared;
    }
    o.require(compared >= 15, "only " + std::to_string(compared) + " artifacts");
    if (o.pass) o.detail = std::to_string(compared) + " artifacts byte-identical across two runs";
    return o;
}

// 10. Golden files: parse, re-serialize, compare bytes.

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

Outcome format_round_trips() {
    Outcome o;
    const std::filesystem::path dir = MOBISCOPE_GOLDEN;
    std::size_t checked = 0;
    auto check = [&](const std::string& name, const std::function<void(std::istream&, std::ostream&)>& cycle) {
        const std::string bytes = slurp(dir / name);
        std::istringstream in(bytes);
        std::ostringstream out;
        try {
            cycle(in, out);
        } catch (const std::exception& e) {
            o.require(false, name + ": " + e.what());
            return;
        }
        o.require(!bytes.empty() && out.str() == bytes, name + " does not round-trip");
        ++checked;
    };
    check("posts.jsonl", [](auto& in, auto& out) { write_posts(out, parse_posts(in).records); });
    check("trajectories.jsonl", [](auto& in, auto& out) {
        const auto f = read_trajectories(in);
        write_trajectories(out, f.trajectories, f.meta);
    });
    check("centers.geojson", [](auto& in, auto& out) {
        const auto f = read_centers_geojson(in);
        write_centers_geojson(out, f.users, f.meta);
    });
    check("raster.asc", [](auto& in, auto& out) { write_esri_ascii(out, read_esri_ascii(in)); });
    const std::string meta = "# mobiscope stage=golden";
    check("metrics.csv", [&](auto& in, auto& out) { write_metrics_csv(out, read_metrics_csv(in), meta); });
    check("monthly_gyradius.csv",
          [&](auto& in, auto& out) { write_monthly_csv(out, read_monthly_csv(in), "mean_gyradius_m", meta); });
    check("profiles.csv", [&](auto& in, auto& out) { write_profiles_csv(out, read_profiles_csv(in), meta); });
    check("gyradius_density.csv", [&](auto& in, auto& out) { write_density_csv(out, read_density_csv(in), meta); });
    check("segment_fits.csv", [&](auto& in, auto& out) { write_segment_fit_csv(out, read_segment_fit_csv(in), meta); });
    check("center_histogram.csv", [&](auto& in, auto& out) {
        std::vector<std::pair<std::string, CountHistogram>> hists;
        for (auto& [g, f] : read_histogram_csv(in)) hists.push_back({g, CountHistogram{f, {}, {}, 0}});
        write_histogram_csv(out, hists, meta);
    });
    check("surnames.csv", [](auto& in, auto& out) { SurnameTable::read_csv(in).write_csv(out); });
    check("tracts.csv", [](auto& in, auto& out) { TractDemoTable::read_csv(in).write_csv(out); });
    check("genders.csv", [](auto& in, auto& out) { GenderTable::read_csv(in).write_csv(out); });
    check("ages.csv", [](auto& in, auto& out) { AgeTable::read_csv(in).write_csv(out); });
    check("tracts.geojson", [](auto& in, auto& out) { write_tracts_geojson(out, read_tracts_geojson(in)); });
    check("truth.jsonl", [](auto& in, auto& out) { write_truth(out, read_truth(in)); });
    o.require(first_line(slurp(dir / "metrics.csv")) == meta, "metrics.csv lost its meta line");
    if (o.pass) o.detail = std::to_string(checked) + " golden files re-serialize byte-for-byte";
    return o;
}

} // namespace

int main() {
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"1 gyradius oracle", gyradius_oracle},
        {"2 dbscan equivalence", dbscan_equivalence},
        {"3 home recovery", home_recovery},
        {"4 bisg correctness", bisg},
        {"5 name classification", name_classification},
        {"6 segment-fit recovery", segment_fit},
        {"7 kde normalization and oracle", kde},
        {"8 statistical functions", statistics},
        {"9 determinism", determinism},
        {"10 format round-trips", format_round_trips},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
