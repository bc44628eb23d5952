#pragma once

// Checkpointed pipeline stages. Each stage reads its upstream artifacts from
// a working directory and writes its own under fixed names.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mobiscope/analysis.hpp"
#include "mobiscope/clustering.hpp"
#include "mobiscope/config.hpp"
#include "mobiscope/demographics.hpp"
#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/ingest.hpp"
#include "mobiscope/mobility.hpp"
#include "mobiscope/synth.hpp"
#include "mobiscope/trajectory.hpp"

namespace mobiscope {

namespace artifacts {
inline constexpr const char* posts = "posts.jsonl";
inline constexpr const char* ingest_report = "ingest_report.json";
inline constexpr const char* trajectories = "trajectories.jsonl";
inline constexpr const char* metrics = "metrics.csv";
inline constexpr const char* monthly_gyradius = "monthly_gyradius.csv";
inline constexpr const char* centers = "centers.geojson";
inline constexpr const char* monthly_centers = "monthly_centers.csv";
inline constexpr const char* profiles = "profiles.csv";
inline constexpr const char* demographics = "demographics.json";
inline constexpr const char* gyradius_density = "gyradius_density.csv";
inline constexpr const char* segment_fits = "segment_fits.csv";
inline constexpr const char* center_histogram = "center_histogram.csv";
inline constexpr const char* tract_correlation = "tract_correlation.json";
inline constexpr const char* kde_city = "kde_city.asc";
inline constexpr const char* kde_national = "kde_national.asc";
inline constexpr const char* report = "report.json";
inline constexpr const char* truth = "synth/truth.jsonl";
inline constexpr const char* score = "score.json";
} // namespace artifacts

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest",       "trajectories", "metrics", "centers", "demographics",
                                                   "analyze",      "report",       "synth",   "score"};
    return names;
}

class Pipeline {
public:
    Pipeline(PipelineConfig config, std::filesystem::path workdir) : cfg_(std::move(config)), dir_(std::move(workdir)) {
        cfg_.validate();
    }

    const PipelineConfig& config() const noexcept { return cfg_; }
    const std::filesystem::path& workdir() const noexcept { return dir_; }

    void run(const std::string& stage) {
        static const std::map<std::string, void (Pipeline::*)()> table = {
            {"ingest", &Pipeline::ingest},   {"trajectories", &Pipeline::trajectories},
            {"metrics", &Pipeline::metrics}, {"centers", &Pipeline::centers},
            {"demographics", &Pipeline::demographics}, {"analyze", &Pipeline::analyze},
            {"report", &Pipeline::report},   {"synth", &Pipeline::synth},
            {"score", &Pipeline::score}};
        auto it = table.find(stage);
        if (it == table.end()) throw std::invalid_argument("unknown subcommand: " + stage);
        std::filesystem::create_directories(dir_);
        (this->*(it->second))();
    }

    /// ingest, trajectories, metrics, centers, demographics, analyze, report.
    void run_all() {
        for (const char* s : {"ingest", "trajectories", "metrics", "centers", "demographics", "analyze", "report"}) run(s);
    }

    // ------------------------------------------------------------ stages

    void synth() {
        const SynthSpec spec = cfg_.synth_spec();
        const ReferenceData ref = make_reference_data(spec.seed, spec.reference_year);
        write_file(table_path("surname_table"), [&](std::ostream& o) { ref.surnames.write_csv(o); });
        write_file(table_path("tract_demographics"), [&](std::ostream& o) { ref.demo.write_csv(o); });
        write_file(table_path("tract_polygons"), [&](std::ostream& o) { write_tracts_geojson(o, ref.tracts); });
        write_file(table_path("gender_table"), [&](std::ostream& o) { ref.genders.write_csv(o); });
        write_file(table_path("age_table"), [&](std::ostream& o) { ref.ages.write_csv(o); });
        // Generate against the tables as re-read from disk, as the pipeline sees them.
        const DemographicTables tables = load_tables("synth");
        SynthOutput out = generate(spec, tables);
        out.truth.meta["config"] = cfg_.to_json();
        write_file(resolve(cfg_.get("posts_input")), [&](std::ostream& o) { write_posts(o, out.posts); });
        write_file(dir_ / artifacts::truth, [&](std::ostream& o) { write_truth(o, out.truth); });
    }

    void ingest() {
        const auto input = resolve(cfg_.get("posts_input"));
        if (!std::filesystem::exists(input)) throw DependencyError("ingest", "synth (or a supplied post log)", input.string());
        std::ifstream in(input, std::ios::binary);
        auto parsed = parse_posts(in);
        std::vector<PostRecord> recs = std::move(parsed.records);
        const std::size_t n_parsed = recs.size();
        std::size_t outside = 0, dupes = 0;
        if (cfg_.flag("clip_bbox")) {
            recs = filter_bbox(recs, cfg_.bbox());
            outside = n_parsed - recs.size();
        }
        if (cfg_.flag("dedup")) {
            const std::size_t before = recs.size();
            recs = dedup_exact(recs);
            dupes = before - recs.size();
        }
        write_file(dir_ / artifacts::posts, [&](std::ostream& o) {
            o << nlohmann::ordered_json{{"_meta", meta("ingest")}}.dump() << '\n';
            write_posts(o, recs);
        });
        nlohmann::ordered_json rep;
        rep["metadata"] = meta("ingest");
        rep["parse"] = parsed.report.to_json();
        rep["dropped_outside_bbox"] = outside;
        rep["dropped_duplicates"] = dupes;
        rep["kept"] = recs.size();
        write_json(dir_ / artifacts::ingest_report, rep);
    }

    void trajectories() {
        auto in = open_checkpoint("trajectories", "ingest", artifacts::posts);
        auto parsed = parse_posts(in);
        const auto windowed = filter_window(parsed.records, cfg_.window());
        const auto set = build_trajectories(group_by_user(windowed), cfg_.min_posts());
        auto m = meta("trajectories");
        m["users_kept"] = set.trajectories.size();
        m["users_dropped"] = set.dropped;
        m["posts_outside_window"] = parsed.records.size() - windowed.size();
        write_file(dir_ / artifacts::trajectories, [&](std::ostream& o) { write_trajectories(o, set.trajectories, m); });
    }

    void metrics() {
        const auto trajs = load_trajectories("metrics");
        std::vector<MobilityMetrics> rows;
        rows.reserve(trajs.size());
        for (const auto& t : trajs) rows.push_back(compute_metrics(t));
        const auto monthly = monthly_cumulative_gyradius(trajs, cfg_.window(), cfg_.monthly_min_samples());
        write_file(dir_ / artifacts::metrics, [&](std::ostream& o) { write_metrics_csv(o, rows, meta_line("metrics")); });
        write_file(dir_ / artifacts::monthly_gyradius,
                   [&](std::ostream& o) { write_monthly_csv(o, monthly, "mean_gyradius_m", meta_line("metrics")); });
    }

    void centers() {
        const auto trajs = load_trajectories("centers");
        const auto params = cfg_.dbscan();
        const auto night = cfg_.night();
        const auto mode = cfg_.home_mode();
        std::vector<UserCenters> users;
        users.reserve(trajs.size());
        for (const auto& t : trajs)
            users.push_back({t.user_id, activity_centers(t, params, night), detect_home(t, params, night, mode).home});
        const auto monthly = monthly_cumulative_center_count(trajs, cfg_.window(), params, cfg_.monthly_min_samples());
        write_file(dir_ / artifacts::centers, [&](std::ostream& o) { write_centers_geojson(o, users, meta("centers")); });
        write_file(dir_ / artifacts::monthly_centers,
                   [&](std::ostream& o) { write_monthly_csv(o, monthly, "mean_centers", meta_line("centers")); });
    }

    void demographics() {
        const auto trajs = load_trajectories("demographics");
        const auto users = load_centers("demographics");
        const auto tables = load_tables("demographics");
        const auto result = profile_users(trajs, users, tables, cfg_.profile_options());
        write_file(dir_ / artifacts::profiles,
                   [&](std::ostream& o) { write_profiles_csv(o, result.profiles, meta_line("demographics")); });
        nlohmann::ordered_json j;
        j["metadata"] = meta("demographics");
        j["breakdown"] = result.breakdown.to_json();
        j["reconciles"] = result.breakdown.reconciles();
        write_json(dir_ / artifacts::demographics, j);
    }

    void analyze() {
        const auto rows = load_metrics("analyze");
        const auto users = load_centers("analyze");
        const auto profiles = load_profiles("analyze");
        const auto groups = group_members(rows, profiles);
        const std::string ml = meta_line("analyze");
        const int bpd = cfg_.bins_per_decade();
        const auto breaks = cfg_.segment_breaks_km();
        const double lower = cfg_.segment_lower_km();

        std::vector<double> all_km;
        for (const auto& r : rows) all_km.push_back(r.gyradius_m / 1000);
        const auto dens = density_or_empty(all_km, bpd);
        write_file(dir_ / artifacts::gyradius_density, [&](std::ostream& o) { write_density_csv(o, dens, ml); });

        std::map<std::string, std::size_t> n_centers;
        for (const auto& u : users) n_centers[u.user_id] = u.centers.size();
        std::vector<std::pair<std::string, SegmentFit>> fits;
        std::vector<std::pair<std::string, CountHistogram>> hists;
        for (const auto& [name, members] : groups) {
            std::vector<double> km;
            std::vector<std::size_t> counts;
            for (const auto* m : members) {
                km.push_back(m->gyradius_m / 1000);
                counts.push_back(n_centers[m->user_id]);
            }
            fits.emplace_back(name, fit_segments(density_or_empty(km, bpd), breaks, lower));
            hists.emplace_back(name, activity_center_histogram(counts));
        }
        write_file(dir_ / artifacts::segment_fits, [&](std::ostream& o) { write_segment_fit_csv(o, fits, ml); });
        write_file(dir_ / artifacts::center_histogram, [&](std::ostream& o) { write_histogram_csv(o, hists, ml); });

        const auto tables = load_tables("analyze");
        std::vector<std::optional<std::string>> homes;
        for (const auto& u : users)
            homes.push_back(u.home ? tables.tract_index.lookup(unproject_albers(u.home->center)) : std::nullopt);
        nlohmann::ordered_json corr;
        corr["metadata"] = meta("analyze");
        try {
            const auto tc = tract_user_correlation(homes, tables.tracts);
            corr["r"] = tc.r;
            corr["n_tracts"] = tc.geoids.size();
        } catch (const std::invalid_argument& e) {
            corr["r"] = nullptr;
            corr["n_tracts"] = tables.tracts.size();
            corr["note"] = e.what();
        }
        std::size_t with_home = 0, in_tract = 0;
        for (std::size_t i = 0; i < users.size(); ++i) {
            with_home += users[i].home.has_value();
            in_tract += homes[i].has_value();
        }
        corr["users_with_home"] = with_home;
        corr["users_home_in_tract"] = in_tract;
        write_json(dir_ / artifacts::tract_correlation, corr);

        std::vector<ProjectedPoint> pts;
        for (const auto& u : users)
            for (const auto& c : u.centers) pts.push_back(c.center);
        for (const char* scale : {"city", "national"}) {
            const auto k = cfg_.kde(scale);
            const auto raster = kde_raster(pts, k.bandwidth_m, k.cell_m, projected_extent(k.box));
            const auto path = dir_ / (std::string("kde_") + scale + ".asc");
            write_file(path, [&](std::ostream& o) { write_esri_ascii(o, raster); });
            auto m = meta("analyze");
            m["points"] = "activity centers of all users";
            m["n_points"] = pts.size();
            m["bandwidth_m"] = k.bandwidth_m;
            m["cell_m"] = k.cell_m;
            m["units"] = "points per square meter";
            m["projection"] = "spherical Albers equal-area, lat_1=29.5 lat_2=45.5 lat_0=23 lon_0=-96";
            write_json(std::filesystem::path(path.string() + ".meta.json"), m);
        }
    }

    void report() {
        const auto rows = load_metrics("report");
        const auto users = load_centers("report");
        const auto profiles = load_profiles("report");
        const auto corr_path = dir_ / artifacts::tract_correlation;
        if (!std::filesystem::exists(corr_path)) throw DependencyError("report", "analyze", corr_path.string());

        DemographicBreakdown bd;
        for (const auto& p : profiles) bd.add(p);
        std::map<std::string, std::size_t> n_centers;
        for (const auto& u : users) n_centers[u.user_id] = u.centers.size();
        const int bpd = cfg_.bins_per_decade();
        const auto breaks = cfg_.segment_breaks_km();
        const double lower = cfg_.segment_lower_km();

        nlohmann::ordered_json j;
        j["metadata"] = meta("report");
        j["breakdown"] = bd.to_json();
        j["breakdown_reconciles"] = bd.reconciles();
        nlohmann::ordered_json groups = nlohmann::ordered_json::object();
        for (const auto& [name, members] : group_members(rows, profiles)) {
            std::vector<double> km;
            std::vector<std::size_t> counts;
            for (const auto* m : members) {
                km.push_back(m->gyradius_m / 1000);
                counts.push_back(n_centers[m->user_id]);
            }
            nlohmann::ordered_json g;
            g["n_users"] = members.size();
            g["gyradius_km"] = {{"mean", to_json(mean_of(km))}, {"median", to_json(median_of(km))}};
            g["segments"] = to_json(fit_segments(density_or_empty(km, bpd), breaks, lower));
            const auto h = activity_center_histogram(counts);
            g["activity_centers"] = {{"mean", to_json(h.mean)}, {"median", to_json(h.median)}};
            groups[name] = g;
        }
        j["groups"] = groups;
        std::ifstream cin(corr_path, std::ios::binary);
        const auto corr = nlohmann::json::parse(cin, nullptr, false);
        j["tract_correlation"] = corr.is_object() && corr.contains("r") ? corr["r"] : nlohmann::json(nullptr);
        write_json(dir_ / artifacts::report, j);
    }

    void score() {
        const auto truth_path = dir_ / artifacts::truth;
        if (!std::filesystem::exists(truth_path)) throw DependencyError("score", "synth", truth_path.string());
        const auto rows = load_metrics("score");
        const auto users = load_centers("score");
        const auto profiles = load_profiles("score");
        std::ifstream in(truth_path, std::ios::binary);
        const auto truth = read_truth(in);
        const auto rep = mobiscope::score(rows, users, profiles, truth, cfg_.dbscan().eps_m);
        nlohmann::ordered_json j;
        j["metadata"] = meta("score");
        j["seed"] = truth.meta.value("seed", nlohmann::json(nullptr));
        const auto body = rep.to_json();
        for (const auto& [k, v] : body.items()) j[k] = v;
        write_json(dir_ / artifacts::score, j);
    }

    // ------------------------------------------------------------ loaders

    std::vector<Trajectory> load_trajectories(const std::string& stage) const {
        auto in = open_checkpoint(stage, "trajectories", artifacts::trajectories);
        return read_trajectories(in).trajectories;
    }

    std::vector<UserCenters> load_centers(const std::string& stage) const {
        auto in = open_checkpoint(stage, "centers", artifacts::centers);
        return read_centers_geojson(in).users;
    }

    std::vector<MobilityMetrics> load_metrics(const std::string& stage) const {
        auto in = open_checkpoint(stage, "metrics", artifacts::metrics);
        return read_metrics_csv(in);
    }

    std::vector<DemographicProfile> load_profiles(const std::string& stage) const {
        auto in = open_checkpoint(stage, "demographics", artifacts::profiles);
        return read_profiles_csv(in);
    }

    /// Missing or unreadable tables are configuration errors.
    DemographicTables load_tables(const std::string& stage) const {
        auto open = [&](const char* key) {
            const auto p = table_path(key);
            std::ifstream in(p, std::ios::binary);
            if (!in) throw ConfigError(stage + ": cannot open " + key + " " + p.string());
            return in;
        };
        DemographicTables t;
        {
            auto in = open("surname_table");
            t.surnames = SurnameTable::read_csv(in);
        }
        {
            auto in = open("tract_demographics");
            t.tracts = TractDemoTable::read_csv(in);
        }
        {
            auto in = open("tract_polygons");
            t.tract_index = TractIndex(read_tracts_geojson(in));
        }
        {
            auto in = open("gender_table");
            t.genders = GenderTable::read_csv(in);
        }
        {
            auto in = open("age_table");
            t.ages = AgeTable::read_csv(in);
        }
        return t;
    }

private:
    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : dir_ / path;
    }

    std::filesystem::path table_path(const char* key) const { return resolve(cfg_.get(key)); }

    std::ifstream open_checkpoint(const std::string& stage, const std::string& producer, const char* name) const {
        const auto p = dir_ / name;
        std::ifstream in(p, std::ios::binary);
        if (!in) throw DependencyError(stage, producer, p.string());
        return in;
    }

    nlohmann::ordered_json meta(const std::string& stage) const {
        nlohmann::ordered_json m;
        m["tool"] = "mobiscope";
        m["stage"] = stage;
        m["config"] = cfg_.to_json();
        return m;
    }

    std::string meta_line(const std::string& stage) const {
        auto v = cfg_.values();
        v["stage"] = stage;
        return text::meta_comment(v);
    }

    static void write_file(const std::filesystem::path& p, const std::function<void(std::ostream&)>& body) {
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ostringstream buf;
        body(buf);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + p.string());
        out << buf.str();
        if (!out) throw Error("write failed: " + p.string());
    }

    static void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
        write_file(p, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    }

    static LogLogDensity density_or_empty(std::span<const double> km, int bpd) {
        for (double v : km)
            if (v > 0) return log_log_density(km, bpd);
        LogLogDensity d;
        d.n_zero = km.size();
        return d;
    }

    /// Users per reporting group: all, then race:*, gender:*, age:* labels.
    static std::vector<std::pair<std::string, std::vector<const MobilityMetrics*>>> group_members(
        std::span<const MobilityMetrics> rows, std::span<const DemographicProfile> profiles) {
        std::unordered_map<std::string, const DemographicProfile*> by_user;
        for (const auto& p : profiles) by_user.emplace(p.user_id, &p);
        std::vector<std::pair<std::string, std::vector<const MobilityMetrics*>>> out;
        out.emplace_back("all", std::vector<const MobilityMetrics*>{});
        for (auto l : kRaceLabels) out.emplace_back("race:" + std::string(l), std::vector<const MobilityMetrics*>{});
        for (auto l : {"male", "female"}) out.emplace_back("gender:" + std::string(l), std::vector<const MobilityMetrics*>{});
        for (auto l : kAgeLabels) out.emplace_back("age:" + std::string(l), std::vector<const MobilityMetrics*>{});
        for (const auto& r : rows) {
            out[0].second.push_back(&r);
            auto it = by_user.find(r.user_id);
            if (it == by_user.end()) continue;
            const auto& p = *it->second;
            if (p.race) out[1 + static_cast<std::size_t>(*p.race)].second.push_back(&r);
            if (p.gender) out[1 + kRaceCount + static_cast<std::size_t>(*p.gender)].second.push_back(&r);
            if (p.age_group) out[3 + kRaceCount + static_cast<std::size_t>(*p.age_group)].second.push_back(&r);
        }
        return out;
    }

    /// Projected rectangle covering a lon/lat box, sampled along its edges.
    static Extent projected_extent(const BBox& b) {
        Extent e{INFINITY, INFINITY, -INFINITY, -INFINITY};
        constexpr int kSteps = 64;
        for (int i = 0; i <= kSteps; ++i) {
            const double f = static_cast<double>(i) / kSteps;
            const double lon = b.min_lon + f * (b.max_lon - b.min_lon), lat = b.min_lat + f * (b.max_lat - b.min_lat);
            for (const GeoPoint g : {GeoPoint{lon, b.min_lat}, GeoPoint{lon, b.max_lat}, GeoPoint{b.min_lon, lat},
                                     GeoPoint{b.max_lon, lat}}) {
                const auto p = project_albers(g);
                e.xmin = std::min(e.xmin, p.x);
                e.ymin = std::min(e.ymin, p.y);
                e.xmax = std::max(e.xmax, p.x);
                e.ymax = std::max(e.ymax, p.y);
            }
        }
        return e;
    }

    PipelineConfig cfg_;
    std::filesystem::path dir_;
};

} // namespace mobiscope
