#pragma once

// Pipeline configuration: a `key = value` text file, '#' comments, every key
// optional with the default listed in kConfigKeys. Environment variables
// MOBISCOPE_<KEY> (key upper-cased) override the file.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mobiscope/analysis.hpp"
#include "mobiscope/clustering.hpp"
#include "mobiscope/demographics.hpp"
#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/synth.hpp"
#include "mobiscope/text.hpp"
#include "mobiscope/time.hpp"

namespace mobiscope {

inline constexpr std::string_view kEnvPrefix = "MOBISCOPE_";

struct ConfigKey {
    std::string_view name;
    std::string_view default_value;
    std::string_view help;
};

inline constexpr ConfigKey kConfigKeys[] = {
    {"posts_input", "input_posts.jsonl", "raw post log (JSONL); relative paths resolve against the workdir"},
    {"window_start", "2013-01-01", "study window start, UTC (YYYY-MM-DD or epoch seconds, inclusive)"},
    {"window_end", "2013-07-01", "study window end, UTC (exclusive)"},
    {"bbox", "-125,24,-66,50", "min_lon,min_lat,max_lon,max_lat kept at ingest"},
    {"clip_bbox", "true", "drop posts outside bbox at ingest"},
    {"dedup", "false", "drop exact duplicate (user, ts, lon, lat) posts at ingest"},
    {"min_posts", "24", "minimum posts in the window for a user to get a trajectory"},
    {"monthly_min_samples", "1", "minimum cumulative samples for a user to count in a monthly mean"},
    {"dbscan_eps_m", "100", "DBSCAN neighborhood radius, meters"},
    {"dbscan_min_pts", "3", "DBSCAN core threshold, neighbors including the point itself"},
    {"night_start", "20:00", "night window start, local HH:MM (inclusive)"},
    {"night_end", "08:00", "night window end, local HH:MM (exclusive)"},
    {"timezone", "America/Chicago", "IANA zone for the night window"},
    {"home_mode", "night", "home rule: night (cluster night posts) or centers (center with most night posts)"},
    {"reference_year", "2013", "year ages are computed at"},
    {"age_threshold", "0.6", "minimum age-group probability, exclusive, in (0, 1]"},
    {"surname_table", "reference/surnames.csv", "NAME,PCTWHITE,PCTBLACK,PCTHISPANIC,PCTAPI,PCTOTHER"},
    {"tract_demographics", "reference/tracts.csv", "GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER"},
    {"tract_polygons", "reference/tracts.geojson", "tract polygons, FeatureCollection with a GEOID property"},
    {"gender_table", "reference/genders.csv", "NAME,MALE,FEMALE"},
    {"age_table", "reference/ages.csv", "NAME,YEAR,COUNT"},
    {"bins_per_decade", "8", "log-log density bins per decade"},
    {"segment_lower_km", "0.1", "lower bound of the first fitted segment, km"},
    {"segment_breaks_km", "25,1000,2000", "segment breakpoints, km, strictly increasing"},
    {"kde_city_bandwidth_m", "500", "city KDE Gaussian bandwidth, meters"},
    {"kde_city_cell_m", "100", "city KDE cell size, meters"},
    {"kde_city_extent", "-87.95,41.64,-87.52,42.03", "city KDE extent as a lon/lat box"},
    {"kde_national_bandwidth_m", "20000", "national KDE Gaussian bandwidth, meters"},
    {"kde_national_cell_m", "10000", "national KDE cell size, meters"},
    {"kde_national_extent", "-125,24,-66,50", "national KDE extent as a lon/lat box"},
    {"synth_seed", "20130101", "synth: PRNG seed"},
    {"synth_users", "500", "synth: number of users"},
    {"synth_jitter_m", "25", "synth: Gaussian position jitter, meters"},
    {"synth_single_center", "false", "synth: put every post at home"},
    {"synth_max_secondary", "3", "synth: maximum secondary centers per user"},
    {"synth_pseudonym_fraction", "0.1", "synth: share of users with unparseable names"},
};

class PipelineConfig {
public:
    PipelineConfig() {
        for (const auto& k : kConfigKeys) values_.emplace(k.name, k.default_value);
    }

    static bool known(std::string_view key) {
        return std::any_of(std::begin(kConfigKeys), std::end(kConfigKeys),
                           [&](const ConfigKey& k) { return k.name == key; });
    }

    void set(const std::string& key, const std::string& value) {
        if (!known(key)) throw ConfigError("unknown config key: " + key);
        values_[key] = text::trim(value);
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: " + key);
        return it->second;
    }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    void parse(std::istream& in, const std::string& source = "config") {
        std::string line;
        std::size_t no = 0;
        while (std::getline(in, line)) {
            ++no;
            const std::string t = text::trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(no) + ": expected key = value");
            set(text::trim(std::string_view(t).substr(0, eq)), std::string(std::string_view(t).substr(eq + 1)));
        }
    }

    static PipelineConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        PipelineConfig c;
        c.parse(in, path);
        return c;
    }

    /// Applies MOBISCOPE_<KEY> environment overrides.
    void apply_env() {
        for (const auto& k : kConfigKeys) {
            std::string var(kEnvPrefix);
            for (char ch : k.name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            if (const char* v = std::getenv(var.c_str())) values_[std::string(k.name)] = text::trim(v);
        }
    }

    // ---- typed views; each throws ConfigError naming the key

    double number(const std::string& key) const {
        auto v = text::parse_double(get(key));
        if (!v || !std::isfinite(*v)) throw ConfigError(key + ": not a number: " + get(key));
        return *v;
    }

    std::int64_t integer(const std::string& key) const {
        auto v = text::parse_int(get(key));
        if (!v) throw ConfigError(key + ": not an integer: " + get(key));
        return *v;
    }

    bool flag(const std::string& key) const {
        std::string v = get(key);
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError(key + ": expected true or false: " + get(key));
    }

    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        for (const auto& f : text::split_csv(get(key))) {
            auto v = text::parse_double(f);
            if (!v || !std::isfinite(*v)) throw ConfigError(key + ": bad number list: " + get(key));
            out.push_back(*v);
        }
        return out;
    }

    BBox box(const std::string& key) const {
        const auto v = numbers(key);
        if (v.size() != 4) throw ConfigError(key + ": expected min_lon,min_lat,max_lon,max_lat");
        BBox b{v[0], v[1], v[2], v[3]};
        try {
            b.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key + ": " + e.what());
        }
        return b;
    }

    TimeWindow window() const {
        TimeWindow w;
        try {
            w.start = parse_utc_time(get("window_start"));
            w.end = parse_utc_time(get("window_end"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("window: ") + e.what());
        }
        if (w.end <= w.start) throw ConfigError("window_end must be after window_start");
        return w;
    }

    BBox bbox() const { return box("bbox"); }

    std::size_t min_posts() const {
        const auto v = integer("min_posts");
        if (v < 1) throw ConfigError("min_posts must be >= 1");
        return static_cast<std::size_t>(v);
    }

    std::size_t monthly_min_samples() const {
        const auto v = integer("monthly_min_samples");
        if (v < 1) throw ConfigError("monthly_min_samples must be >= 1");
        return static_cast<std::size_t>(v);
    }

    DbscanParams dbscan() const {
        const auto pts = integer("dbscan_min_pts");
        if (pts < 1) throw ConfigError("dbscan_min_pts must be >= 1");
        DbscanParams p{number("dbscan_eps_m"), static_cast<std::size_t>(pts)};
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("dbscan: ") + e.what());
        }
        return p;
    }

    NightWindow night() const {
        try {
            return NightWindow(parse_clock(get("night_start")), parse_clock(get("night_end")), get("timezone"));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("night window: ") + e.what());
        }
    }

    HomeMode home_mode() const {
        try {
            return parse_home_mode(get("home_mode"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("home_mode: ") + e.what());
        }
    }

    ProfileOptions profile_options() const {
        ProfileOptions o;
        o.reference_year = static_cast<int>(integer("reference_year"));
        o.age_threshold = number("age_threshold");
        if (!(o.age_threshold > 0 && o.age_threshold <= 1)) throw ConfigError("age_threshold must lie in (0, 1]");
        return o;
    }

    int bins_per_decade() const {
        const auto v = integer("bins_per_decade");
        if (v < 1 || v > 1000) throw ConfigError("bins_per_decade must lie in [1, 1000]");
        return static_cast<int>(v);
    }

    std::vector<double> segment_breaks_km() const {
        auto v = numbers("segment_breaks_km");
        const double lower = segment_lower_km();
        if (v.empty()) throw ConfigError("segment_breaks_km must not be empty");
        if (!(v.front() > lower)) throw ConfigError("segment_breaks_km must start above segment_lower_km");
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] > v[i - 1])) throw ConfigError("segment_breaks_km must be strictly increasing");
        return v;
    }

    double segment_lower_km() const {
        const double v = number("segment_lower_km");
        if (!(v > 0)) throw ConfigError("segment_lower_km must be > 0");
        return v;
    }

    struct KdeSettings {
        double bandwidth_m, cell_m;
        BBox box;
    };

    KdeSettings kde(const std::string& scale) const {
        KdeSettings k{number("kde_" + scale + "_bandwidth_m"), number("kde_" + scale + "_cell_m"),
                      box("kde_" + scale + "_extent")};
        if (!(k.bandwidth_m > 0)) throw ConfigError("kde_" + scale + "_bandwidth_m must be > 0");
        if (!(k.cell_m > 0)) throw ConfigError("kde_" + scale + "_cell_m must be > 0");
        return k;
    }

    SynthSpec synth_spec() const {
        SynthSpec s;
        const auto seed = integer("synth_seed");
        const auto users = integer("synth_users");
        const auto sec = integer("synth_max_secondary");
        if (seed < 0) throw ConfigError("synth_seed must be >= 0");
        if (users < 0) throw ConfigError("synth_users must be >= 0");
        if (sec < 0) throw ConfigError("synth_max_secondary must be >= 0");
        s.seed = static_cast<std::uint64_t>(seed);
        s.n_users = static_cast<std::size_t>(users);
        s.jitter_m = number("synth_jitter_m");
        s.single_center = flag("synth_single_center");
        s.max_secondary = static_cast<std::size_t>(sec);
        s.min_posts = min_posts();
        s.pseudonym_fraction = number("synth_pseudonym_fraction");
        s.window = window();
        s.night = night();
        s.bbox = bbox();
        const auto o = profile_options();
        s.reference_year = o.reference_year;
        s.age_threshold = o.age_threshold;
        s.validate();
        return s;
    }

    /// Parses every typed view once.
    void validate() const {
        window();
        bbox();
        flag("clip_bbox");
        flag("dedup");
        min_posts();
        monthly_min_samples();
        dbscan();
        night();
        home_mode();
        profile_options();
        bins_per_decade();
        segment_breaks_km();
        kde("city");
        kde("national");
        synth_spec();
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& k : kConfigKeys) j[std::string(k.name)] = get(std::string(k.name));
        return j;
    }

    /// Subset of keys, for the metadata of one artifact.
    std::map<std::string, std::string> subset(std::initializer_list<std::string_view> keys) const {
        std::map<std::string, std::string> out;
        for (auto k : keys) out.emplace(std::string(k), get(std::string(k)));
        return out;
    }

private:
    std::map<std::string, std::string> values_;
};

/// Text for --help: one line per key with its default.
inline std::string config_help() {
    std::string s = "Config keys (file lines `key = value`; env override " + std::string(kEnvPrefix) + "<KEY>):\n";
    std::size_t width = 0;
    for (const auto& k : kConfigKeys) width = std::max(width, k.name.size());
    for (const auto& k : kConfigKeys) {
        s += "  " + std::string(k.name) + std::string(width - k.name.size() + 2, ' ') + "default: " +
             std::string(k.default_value) + "\n      " + std::string(k.help) + "\n";
    }
    return s;
}

} // namespace mobiscope
