#pragma once

// Statistical products: log-binned densities and per-segment log-log slope
// fits, Pearson correlation, Gaussian KDE rasters (ESRI ASCII grid I/O),
// and count histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mobiscope/demographics.hpp"
#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/text.hpp"

namespace mobiscope {

// ------------------------------------------------------------ log-log density

struct LogLogDensity {
    std::vector<double> edges;    // n_bins + 1, km
    std::vector<double> centers;  // geometric mean of edges
    std::vector<std::size_t> counts;
    std::vector<double> density;  // count / (n * width)
    std::size_t n_values = 0;     // positive values binned
    std::size_t n_zero = 0;       // zeros excluded

    std::size_t bins() const noexcept { return centers.size(); }
};

/// Histogram on a log grid aligned to decades (edges at 10^(k/bins_per_decade))
/// spanning [min, max] of the positive values.
inline LogLogDensity log_log_density(std::span<const double> values, int bins_per_decade = 8) {
    if (bins_per_decade < 1) throw std::invalid_argument("bins_per_decade must be >= 1");
    if (values.empty()) throw std::invalid_argument("log_log_density: no values");
    LogLogDensity d;
    double lo = INFINITY, hi = 0;
    for (double v : values) {
        if (!std::isfinite(v) || v < 0) throw std::invalid_argument("log_log_density: values must be finite and >= 0");
        if (v == 0) {
            ++d.n_zero;
            continue;
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    d.n_values = values.size() - d.n_zero;
    if (d.n_values == 0) throw std::invalid_argument("log_log_density: all values are zero");

    const double bpd = bins_per_decade;
    auto edge = [&](std::int64_t k) { return std::pow(10.0, static_cast<double>(k) / bpd); };
    std::int64_t k_lo = static_cast<std::int64_t>(std::floor(std::log10(lo) * bpd));
    while (edge(k_lo) > lo) --k_lo;
    while (edge(k_lo + 1) <= lo) ++k_lo;
    std::int64_t k_hi = static_cast<std::int64_t>(std::floor(std::log10(hi) * bpd)) + 1;
    while (edge(k_hi) <= hi) ++k_hi;
    while (k_hi - 1 > k_lo && edge(k_hi - 1) > hi) --k_hi;

    const auto n_bins = static_cast<std::size_t>(k_hi - k_lo);
    d.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) d.edges[i] = edge(k_lo + static_cast<std::int64_t>(i));
    d.counts.assign(n_bins, 0);
    for (double v : values) {
        if (v == 0) continue;
        auto i = static_cast<std::size_t>(std::upper_bound(d.edges.begin(), d.edges.end(), v) - d.edges.begin()) - 1;
        ++d.counts[std::min(i, n_bins - 1)];
    }
    const double n = static_cast<double>(d.n_values);
    d.centers.resize(n_bins);
    d.density.resize(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) {
        d.centers[i] = std::sqrt(d.edges[i] * d.edges[i + 1]);
        d.density[i] = static_cast<double>(d.counts[i]) / (n * (d.edges[i + 1] - d.edges[i]));
    }
    return d;
}

struct SegmentFit {
    std::vector<double> bounds;  // lower, breakpoints...; segment i = [bounds[i], bounds[i+1])
    std::vector<std::optional<double>> slope;
    std::vector<std::optional<double>> intercept;
    std::vector<std::optional<double>> rms_residual;
    std::vector<std::size_t> n_bins;

    std::size_t segments() const noexcept { return slope.size(); }
    bool operator==(const SegmentFit&) const = default;
};

/// Ordinary least squares of log10(density) on log10(center) over the
/// occupied bins whose center falls in each segment. Segments with fewer
/// than two occupied bins get no slope.
inline SegmentFit fit_segments(const LogLogDensity& d, std::span<const double> breakpoints_km = {},
                               double lower_km = 0.1) {
    static constexpr double kDefaultBreaks[] = {25.0, 1000.0, 2000.0};
    if (breakpoints_km.empty()) breakpoints_km = kDefaultBreaks;
    SegmentFit fit;
    fit.bounds.push_back(lower_km);
    for (double b : breakpoints_km) {
        if (!(b > fit.bounds.back())) throw std::invalid_argument("segment breakpoints must be strictly increasing");
        fit.bounds.push_back(b);
    }
    const std::size_t n_seg = fit.bounds.size() - 1;
    fit.slope.resize(n_seg);
    fit.intercept.resize(n_seg);
    fit.rms_residual.resize(n_seg);
    fit.n_bins.assign(n_seg, 0);
    for (std::size_t s = 0; s < n_seg; ++s) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < d.bins(); ++i) {
            if (d.density[i] <= 0) continue;
            const double c = d.centers[i];
            const bool in = s == 0 ? (c > fit.bounds[0] && c < fit.bounds[1])
                                   : (c >= fit.bounds[s] && c < fit.bounds[s + 1]);
            if (!in) continue;
            xs.push_back(std::log10(c));
            ys.push_back(std::log10(d.density[i]));
        }
        fit.n_bins[s] = xs.size();
        if (xs.size() < 2) continue;
        const double n = static_cast<double>(xs.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= n;
        my /= n;
        double sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - mx) * (xs[i] - mx);
            sxy += (xs[i] - mx) * (ys[i] - my);
        }
        const double slope = sxy / sxx;
        const double icept = my - slope * mx;
        double ss = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r = ys[i] - (icept + slope * xs[i]);
            ss += r * r;
        }
        fit.slope[s] = slope;
        fit.intercept[s] = icept;
        fit.rms_residual[s] = std::sqrt(ss / n);
    }
    return fit;
}

// ------------------------------------------------------------ correlation

/// Product-moment correlation, clamped to [-1, 1].
inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson_correlation: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson_correlation: need at least 2 pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0) || !(syy > 0)) throw std::invalid_argument("pearson_correlation: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct TractCorrelation {
    double r = 0;
    std::vector<std::string> geoids;
    std::vector<double> residents;
    std::vector<double> population;
};

/// Per-tract detected-resident counts (zero-filled) against census totals,
/// over every tract in the table in table order.
inline TractCorrelation tract_user_correlation(std::span<const std::optional<std::string>> home_geoids,
                                               const TractDemoTable& tracts) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& g : home_geoids)
        if (g) ++counts[*g];
    TractCorrelation out;
    for (const auto& t : tracts.tracts()) {
        out.geoids.push_back(t.geoid);
        auto it = counts.find(t.geoid);
        out.residents.push_back(it == counts.end() ? 0.0 : static_cast<double>(it->second));
        out.population.push_back(static_cast<double>(t.total_pop));
    }
    if (out.geoids.size() < 2) throw std::invalid_argument("tract_user_correlation: need at least 2 tracts");
    out.r = pearson_correlation(out.residents, out.population);
    return out;
}

// ------------------------------------------------------------ histogram

struct CountHistogram {
    std::map<std::size_t, double> fraction;  // value -> fraction of users
    std::optional<double> mean;
    std::optional<double> median;
    std::size_t n = 0;

    bool operator==(const CountHistogram&) const = default;
};

inline std::optional<double> median_of(std::vector<double> v) {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : (v[h - 1] + v[h]) / 2.0;
}

inline std::optional<double> mean_of(std::span<const double> v) {
    if (v.empty()) return std::nullopt;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline CountHistogram activity_center_histogram(std::span<const std::size_t> counts) {
    CountHistogram h;
    h.n = counts.size();
    if (counts.empty()) return h;
    std::map<std::size_t, std::size_t> tally;
    std::vector<double> vals;
    vals.reserve(counts.size());
    for (auto c : counts) {
        ++tally[c];
        vals.push_back(static_cast<double>(c));
    }
    for (const auto& [k, c] : tally) h.fraction[k] = static_cast<double>(c) / static_cast<double>(counts.size());
    h.mean = mean_of(vals);
    h.median = median_of(std::move(vals));
    return h;
}

// ------------------------------------------------------------ KDE raster

struct Extent {
    double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

    void validate() const {
        if (!(xmin < xmax) || !(ymin < ymax)) throw std::invalid_argument("degenerate raster extent");
    }
};

/// Row 0 is the northern-most row, as in ESRI ASCII grids.
struct DensityRaster {
    double xll = 0, yll = 0;  // lower-left corner, projected meters
    double cell = 1;
    std::size_t n_cols = 0, n_rows = 0;
    std::vector<double> values;  // row-major, points per m^2

    double& at(std::size_t row, std::size_t col) { return values[row * n_cols + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * n_cols + col]; }
    double center_x(std::size_t col) const { return xll + (static_cast<double>(col) + 0.5) * cell; }
    double center_y(std::size_t row) const {
        return yll + (static_cast<double>(n_rows - 1 - row) + 0.5) * cell;
    }
    double mass() const {
        double s = 0;
        for (double v : values) s += v;
        return s * cell * cell;
    }
};

inline constexpr double kKdeTruncationSigmas = 4.0;

/// Gaussian KDE evaluated at cell centers:
///   value = sum_i exp(-d_i^2 / (2 h^2)) / (2 pi h^2), terms with d_i > 4h dropped.
/// The grid covers the extent with ceil(width / cell) columns from (xmin, ymin).
inline DensityRaster kde_raster(std::span<const ProjectedPoint> pts, double bandwidth, double cell, const Extent& extent) {
    if (!(bandwidth > 0)) throw std::invalid_argument("KDE bandwidth must be > 0");
    if (!(cell > 0)) throw std::invalid_argument("KDE cell size must be > 0");
    extent.validate();
    DensityRaster r;
    r.xll = extent.xmin;
    r.yll = extent.ymin;
    r.cell = cell;
    r.n_cols = static_cast<std::size_t>(std::ceil((extent.xmax - extent.xmin) / cell));
    r.n_rows = static_cast<std::size_t>(std::ceil((extent.ymax - extent.ymin) / cell));
    r.values.assign(r.n_cols * r.n_rows, 0.0);

    const double norm = 1.0 / (2.0 * std::numbers::pi * bandwidth * bandwidth);
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    const double reach = kKdeTruncationSigmas * bandwidth;
    const double reach2 = reach * reach;
    const auto last_col = static_cast<double>(r.n_cols) - 1, last_row = static_cast<double>(r.n_rows) - 1;
    for (const auto& p : pts) {
        // Column c center: xll + (c + 0.5) cell; row index counts from the top.
        const double c0 = std::max(0.0, std::ceil((p.x - reach - r.xll) / cell - 0.5));
        const double c1 = std::min(last_col, std::floor((p.x + reach - r.xll) / cell - 0.5));
        const double b0 = std::max(0.0, std::ceil((p.y - reach - r.yll) / cell - 0.5));  // from bottom
        const double b1 = std::min(last_row, std::floor((p.y + reach - r.yll) / cell - 0.5));
        if (c0 > c1 || b0 > b1) continue;
        for (auto b = static_cast<std::size_t>(b0); b <= static_cast<std::size_t>(b1); ++b) {
            const std::size_t row = r.n_rows - 1 - b;
            const double dy = r.center_y(row) - p.y;
            for (auto c = static_cast<std::size_t>(c0); c <= static_cast<std::size_t>(c1); ++c) {
                const double dx = r.center_x(c) - p.x;
                const double d2 = dx * dx + dy * dy;
                if (d2 > reach2) continue;
                r.at(row, c) += norm * std::exp(-d2 * inv2h2);
            }
        }
    }
    return r;
}

/// ESRI ASCII grid: six header lines, then n_rows lines of n_cols values.
inline void write_esri_ascii(std::ostream& out, const DensityRaster& r) {
    out << "ncols " << r.n_cols << '\n'
        << "nrows " << r.n_rows << '\n'
        << "xllcorner " << text::format_double(r.xll) << '\n'
        << "yllcorner " << text::format_double(r.yll) << '\n'
        << "cellsize " << text::format_double(r.cell) << '\n'
        << "NODATA_value -9999\n";
    for (std::size_t row = 0; row < r.n_rows; ++row) {
        for (std::size_t c = 0; c < r.n_cols; ++c) {
            if (c) out << ' ';
            out << text::format_double(r.at(row, c));
        }
        out << '\n';
    }
}

inline DensityRaster read_esri_ascii(std::istream& in) {
    DensityRaster r;
    std::map<std::string, std::string> header;
    std::string key, value;
    for (int i = 0; i < 6; ++i) {
        if (!(in >> key >> value)) throw FormatError("ESRI ASCII grid: truncated header");
        for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        header[key] = value;
    }
    auto need = [&](const std::string& k) {
        auto it = header.find(k);
        if (it == header.end()) throw FormatError("ESRI ASCII grid: missing " + k);
        return it->second;
    };
    auto cols = text::parse_int(need("ncols"));
    auto rows = text::parse_int(need("nrows"));
    auto xll = text::parse_double(need("xllcorner"));
    auto yll = text::parse_double(need("yllcorner"));
    auto cell = text::parse_double(need("cellsize"));
    auto nodata = text::parse_double(need("nodata_value"));
    if (!cols || !rows || !xll || !yll || !cell || !nodata || *cols < 0 || *rows < 0)
        throw FormatError("ESRI ASCII grid: bad header value");
    r.n_cols = static_cast<std::size_t>(*cols);
    r.n_rows = static_cast<std::size_t>(*rows);
    r.xll = *xll;
    r.yll = *yll;
    r.cell = *cell;
    r.values.reserve(r.n_cols * r.n_rows);
    std::string tok;
    while (r.values.size() < r.n_cols * r.n_rows && in >> tok) {
        auto v = text::parse_double(tok);
        if (!v) throw FormatError("ESRI ASCII grid: bad value '" + tok + "'");
        r.values.push_back(*v == *nodata ? 0.0 : *v);
    }
    if (r.values.size() != r.n_cols * r.n_rows) throw FormatError("ESRI ASCII grid: too few values");
    return r;
}

// ------------------------------------------------------------ CSV outputs

inline void write_density_csv(std::ostream& out, const LogLogDensity& d, const std::string& meta_line) {
    if (!meta_line.empty()) out << meta_line << '\n';
    out << "bin_lo_km,bin_hi_km,center_km,count,density\n";
    for (std::size_t i = 0; i < d.bins(); ++i) {
        out << text::format_double(d.edges[i]) << ',' << text::format_double(d.edges[i + 1]) << ','
            << text::format_double(d.centers[i]) << ',' << d.counts[i] << ',' << text::format_double(d.density[i])
            << '\n';
    }
}

inline LogLogDensity read_density_csv(std::istream& in) {
    const auto t = text::read_csv(in, "density CSV");
    LogLogDensity d;
    for (const auto& row : t.rows) {
        if (row.size() != 5) throw FormatError("density CSV: expected 5 columns");
        auto lo = text::parse_double(row[0]), hi = text::parse_double(row[1]), c = text::parse_double(row[2]),
             den = text::parse_double(row[4]);
        auto n = text::parse_int(row[3]);
        if (!lo || !hi || !c || !den || !n) throw FormatError("density CSV: bad row");
        if (d.edges.empty()) d.edges.push_back(*lo);
        d.edges.push_back(*hi);
        d.centers.push_back(*c);
        d.counts.push_back(static_cast<std::size_t>(*n));
        d.density.push_back(*den);
        d.n_values += static_cast<std::size_t>(*n);
    }
    return d;
}

inline void write_segment_fit_csv(std::ostream& out, const std::vector<std::pair<std::string, SegmentFit>>& fits,
                                  const std::string& meta_line) {
    if (!meta_line.empty()) out << meta_line << '\n';
    out << "group,segment,lo_km,hi_km,n_bins,slope,intercept,rms_residual\n";
    auto num = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); };
    for (const auto& [group, f] : fits) {
        for (std::size_t s = 0; s < f.segments(); ++s) {
            out << text::csv_escape(group) << ',' << s << ',' << text::format_double(f.bounds[s]) << ','
                << text::format_double(f.bounds[s + 1]) << ',' << f.n_bins[s] << ',' << num(f.slope[s]) << ','
                << num(f.intercept[s]) << ',' << num(f.rms_residual[s]) << '\n';
        }
    }
}

/// Inverse of write_segment_fit_csv; groups come back in file order.
inline std::vector<std::pair<std::string, SegmentFit>> read_segment_fit_csv(std::istream& in) {
    const char* what = "segment fit CSV";
    const auto t = text::read_csv(in, what);
    const std::size_t cg = t.require("group", what), cs = t.require("segment", what), clo = t.require("lo_km", what),
                      chi = t.require("hi_km", what), cn = t.require("n_bins", what), csl = t.require("slope", what),
                      ci = t.require("intercept", what), cr = t.require("rms_residual", what);
    auto opt = [&](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        auto v = text::parse_double(s);
        if (!v) throw FormatError(std::string(what) + ": bad number '" + s + "'");
        return v;
    };
    std::vector<std::pair<std::string, SegmentFit>> out;
    for (const auto& row : t.rows) {
        auto seg = text::parse_int(row[cs]);
        auto lo = text::parse_double(row[clo]), hi = text::parse_double(row[chi]);
        auto n = text::parse_int(row[cn]);
        if (!seg || !lo || !hi || !n || *n < 0) throw FormatError(std::string(what) + ": bad row for group " + row[cg]);
        if (*seg == 0) out.push_back({row[cg], SegmentFit{{*lo}, {}, {}, {}, {}}});
        if (out.empty() || out.back().first != row[cg] || static_cast<std::size_t>(*seg) != out.back().second.segments())
            throw FormatError(std::string(what) + ": segments out of order for group " + row[cg]);
        SegmentFit& f = out.back().second;
        f.bounds.push_back(*hi);
        f.n_bins.push_back(static_cast<std::size_t>(*n));
        f.slope.push_back(opt(row[csl]));
        f.intercept.push_back(opt(row[ci]));
        f.rms_residual.push_back(opt(row[cr]));
    }
    return out;
}

inline void write_histogram_csv(std::ostream& out, const std::vector<std::pair<std::string, CountHistogram>>& hists,
                                const std::string& meta_line) {
    if (!meta_line.empty()) out << meta_line << '\n';
    out << "group,n_centers,fraction\n";
    for (const auto& [group, h] : hists)
        for (const auto& [k, f] : h.fraction) out << text::csv_escape(group) << ',' << k << ',' << text::format_double(f) << '\n';
}

/// Fractions per group, in file order. Mean, median and n are not stored.
inline std::vector<std::pair<std::string, std::map<std::size_t, double>>> read_histogram_csv(std::istream& in) {
    const char* what = "center histogram CSV";
    const auto t = text::read_csv(in, what);
    const std::size_t cg = t.require("group", what), ck = t.require("n_centers", what), cf = t.require("fraction", what);
    std::vector<std::pair<std::string, std::map<std::size_t, double>>> out;
    for (const auto& row : t.rows) {
        auto k = text::parse_int(row[ck]);
        auto f = text::parse_double(row[cf]);
        if (!k || !f || *k < 0) throw FormatError(std::string(what) + ": bad row for group " + row[cg]);
        if (out.empty() || out.back().first != row[cg]) out.push_back({row[cg], {}});
        out.back().second[static_cast<std::size_t>(*k)] = *f;
    }
    return out;
}

inline nlohmann::ordered_json to_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const SegmentFit& f) {
    nlohmann::ordered_json segs = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < f.segments(); ++s) {
        nlohmann::ordered_json j;
        j["lo_km"] = f.bounds[s];
        j["hi_km"] = f.bounds[s + 1];
        j["n_bins"] = f.n_bins[s];
        j["slope"] = to_json(f.slope[s]);
        j["rms_residual"] = to_json(f.rms_residual[s]);
        segs.push_back(std::move(j));
    }
    return segs;
}

inline nlohmann::ordered_json to_json(const CountHistogram& h) {
    nlohmann::ordered_json j;
    j["n_users"] = h.n;
    j["mean"] = to_json(h.mean);
    j["median"] = to_json(h.median);
    nlohmann::ordered_json fr = nlohmann::ordered_json::object();
    for (const auto& [k, f] : h.fraction) fr[std::to_string(k)] = f;
    j["fractions"] = fr;
    return j;
}

} // namespace mobiscope
