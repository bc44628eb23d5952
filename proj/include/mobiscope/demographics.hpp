#pragma once

// Name-based demographic inference: profile-name parsing, BISG race and
// ethnicity posterior, forename gender and forename age group.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mobiscope/clustering.hpp"
#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/text.hpp"
#include "mobiscope/trajectory.hpp"

namespace mobiscope {

// ---------------------------------------------------------------- categories

enum class Race : int { White = 0, Black, Hispanic, Asian, Other };
inline constexpr std::size_t kRaceCount = 5;
using RaceVector = std::array<double, kRaceCount>;

inline constexpr std::array<std::string_view, kRaceCount> kRaceLabels = {"white", "black", "hispanic", "asian",
                                                                         "other"};

inline std::string_view to_string(Race r) { return kRaceLabels[static_cast<std::size_t>(r)]; }

enum class Gender : int { Male = 0, Female };

inline std::string_view to_string(Gender g) { return g == Gender::Male ? "male" : "female"; }

enum class AgeGroup : int { UpTo20 = 0, From21To60, From61 };
inline constexpr std::size_t kAgeGroupCount = 3;
inline constexpr std::array<std::string_view, kAgeGroupCount> kAgeLabels = {"le20", "21-60", "ge61"};

inline std::string_view to_string(AgeGroup a) { return kAgeLabels[static_cast<std::size_t>(a)]; }

inline std::optional<Race> parse_race(std::string_view s) {
    for (std::size_t i = 0; i < kRaceCount; ++i)
        if (kRaceLabels[i] == s) return static_cast<Race>(i);
    return std::nullopt;
}

inline std::optional<Gender> parse_gender(std::string_view s) {
    if (s == "male") return Gender::Male;
    if (s == "female") return Gender::Female;
    return std::nullopt;
}

inline std::optional<AgeGroup> parse_age_group(std::string_view s) {
    for (std::size_t i = 0; i < kAgeGroupCount; ++i)
        if (kAgeLabels[i] == s) return static_cast<AgeGroup>(i);
    return std::nullopt;
}

// -------------------------------------------------------------- name parsing

namespace detail {

struct Utf8Char {
    char32_t cp;
    std::size_t len;
};

/// Decodes one code point; invalid bytes decode as U+FFFD of length 1.
inline Utf8Char decode_utf8(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    auto cb = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
    if (b0 < 0x80) return {b0, 1};
    if ((b0 & 0xE0) == 0xC0 && cont(1)) return {(static_cast<char32_t>(b0 & 0x1F) << 6) | cb(1), 2};
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2))
        return {(static_cast<char32_t>(b0 & 0x0F) << 12) | (cb(1) << 6) | cb(2), 3};
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3))
        return {(static_cast<char32_t>(b0 & 0x07) << 18) | (cb(1) << 12) | (cb(2) << 6) | cb(3), 4};
    return {0xFFFD, 1};
}

/// ASCII letters for a Latin-1 Supplement / Latin Extended-A letter, or
/// empty when the code point is not a foldable letter.
inline std::string_view fold_latin(char32_t cp) {
    static constexpr std::string_view latin1[64] = {
        "A", "A", "A", "A", "A", "A", "AE", "C", "E", "E", "E", "E", "I", "I", "I", "I",
        "D", "N", "O", "O", "O", "O", "O", "",  "O", "U", "U", "U", "U", "Y", "TH", "ss",
        "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
        "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "y"};
    static constexpr std::string_view extended_a =
        "AaAaAaCcCcCcCcDdDdEeEeEeEeEeGgGgGgGgHhHhIiIiIiIiIi??JjKkkLlLlLlLlLlNnNnNnnNnOoOoOo??RrRrRrSsSsSsSsTtTtTtUuUuUuUuUuUuWwYyYZzZzZzs";
    if (cp >= 0xC0 && cp <= 0xFF) return latin1[cp - 0xC0];
    if (cp >= 0x100 && cp <= 0x17F) {
        if (cp == 0x132) return "IJ";
        if (cp == 0x133) return "ij";
        if (cp == 0x152) return "OE";
        if (cp == 0x153) return "oe";
        return extended_a.substr(cp - 0x100, 1);
    }
    return {};
}

inline bool is_ascii_punct(char32_t cp) {
    return cp < 0x80 && std::ispunct(static_cast<int>(cp)) != 0;
}

struct TokenScan {
    std::string folded;  // uppercase, diacritics folded
    std::size_t letters = 0;
    std::size_t chars = 0;
};

inline TokenScan scan_token(std::string_view tok) {
    std::vector<Utf8Char> cps;
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < tok.size();) {
        auto c = decode_utf8(tok, i);
        cps.push_back(c);
        offsets.push_back(i);
        i += c.len;
    }
    std::size_t b = 0, e = cps.size();
    if (b < e && is_ascii_punct(cps[b].cp)) ++b;
    if (b < e && is_ascii_punct(cps[e - 1].cp)) --e;
    TokenScan out;
    for (std::size_t k = b; k < e; ++k) {
        const char32_t cp = cps[k].cp;
        ++out.chars;
        if (cp < 0x80 && std::isalpha(static_cast<int>(cp))) {
            ++out.letters;
            out.folded += static_cast<char>(std::toupper(static_cast<int>(cp)));
        } else if (auto f = fold_latin(cp); !f.empty()) {
            ++out.letters;
            for (char ch : f) out.folded += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        } else {
            out.folded.append(tok.substr(offsets[k], cps[k].len));
        }
    }
    return out;
}

} // namespace detail

struct ParsedName {
    std::string forename;
    std::string surname;

    bool operator==(const ParsedName&) const = default;
};

/// Splits a profile name into (forename, surname): first and last
/// whitespace-separated tokens. Rejects names with fewer than two tokens,
/// and tokens with fewer than 2 letters or under 80% letters once one
/// leading and one trailing ASCII punctuation mark are stripped.
inline std::optional<ParsedName> parse_name(std::string_view profile_name) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < profile_name.size()) {
        while (i < profile_name.size() && is_space(profile_name[i])) ++i;
        const std::size_t start = i;
        while (i < profile_name.size() && !is_space(profile_name[i])) ++i;
        if (i > start) tokens.push_back(profile_name.substr(start, i - start));
    }
    if (tokens.size() < 2) return std::nullopt;
    const auto first = detail::scan_token(tokens.front());
    const auto last = detail::scan_token(tokens.back());
    for (const auto* t : {&first, &last}) {
        if (t->letters < 2) return std::nullopt;
        if (static_cast<double>(t->letters) < 0.8 * static_cast<double>(t->chars)) return std::nullopt;
    }
    return ParsedName{first.folded, last.folded};
}

/// Lookup key for the reference tables: the A-Z letters only, so
/// "O'BRIEN" and "OBRIEN" share an entry.
inline std::string name_key(std::string_view name) {
    std::string k;
    for (char c : name) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u) && u < 0x80) k += static_cast<char>(std::toupper(u));
    }
    return k;
}

// -------------------------------------------------------------- reference tables

struct SurnameRecord {
    std::string surname;
    RaceVector prior{};
};

/// Surname -> race prior. CSV: NAME,PCTWHITE,PCTBLACK,PCTHISPANIC,PCTAPI,PCTOTHER
/// (percentages). Optional PCTAIAN and PCT2PRACE columns fold into Other.
/// Suppressed "(S)" cells read as 0; each row is renormalized to sum 1.
class SurnameTable {
public:
    void add(std::string_view surname, const RaceVector& weights) {
        double sum = 0;
        for (double w : weights) {
            if (!(w >= 0) || !std::isfinite(w)) throw FormatError("surname table: negative or non-finite weight for " + std::string(surname));
            sum += w;
        }
        if (!(sum > 0)) throw FormatError("surname table: all-zero row for " + std::string(surname));
        RaceVector p{};
        for (std::size_t r = 0; r < kRaceCount; ++r) p[r] = weights[r] / sum;
        auto key = name_key(surname);
        if (key.empty()) throw FormatError("surname table: empty name");
        table_[key] = p;
        order_.push_back(std::move(key));
    }

    const RaceVector* find(std::string_view surname) const {
        auto it = table_.find(name_key(surname));
        return it == table_.end() ? nullptr : &it->second;
    }

    std::size_t size() const noexcept { return table_.size(); }

    std::vector<SurnameRecord> records() const {
        std::vector<SurnameRecord> out;
        for (const auto& k : order_)
            if (auto it = table_.find(k); it != table_.end() && (out.empty() || out.back().surname != k))
                out.push_back({k, it->second});
        return out;
    }

    static SurnameTable read_csv(std::istream& in) {
        const auto t = text::read_csv(in, "surname table");
        const char* what = "surname table";
        const std::size_t cn = t.require("NAME", what);
        const std::array<std::size_t, kRaceCount> cols = {t.require("PCTWHITE", what), t.require("PCTBLACK", what),
                                                          t.require("PCTHISPANIC", what), t.require("PCTAPI", what),
                                                          t.require("PCTOTHER", what)};
        const auto extra_aian = t.column("PCTAIAN");
        const auto extra_2race = t.column("PCT2PRACE");
        auto cell = [&](const std::vector<std::string>& row, std::size_t c) {
            const std::string v = text::trim(row[c]);
            if (v == "(S)" || v.empty()) return 0.0;
            auto d = text::parse_double(v);
            if (!d) throw FormatError("surname table: bad percentage '" + v + "' for " + row[cn]);
            return *d;
        };
        SurnameTable table;
        for (const auto& row : t.rows) {
            RaceVector w{};
            for (std::size_t r = 0; r < kRaceCount; ++r) w[r] = cell(row, cols[r]);
            if (extra_aian) w[4] += cell(row, *extra_aian);
            if (extra_2race) w[4] += cell(row, *extra_2race);
            double sum = 0;
            for (double x : w) sum += x;
            if (sum <= 0) continue;  // fully suppressed row carries no information
            table.add(text::trim(row[cn]), w);
        }
        return table;
    }

    void write_csv(std::ostream& out) const {
        out << "NAME,PCTWHITE,PCTBLACK,PCTHISPANIC,PCTAPI,PCTOTHER\n";
        for (const auto& rec : records()) {
            out << rec.surname;
            for (double p : rec.prior) out << ',' << text::format_double(100.0 * p);
            out << '\n';
        }
    }

private:
    std::unordered_map<std::string, RaceVector> table_;
    std::vector<std::string> order_;
};

struct TractDemo {
    std::string geoid;
    std::array<std::int64_t, kRaceCount> pop_by_race{};
    std::int64_t total_pop = 0;

    bool operator==(const TractDemo&) const = default;
};

/// National count per race: column sums over the loaded tracts.
struct NationalTotals {
    RaceVector by_race{};

    static NationalTotals from(std::span<const TractDemo> tracts) {
        NationalTotals t;
        for (const auto& d : tracts)
            for (std::size_t r = 0; r < kRaceCount; ++r) t.by_race[r] += static_cast<double>(d.pop_by_race[r]);
        return t;
    }
};

/// Tract demographics keyed by geoid. CSV: GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER.
class TractDemoTable {
public:
    void add(TractDemo d) {
        std::int64_t sum = 0;
        for (auto c : d.pop_by_race) {
            if (c < 0) throw FormatError("tract demographics: negative count in " + d.geoid);
            sum += c;
        }
        if (sum != d.total_pop)
            throw FormatError("tract demographics: race counts of " + d.geoid + " sum to " + std::to_string(sum) +
                              ", TOTAL is " + std::to_string(d.total_pop));
        auto [it, fresh] = by_geoid_.emplace(d.geoid, tracts_.size());
        if (!fresh) throw FormatError("tract demographics: duplicate GEOID " + d.geoid);
        tracts_.push_back(std::move(d));
        totals_ = NationalTotals::from(tracts_);
    }

    const TractDemo* find(const std::string& geoid) const {
        auto it = by_geoid_.find(geoid);
        return it == by_geoid_.end() ? nullptr : &tracts_[it->second];
    }

    std::span<const TractDemo> tracts() const noexcept { return tracts_; }
    const NationalTotals& totals() const noexcept { return totals_; }
    std::size_t size() const noexcept { return tracts_.size(); }

    static TractDemoTable read_csv(std::istream& in) {
        const auto t = text::read_csv(in, "tract demographics");
        const char* what = "tract demographics";
        const std::size_t cg = t.require("GEOID", what), ct = t.require("TOTAL", what);
        const std::array<std::size_t, kRaceCount> cols = {t.require("WHITE", what), t.require("BLACK", what),
                                                          t.require("HISPANIC", what), t.require("ASIAN", what),
                                                          t.require("OTHER", what)};
        TractDemoTable table;
        for (const auto& row : t.rows) {
            TractDemo d;
            d.geoid = text::trim(row[cg]);
            auto total = text::parse_int(row[ct]);
            if (!total) throw FormatError("tract demographics: bad TOTAL for " + d.geoid);
            d.total_pop = *total;
            for (std::size_t r = 0; r < kRaceCount; ++r) {
                auto v = text::parse_int(row[cols[r]]);
                if (!v) throw FormatError("tract demographics: bad count for " + d.geoid);
                d.pop_by_race[r] = *v;
            }
            table.add(std::move(d));
        }
        return table;
    }

    void write_csv(std::ostream& out) const {
        out << "GEOID,TOTAL,WHITE,BLACK,HISPANIC,ASIAN,OTHER\n";
        for (const auto& d : tracts_) {
            out << d.geoid << ',' << d.total_pop;
            for (auto c : d.pop_by_race) out << ',' << c;
            out << '\n';
        }
    }

private:
    std::vector<TractDemo> tracts_;
    std::unordered_map<std::string, std::size_t> by_geoid_;
    NationalTotals totals_;
};

struct ForenameGender {
    std::string forename;
    std::int64_t male_count = 0;
    std::int64_t female_count = 0;
};

/// Forename -> (male, female) label counts. CSV: NAME,MALE,FEMALE.
class GenderTable {
public:
    void add(ForenameGender g) {
        if (g.male_count < 0 || g.female_count < 0 || g.male_count + g.female_count <= 0)
            throw FormatError("gender table: counts for " + g.forename + " must be >= 0 with a positive sum");
        auto key = name_key(g.forename);
        auto& slot = table_[key];
        slot.forename = key;
        slot.male_count += g.male_count;
        slot.female_count += g.female_count;
    }

    const ForenameGender* find(std::string_view forename) const {
        auto it = table_.find(name_key(forename));
        return it == table_.end() ? nullptr : &it->second;
    }

    std::size_t size() const noexcept { return table_.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : table_) out.push_back(k);
        std::sort(out.begin(), out.end());
        return out;
    }

    static GenderTable read_csv(std::istream& in) {
        const auto t = text::read_csv(in, "gender table");
        const std::size_t cn = t.require("NAME", "gender table"), cm = t.require("MALE", "gender table"),
                          cf = t.require("FEMALE", "gender table");
        GenderTable table;
        for (const auto& row : t.rows) {
            auto m = text::parse_int(row[cm]);
            auto f = text::parse_int(row[cf]);
            if (!m || !f) throw FormatError("gender table: bad count for " + row[cn]);
            table.add({text::trim(row[cn]), *m, *f});
        }
        return table;
    }

    void write_csv(std::ostream& out) const {
        std::map<std::string, const ForenameGender*> sorted;
        for (const auto& [k, v] : table_) sorted.emplace(k, &v);
        out << "NAME,MALE,FEMALE\n";
        for (const auto& [k, v] : sorted) out << k << ',' << v->male_count << ',' << v->female_count << '\n';
    }

private:
    std::unordered_map<std::string, ForenameGender> table_;
};

struct ForenameYearCounts {
    std::string forename;
    std::map<int, std::int64_t> by_year;
};

/// Forename -> birth-year counts. CSV long format: NAME,YEAR,COUNT; repeated
/// (name, year) rows (e.g. per-sex rows) are summed.
class AgeTable {
public:
    void add(std::string_view forename, int year, std::int64_t count) {
        if (count < 0) throw FormatError("age table: negative count for " + std::string(forename));
        auto key = name_key(forename);
        auto& slot = table_[key];
        slot.forename = key;
        slot.by_year[year] += count;
    }

    const ForenameYearCounts* find(std::string_view forename) const {
        auto it = table_.find(name_key(forename));
        return it == table_.end() ? nullptr : &it->second;
    }

    std::size_t size() const noexcept { return table_.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : table_) out.push_back(k);
        std::sort(out.begin(), out.end());
        return out;
    }

    static AgeTable read_csv(std::istream& in) {
        const auto t = text::read_csv(in, "age table");
        const std::size_t cn = t.require("NAME", "age table"), cy = t.require("YEAR", "age table"),
                          cc = t.require("COUNT", "age table");
        AgeTable table;
        for (const auto& row : t.rows) {
            auto y = text::parse_int(row[cy]);
            auto c = text::parse_int(row[cc]);
            if (!y || !c) throw FormatError("age table: bad row for " + row[cn]);
            table.add(text::trim(row[cn]), static_cast<int>(*y), *c);
        }
        return table;
    }

    void write_csv(std::ostream& out) const {
        std::map<std::string, const ForenameYearCounts*> sorted;
        for (const auto& [k, v] : table_) sorted.emplace(k, &v);
        out << "NAME,YEAR,COUNT\n";
        for (const auto& [k, v] : sorted)
            for (const auto& [y, c] : v->by_year) out << k << ',' << y << ',' << c << '\n';
    }

private:
    std::unordered_map<std::string, ForenameYearCounts> table_;
};

// -------------------------------------------------------------- inference

struct RacePosterior {
    RaceVector prob{};
    Race argmax = Race::White;
};

/// Argmax with exact ties going to the earlier category.
inline Race classify_race(const RacePosterior& posterior) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < kRaceCount; ++r)
        if (posterior.prob[r] > posterior.prob[best]) best = r;
    return static_cast<Race>(best);
}

/// BISG: q(r) = prior(r) * n_tract(r) / N_national(r), normalized.
/// Returns nullopt when every term is zero (unidentified).
inline std::optional<RacePosterior> bisg_posterior(const RaceVector& prior, const TractDemo& tract,
                                                   const NationalTotals& totals) {
    RaceVector q{};
    double sum = 0;
    for (std::size_t r = 0; r < kRaceCount; ++r) {
        if (prior[r] <= 0 || tract.pop_by_race[r] <= 0) continue;
        if (!(totals.by_race[r] > 0))
            throw std::invalid_argument("BISG: national total is zero for a race present in the tract");
        q[r] = prior[r] * (static_cast<double>(tract.pop_by_race[r]) / totals.by_race[r]);
        sum += q[r];
    }
    if (!(sum > 0)) return std::nullopt;
    RacePosterior post;
    for (std::size_t r = 0; r < kRaceCount; ++r) post.prob[r] = q[r] / sum;
    post.argmax = classify_race(post);
    return post;
}

inline std::optional<RacePosterior> bisg_posterior(const SurnameRecord& prior, const TractDemo& tract,
                                                   const NationalTotals& totals) {
    return bisg_posterior(prior.prior, tract, totals);
}

struct GenderCall {
    Gender gender;
    double probability;
};

/// Gender with the larger label fraction; exact 50/50 and unknown names
/// yield nullopt.
inline std::optional<GenderCall> infer_gender(std::string_view forename, const GenderTable& table) {
    const ForenameGender* g = table.find(forename);
    if (!g) return std::nullopt;
    const double total = static_cast<double>(g->male_count + g->female_count);
    if (g->male_count == g->female_count) return std::nullopt;
    if (g->male_count > g->female_count) return GenderCall{Gender::Male, static_cast<double>(g->male_count) / total};
    return GenderCall{Gender::Female, static_cast<double>(g->female_count) / total};
}

inline AgeGroup age_group_for_birth_year(int birth_year, int reference_year) {
    const int age = reference_year - birth_year;
    if (age <= 20) return AgeGroup::UpTo20;
    if (age <= 60) return AgeGroup::From21To60;
    return AgeGroup::From61;
}

struct AgeCall {
    AgeGroup group;
    double probability;
    std::array<double, kAgeGroupCount> group_probs;
};

/// Group probabilities are the normalized birth-count mass per age group
/// at `reference_year`; the argmax group is returned only if its
/// probability is strictly above `threshold`.
inline std::optional<AgeCall> infer_age_group(std::string_view forename, const AgeTable& table,
                                              int reference_year = 2013, double threshold = 0.6) {
    if (!(threshold > 0 && threshold <= 1)) throw std::invalid_argument("age threshold must be in (0, 1]");
    const ForenameYearCounts* rec = table.find(forename);
    if (!rec) return std::nullopt;
    std::array<double, kAgeGroupCount> mass{};
    double total = 0;
    for (const auto& [year, count] : rec->by_year) {
        mass[static_cast<std::size_t>(age_group_for_birth_year(year, reference_year))] += static_cast<double>(count);
        total += static_cast<double>(count);
    }
    if (!(total > 0)) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t g = 0; g < kAgeGroupCount; ++g) mass[g] /= total;
    for (std::size_t g = 1; g < kAgeGroupCount; ++g)
        if (mass[g] > mass[best]) best = g;
    if (!(mass[best] > threshold)) return std::nullopt;
    return AgeCall{static_cast<AgeGroup>(best), mass[best], mass};
}

// -------------------------------------------------------------- per-user profiling

struct DemographicProfile {
    std::string user_id;
    std::optional<Race> race;
    std::optional<double> race_prob;
    std::optional<Gender> gender;
    std::optional<double> gender_prob;
    std::optional<AgeGroup> age_group;
    std::optional<double> age_prob;
    std::optional<RacePosterior> race_posterior;  // audit only, not serialized
    std::optional<std::string> home_geoid;

    bool same_labels(const DemographicProfile& o) const {
        return user_id == o.user_id && race == o.race && race_prob == o.race_prob && gender == o.gender &&
               gender_prob == o.gender_prob && age_group == o.age_group && age_prob == o.age_prob;
    }
};

/// Identified and unidentified counts per dimension.
struct DemographicBreakdown {
    std::size_t total_users = 0;
    std::size_t race_identified = 0, race_unidentified = 0;
    std::array<std::size_t, kRaceCount> race_counts{};
    std::size_t gender_identified = 0, gender_unidentified = 0;
    std::array<std::size_t, 2> gender_counts{};
    std::size_t age_identified = 0, age_unidentified = 0;
    std::array<std::size_t, kAgeGroupCount> age_counts{};

    void add(const DemographicProfile& p) {
        ++total_users;
        if (p.race) {
            ++race_identified;
            ++race_counts[static_cast<std::size_t>(*p.race)];
        } else {
            ++race_unidentified;
        }
        if (p.gender) {
            ++gender_identified;
            ++gender_counts[static_cast<std::size_t>(*p.gender)];
        } else {
            ++gender_unidentified;
        }
        if (p.age_group) {
            ++age_identified;
            ++age_counts[static_cast<std::size_t>(*p.age_group)];
        } else {
            ++age_unidentified;
        }
    }

    bool reconciles() const {
        auto sum = [](const auto& a) {
            std::size_t s = 0;
            for (auto v : a) s += v;
            return s;
        };
        return race_identified + race_unidentified == total_users && gender_identified + gender_unidentified == total_users &&
               age_identified + age_unidentified == total_users && sum(race_counts) == race_identified &&
               sum(gender_counts) == gender_identified && sum(age_counts) == age_identified;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["total_users"] = total_users;
        nlohmann::ordered_json race;
        race["identified"] = race_identified;
        race["unidentified"] = race_unidentified;
        for (std::size_t r = 0; r < kRaceCount; ++r) race["counts"][std::string(kRaceLabels[r])] = race_counts[r];
        j["race"] = race;
        nlohmann::ordered_json gender;
        gender["identified"] = gender_identified;
        gender["unidentified"] = gender_unidentified;
        gender["counts"]["male"] = gender_counts[0];
        gender["counts"]["female"] = gender_counts[1];
        j["gender"] = gender;
        nlohmann::ordered_json age;
        age["identified"] = age_identified;
        age["unidentified"] = age_unidentified;
        for (std::size_t g = 0; g < kAgeGroupCount; ++g) age["counts"][std::string(kAgeLabels[g])] = age_counts[g];
        j["age"] = age;
        return j;
    }
};

struct DemographicTables {
    SurnameTable surnames;
    TractDemoTable tracts;
    GenderTable genders;
    AgeTable ages;
    TractIndex tract_index;
};

struct ProfileOptions {
    int reference_year = 2013;
    double age_threshold = 0.6;
};

/// Profiles one user. Race needs a detected home inside a tract with
/// demographics and a known surname; gender and age need only the forename.
inline DemographicProfile profile_user(const std::string& user_id, std::string_view profile_name,
                                       const std::optional<ActivityCenter>& home, const DemographicTables& tables,
                                       const ProfileOptions& opts) {
    DemographicProfile p;
    p.user_id = user_id;
    if (home) p.home_geoid = tables.tract_index.lookup(unproject_albers(home->center));
    const auto name = parse_name(profile_name);
    if (!name) return p;
    if (p.home_geoid) {
        const TractDemo* tract = tables.tracts.find(*p.home_geoid);
        const RaceVector* prior = tables.surnames.find(name->surname);
        if (tract && prior) {
            if (auto post = bisg_posterior(*prior, *tract, tables.tracts.totals())) {
                p.race = post->argmax;
                p.race_prob = post->prob[static_cast<std::size_t>(post->argmax)];
                p.race_posterior = *post;
            }
        }
    }
    if (auto g = infer_gender(name->forename, tables.genders)) {
        p.gender = g->gender;
        p.gender_prob = g->probability;
    }
    if (auto a = infer_age_group(name->forename, tables.ages, opts.reference_year, opts.age_threshold)) {
        p.age_group = a->group;
        p.age_prob = a->probability;
    }
    return p;
}

struct ProfileResult {
    std::vector<DemographicProfile> profiles;
    DemographicBreakdown breakdown;
};

/// `homes` is matched to trajectories by user_id; users absent from it
/// have no home.
inline ProfileResult profile_users(std::span<const Trajectory> trajs, std::span<const UserCenters> homes,
                                   const DemographicTables& tables, const ProfileOptions& opts) {
    std::unordered_map<std::string, const UserCenters*> by_user;
    for (const auto& h : homes) by_user.emplace(h.user_id, &h);
    ProfileResult out;
    out.profiles.reserve(trajs.size());
    for (const auto& t : trajs) {
        std::optional<ActivityCenter> home;
        if (auto it = by_user.find(t.user_id); it != by_user.end()) home = it->second->home;
        out.profiles.push_back(profile_user(t.user_id, t.profile_name, home, tables, opts));
        out.breakdown.add(out.profiles.back());
    }
    return out;
}

/// CSV: user_id,race,race_prob,gender,gender_prob,age_group,age_prob, with
/// empty fields where a dimension is unidentified.
inline void write_profiles_csv(std::ostream& out, std::span<const DemographicProfile> rows, const std::string& meta_line) {
    if (!meta_line.empty()) out << meta_line << '\n';
    out << "user_id,race,race_prob,gender,gender_prob,age_group,age_prob\n";
    auto num = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); };
    for (const auto& p : rows) {
        out << text::csv_escape(p.user_id) << ',' << (p.race ? to_string(*p.race) : "") << ',' << num(p.race_prob)
            << ',' << (p.gender ? to_string(*p.gender) : "") << ',' << num(p.gender_prob) << ','
            << (p.age_group ? to_string(*p.age_group) : "") << ',' << num(p.age_prob) << '\n';
    }
}

inline std::vector<DemographicProfile> read_profiles_csv(std::istream& in) {
    const auto t = text::read_csv(in, "profiles CSV");
    const char* what = "profiles CSV";
    const std::size_t cu = t.require("user_id", what), cr = t.require("race", what), crp = t.require("race_prob", what),
                      cg = t.require("gender", what), cgp = t.require("gender_prob", what),
                      ca = t.require("age_group", what), cap = t.require("age_prob", what);
    auto opt_num = [&](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        auto v = text::parse_double(s);
        if (!v) throw FormatError("profiles CSV: bad probability '" + s + "'");
        return v;
    };
    std::vector<DemographicProfile> out;
    for (const auto& row : t.rows) {
        DemographicProfile p;
        p.user_id = row[cu];
        if (!row[cr].empty()) {
            p.race = parse_race(row[cr]);
            if (!p.race) throw FormatError("profiles CSV: unknown race label '" + row[cr] + "'");
        }
        p.race_prob = opt_num(row[crp]);
        if (!row[cg].empty()) {
            p.gender = parse_gender(row[cg]);
            if (!p.gender) throw FormatError("profiles CSV: unknown gender label '" + row[cg] + "'");
        }
        p.gender_prob = opt_num(row[cgp]);
        if (!row[ca].empty()) {
            p.age_group = parse_age_group(row[ca]);
            if (!p.age_group) throw FormatError("profiles CSV: unknown age group '" + row[ca] + "'");
        }
        p.age_prob = opt_num(row[cap]);
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace mobiscope
