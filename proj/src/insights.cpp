#include "lims/insights.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "lims/error.hpp"
#include "lims/url.hpp"

namespace lims {

using nlohmann::json;
using namespace std::chrono;

namespace {

Date week1_monday(int year) {
    const Date jan4 = sys_days{std::chrono::year{year} / January / 4};
    const weekday wd{jan4};
    const auto since_monday = (wd - Monday).count();
    return jan4 - days{since_monday};
}

std::optional<double> median_of(std::vector<double> v) {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::string host_of_any(std::string_view url_or_host) {
    if (url_or_host.find("://") != std::string_view::npos) return parse_normalized(url_or_host).host_name();
    std::string s(url_or_host);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (const auto slash = s.find('/'); slash != std::string::npos) s.resize(slash);
    if (const auto colon = s.find(':'); colon != std::string::npos) s.resize(colon);
    const bool valid = std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '.' || c == '-'; });
    if (!valid) throw MalformedUrl("invalid host '" + s + "'");
    return s;
}

} // namespace

unsigned iso_weeks_in_year(int y) {
    const weekday jan1{sys_days{std::chrono::year{y} / January / 1}};
    const bool leap = std::chrono::year{y}.is_leap();
    return (jan1 == Thursday || (leap && jan1 == Wednesday)) ? 53u : 52u;
}

SnapshotIndex SnapshotIndex::parse(std::string_view label) {
    const auto bad = [&] { return std::invalid_argument("invalid snapshot index '" + std::string(label) + "'"); };
    if (label.size() != 7 || label[4] != '-') throw bad();
    int y = 0;
    unsigned w = 0;
    auto r1 = std::from_chars(label.data(), label.data() + 4, y);
    auto r2 = std::from_chars(label.data() + 5, label.data() + 7, w);
    if (r1.ec != std::errc{} || r1.ptr != label.data() + 4 || r2.ec != std::errc{} || r2.ptr != label.data() + 7) {
        throw bad();
    }
    if (w < 1 || w > iso_weeks_in_year(y)) throw bad();
    return SnapshotIndex{y, w};
}

std::string SnapshotIndex::label() const {
    return fmt::format("{:04}-{:02}", year, week);
}

Date SnapshotIndex::approx_date() const {
    return week1_monday(year) + weeks{week - 1};
}

Date index_to_date(std::string_view label) {
    return SnapshotIndex::parse(label).approx_date();
}

std::vector<SnapshotSeries> load_snapshots(std::istream& in) {
    std::map<std::string, std::map<SnapshotIndex, std::set<std::string>>> by_site;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError(fmt::format("snapshots line {}: {}", lineno, e.what()));
        }
        const std::string site = host_of_any(j.at("site").get<std::string>());
        const std::string own = etld1(site);
        const SnapshotIndex index = SnapshotIndex::parse(j.at("index").get<std::string>());
        auto& domains = by_site[site][index];
        for (const auto& link : j.value("links", json::array())) {
            std::string host;
            try {
                host = host_of_any(link.get<std::string>());
            } catch (const MalformedUrl&) {
                continue;
            }
            if (host.empty()) continue;
            const std::string d = etld1(host);
            if (d != own) domains.insert(d);
        }
    }
    std::vector<SnapshotSeries> out;
    for (auto& [site, points] : by_site) {
        SnapshotSeries s{site, {}};
        for (auto& [index, domains] : points) s.points.push_back({index, std::move(domains)});
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<AgePoint> registration_age_series(const SnapshotSeries& series, const RegistrationProvider& registrations) {
    std::vector<AgePoint> out;
    for (const auto& p : series.points) {
        const Timestamp at{p.index.approx_date()};
        std::optional<AgePoint> best;
        for (const auto& d : p.domains) {
            const auto rec = registrations.lookup(d);
            if (!rec) continue;
            const long age = days_between(Timestamp{rec->registered_at}, at);
            if (!best || age < best->min_age_days) best = AgePoint{p.index, age, d};
        }
        if (best) out.push_back(*best);
    }
    return out;
}

std::vector<RankPoint> lowest_rank_series(const SnapshotSeries& series, const RankingProvider& rankings,
                                          bool impute_unranked) {
    std::vector<RankPoint> out;
    for (const auto& p : series.points) {
        const auto list = rankings.nearest_on_or_before(p.index.approx_date());
        if (!list) continue;
        std::optional<RankPoint> worst;
        for (const auto& d : p.domains) {
            auto r = rankings.rank(d, *list);
            if (!r) {
                if (!impute_unranked) continue;
                r = imputed_unranked_rank;
            }
            if (!worst || *r > worst->worst_rank) worst = RankPoint{p.index, *r, d};
        }
        if (worst) out.push_back(*worst);
    }
    return out;
}

std::string_view to_string(Stability s) {
    switch (s) {
        case Stability::stable: return "stable";
        case Stability::unstable: return "unstable";
        case Stability::indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

Stability classify_stability(std::span<const AgePoint> ages) {
    if (ages.size() < 2) return Stability::indeterminate;
    return age_drops(ages).empty() ? Stability::stable : Stability::unstable;
}

std::vector<SnapshotIndex> age_drops(std::span<const AgePoint> ages) {
    std::vector<SnapshotIndex> out;
    for (std::size_t i = 1; i < ages.size(); ++i) {
        if (ages[i].min_age_days < ages[i - 1].min_age_days) out.push_back(ages[i].index);
    }
    return out;
}

ThresholdSuggestion suggest_thresholds(std::span<const AgePoint> ages, std::span<const RankPoint> ranks,
                                       long age_margin_days, std::int64_t rank_margin) {
    ThresholdSuggestion s;
    if (!ages.empty()) {
        const auto min_age = std::min_element(ages.begin(), ages.end(), [](const auto& a, const auto& b) {
                                 return a.min_age_days < b.min_age_days;
                             })->min_age_days;
        s.min_age_days = std::max(0L, min_age - age_margin_days);
    }
    std::int64_t max_finite = 0;
    for (const auto& r : ranks) {
        if (r.worst_rank != imputed_unranked_rank) max_finite = std::max(max_finite, r.worst_rank);
    }
    s.max_rank = max_finite + rank_margin;
    return s;
}

std::size_t replay_violations(std::span<const AgePoint> ages, std::span<const RankPoint> ranks,
                              const ThresholdSuggestion& t) {
    std::size_t n = 0;
    for (const auto& a : ages) n += a.min_age_days < t.min_age_days ? 1 : 0;
    for (const auto& r : ranks) n += (r.worst_rank != imputed_unranked_rank && r.worst_rank > t.max_rank) ? 1 : 0;
    return n;
}

InclusionSummary inclusion_summary(const RequestLog& log, std::size_t top_n) {
    InclusionSummary s;
    if (log.empty()) return s;
    std::vector<double> urls_per_site;
    std::vector<double> origins_per_site;
    std::vector<double> urls_per_origin;
    std::map<std::string, std::size_t> sites_per_origin;
    for (const auto& [site, urls] : log) {
        const std::string own = etld1(host_of_any(site));
        std::set<std::string> external;
        std::map<std::string, std::set<std::string>> by_origin;
        for (const auto& u : urls) {
            std::string normalized;
            std::string origin;
            try {
                const NormalizedUrl n = normalize_url(u);
                if (etld1(n.host_name()) == own) continue;
                normalized = n.text() + (n.query ? "?" + *n.query : "");
                origin = origin_of(u);
            } catch (const MalformedUrl&) {
                continue;
            }
            external.insert(normalized);
            by_origin[origin].insert(normalized);
        }
        urls_per_site.push_back(static_cast<double>(external.size()));
        origins_per_site.push_back(static_cast<double>(by_origin.size()));
        for (const auto& [origin, set] : by_origin) {
            urls_per_origin.push_back(static_cast<double>(set.size()));
            ++sites_per_origin[origin];
        }
    }
    s.median_external_urls = median_of(urls_per_site);
    s.median_external_origins = median_of(origins_per_site);
    s.median_urls_per_origin = median_of(urls_per_origin);
    s.top_origins.assign(sites_per_origin.begin(), sites_per_origin.end());
    std::stable_sort(s.top_origins.begin(), s.top_origins.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (s.top_origins.size() > top_n) s.top_origins.resize(top_n);
    return s;
}

json to_json(const InclusionSummary& s) {
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json top = json::array();
    for (const auto& [origin, n] : s.top_origins) top.push_back({{"origin", origin}, {"sites", n}});
    return {{"medianExternalUrls", opt(s.median_external_urls)},
            {"medianExternalOrigins", opt(s.median_external_origins)},
            {"medianUrlsPerOrigin", opt(s.median_urls_per_origin)},
            {"topOrigins", top}};
}

SiteInsights analyze_site(const SnapshotSeries& series, const RegistrationProvider& registrations,
                          const RankingProvider& rankings, long age_margin_days, std::int64_t rank_margin) {
    SiteInsights out;
    out.site = series.site;
    out.ages = registration_age_series(series, registrations);
    out.ranks_imputed = lowest_rank_series(series, rankings, true);
    out.ranks_ranked_only = lowest_rank_series(series, rankings, false);
    out.stability = classify_stability(out.ages);
    if (!out.ages.empty() || !out.ranks_ranked_only.empty()) {
        out.suggestion = suggest_thresholds(out.ages, out.ranks_ranked_only, age_margin_days, rank_margin);
    }
    return out;
}

std::string series_csv(std::span<const SiteInsights> sites) {
    std::ostringstream out;
    out << "site,index,date,min_age_days,youngest_domain,worst_rank_imputed,worst_rank\n";
    for (const auto& s : sites) {
        std::set<SnapshotIndex> indexes;
        for (const auto& a : s.ages) indexes.insert(a.index);
        for (const auto& r : s.ranks_imputed) indexes.insert(r.index);
        for (const auto& r : s.ranks_ranked_only) indexes.insert(r.index);
        for (const auto& idx : indexes) {
            const auto age = std::find_if(s.ages.begin(), s.ages.end(), [&](const auto& a) { return a.index == idx; });
            const auto imp = std::find_if(s.ranks_imputed.begin(), s.ranks_imputed.end(),
                                          [&](const auto& r) { return r.index == idx; });
            const auto rk = std::find_if(s.ranks_ranked_only.begin(), s.ranks_ranked_only.end(),
                                         [&](const auto& r) { return r.index == idx; });
            out << s.site << ',' << idx.label() << ',' << format_date(idx.approx_date()) << ',';
            if (age != s.ages.end()) out << age->min_age_days << ',' << age->domain;
            else out << ',';
            out << ',';
            if (imp != s.ranks_imputed.end()) out << imp->worst_rank;
            out << ',';
            if (rk != s.ranks_ranked_only.end()) out << rk->worst_rank;
            out << '\n';
        }
    }
    return out.str();
}

json summary_json(std::span<const SiteInsights> sites) {
    json list = json::array();
    std::map<std::string, std::size_t> counts{{"stable", 0}, {"unstable", 0}, {"indeterminate", 0}};
    for (const auto& s : sites) {
        ++counts[std::string(to_string(s.stability))];
        json drops = json::array();
        for (const auto& d : age_drops(s.ages)) drops.push_back(d.label());
        json j{{"site", s.site}, {"stability", to_string(s.stability)}, {"points", s.ages.size()}, {"drops", drops}};
        if (s.suggestion) {
            j["suggestion"] = {{"minAgeDays", s.suggestion->min_age_days}, {"maxRank", s.suggestion->max_rank}};
        }
        list.push_back(std::move(j));
    }
    return {{"sites", list}, {"counts", counts}};
}

} // namespace lims
