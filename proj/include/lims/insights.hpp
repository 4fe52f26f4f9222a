#pragma once

#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lims/providers.hpp"
#include "lims/time.hpp"

namespace lims {

// Archive crawl label "YYYY-WW" (ISO-8601 week), dated by that week's Monday.
struct SnapshotIndex {
    int year = 0;
    unsigned week = 0;

    // Throws std::invalid_argument on a malformed label or a week the ISO
    // year does not have.
    static SnapshotIndex parse(std::string_view label);
    std::string label() const;
    Date approx_date() const;

    auto operator<=>(const SnapshotIndex&) const = default;
};

Date index_to_date(std::string_view label);
unsigned iso_weeks_in_year(int year);

struct SnapshotPoint {
    SnapshotIndex index;
    std::set<std::string> domains;  // linked third-party eTLD+1s
};

struct SnapshotSeries {
    std::string site;
    std::vector<SnapshotPoint> points;  // strictly increasing index
};

// JSON lines {site, index, links:[urls]}. Links are reduced to eTLD+1 and the
// site's own registrable domain is dropped; repeated indexes merge.
std::vector<SnapshotSeries> load_snapshots(std::istream& jsonl);

struct AgePoint {
    SnapshotIndex index;
    long min_age_days = 0;
    std::string domain;  // the most recently registered one
};

struct RankPoint {
    SnapshotIndex index;
    std::int64_t worst_rank = 0;
    std::string domain;
};

inline constexpr std::int64_t imputed_unranked_rank = 10'000'000;

// Per index: days since registration of the youngest linked domain. Domains
// without registration data are skipped; an index with none left has no point.
std::vector<AgePoint> registration_age_series(const SnapshotSeries& series, const RegistrationProvider& registrations);

// Per index: the worst (largest) rank among linked domains, using the list
// nearest on or before the index date. Unranked domains count as 10^7 when
// imputing, and are skipped otherwise.
std::vector<RankPoint> lowest_rank_series(const SnapshotSeries& series, const RankingProvider& rankings,
                                          bool impute_unranked);

enum class Stability { stable, unstable, indeterminate };

std::string_view to_string(Stability s);

// Stable iff the age series never decreases; fewer than two points is
// indeterminate.
Stability classify_stability(std::span<const AgePoint> ages);

// Index of every point where the age dropped relative to its predecessor.
std::vector<SnapshotIndex> age_drops(std::span<const AgePoint> ages);

struct ThresholdSuggestion {
    long min_age_days = 0;
    std::int64_t max_rank = 0;
};

ThresholdSuggestion suggest_thresholds(std::span<const AgePoint> ages, std::span<const RankPoint> ranks,
                                       long age_margin_days = 0, std::int64_t rank_margin = 0);

// Points of the history the suggested thresholds would flag (age below the
// minimum, or finite rank above the maximum).
std::size_t replay_violations(std::span<const AgePoint> ages, std::span<const RankPoint> ranks,
                              const ThresholdSuggestion& thresholds);

// site -> absolute URLs it requested
using RequestLog = std::map<std::string, std::vector<std::string>>;

struct InclusionSummary {
    std::optional<double> median_external_urls;
    std::optional<double> median_external_origins;
    // Median over every (site, external origin) pair of its distinct URL count.
    std::optional<double> median_urls_per_origin;
    // Origin -> number of sites including it, most common first.
    std::vector<std::pair<std::string, std::size_t>> top_origins;
};

InclusionSummary inclusion_summary(const RequestLog& log, std::size_t top_n = 10);

nlohmann::json to_json(const InclusionSummary& s);

struct SiteInsights {
    std::string site;
    std::vector<AgePoint> ages;
    std::vector<RankPoint> ranks_imputed;
    std::vector<RankPoint> ranks_ranked_only;
    Stability stability = Stability::indeterminate;
    std::optional<ThresholdSuggestion> suggestion;
};

SiteInsights analyze_site(const SnapshotSeries& series, const RegistrationProvider& registrations,
                          const RankingProvider& rankings, long age_margin_days = 0, std::int64_t rank_margin = 0);

// site,index,date,min_age_days,youngest_domain,worst_rank_imputed,worst_rank
std::string series_csv(std::span<const SiteInsights> sites);
nlohmann::json summary_json(std::span<const SiteInsights> sites);

} // namespace lims
