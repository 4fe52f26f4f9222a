#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lims/error.hpp"
#include "lims/insights.hpp"

using namespace lims;

namespace {

SnapshotPoint point(const std::string& label, std::set<std::string> domains) {
    return {SnapshotIndex::parse(label), std::move(domains)};
}

RegistrationProvider registrations() {
    RegistrationProvider r;
    r.upsert({"old.com", parse_date("2001-01-01"), std::nullopt});
    r.upsert({"young.net", parse_date("2023-06-01"), std::nullopt});
    r.upsert({"newer.io", parse_date("2024-08-05"), std::nullopt});
    return r;
}

RankingProvider rankings() {
    RankingProvider r;
    r.add_rank(parse_date("2024-08-12"), "old.com", 100);
    r.add_rank(parse_date("2024-08-12"), "young.net", 995000);
    r.add_rank(parse_date("2024-08-12"), "newer.io", 40000);
    return r;
}

SnapshotSeries stable_series() {
    return {"news.example",
            {point("2024-31", {"old.com", "young.net"}), point("2024-32", {"old.com", "young.net"}),
             point("2024-33", {"old.com", "young.net"})}};
}

} // namespace

TEST(SnapshotIndex, IsoWeekDates) {
    EXPECT_EQ(format_date(index_to_date("2024-42")), "2024-10-14");
    EXPECT_EQ(format_date(index_to_date("2024-01")), "2024-01-01");
    EXPECT_EQ(format_date(index_to_date("2024-33")), "2024-08-12");
    EXPECT_EQ(format_date(index_to_date("2020-53")), "2020-12-28");
    EXPECT_EQ(format_date(index_to_date("2021-01")), "2021-01-04");
    EXPECT_EQ(SnapshotIndex::parse("2024-07").label(), "2024-07");
}

TEST(SnapshotIndex, WeeksPerYear) {
    EXPECT_EQ(iso_weeks_in_year(2015), 53u);
    EXPECT_EQ(iso_weeks_in_year(2020), 53u);
    EXPECT_EQ(iso_weeks_in_year(2026), 53u);
    EXPECT_EQ(iso_weeks_in_year(2032), 53u);
    EXPECT_EQ(iso_weeks_in_year(2021), 52u);
    EXPECT_EQ(iso_weeks_in_year(2024), 52u);
    EXPECT_THROW(SnapshotIndex::parse("2024-53"), std::invalid_argument);
    EXPECT_NO_THROW(SnapshotIndex::parse("2026-53"));
}

TEST(SnapshotIndex, RejectsMalformedLabels) {
    for (const char* bad : {"2024-60", "2024-00", "2024-1", "24-01", "2024/01", "2024-0a", ""}) {
        EXPECT_THROW(SnapshotIndex::parse(bad), std::invalid_argument) << bad;
    }
}

TEST(SnapshotIndex, ConsecutiveWeeksAreSevenDaysApart) {
    for (int y = 2000; y <= 2040; ++y) {
        const unsigned n = iso_weeks_in_year(y);
        for (unsigned w = 1; w < n; ++w) {
            EXPECT_EQ((SnapshotIndex{y, w + 1}.approx_date() - SnapshotIndex{y, w}.approx_date()).count(), 7);
        }
        EXPECT_EQ((SnapshotIndex{y + 1, 1}.approx_date() - SnapshotIndex{y, n}.approx_date()).count(), 7);
    }
}

TEST(LoadSnapshots, ReducesToForeignRegistrableDomains) {
    std::istringstream in(R"({"site": "news.example.com", "index": "2024-33", "links": ["https://cdn.old.com/a.js", "https://static.example.com/x.js", "https://a.b.young.net/y"]}

{"site": "news.example.com", "index": "2024-33", "links": ["https://old.com/other.js", "not a url"]}
{"site": "news.example.com", "index": "2024-31", "links": []}
{"site": "blog.test", "index": "2024-31", "links": ["https://old.com/"]}
)");
    const auto series = load_snapshots(in);
    ASSERT_EQ(series.size(), 2u);
    EXPECT_EQ(series[0].site, "blog.test");
    const auto& s = series[1];
    EXPECT_EQ(s.site, "news.example.com");
    ASSERT_EQ(s.points.size(), 2u);
    EXPECT_EQ(s.points[0].index.label(), "2024-31");
    EXPECT_TRUE(s.points[0].domains.empty());
    EXPECT_EQ(s.points[1].domains, (std::set<std::string>{"old.com", "young.net"}));
}

TEST(LoadSnapshots, ReportsBadLines) {
    std::istringstream bad_json("{oops\n");
    EXPECT_THROW(load_snapshots(bad_json), ConfigError);
    std::istringstream bad_index(R"({"site": "a.com", "index": "2024-60", "links": []})");
    EXPECT_THROW(load_snapshots(bad_index), std::invalid_argument);
}

TEST(AgeSeries, YoungestDomainPerIndex) {
    const auto ages = registration_age_series(stable_series(), registrations());
    ASSERT_EQ(ages.size(), 3u);
    EXPECT_EQ(ages[0].min_age_days, 424);
    EXPECT_EQ(ages[0].domain, "young.net");
    EXPECT_EQ(ages[1].min_age_days, 431);
    EXPECT_EQ(ages[2].min_age_days, 438);
    EXPECT_EQ(classify_stability(ages), Stability::stable);
    EXPECT_TRUE(age_drops(ages).empty());
}

TEST(AgeSeries, NewDomainCausesDrop) {
    auto s = stable_series();
    s.points.push_back(point("2024-34", {"old.com", "young.net", "newer.io"}));
    const auto ages = registration_age_series(s, registrations());
    ASSERT_EQ(ages.size(), 4u);
    EXPECT_EQ(ages[3].min_age_days, 14);
    EXPECT_EQ(ages[3].domain, "newer.io");
    EXPECT_EQ(classify_stability(ages), Stability::unstable);
    const auto drops = age_drops(ages);
    ASSERT_EQ(drops.size(), 1u);
    EXPECT_EQ(drops[0].label(), "2024-34");
}

TEST(AgeSeries, UnknownDomainsAreSkipped) {
    const SnapshotSeries s{"x.com", {point("2024-31", {"nobody.org"}), point("2024-32", {"nobody.org", "old.com"})}};
    const auto ages = registration_age_series(s, registrations());
    ASSERT_EQ(ages.size(), 1u);
    EXPECT_EQ(ages[0].index.label(), "2024-32");
    EXPECT_EQ(classify_stability(ages), Stability::indeterminate);
}

TEST(RankSeries, ImputesUnranked) {
    const SnapshotSeries s{"x.com", {point("2024-33", {"old.com", "young.net", "nobody.org"})}};
    const auto imputed = lowest_rank_series(s, rankings(), true);
    ASSERT_EQ(imputed.size(), 1u);
    EXPECT_EQ(imputed[0].worst_rank, imputed_unranked_rank);
    EXPECT_EQ(imputed[0].domain, "nobody.org");
    const auto ranked = lowest_rank_series(s, rankings(), false);
    ASSERT_EQ(ranked.size(), 1u);
    EXPECT_EQ(ranked[0].worst_rank, 995000);
    EXPECT_EQ(ranked[0].domain, "young.net");
}

TEST(RankSeries, NoListBeforeIndexMeansNoPoint) {
    const auto ranks = lowest_rank_series(stable_series(), rankings(), true);
    ASSERT_EQ(ranks.size(), 1u);
    EXPECT_EQ(ranks[0].index.label(), "2024-33");
    const SnapshotSeries only_unranked{"x.com", {point("2024-33", {"nobody.org"})}};
    EXPECT_TRUE(lowest_rank_series(only_unranked, rankings(), false).empty());
}

TEST(Thresholds, SuggestionFromHistory) {
    const auto ages = registration_age_series(stable_series(), registrations());
    const auto ranks = lowest_rank_series(stable_series(), rankings(), false);
    const auto exact = suggest_thresholds(ages, ranks);
    EXPECT_EQ(exact.min_age_days, 424);
    EXPECT_EQ(exact.max_rank, 995000);
    EXPECT_EQ(replay_violations(ages, ranks, exact), 0u);

    const auto margin = suggest_thresholds(ages, ranks, 30, 5000);
    EXPECT_EQ(margin.min_age_days, 394);
    EXPECT_EQ(margin.max_rank, 1'000'000);

    const ThresholdSuggestion strict{430, 900000};
    EXPECT_EQ(replay_violations(ages, ranks, strict), 2u);
}

TEST(Thresholds, SentinelRankIsIgnored) {
    const std::vector<RankPoint> ranks{{SnapshotIndex{2024, 1}, 500, "a.com"},
                                       {SnapshotIndex{2024, 2}, imputed_unranked_rank, "b.com"}};
    const auto t = suggest_thresholds({}, ranks);
    EXPECT_EQ(t.max_rank, 500);
    EXPECT_EQ(replay_violations({}, ranks, t), 0u);
    EXPECT_EQ(suggest_thresholds({}, {}, 10, 0).min_age_days, 0);
}

// Random stable histories: fixed link sets age by exactly 7 days per week,
// and the suggestion is the first age less the margin with no replay hits.
TEST(AgeSeries, FixedLinkSetIsAffineProperty) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> day(0, 4000), count(1, 6), weeks(2, 20), margin(0, 50);
    for (int trial = 0; trial < 100; ++trial) {
        RegistrationProvider regs;
        std::set<std::string> domains;
        for (int i = 0, n = count(rng); i < n; ++i) {
            const auto d = "d" + std::to_string(i) + ".com";
            regs.upsert({d, parse_date("2010-01-01") + std::chrono::days{day(rng)}, std::nullopt});
            domains.insert(d);
        }
        SnapshotSeries s{"site.com", {}};
        SnapshotIndex idx{2021, 50};
        for (int w = 0, n = weeks(rng); w < n; ++w) {
            s.points.push_back({idx, domains});
            idx = idx.week == iso_weeks_in_year(idx.year) ? SnapshotIndex{idx.year + 1, 1}
                                                            : SnapshotIndex{idx.year, idx.week + 1};
        }
        const auto ages = registration_age_series(s, regs);
        ASSERT_EQ(ages.size(), s.points.size());
        for (std::size_t i = 0; i < ages.size(); ++i) {
            EXPECT_EQ(ages[i].min_age_days, ages[0].min_age_days + 7 * static_cast<long>(i));
        }
        EXPECT_EQ(classify_stability(ages), Stability::stable);
        const int m = margin(rng);
        const auto t = suggest_thresholds(ages, {}, m);
        EXPECT_EQ(t.min_age_days, std::max(0L, ages[0].min_age_days - m));
        EXPECT_EQ(replay_violations(ages, {}, t), 0u);
    }
}

TEST(RankSeries, ImputedNeverBelowRankedOnlyProperty) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> coin(0, 2);
    std::uniform_int_distribution<std::int64_t> rank(1, 1'000'000);
    for (int trial = 0; trial < 100; ++trial) {
        RankingProvider r;
        std::set<std::string> domains;
        for (int i = 0; i < 8; ++i) {
            const auto d = "d" + std::to_string(i) + ".com";
            domains.insert(d);
            if (coin(rng)) r.add_rank(parse_date("2024-01-01"), d, rank(rng));
        }
        const SnapshotSeries s{"site.com", {point("2024-05", domains)}};
        const auto imp = lowest_rank_series(s, r, true);
        const auto only = lowest_rank_series(s, r, false);
        ASSERT_EQ(imp.size(), 1u);
        if (!only.empty()) EXPECT_GE(imp[0].worst_rank, only[0].worst_rank);
    }
}

TEST(Inclusion, MedianOverSitesAndOrigins) {
    RequestLog log;
    for (const std::string site : {"a.com", "b.com", "c.com"}) {
        auto& urls = log[site];
        for (int o = 0; o < 7; ++o) {
            const int n = o < 6 ? 32 : 5;
            for (int k = 0; k < n; ++k) {
                urls.push_back("https://cdn" + std::to_string(o) + ".third.net/f" + std::to_string(k) + ".js");
            }
        }
        urls.push_back("https://static." + site + "/own.js");
        urls.push_back("https://cdn0.third.net/f0.js");  // duplicate
    }
    const auto s = inclusion_summary(log, 3);
    EXPECT_EQ(s.median_external_urls, 197.0);
    EXPECT_EQ(s.median_external_origins, 7.0);
    EXPECT_EQ(s.median_urls_per_origin, 32.0);
    ASSERT_EQ(s.top_origins.size(), 3u);
    EXPECT_EQ(s.top_origins[0].second, 3u);
}

TEST(Inclusion, EvenCountsAverageTheMiddle) {
    const RequestLog log{{"a.com",
                          {"https://x.net/1", "https://x.net/2", "https://x.net/3", "https://y.org/1",
                           "https://y.org/2"}}};
    const auto s = inclusion_summary(log);
    EXPECT_EQ(s.median_external_urls, 5.0);
    EXPECT_EQ(s.median_external_origins, 2.0);
    EXPECT_EQ(s.median_urls_per_origin, 2.5);
}

TEST(Inclusion, EmptyLogHasNoMedians) {
    const auto s = inclusion_summary({});
    EXPECT_FALSE(s.median_external_urls);
    EXPECT_FALSE(s.median_external_origins);
    EXPECT_FALSE(s.median_urls_per_origin);
    const auto j = to_json(s);
    EXPECT_TRUE(j.at("medianExternalUrls").is_null());
    EXPECT_TRUE(j.at("topOrigins").empty());
}

TEST(AnalyzeSite, CsvAndSummary) {
    auto s = stable_series();
    s.points.push_back(point("2024-34", {"old.com", "young.net", "newer.io"}));
    const std::vector<SiteInsights> sites{analyze_site(s, registrations(), rankings())};
    ASSERT_TRUE(sites[0].suggestion);
    EXPECT_EQ(sites[0].suggestion->min_age_days, 14);
    EXPECT_EQ(sites[0].suggestion->max_rank, 995000);

    const auto csv = series_csv(sites);
    EXPECT_EQ(csv.rfind("site,index,date,min_age_days,youngest_domain,worst_rank_imputed,worst_rank\n", 0), 0u);
    EXPECT_NE(csv.find("news.example,2024-31,2024-07-29,424,young.net,,\n"), std::string::npos);
    EXPECT_NE(csv.find("news.example,2024-33,2024-08-12,438,young.net,995000,995000\n"), std::string::npos);

    const auto j = summary_json(sites);
    EXPECT_EQ(j.at("counts").at("unstable"), 1);
    EXPECT_EQ(j.at("sites").at(0).at("stability"), "unstable");
    EXPECT_EQ(j.at("sites").at(0).at("drops"), nlohmann::json::array({"2024-34"}));
}
