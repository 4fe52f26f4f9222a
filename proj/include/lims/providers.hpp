#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lims/digest.hpp"
#include "lims/time.hpp"

namespace lims {

// All providers here are hermetic, file-backed stand-ins for WHOIS/passive
// DNS, popularity rankings, threat feeds, GeoIP and live fetches. A provider whose backing
// file failed to load stays constructible and throws ProviderUnavailable on
// every query.
class FixtureProvider {
public:
    bool available() const noexcept { return !load_error_; }
    const std::optional<std::string>& load_error() const noexcept { return load_error_; }

protected:
    void fail_load(std::string why) { load_error_ = std::move(why); }
    void ensure_available(std::string_view provider) const;

private:
    std::optional<std::string> load_error_;
};

struct RegistrationRecord {
    std::string domain;
    Date registered_at;
    std::optional<Date> expires_at;

    bool operator==(const RegistrationRecord&) const = default;
};

class RegistrationProvider : public FixtureProvider {
public:
    RegistrationProvider() = default;
    static RegistrationProvider from_file(const std::filesystem::path& path);
    static RegistrationProvider from_json(const nlohmann::json& records);

    std::optional<RegistrationRecord> lookup(std::string_view domain) const;
    // Replaces (or adds) the record for its domain; models a dataset refresh.
    void upsert(RegistrationRecord record);

    RegistrationProvider(const RegistrationProvider& other);
    RegistrationProvider& operator=(const RegistrationProvider& other);

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, RegistrationRecord> records_;
};

// Popularity ranking lists, one per list date; CSV lines are `rank,domain`.
class RankingProvider : public FixtureProvider {
public:
    RankingProvider() = default;
    // Loads every `<YYYY-MM-DD>.csv` in the directory.
    static RankingProvider from_directory(const std::filesystem::path& dir);

    void add_list(Date list_date, std::string_view csv_text);
    void add_rank(Date list_date, std::string domain, std::int64_t rank);

    // Throws UnknownListDate when no list was loaded for that date.
    std::optional<std::int64_t> rank(std::string_view domain, Date list_date) const;

    std::optional<Date> latest_date() const;
    // Most recent list date at or before `when`.
    std::optional<Date> nearest_on_or_before(Date when) const;

private:
    std::map<Date, std::unordered_map<std::string, std::int64_t>> lists_;
};

// Membership over loaded indicators (domains, IPs, and `sha256:<hex>` content
// hashes). Content scans are cached by content hash so a repeated payload is
// only scanned once.
class ThreatIntelProvider : public FixtureProvider {
public:
    ThreatIntelProvider() = default;
    static ThreatIntelProvider from_file(const std::filesystem::path& path);
    static ThreatIntelProvider from_lines(std::string_view text);

    void add_indicator(std::string indicator);
    bool lookup(std::string_view indicator) const;
    bool scan_content(std::string_view content) const;

    std::size_t scanner_calls() const;
    std::size_t cache_hits() const;

    ThreatIntelProvider(const ThreatIntelProvider& other);
    ThreatIntelProvider& operator=(const ThreatIntelProvider& other);

private:
    std::set<std::string, std::less<>> indicators_;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::string, bool> scan_cache_;
    mutable std::size_t scanner_calls_ = 0;
    mutable std::size_t cache_hits_ = 0;
};

struct GeoRecord {
    std::string ip;
    std::string country_code;
    double latitude = 0.0;
    double longitude = 0.0;
};

// Haversine distance on a sphere of radius 6371 km.
double great_circle_km(const GeoRecord& a, const GeoRecord& b);
double great_circle_km(double lat1, double lon1, double lat2, double lon2);

class GeoProvider : public FixtureProvider {
public:
    GeoProvider() = default;
    // dns.json: {"host": "ip"}; geo.json: {"ip": {"country": "JP", "lat": .., "lon": ..}}
    static GeoProvider from_files(const std::filesystem::path& dns, const std::filesystem::path& geo);

    void add_dns(std::string host, std::string ip);
    void add_geo(GeoRecord record);

    // Throws ResolutionFailure or GeoUnknown.
    std::string resolve(std::string_view domain) const;
    GeoRecord lookup(std::string_view domain) const;

private:
    std::unordered_map<std::string, std::string> dns_;
    std::unordered_map<std::string, GeoRecord> geo_;
};

struct DependencySnapshot {
    std::string resource_url;
    std::set<std::string> contacted_urls;
    Timestamp captured_at{};
};

// Latest-wins baseline store, keyed by resource URL.
class DependencySnapshotStore : public FixtureProvider {
public:
    std::optional<DependencySnapshot> dependency_snapshot(std::string_view resource_url) const;
    void store_snapshot(DependencySnapshot snapshot);

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, DependencySnapshot> snapshots_;
};

// What a replay of the resource would contact right now.
class DependencyObserver : public FixtureProvider {
public:
    DependencyObserver() = default;
    // {"resource": ["contacted", ...]}
    static DependencyObserver from_file(const std::filesystem::path& path);

    void set_current(std::string resource_url, std::set<std::string> contacted);
    std::optional<std::set<std::string>> current(std::string_view resource_url) const;

    DependencyObserver(const DependencyObserver& other);
    DependencyObserver& operator=(const DependencyObserver& other);

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::set<std::string>> current_;
};

// Resource bodies as served to a given client profile. A body registered
// without a profile is served to every profile.
class ContentProvider : public FixtureProvider {
public:
    static constexpr std::string_view default_profile = "desktop";

    ContentProvider() = default;
    // {"url": "body"} or {"url": {"desktop": "...", "mobile": "..."}}
    static ContentProvider from_file(const std::filesystem::path& path);

    void set(std::string url, std::string body);
    void set_for_profile(std::string url, std::string profile, std::string body);
    std::optional<std::string> fetch(std::string_view url,
                                     std::string_view profile = default_profile) const;

    ContentProvider(const ContentProvider& other);
    ContentProvider& operator=(const ContentProvider& other);

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::string> bodies_;
    std::unordered_map<std::string, std::unordered_map<std::string, std::string>> per_profile_;
};

struct SriEntry {
    std::string page_url;
    std::string resource_url;
    SriDigest digest;
};

class SriProvider : public FixtureProvider {
public:
    SriProvider() = default;
    static SriProvider from_file(const std::filesystem::path& path);

    void add(SriEntry entry);
    std::optional<SriEntry> expected(std::string_view page_url, std::string_view resource_url) const;

private:
    std::vector<SriEntry> entries_;
};

enum class FileSide { client, server };

struct CoreFileManifestEntry {
    std::string path;  // site-relative, starts with '/'
    SriDigest expected_digest;
    FileSide side = FileSide::client;
};

class CoreManifestProvider : public FixtureProvider {
public:
    CoreManifestProvider() = default;
    static CoreManifestProvider from_file(const std::filesystem::path& path);

    void add(CoreFileManifestEntry entry);
    std::vector<CoreFileManifestEntry> entries_for(std::string_view path) const;

private:
    std::vector<CoreFileManifestEntry> entries_;
};

// Host -> "ok" | "cert_expired" | "handshake_failure" | ...
class TlsStatusProvider : public FixtureProvider {
public:
    TlsStatusProvider() = default;
    static TlsStatusProvider from_file(const std::filesystem::path& path);

    void set(std::string host, std::string status);
    std::optional<std::string> status(std::string_view host) const;

private:
    std::unordered_map<std::string, std::string> status_;
};

// Cloaking detection is an external pipeline; this is its interface.
class CamouflageDetector {
public:
    virtual ~CamouflageDetector() = default;
    virtual bool is_camouflaged(std::string_view resource_url) const = 0;
};

// Flags a resource whose body differs between two client profiles.
class TwoProfileDetector final : public CamouflageDetector {
public:
    TwoProfileDetector(std::shared_ptr<const ContentProvider> content, std::string profile_a = "desktop",
                       std::string profile_b = "mobile");

    bool is_camouflaged(std::string_view resource_url) const override;

private:
    std::shared_ptr<const ContentProvider> content_;
    std::string profile_a_;
    std::string profile_b_;
};

// Everything a condition may consult. Null members are "not configured" and
// surface as ProviderUnavailable.
struct Providers {
    std::shared_ptr<RegistrationProvider> registrations;
    std::shared_ptr<RankingProvider> rankings;
    std::shared_ptr<ThreatIntelProvider> threats;
    std::shared_ptr<GeoProvider> geo;
    std::shared_ptr<DependencySnapshotStore> dependency_baselines;
    std::shared_ptr<DependencyObserver> dependency_observer;
    std::shared_ptr<ContentProvider> content;
    std::shared_ptr<SriProvider> sri;
    std::shared_ptr<CoreManifestProvider> core_manifest;
    std::shared_ptr<TlsStatusProvider> tls;
    std::shared_ptr<CamouflageDetector> camouflage;
    std::filesystem::path app_root;  // server-side core files
};

struct ProviderPaths {
    std::filesystem::path rankings_dir;
    std::filesystem::path registrations;
    std::filesystem::path threat_indicators;
    std::filesystem::path dns;
    std::filesystem::path geo;
    std::filesystem::path sri;
    std::filesystem::path core_manifest;
    std::filesystem::path tls_status;
    std::filesystem::path content;
    std::filesystem::path dependencies;
    std::filesystem::path app_root;

    // Conventional file names under one fixture directory.
    static ProviderPaths under(const std::filesystem::path& dir);
};

// Empty paths leave that provider unset.
Providers load_providers(const ProviderPaths& paths);

} // namespace lims
