#include "lims/providers.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <iterator>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lims/error.hpp"
#include "lims/url.hpp"

namespace lims {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ProviderUnavailable("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::filesystem::path& path) {
    return json::parse(read_file(path));
}

std::string normalize_key(std::string_view url) {
    return parse_normalized(url).text();
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

void FixtureProvider::ensure_available(std::string_view provider) const {
    if (load_error_) {
        throw ProviderUnavailable(std::string(provider) + " unavailable: " + *load_error_);
    }
}

// --- registrations ---------------------------------------------------------

RegistrationProvider::RegistrationProvider(const RegistrationProvider& other) : FixtureProvider(other) {
    std::shared_lock lock(other.mutex_);
    records_ = other.records_;
}

RegistrationProvider& RegistrationProvider::operator=(const RegistrationProvider& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        FixtureProvider::operator=(other);
        records_ = other.records_;
    }
    return *this;
}

RegistrationProvider RegistrationProvider::from_json(const json& records) {
    RegistrationProvider p;
    if (!records.is_array()) {
        throw ConfigError("registrations must be a JSON array");
    }
    for (const auto& r : records) {
        RegistrationRecord rec;
        rec.domain = lower(r.at("domain").get<std::string>());
        rec.registered_at = parse_date(r.at("registeredAt").get<std::string>());
        if (r.contains("expiresAt") && !r.at("expiresAt").is_null()) {
            rec.expires_at = parse_date(r.at("expiresAt").get<std::string>());
            if (*rec.expires_at < rec.registered_at) {
                throw ConfigError("expiresAt precedes registeredAt for " + rec.domain);
            }
        }
        p.records_[rec.domain] = std::move(rec);
    }
    return p;
}

RegistrationProvider RegistrationProvider::from_file(const std::filesystem::path& path) {
    try {
        return from_json(read_json(path));
    } catch (const std::exception& e) {
        RegistrationProvider failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
}

std::optional<RegistrationRecord> RegistrationProvider::lookup(std::string_view domain) const {
    ensure_available("registration data");
    std::shared_lock lock(mutex_);
    if (auto it = records_.find(lower(domain)); it != records_.end()) return it->second;
    return std::nullopt;
}

void RegistrationProvider::upsert(RegistrationRecord record) {
    std::unique_lock lock(mutex_);
    record.domain = lower(record.domain);
    records_[record.domain] = std::move(record);
}

// --- rankings --------------------------------------------------------------

RankingProvider RankingProvider::from_directory(const std::filesystem::path& dir) {
    RankingProvider p;
    try {
        if (!std::filesystem::is_directory(dir)) {
            throw ProviderUnavailable("not a directory: " + dir.string());
        }
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".csv") continue;
            p.add_list(parse_date(entry.path().stem().string()), read_file(entry.path()));
        }
    } catch (const std::exception& e) {
        RankingProvider failed;
        failed.fail_load(dir.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void RankingProvider::add_list(Date list_date, std::string_view csv_text) {
    auto& list = lists_[list_date];
    std::size_t pos = 0;
    bool first = true;
    while (pos < csv_text.size()) {
        auto eol = csv_text.find('\n', pos);
        if (eol == std::string_view::npos) eol = csv_text.size();
        std::string_view line = csv_text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string_view::npos) {
            throw ConfigError("ranking line is not rank,domain: " + std::string(line));
        }
        const std::string_view field = line.substr(0, comma);
        std::int64_t rank = 0;
        const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), rank);
        const bool numeric = ec == std::errc{} && end == field.data() + field.size();
        if (!numeric && std::exchange(first, false)) continue;  // header row
        first = false;
        if (!numeric) throw ConfigError("rank is not an integer: " + std::string(line));
        if (rank < 1) {
            throw ConfigError("rank must be >= 1: " + std::string(line));
        }
        list.emplace(lower(line.substr(comma + 1)), rank);
    }
}

void RankingProvider::add_rank(Date list_date, std::string domain, std::int64_t rank) {
    if (rank < 1) throw ConfigError("rank must be >= 1");
    lists_[list_date][lower(domain)] = rank;
}

std::optional<std::int64_t> RankingProvider::rank(std::string_view domain, Date list_date) const {
    ensure_available("ranking lists");
    const auto list = lists_.find(list_date);
    if (list == lists_.end()) {
        throw UnknownListDate("no ranking list for " + format_date(list_date));
    }
    if (auto it = list->second.find(lower(domain)); it != list->second.end()) return it->second;
    return std::nullopt;
}

std::optional<Date> RankingProvider::latest_date() const {
    ensure_available("ranking lists");
    if (lists_.empty()) return std::nullopt;
    return lists_.rbegin()->first;
}

std::optional<Date> RankingProvider::nearest_on_or_before(Date when) const {
    ensure_available("ranking lists");
    auto it = lists_.upper_bound(when);
    if (it == lists_.begin()) return std::nullopt;
    return std::prev(it)->first;
}

// --- threat intel ----------------------------------------------------------

ThreatIntelProvider::ThreatIntelProvider(const ThreatIntelProvider& other)
    : FixtureProvider(other), indicators_(other.indicators_) {
    std::lock_guard lock(other.cache_mutex_);
    scan_cache_ = other.scan_cache_;
}

ThreatIntelProvider& ThreatIntelProvider::operator=(const ThreatIntelProvider& other) {
    if (this != &other) {
        std::scoped_lock lock(cache_mutex_, other.cache_mutex_);
        FixtureProvider::operator=(other);
        indicators_ = other.indicators_;
        scan_cache_ = other.scan_cache_;
        scanner_calls_ = 0;
        cache_hits_ = 0;
    }
    return *this;
}

ThreatIntelProvider ThreatIntelProvider::from_lines(std::string_view text) {
    ThreatIntelProvider p;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
        if (line.empty() || line.front() == '#') continue;
        p.add_indicator(std::string(line));
    }
    return p;
}

ThreatIntelProvider ThreatIntelProvider::from_file(const std::filesystem::path& path) {
    try {
        return from_lines(read_file(path));
    } catch (const std::exception& e) {
        ThreatIntelProvider failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
}

void ThreatIntelProvider::add_indicator(std::string indicator) {
    indicators_.insert(lower(indicator));
}

bool ThreatIntelProvider::lookup(std::string_view indicator) const {
    ensure_available("threat intelligence");
    return indicators_.contains(lower(indicator));
}

bool ThreatIntelProvider::scan_content(std::string_view content) const {
    ensure_available("threat intelligence");
    const std::string key = "sha256:" + hex_encode(hash_bytes(DigestAlgorithm::sha256, content));
    std::lock_guard lock(cache_mutex_);
    if (auto it = scan_cache_.find(key); it != scan_cache_.end()) {
        ++cache_hits_;
        return it->second;
    }
    ++scanner_calls_;
    const bool flagged = indicators_.contains(key);
    scan_cache_.emplace(key, flagged);
    return flagged;
}

std::size_t ThreatIntelProvider::scanner_calls() const {
    std::lock_guard lock(cache_mutex_);
    return scanner_calls_;
}

std::size_t ThreatIntelProvider::cache_hits() const {
    std::lock_guard lock(cache_mutex_);
    return cache_hits_;
}

// --- geo -------------------------------------------------------------------

double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double radius_km = 6371.0;
    constexpr double to_rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * to_rad;
    const double dlon = (lon2 - lon1) * to_rad;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * to_rad) * std::cos(lat2 * to_rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * radius_km * std::asin(std::min(1.0, std::sqrt(h)));
}

double great_circle_km(const GeoRecord& a, const GeoRecord& b) {
    return great_circle_km(a.latitude, a.longitude, b.latitude, b.longitude);
}

GeoProvider GeoProvider::from_files(const std::filesystem::path& dns, const std::filesystem::path& geo) {
    GeoProvider p;
    try {
        const json dns_doc = read_json(dns);
        for (const auto& [host, ip] : dns_doc.items()) {
            p.add_dns(host, ip.get<std::string>());
        }
        const json geo_doc = read_json(geo);
        for (const auto& [ip, row] : geo_doc.items()) {
            p.add_geo(GeoRecord{ip, row.at("country").get<std::string>(), row.at("lat").get<double>(),
                                row.at("lon").get<double>()});
        }
    } catch (const std::exception& e) {
        GeoProvider failed;
        failed.fail_load(dns.string() + ", " + geo.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void GeoProvider::add_dns(std::string host, std::string ip) {
    dns_[lower(host)] = std::move(ip);
}

void GeoProvider::add_geo(GeoRecord record) {
    if (record.latitude < -90 || record.latitude > 90 || record.longitude < -180 || record.longitude > 180) {
        throw ConfigError("coordinates out of range for " + record.ip);
    }
    geo_[record.ip] = std::move(record);
}

std::string GeoProvider::resolve(std::string_view domain) const {
    ensure_available("DNS/geo data");
    if (auto it = dns_.find(lower(domain)); it != dns_.end()) return it->second;
    throw ResolutionFailure("cannot resolve " + std::string(domain));
}

GeoRecord GeoProvider::lookup(std::string_view domain) const {
    const std::string ip = resolve(domain);
    if (auto it = geo_.find(ip); it != geo_.end()) return it->second;
    throw GeoUnknown("no location for " + ip);
}

// --- dependencies ----------------------------------------------------------

std::optional<DependencySnapshot> DependencySnapshotStore::dependency_snapshot(std::string_view resource_url) const {
    ensure_available("dependency snapshots");
    std::shared_lock lock(mutex_);
    if (auto it = snapshots_.find(std::string(resource_url)); it != snapshots_.end()) return it->second;
    return std::nullopt;
}

void DependencySnapshotStore::store_snapshot(DependencySnapshot snapshot) {
    ensure_available("dependency snapshots");
    std::unique_lock lock(mutex_);
    auto& slot = snapshots_[snapshot.resource_url];
    if (slot.resource_url.empty() || snapshot.captured_at >= slot.captured_at) {
        slot = std::move(snapshot);
    }
}

DependencyObserver::DependencyObserver(const DependencyObserver& other) : FixtureProvider(other) {
    std::shared_lock lock(other.mutex_);
    current_ = other.current_;
}

DependencyObserver& DependencyObserver::operator=(const DependencyObserver& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        FixtureProvider::operator=(other);
        current_ = other.current_;
    }
    return *this;
}

DependencyObserver DependencyObserver::from_file(const std::filesystem::path& path) {
    DependencyObserver p;
    try {
        const json doc = read_json(path);
        for (const auto& [resource, urls] : doc.items()) {
            std::set<std::string> contacted;
            for (const auto& u : urls) contacted.insert(normalize_key(u.get<std::string>()));
            p.set_current(normalize_key(resource), std::move(contacted));
        }
    } catch (const std::exception& e) {
        DependencyObserver failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void DependencyObserver::set_current(std::string resource_url, std::set<std::string> contacted) {
    std::unique_lock lock(mutex_);
    current_[std::move(resource_url)] = std::move(contacted);
}

std::optional<std::set<std::string>> DependencyObserver::current(std::string_view resource_url) const {
    ensure_available("dependency observations");
    std::shared_lock lock(mutex_);
    if (auto it = current_.find(std::string(resource_url)); it != current_.end()) return it->second;
    return std::nullopt;
}

// --- content ---------------------------------------------------------------

ContentProvider::ContentProvider(const ContentProvider& other) : FixtureProvider(other) {
    std::shared_lock lock(other.mutex_);
    bodies_ = other.bodies_;
    per_profile_ = other.per_profile_;
}

ContentProvider& ContentProvider::operator=(const ContentProvider& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        FixtureProvider::operator=(other);
        bodies_ = other.bodies_;
        per_profile_ = other.per_profile_;
    }
    return *this;
}

ContentProvider ContentProvider::from_file(const std::filesystem::path& path) {
    ContentProvider p;
    try {
        const json doc = read_json(path);
        for (const auto& [url, body] : doc.items()) {
            if (body.is_string()) {
                p.set(normalize_key(url), body.get<std::string>());
            } else {
                for (const auto& [profile, text] : body.items()) {
                    p.set_for_profile(normalize_key(url), profile, text.get<std::string>());
                }
            }
        }
    } catch (const std::exception& e) {
        ContentProvider failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void ContentProvider::set(std::string url, std::string body) {
    std::unique_lock lock(mutex_);
    bodies_[std::move(url)] = std::move(body);
}

void ContentProvider::set_for_profile(std::string url, std::string profile, std::string body) {
    std::unique_lock lock(mutex_);
    per_profile_[std::move(url)][std::move(profile)] = std::move(body);
}

std::optional<std::string> ContentProvider::fetch(std::string_view url, std::string_view profile) const {
    ensure_available("content fixtures");
    std::shared_lock lock(mutex_);
    const std::string key(url);
    if (auto it = per_profile_.find(key); it != per_profile_.end()) {
        if (auto p = it->second.find(std::string(profile)); p != it->second.end()) return p->second;
    }
    if (auto it = bodies_.find(key); it != bodies_.end()) return it->second;
    return std::nullopt;
}

// --- SRI / core files / TLS ------------------------------------------------

SriProvider SriProvider::from_file(const std::filesystem::path& path) {
    SriProvider p;
    try {
        for (const auto& e : read_json(path)) {
            p.add(SriEntry{normalize_key(e.at("pageUrl").get<std::string>()),
                           normalize_key(e.at("resourceUrl").get<std::string>()),
                           SriDigest::parse(e.at("digest").get<std::string>())});
        }
    } catch (const std::exception& e) {
        SriProvider failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void SriProvider::add(SriEntry entry) {
    entries_.push_back(std::move(entry));
}

std::optional<SriEntry> SriProvider::expected(std::string_view page_url, std::string_view resource_url) const {
    ensure_available("SRI digests");
    for (const auto& e : entries_) {
        if (e.page_url == page_url && e.resource_url == resource_url) return e;
    }
    return std::nullopt;
}

CoreManifestProvider CoreManifestProvider::from_file(const std::filesystem::path& path) {
    CoreManifestProvider p;
    try {
        for (const auto& e : read_json(path)) {
            const auto side = e.value("side", std::string("client"));
            if (side != "client" && side != "server") {
                throw ConfigError("side must be client or server");
            }
            p.add(CoreFileManifestEntry{e.at("path").get<std::string>(),
                                        SriDigest::parse(e.at("expectedDigest").get<std::string>()),
                                        side == "server" ? FileSide::server : FileSide::client});
        }
    } catch (const std::exception& e) {
        CoreManifestProvider failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void CoreManifestProvider::add(CoreFileManifestEntry entry) {
    if (entry.expected_digest.base64.empty()) {
        throw ConfigError("core manifest digest must be non-empty for " + entry.path);
    }
    entries_.push_back(std::move(entry));
}

std::vector<CoreFileManifestEntry> CoreManifestProvider::entries_for(std::string_view path) const {
    ensure_available("core file manifest");
    std::vector<CoreFileManifestEntry> out;
    for (const auto& e : entries_) {
        if (e.path == path) out.push_back(e);
    }
    return out;
}

TlsStatusProvider TlsStatusProvider::from_file(const std::filesystem::path& path) {
    TlsStatusProvider p;
    try {
        const json doc = read_json(path);
        for (const auto& [host, status] : doc.items()) {
            p.set(host, status.get<std::string>());
        }
    } catch (const std::exception& e) {
        TlsStatusProvider failed;
        failed.fail_load(path.string() + ": " + e.what());
        return failed;
    }
    return p;
}

void TlsStatusProvider::set(std::string host, std::string status) {
    status_[lower(host)] = std::move(status);
}

std::optional<std::string> TlsStatusProvider::status(std::string_view host) const {
    ensure_available("TLS status");
    if (auto it = status_.find(lower(host)); it != status_.end()) return it->second;
    return std::nullopt;
}

// --- camouflage ------------------------------------------------------------

TwoProfileDetector::TwoProfileDetector(std::shared_ptr<const ContentProvider> content, std::string profile_a,
                                       std::string profile_b)
    : content_(std::move(content)), profile_a_(std::move(profile_a)), profile_b_(std::move(profile_b)) {}

bool TwoProfileDetector::is_camouflaged(std::string_view resource_url) const {
    if (!content_) {
        throw ProviderUnavailable("camouflage detector has no content source");
    }
    const auto a = content_->fetch(resource_url, profile_a_);
    const auto b = content_->fetch(resource_url, profile_b_);
    return a != b;
}

// --- loading ---------------------------------------------------------------

ProviderPaths ProviderPaths::under(const std::filesystem::path& dir) {
    // Absent files leave the provider unset.
    const auto present = [&](const char* name) {
        const auto path = dir / name;
        return std::filesystem::exists(path) ? path : std::filesystem::path{};
    };
    ProviderPaths p;
    p.rankings_dir = present("rankings");
    p.registrations = present("registrations.json");
    p.threat_indicators = present("threat_indicators.txt");
    p.dns = present("dns.json");
    p.geo = present("geo.json");
    p.sri = present("sri.json");
    p.core_manifest = present("core_manifest.json");
    p.tls_status = present("tls_status.json");
    p.content = present("content.json");
    p.dependencies = present("dependencies.json");
    p.app_root = present("app");
    return p;
}

Providers load_providers(const ProviderPaths& paths) {
    Providers p;
    if (!paths.registrations.empty())
        p.registrations = std::make_shared<RegistrationProvider>(RegistrationProvider::from_file(paths.registrations));
    if (!paths.rankings_dir.empty())
        p.rankings = std::make_shared<RankingProvider>(RankingProvider::from_directory(paths.rankings_dir));
    if (!paths.threat_indicators.empty())
        p.threats = std::make_shared<ThreatIntelProvider>(ThreatIntelProvider::from_file(paths.threat_indicators));
    if (!paths.dns.empty() && !paths.geo.empty())
        p.geo = std::make_shared<GeoProvider>(GeoProvider::from_files(paths.dns, paths.geo));
    if (!paths.sri.empty()) p.sri = std::make_shared<SriProvider>(SriProvider::from_file(paths.sri));
    if (!paths.core_manifest.empty())
        p.core_manifest = std::make_shared<CoreManifestProvider>(CoreManifestProvider::from_file(paths.core_manifest));
    if (!paths.tls_status.empty())
        p.tls = std::make_shared<TlsStatusProvider>(TlsStatusProvider::from_file(paths.tls_status));
    if (!paths.content.empty()) p.content = std::make_shared<ContentProvider>(ContentProvider::from_file(paths.content));
    if (!paths.dependencies.empty())
        p.dependency_observer =
            std::make_shared<DependencyObserver>(DependencyObserver::from_file(paths.dependencies));
    p.dependency_baselines = std::make_shared<DependencySnapshotStore>();
    if (p.content) {
        p.camouflage = std::make_shared<TwoProfileDetector>(p.content);
    }
    p.app_root = paths.app_root;
    return p;
}

} // namespace lims
