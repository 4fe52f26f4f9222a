#include "lims/conditions.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "lims/error.hpp"
#include "lims/policy.hpp"
#include "lims/url.hpp"

namespace lims {

using nlohmann::json;

namespace {

constexpr std::pair<ConditionKind, std::string_view> kind_names[] = {
    {ConditionKind::domain_lifecycle_registration, "domain_lifecycle_registration"},
    {ConditionKind::domain_lifecycle_expiry, "domain_lifecycle_expiry"},
    {ConditionKind::domain_ranking, "domain_ranking"},
    {ConditionKind::threat_intel, "threat_intel"},
    {ConditionKind::dependencies, "dependencies"},
    {ConditionKind::sri_violation, "sri_violation"},
    {ConditionKind::infrastructure_location, "infrastructure_location"},
    {ConditionKind::core_file, "core_file"},
    {ConditionKind::tls_status, "tls_status"},
    {ConditionKind::custom, "custom"},
};

[[noreturn]] void bad_param(const ConditionBinding& b, const std::string& why) {
    throw ConfigError("binding '" + b.name + "' (" + std::string(to_string(b.kind)) + "): " + why);
}

void allow_only(const ConditionBinding& b, std::initializer_list<std::string_view> keys) {
    for (const auto& [key, _] : b.params.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            bad_param(b, "unknown parameter '" + key + "'");
        }
    }
}

void require_positive_int(const ConditionBinding& b, std::string_view key) {
    const std::string k(key);
    if (!b.params.contains(k)) bad_param(b, "missing '" + k + "'");
    const auto& v = b.params.at(k);
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) bad_param(b, "'" + k + "' must be a positive integer");
}

void check_string_list(const ConditionBinding& b, std::string_view key) {
    const std::string k(key);
    if (!b.params.contains(k)) return;
    const auto& v = b.params.at(k);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) {
        bad_param(b, "'" + k + "' must be an array of strings");
    }
}

void check_enum(const ConditionBinding& b, std::string_view key, std::initializer_list<std::string_view> values) {
    const std::string k(key);
    if (!b.params.contains(k)) return;
    const auto& v = b.params.at(k);
    if (!v.is_string() || std::find(values.begin(), values.end(), v.get<std::string>()) == values.end()) {
        bad_param(b, "'" + k + "' has an unsupported value");
    }
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

struct Target {
    std::string host;
    std::string etld1;
    std::string path;
};

Target target_of(const LinkRecord& link) {
    const NormalizedUrl n = parse_normalized(link.resource_url);
    Target t;
    t.host = n.host_name();
    t.etld1 = link.etld1.empty() ? etld1(t.host) : link.etld1;
    t.path = n.path;
    return t;
}

bool allowlisted(const ConditionBinding& b, const Target& t) {
    if (!b.params.contains("allowlist")) return false;
    for (const auto& entry : b.params.at("allowlist")) {
        const std::string d = lower(entry.get<std::string>());
        if (d == t.etld1 || d == t.host) return true;
    }
    return false;
}

Verdict pass(std::string detail, json evidence) {
    return Verdict{false, std::move(detail), std::move(evidence)};
}

Verdict fail(std::string detail, json evidence) {
    return Verdict{true, std::move(detail), std::move(evidence)};
}

template <class P>
P& need(const std::shared_ptr<P>& provider, std::string_view what) {
    if (!provider) throw ProviderUnavailable(std::string(what) + " provider not configured");
    return *provider;
}

// Provider outages and missing lookups are inconclusive, never a verdict.
template <class F>
Verdict guarded(const ConditionBinding& b, F&& body) {
    try {
        return body();
    } catch (const VerificationError&) {
        throw;
    } catch (const ProviderUnavailable& e) {
        throw VerificationError(b.name + ": " + e.what());
    } catch (const UnknownListDate& e) {
        throw VerificationError(b.name + ": " + e.what());
    } catch (const ResolutionFailure& e) {
        throw VerificationError(b.name + ": " + e.what());
    } catch (const GeoUnknown& e) {
        throw VerificationError(b.name + ": " + e.what());
    }
}

std::string read_local(const std::filesystem::path& path, bool& ok) {
    std::ifstream in(path, std::ios::binary);
    ok = static_cast<bool>(in);
    if (!ok) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Granularity granularity_of(const ConditionBinding& b) {
    const std::string g = b.params.value("granularity", std::string("full_url"));
    if (g == "full_host") return Granularity::full_host;
    if (g == "etld1") return Granularity::etld1;
    return Granularity::full_url;
}

json to_json_list(const std::set<std::string>& s) {
    return json(std::vector<std::string>(s.begin(), s.end()));
}

} // namespace

std::string_view to_string(ConditionKind kind) {
    for (const auto& [k, name] : kind_names) {
        if (k == kind) return name;
    }
    return "custom";
}

std::optional<ConditionKind> parse_condition_kind(std::string_view text) {
    for (const auto& [k, name] : kind_names) {
        if (name == text) return k;
    }
    return std::nullopt;
}

void validate_binding(const ConditionBinding& b) {
    if (!is_condition_name(b.name)) {
        throw ConfigError("binding name is not a valid condition name: '" + b.name + "'");
    }
    if (b.ttl_seconds <= 0) bad_param(b, "ttlSeconds must be positive");
    if (!b.params.is_object()) bad_param(b, "params must be a JSON object");

    switch (b.kind) {
        case ConditionKind::domain_lifecycle_registration:
            allow_only(b, {"thresholdDays", "allowlist"});
            require_positive_int(b, "thresholdDays");
            check_string_list(b, "allowlist");
            break;
        case ConditionKind::domain_lifecycle_expiry:
            allow_only(b, {"horizonDays", "allowlist"});
            require_positive_int(b, "horizonDays");
            check_string_list(b, "allowlist");
            break;
        case ConditionKind::domain_ranking:
            allow_only(b, {"maxRank", "allowlist", "listDate"});
            require_positive_int(b, "maxRank");
            check_string_list(b, "allowlist");
            if (b.params.contains("listDate")) {
                const auto& d = b.params.at("listDate");
                if (!d.is_string()) bad_param(b, "'listDate' must be \"latest\" or YYYY-MM-DD");
                if (d.get<std::string>() != "latest") {
                    try {
                        parse_date(d.get<std::string>());
                    } catch (const std::exception&) {
                        bad_param(b, "'listDate' must be \"latest\" or YYYY-MM-DD");
                    }
                }
            }
            break;
        case ConditionKind::threat_intel:
            allow_only(b, {"enableCamouflageCheck"});
            if (b.params.contains("enableCamouflageCheck") && !b.params.at("enableCamouflageCheck").is_boolean()) {
                bad_param(b, "'enableCamouflageCheck' must be a boolean");
            }
            break;
        case ConditionKind::dependencies:
            allow_only(b, {"granularity"});
            check_enum(b, "granularity", {"full_url", "full_host", "etld1"});
            break;
        case ConditionKind::sri_violation:
        case ConditionKind::tls_status:
            allow_only(b, {});
            break;
        case ConditionKind::infrastructure_location: {
            allow_only(b, {"allowedCountries", "referencePoint", "maxDistanceKm"});
            check_string_list(b, "allowedCountries");
            if (!b.params.contains("referencePoint")) bad_param(b, "missing 'referencePoint'");
            const auto& ref = b.params.at("referencePoint");
            if (!ref.is_object() || !ref.contains("lat") || !ref.contains("lon") || !ref.at("lat").is_number() ||
                !ref.at("lon").is_number()) {
                bad_param(b, "'referencePoint' must be {lat, lon}");
            }
            const double lat = ref.at("lat").get<double>();
            const double lon = ref.at("lon").get<double>();
            if (lat < -90 || lat > 90 || lon < -180 || lon > 180) bad_param(b, "'referencePoint' out of range");
            if (!b.params.contains("maxDistanceKm") || !b.params.at("maxDistanceKm").is_number() ||
                b.params.at("maxDistanceKm").get<double>() <= 0) {
                bad_param(b, "'maxDistanceKm' must be a positive number");
            }
            break;
        }
        case ConditionKind::core_file:
            allow_only(b, {"manifestScope"});
            check_enum(b, "manifestScope", {"client", "server", "both"});
            break;
        case ConditionKind::custom:
            if (b.params.contains("function") && !b.params.at("function").is_string()) {
                bad_param(b, "'function' must be a string");
            }
            break;
    }
}

ConditionBinding binding_from_json(const json& j) {
    ConditionBinding b;
    b.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    const auto parsed = parse_condition_kind(kind);
    if (!parsed) {
        throw UnknownCondition("binding '" + b.name + "' has unknown kind '" + kind + "'");
    }
    b.kind = *parsed;
    b.params = j.value("params", json::object());
    b.ttl_seconds = j.value("ttlSeconds", std::int64_t{3600});
    validate_binding(b);
    return b;
}

json to_json(const ConditionBinding& b) {
    return json{{"name", b.name}, {"kind", to_string(b.kind)}, {"params", b.params}, {"ttlSeconds", b.ttl_seconds}};
}

BindingSet parse_bindings(const json& array) {
    if (!array.is_array()) throw ConfigError("bindings must be a JSON array");
    BindingSet out;
    for (const auto& j : array) {
        ConditionBinding b = binding_from_json(j);
        const std::string name = b.name;
        if (!out.emplace(name, std::move(b)).second) {
            throw ConfigError("duplicate binding name '" + name + "'");
        }
    }
    return out;
}

BindingSet parse_bindings_text(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bindings are not valid JSON: ") + e.what());
    }
    try {
        return parse_bindings(j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed binding: ") + e.what());
    }
}

json to_json(const BindingSet& bindings) {
    json out = json::array();
    for (const auto& [_, b] : bindings) out.push_back(to_json(b));
    return out;
}

std::set<std::string> project_dependencies(const std::set<std::string>& urls, Granularity g) {
    if (g == Granularity::full_url) return urls;
    std::set<std::string> out;
    for (const auto& u : urls) {
        const std::string host = host_of(u);
        out.insert(g == Granularity::full_host ? host : etld1(host));
    }
    return out;
}

Verdict eval_domain_lifecycle_registration(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        json ev{{"domain", t.etld1}, {"now", format_timestamp(ctx.now)}};
        if (allowlisted(b, t)) {
            ev["allowlisted"] = true;
            return pass("allowlisted", ev);
        }
        const auto threshold_days = b.params.at("thresholdDays").get<std::int64_t>();
        const auto rec = need(ctx.providers.registrations, "registration").lookup(t.etld1);
        if (!rec) {
            ev["registration"] = "unknown registration";
            return pass("unknown registration", ev);
        }
        const auto age = ctx.now - Timestamp{rec->registered_at};
        ev["registeredAt"] = format_date(rec->registered_at);
        ev["ageDays"] = days_between(Timestamp{rec->registered_at}, ctx.now);
        ev["thresholdDays"] = threshold_days;
        if (age < std::chrono::days{threshold_days}) {
            return fail(t.etld1 + " was registered less than " + std::to_string(threshold_days) + " days ago", ev);
        }
        return pass("registration age above threshold", ev);
    });
}

Verdict eval_domain_lifecycle_expiry(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        json ev{{"domain", t.etld1}, {"now", format_timestamp(ctx.now)}};
        if (allowlisted(b, t)) {
            ev["allowlisted"] = true;
            return pass("allowlisted", ev);
        }
        const auto horizon_days = b.params.at("horizonDays").get<std::int64_t>();
        const auto rec = need(ctx.providers.registrations, "registration").lookup(t.etld1);
        if (!rec || !rec->expires_at) {
            ev["expiry"] = "unknown expiry";
            return pass("unknown expiry", ev);
        }
        const auto remaining = Timestamp{*rec->expires_at} - ctx.now;
        ev["expiresAt"] = format_date(*rec->expires_at);
        ev["horizonDays"] = horizon_days;
        if (remaining < std::chrono::days{horizon_days}) {
            return fail(t.etld1 + " expires within " + std::to_string(horizon_days) + " days", ev);
        }
        return pass("expiry beyond horizon", ev);
    });
}

Verdict eval_domain_ranking(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        json ev{{"domain", t.etld1}};
        if (allowlisted(b, t)) {
            ev["allowlisted"] = true;
            return pass("allowlisted", ev);
        }
        const auto& rankings = need(ctx.providers.rankings, "ranking");
        const std::string wanted = b.params.value("listDate", std::string("latest"));
        Date list_date{};
        if (wanted == "latest") {
            const auto latest = rankings.latest_date();
            if (!latest) throw UnknownListDate("no ranking lists loaded");
            list_date = *latest;
        } else {
            list_date = parse_date(wanted);
        }
        const auto max_rank = b.params.at("maxRank").get<std::int64_t>();
        const auto rank = rankings.rank(t.etld1, list_date);
        ev["listDate"] = format_date(list_date);
        ev["maxRank"] = max_rank;
        ev["rank"] = rank ? json(*rank) : json(nullptr);
        if (!rank) return fail(t.etld1 + " is unranked", ev);
        if (*rank > max_rank) return fail(t.etld1 + " is ranked " + std::to_string(*rank), ev);
        return pass("ranked within threshold", ev);
    });
}

// Feed hits on host, domain, IP or content; camouflage detection is opt-in.
Verdict eval_threat_intel(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        const auto& threats = need(ctx.providers.threats, "threat intelligence");
        json ev{{"host", t.host}, {"domain", t.etld1}};
        std::vector<std::string> hits;
        for (const auto& indicator : {t.host, t.etld1}) {
            if (threats.lookup(indicator)) hits.push_back(indicator);
        }
        if (ctx.providers.geo) {
            try {
                const std::string ip = ctx.providers.geo->resolve(t.host);
                ev["ip"] = ip;
                if (threats.lookup(ip)) hits.push_back(ip);
            } catch (const ResolutionFailure&) {
                ev["ip"] = nullptr;
            }
        }
        if (ctx.providers.content) {
            if (const auto body = ctx.providers.content->fetch(link.resource_url)) {
                const bool flagged = threats.scan_content(*body);
                ev["contentFlagged"] = flagged;
                if (flagged) hits.push_back("content:" + link.resource_url);
            }
        }
        ev["indicatorHits"] = hits;
        if (b.params.value("enableCamouflageCheck", false)) {
            const bool camouflaged = need(ctx.providers.camouflage, "camouflage detector").is_camouflaged(link.resource_url);
            ev["camouflaged"] = camouflaged;
            if (camouflaged) return fail("resource serves different content per client profile", ev);
        }
        if (!hits.empty()) return fail("flagged by threat intelligence: " + hits.front(), ev);
        return pass("not flagged", ev);
    });
}

// Fires when the projected dependency set differs from the baseline. A changed
// set leaves the baseline untouched so the change keeps failing until an
// administrator accepts it.
Verdict eval_dependencies(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const auto current = need(ctx.providers.dependency_observer, "dependency observation").current(link.resource_url);
        if (!current) {
            throw VerificationError(b.name + ": no current dependency observation for " + link.resource_url);
        }
        auto& baselines = need(ctx.providers.dependency_baselines, "dependency snapshot");
        const Granularity g = granularity_of(b);
        json ev{{"granularity", b.params.value("granularity", std::string("full_url"))},
                {"current", to_json_list(*current)}};
        const auto previous = baselines.dependency_snapshot(link.resource_url);
        if (!previous) {
            baselines.store_snapshot(DependencySnapshot{link.resource_url, *current, ctx.now});
            ev["baseline"] = "created";
            return pass("baseline recorded", ev);
        }
        ev["previous"] = to_json_list(previous->contacted_urls);
        const auto before = project_dependencies(previous->contacted_urls, g);
        const auto after = project_dependencies(*current, g);
        if (before != after) {
            std::vector<std::string> added, removed;
            std::set_difference(after.begin(), after.end(), before.begin(), before.end(), std::back_inserter(added));
            std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(removed));
            ev["added"] = added;
            ev["removed"] = removed;
            return fail("dependency set changed", ev);
        }
        baselines.store_snapshot(DependencySnapshot{link.resource_url, *current, ctx.now});
        return pass("dependencies unchanged", ev);
    });
}

// Only a mismatch against a configured digest fires; no entry means no check.
Verdict eval_sri_violation(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const auto entry = need(ctx.providers.sri, "SRI").expected(link.page_url, link.resource_url);
        json ev{{"pageUrl", link.page_url}, {"resourceUrl", link.resource_url}};
        if (!entry) {
            ev["expected"] = nullptr;
            return pass("no digest configured", ev);
        }
        const auto body = need(ctx.providers.content, "content").fetch(link.resource_url);
        if (!body) {
            throw VerificationError(b.name + ": cannot fetch content of " + link.resource_url);
        }
        const auto actual = SriDigest::of(entry->digest.algorithm, *body);
        ev["expected"] = entry->digest.str();
        ev["actual"] = actual.str();
        if (actual != entry->digest) return fail("content does not match expected SRI digest", ev);
        return pass("SRI digest matches", ev);
    });
}

Verdict eval_tls_status(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        const auto status = need(ctx.providers.tls, "TLS status").status(t.host);
        json ev{{"host", t.host}, {"status", status ? json(*status) : json(nullptr)}};
        if (!status) return pass("TLS status unknown", ev);
        if (*status != "ok") return fail("TLS connection issue: " + *status, ev);
        return pass("TLS ok", ev);
    });
}

// An allowed country always passes; otherwise distance from the reference
// point decides.
Verdict eval_infrastructure_location(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        const auto& geo = need(ctx.providers.geo, "geolocation");
        GeoRecord loc;
        try {
            loc = geo.lookup(t.host);
        } catch (const ResolutionFailure&) {
            if (t.etld1 == t.host) throw;
            loc = geo.lookup(t.etld1);
        }
        json ev{{"host", t.host}, {"ip", loc.ip}, {"country", loc.country_code}, {"lat", loc.latitude},
                {"lon", loc.longitude}};
        if (b.params.contains("allowedCountries")) {
            for (const auto& c : b.params.at("allowedCountries")) {
                if (lower(c.get<std::string>()) == lower(loc.country_code)) {
                    return pass("server in expected country", ev);
                }
            }
        }
        const auto& ref = b.params.at("referencePoint");
        const double distance =
            great_circle_km(ref.at("lat").get<double>(), ref.at("lon").get<double>(), loc.latitude, loc.longitude);
        const double max_km = b.params.at("maxDistanceKm").get<double>();
        ev["distanceKm"] = distance;
        ev["maxDistanceKm"] = max_km;
        if (distance >= max_km) return fail("server in unexpected location " + loc.country_code, ev);
        return pass("server within distance threshold", ev);
    });
}

Verdict eval_core_file(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx) {
    return guarded(b, [&] {
        const Target t = target_of(link);
        const std::string scope = b.params.value("manifestScope", std::string("both"));
        json ev{{"path", t.path}, {"scope", scope}};
        const auto entries = need(ctx.providers.core_manifest, "core manifest").entries_for(t.path);
        json checked = json::array();
        for (const auto& e : entries) {
            const bool in_scope = scope == "both" || (scope == "client") == (e.side == FileSide::client);
            if (!in_scope) continue;
            std::optional<std::string> actual;
            if (e.side == FileSide::client) {
                actual = need(ctx.providers.content, "content").fetch(link.resource_url);
            } else {
                bool ok = false;
                std::string rel = e.path;
                while (!rel.empty() && rel.front() == '/') rel.erase(0, 1);
                if (!ctx.providers.app_root.empty()) {
                    std::string body = read_local(ctx.providers.app_root / rel, ok);
                    if (ok) actual = std::move(body);
                }
            }
            const std::string side = e.side == FileSide::client ? "client" : "server";
            if (!actual) {
                ev["checked"] = checked;
                ev["missing"] = side;
                return fail("missing core file", ev);
            }
            checked.push_back({{"side", side}, {"expected", e.expected_digest.str()}});
            if (!e.expected_digest.matches(*actual)) {
                ev["checked"] = checked;
                return fail("modified " + side + "-side core file " + e.path, ev);
            }
        }
        ev["checked"] = checked;
        return pass(checked.empty() ? "not a core file" : "core file intact", ev);
    });
}

void ConditionEngine::register_custom(std::string function_name, CustomCondition fn) {
    custom_[std::move(function_name)] = std::move(fn);
}

Verdict ConditionEngine::evaluate(const ConditionBinding& binding, const LinkRecord& link, const EvalContext& ctx) const {
    switch (binding.kind) {
        case ConditionKind::domain_lifecycle_registration: return eval_domain_lifecycle_registration(binding, link, ctx);
        case ConditionKind::domain_lifecycle_expiry: return eval_domain_lifecycle_expiry(binding, link, ctx);
        case ConditionKind::domain_ranking: return eval_domain_ranking(binding, link, ctx);
        case ConditionKind::threat_intel: return eval_threat_intel(binding, link, ctx);
        case ConditionKind::dependencies: return eval_dependencies(binding, link, ctx);
        case ConditionKind::sri_violation: return eval_sri_violation(binding, link, ctx);
        case ConditionKind::infrastructure_location: return eval_infrastructure_location(binding, link, ctx);
        case ConditionKind::core_file: return eval_core_file(binding, link, ctx);
        case ConditionKind::tls_status: return eval_tls_status(binding, link, ctx);
        case ConditionKind::custom: break;
    }
    const std::string fn_name = binding.params.value("function", binding.name);
    const auto it = custom_.find(fn_name);
    if (it == custom_.end()) {
        throw UnknownCondition("no custom condition registered as '" + fn_name + "'");
    }
    Verdict v = guarded(binding, [&] { return it->second(binding, link, ctx); });
    if (v.violation && v.detail.empty()) v.detail = "custom condition " + fn_name + " fired";
    return v;
}

} // namespace lims
