#include "lims/store_types.hpp"

#include "lims/digest.hpp"
#include "lims/url.hpp"

namespace lims {

using nlohmann::json;

LinkId make_link_id(std::string_view page_url, std::string_view resource_url) {
    std::string material;
    material.reserve(page_url.size() + resource_url.size() + 1);
    material.append(page_url).append("\n").append(resource_url);
    return hex_encode(hash_bytes(DigestAlgorithm::sha256, material).substr(0, 16));
}

LinkRecord make_link_record(std::string_view page_url, std::string_view resource_url,
                            std::optional<std::string> query, Timestamp now) {
    LinkRecord r;
    r.link_id = make_link_id(page_url, resource_url);
    r.page_url = std::string(page_url);
    r.resource_url = std::string(resource_url);
    r.query = std::move(query);
    r.etld1 = etld1(host_of(resource_url));
    r.first_seen = now;
    r.last_seen = now;
    r.hit_count = 1;
    return r;
}

std::string_view to_string(LinkStatus s) {
    switch (s) {
        case LinkStatus::allowed: return "allowed";
        case LinkStatus::blocked: return "blocked";
        case LinkStatus::unverified: return "unverified";
    }
    return "unverified";
}

json to_json(const LinkRecord& r) {
    json j{{"linkId", r.link_id},
           {"pageUrl", r.page_url},
           {"resourceUrl", r.resource_url},
           {"etld1", r.etld1},
           {"firstSeen", format_timestamp(r.first_seen)},
           {"lastSeen", format_timestamp(r.last_seen)},
           {"hitCount", r.hit_count}};
    j["query"] = r.query ? json(*r.query) : json(nullptr);
    return j;
}

json to_json(const VerificationDecision& d) {
    return json{{"linkId", d.link_id},
                {"conditionName", d.condition_name},
                {"success", d.success},
                {"verdictDetail", d.verdict_detail},
                {"verifiedAt", format_timestamp(d.verified_at)},
                {"ttlSeconds", d.ttl_seconds},
                {"invalidated", d.invalidated}};
}

json to_json(const ViolationReport& v) {
    return json{{"linkId", v.link_id},
                {"conditionName", v.condition_name},
                {"detail", v.detail},
                {"evidence", v.evidence},
                {"reportedAt", format_timestamp(v.reported_at)}};
}

LinkRecord link_from_json(const json& j) {
    LinkRecord r;
    r.link_id = j.at("linkId").get<std::string>();
    r.page_url = j.at("pageUrl").get<std::string>();
    r.resource_url = j.at("resourceUrl").get<std::string>();
    r.etld1 = j.at("etld1").get<std::string>();
    r.first_seen = parse_timestamp(j.at("firstSeen").get<std::string>());
    r.last_seen = parse_timestamp(j.at("lastSeen").get<std::string>());
    r.hit_count = j.at("hitCount").get<std::int64_t>();
    if (j.contains("query") && !j.at("query").is_null()) r.query = j.at("query").get<std::string>();
    return r;
}

VerificationDecision decision_from_json(const json& j) {
    VerificationDecision d;
    d.link_id = j.at("linkId").get<std::string>();
    d.condition_name = j.at("conditionName").get<std::string>();
    d.success = j.at("success").get<bool>();
    d.verdict_detail = j.value("verdictDetail", std::string{});
    d.verified_at = parse_timestamp(j.at("verifiedAt").get<std::string>());
    d.ttl_seconds = j.at("ttlSeconds").get<std::int64_t>();
    d.invalidated = j.value("invalidated", false);
    return d;
}

ViolationReport violation_from_json(const json& j) {
    ViolationReport v;
    v.link_id = j.at("linkId").get<std::string>();
    v.condition_name = j.at("conditionName").get<std::string>();
    v.detail = j.value("detail", std::string{});
    v.evidence = j.value("evidence", json::object());
    v.reported_at = parse_timestamp(j.at("reportedAt").get<std::string>());
    return v;
}

} // namespace lims
