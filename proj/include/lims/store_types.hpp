#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lims/time.hpp"

namespace lims {

// 128-bit digest of "pageUrl\nresourceUrl", lowercase hex.
using LinkId = std::string;

LinkId make_link_id(std::string_view page_url, std::string_view resource_url);

struct LinkRecord {
    LinkId link_id;
    std::string page_url;      // normalized
    std::string resource_url;  // normalized
    std::optional<std::string> query;
    std::string etld1;         // registrable domain of the resource host
    Timestamp first_seen{};
    Timestamp last_seen{};
    std::int64_t hit_count = 0;

    bool operator==(const LinkRecord&) const = default;
};

// Builds a fresh record for the pair (not stored).
LinkRecord make_link_record(std::string_view page_url, std::string_view resource_url,
                            std::optional<std::string> query, Timestamp now);

struct VerificationDecision {
    LinkId link_id;
    std::string condition_name;
    bool success = false;
    std::string verdict_detail;
    Timestamp verified_at{};
    std::int64_t ttl_seconds = 0;
    bool invalidated = false;

    Timestamp expires_at() const { return verified_at + Seconds{ttl_seconds}; }
    // Live while now <= verifiedAt + ttl and not invalidated.
    bool live_at(Timestamp now) const { return !invalidated && now <= expires_at(); }

    bool operator==(const VerificationDecision&) const = default;
};

struct ViolationReport {
    LinkId link_id;
    std::string condition_name;
    std::string detail;
    nlohmann::json evidence = nlohmann::json::object();
    Timestamp reported_at{};
};

enum class LinkStatus { allowed, blocked, unverified };

std::string_view to_string(LinkStatus s);

nlohmann::json to_json(const LinkRecord& r);
nlohmann::json to_json(const VerificationDecision& d);
nlohmann::json to_json(const ViolationReport& v);
LinkRecord link_from_json(const nlohmann::json& j);
VerificationDecision decision_from_json(const nlohmann::json& j);
ViolationReport violation_from_json(const nlohmann::json& j);

} // namespace lims
