#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lims/policy_config.hpp"
#include "lims/store.hpp"
#include "lims/verifier.hpp"

namespace lims {

enum class DeploymentMode { discovery, report_only, enforce };
enum class DefaultDecision { allow, deny };

std::string_view to_string(DeploymentMode m);
// Accepts "report_only" and "report-only".
std::optional<DeploymentMode> parse_mode(std::string_view text);

struct ServerConfig {
    DeploymentMode mode = DeploymentMode::enforce;
    DefaultDecision default_decision = DefaultDecision::allow;
    std::int64_t on_demand_timeout_ms = 250;
    std::int64_t client_poll_interval_seconds = 60;
    std::int64_t client_failure_threshold = 3;
    std::int64_t client_cache_ttl_seconds = 300;

    void validate() const;  // throws ConfigError
};

ServerConfig server_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ServerConfig& c);

struct StatusQuery {
    std::string page_url;
    std::string resource_url;
    std::string client_id;
    int protocol_version = 1;
};

enum class ResponseReason { policy, default_decision, mode_override };

std::string_view to_string(ResponseReason r);

struct StatusResponse {
    bool allowed = true;
    std::int64_t ttl_seconds = 1;
    ResponseReason reason = ResponseReason::policy;

    bool operator==(const StatusResponse&) const = default;
};

// A client-cache entry to purge: a link id, or a resource URL pattern when
// `resource_pattern` is set.
struct Invalidation {
    LinkId link_id;
    std::string page_url;
    std::string resource_url;
    std::optional<std::string> resource_pattern;

    bool operator==(const Invalidation&) const = default;
};

struct HeartbeatResponse {
    DeploymentMode mode = DeploymentMode::enforce;
    std::int64_t poll_interval_seconds = 60;
    std::int64_t failure_threshold = 3;
    std::vector<Invalidation> invalidations;
    std::uint64_t config_epoch = 0;
};

nlohmann::json to_json(const StatusQuery& q);
nlohmann::json to_json(const StatusResponse& r);
nlohmann::json to_json(const Invalidation& inv);
nlohmann::json to_json(const HeartbeatResponse& h);
StatusQuery status_query_from_json(const nlohmann::json& j);
StatusResponse status_response_from_json(const nlohmann::json& j);
HeartbeatResponse heartbeat_from_json(const nlohmann::json& j);

// The decision point clients query. Transport-agnostic; see HttpService for
// the HTTP binding.
class ApiServer {
public:
    ApiServer(ServerConfig config, PolicyConfig policy, std::shared_ptr<LinkStore> store, Providers providers,
              std::shared_ptr<const Clock> clock, VerifierOptions verifier_options = {},
              std::shared_ptr<const ConditionEngine> engine = nullptr);

    // Throws MalformedUrl; store failures propagate.
    StatusResponse handle_query_status(const StatusQuery& q, Timestamp now);

    // Everything issued after `last_epoch`; a new client (epoch 0) gets the
    // current config with no invalidations.
    HeartbeatResponse handle_heartbeat(std::string_view client_id, std::uint64_t last_epoch) const;

    void set_mode(DeploymentMode mode);
    // Atomic: on any parse/validation error the old policy stays active.
    void update_policy(std::string_view policy_text, std::string_view bindings_json);
    void update_policy(PolicyConfig next);

    ServerConfig config() const;
    std::uint64_t config_epoch() const;
    std::shared_ptr<const PolicyConfig> policy() const { return policy_->load(); }

    LinkStore& store() { return *store_; }
    const LinkStore& store() const { return *store_; }
    Verifier& verifier() { return *verifier_; }
    const Clock& clock() const { return *clock_; }

    std::size_t queries_handled() const;

private:
    StatusResponse respond(bool allowed, ResponseReason reason) const;
    void record_report_only(const LinkRecord& link, std::string_view condition, std::string detail, Timestamp now);

    mutable std::mutex mutex_;
    ServerConfig config_;
    std::uint64_t epoch_ = 1;
    std::vector<std::pair<std::uint64_t, Invalidation>> invalidation_log_;
    std::size_t queries_ = 0;

    std::shared_ptr<ConfigHandle> policy_;
    std::shared_ptr<LinkStore> store_;
    std::shared_ptr<const Clock> clock_;
    std::unique_ptr<Verifier> verifier_;
    std::size_t workers_ = 0;
};

} // namespace lims
