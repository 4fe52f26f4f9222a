#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "lims/server.hpp"
#include "lims/time.hpp"

namespace lims {

// What the client needs from the network. A nullopt return is a connection
// failure (including HTTP errors).
class ClientTransport {
public:
    virtual ~ClientTransport() = default;
    virtual std::optional<StatusResponse> query_status(const StatusQuery& q) = 0;
    virtual std::optional<HeartbeatResponse> heartbeat(std::string_view client_id, std::uint64_t epoch) = 0;
};

struct ClientRequest {
    std::string page_url;
    std::string resource_url;
};

enum class InterceptAction { pass_through, blocked_404 };

std::string_view to_string(InterceptAction a);

enum class ClientMode { active, no_op };

struct ClientCacheEntry {
    bool allowed = true;
    Timestamp expires_at{};
};

struct ClientOptions {
    std::string client_id = "client";
    std::int64_t failure_threshold = 3;
    std::int64_t poll_interval_seconds = 60;
};

// The portable request-interception state machine: a page-scoped verdict
// cache in front of query_status, heartbeat-driven invalidation, and a
// fail-open no-op mode after repeated connection failures.
class ClientCore {
public:
    explicit ClientCore(ClientOptions options = {});

    InterceptAction intercept(const ClientRequest& req, Timestamp now, ClientTransport& transport);

    bool heartbeat_due(Timestamp now) const;
    // Returns whether a heartbeat response was received and applied.
    bool heartbeat_tick(Timestamp now, ClientTransport& transport);

    // True exactly once per installed worker version.
    bool post_install_refresh_needed(std::string_view installed_version);
    // Registration-script message; only the first one triggers a refresh.
    bool on_registration_message();
    std::size_t ignored_messages() const noexcept { return ignored_messages_; }

    ClientMode mode() const noexcept { return mode_; }
    std::int64_t consecutive_failures() const noexcept { return consecutive_failures_; }
    std::int64_t failure_threshold() const noexcept { return options_.failure_threshold; }
    std::uint64_t config_epoch() const noexcept { return config_epoch_; }
    std::optional<DeploymentMode> server_mode() const noexcept { return server_mode_; }
    std::size_t cache_size() const noexcept { return cache_.size(); }
    std::size_t queries_sent() const noexcept { return queries_sent_; }

    // Drops everything; used when the worker is reinstalled.
    void clear_cache() { cache_.clear(); }

private:
    void record_failure();
    void record_success();

    ClientOptions options_;
    ClientMode mode_ = ClientMode::active;
    std::int64_t consecutive_failures_ = 0;
    std::uint64_t config_epoch_ = 0;
    std::optional<DeploymentMode> server_mode_;
    std::optional<Timestamp> last_heartbeat_;
    std::unordered_map<LinkId, ClientCacheEntry> cache_;
    std::unordered_map<LinkId, std::string> cache_resources_;  // for pattern purges
    std::optional<std::string> installed_version_;
    bool registration_message_seen_ = false;
    std::size_t ignored_messages_ = 0;
    std::size_t queries_sent_ = 0;
};

// Calls straight into an in-process ApiServer using a clock for "now".
class InProcessTransport final : public ClientTransport {
public:
    InProcessTransport(ApiServer& server, const Clock& clock) : server_(server), clock_(clock) {}

    std::optional<StatusResponse> query_status(const StatusQuery& q) override;
    std::optional<HeartbeatResponse> heartbeat(std::string_view client_id, std::uint64_t epoch) override;

    // While down, every call fails as a connection error.
    void set_down(bool down) { down_ = down; }
    std::size_t status_calls() const noexcept { return status_calls_; }
    std::size_t heartbeat_calls() const noexcept { return heartbeat_calls_; }

private:
    ApiServer& server_;
    const Clock& clock_;
    bool down_ = false;
    std::size_t status_calls_ = 0;
    std::size_t heartbeat_calls_ = 0;
};

} // namespace lims
