#include "lims/client.hpp"

#include <vector>

#include "lims/error.hpp"
#include "lims/policy.hpp"
#include "lims/url.hpp"

namespace lims {

std::string_view to_string(InterceptAction a) {
    return a == InterceptAction::pass_through ? "pass_through" : "blocked_404";
}

ClientCore::ClientCore(ClientOptions options) : options_(std::move(options)) {}

void ClientCore::record_failure() {
    ++consecutive_failures_;
    if (consecutive_failures_ >= options_.failure_threshold) mode_ = ClientMode::no_op;
}

void ClientCore::record_success() {
    consecutive_failures_ = 0;
    mode_ = ClientMode::active;
}

InterceptAction ClientCore::intercept(const ClientRequest& req, Timestamp now, ClientTransport& transport) {
    if (mode_ == ClientMode::no_op) return InterceptAction::pass_through;

    std::string page;
    std::string resource;
    try {
        page = parse_normalized(req.page_url).text();
        resource = parse_normalized(req.resource_url).text();
    } catch (const MalformedUrl&) {
        return InterceptAction::pass_through;
    }
    const LinkId key = make_link_id(page, resource);

    if (const auto it = cache_.find(key); it != cache_.end()) {
        if (now < it->second.expires_at) {
            return it->second.allowed ? InterceptAction::pass_through : InterceptAction::blocked_404;
        }
        cache_.erase(it);
        cache_resources_.erase(key);
    }

    ++queries_sent_;
    const auto response = transport.query_status(StatusQuery{req.page_url, req.resource_url, options_.client_id, 1});
    if (!response) {
        record_failure();
        return InterceptAction::pass_through;
    }
    record_success();
    cache_[key] = ClientCacheEntry{response->allowed, now + Seconds{response->ttl_seconds}};
    cache_resources_[key] = resource;
    return response->allowed ? InterceptAction::pass_through : InterceptAction::blocked_404;
}

bool ClientCore::heartbeat_due(Timestamp now) const {
    return !last_heartbeat_ || now - *last_heartbeat_ >= Seconds{options_.poll_interval_seconds};
}

bool ClientCore::heartbeat_tick(Timestamp now, ClientTransport& transport) {
    last_heartbeat_ = now;
    const auto h = transport.heartbeat(options_.client_id, config_epoch_);
    if (!h) {
        record_failure();
        return false;
    }
    record_success();
    for (const auto& inv : h->invalidations) {
        if (inv.resource_pattern) {
            const UrlPattern pattern(*inv.resource_pattern);
            std::vector<LinkId> doomed;
            for (const auto& [id, resource] : cache_resources_) {
                if (pattern.matches(resource)) doomed.push_back(id);
            }
            for (const auto& id : doomed) {
                cache_.erase(id);
                cache_resources_.erase(id);
            }
        }
        if (!inv.link_id.empty()) {
            cache_.erase(inv.link_id);
            cache_resources_.erase(inv.link_id);
        }
    }
    config_epoch_ = h->config_epoch;
    server_mode_ = h->mode;
    options_.poll_interval_seconds = h->poll_interval_seconds;
    options_.failure_threshold = h->failure_threshold;
    return true;
}

bool ClientCore::post_install_refresh_needed(std::string_view installed_version) {
    if (installed_version_ && *installed_version_ == installed_version) return false;
    installed_version_ = std::string(installed_version);
    registration_message_seen_ = false;
    return true;
}

bool ClientCore::on_registration_message() {
    if (registration_message_seen_) {
        ++ignored_messages_;
        return false;
    }
    registration_message_seen_ = true;
    return true;
}

std::optional<StatusResponse> InProcessTransport::query_status(const StatusQuery& q) {
    ++status_calls_;
    if (down_) return std::nullopt;
    try {
        return server_.handle_query_status(q, clock_.now());
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<HeartbeatResponse> InProcessTransport::heartbeat(std::string_view client_id, std::uint64_t epoch) {
    ++heartbeat_calls_;
    if (down_) return std::nullopt;
    return server_.handle_heartbeat(client_id, epoch);
}

} // namespace lims
