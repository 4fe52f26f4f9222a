#include "lims/server.hpp"

#include <set>

#include <spdlog/spdlog.h>

#include "lims/error.hpp"
#include "lims/url.hpp"

namespace lims {

using nlohmann::json;

std::string_view to_string(DeploymentMode m) {
    switch (m) {
        case DeploymentMode::discovery: return "discovery";
        case DeploymentMode::report_only: return "report_only";
        case DeploymentMode::enforce: return "enforce";
    }
    return "enforce";
}

std::optional<DeploymentMode> parse_mode(std::string_view text) {
    if (text == "discovery") return DeploymentMode::discovery;
    if (text == "report_only" || text == "report-only") return DeploymentMode::report_only;
    if (text == "enforce") return DeploymentMode::enforce;
    return std::nullopt;
}

std::string_view to_string(ResponseReason r) {
    switch (r) {
        case ResponseReason::policy: return "policy";
        case ResponseReason::default_decision: return "default";
        case ResponseReason::mode_override: return "mode_override";
    }
    return "policy";
}

void ServerConfig::validate() const {
    if (on_demand_timeout_ms < 0) throw ConfigError("onDemandTimeoutMs must be >= 0");
    if (client_poll_interval_seconds <= 0) throw ConfigError("clientPollIntervalSeconds must be positive");
    if (client_failure_threshold <= 0) throw ConfigError("clientFailureThreshold must be positive");
    if (client_cache_ttl_seconds <= 0) throw ConfigError("clientCacheTtlSeconds must be positive");
}

ServerConfig server_config_from_json(const json& j) {
    ServerConfig c;
    if (j.contains("mode")) {
        const auto m = parse_mode(j.at("mode").get<std::string>());
        if (!m) throw ConfigError("unknown mode '" + j.at("mode").get<std::string>() + "'");
        c.mode = *m;
    }
    if (j.contains("defaultDecision")) {
        const auto d = j.at("defaultDecision").get<std::string>();
        if (d == "allow") c.default_decision = DefaultDecision::allow;
        else if (d == "deny") c.default_decision = DefaultDecision::deny;
        else throw ConfigError("defaultDecision must be allow or deny");
    }
    c.on_demand_timeout_ms = j.value("onDemandTimeoutMs", c.on_demand_timeout_ms);
    c.client_poll_interval_seconds = j.value("clientPollIntervalSeconds", c.client_poll_interval_seconds);
    c.client_failure_threshold = j.value("clientFailureThreshold", c.client_failure_threshold);
    c.client_cache_ttl_seconds = j.value("clientCacheTtlSeconds", c.client_cache_ttl_seconds);
    c.validate();
    return c;
}

json to_json(const ServerConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"defaultDecision", c.default_decision == DefaultDecision::allow ? "allow" : "deny"},
            {"onDemandTimeoutMs", c.on_demand_timeout_ms},
            {"clientPollIntervalSeconds", c.client_poll_interval_seconds},
            {"clientFailureThreshold", c.client_failure_threshold},
            {"clientCacheTtlSeconds", c.client_cache_ttl_seconds}};
}

json to_json(const StatusQuery& q) {
    return {{"pageUrl", q.page_url}, {"resourceUrl", q.resource_url}, {"clientId", q.client_id},
            {"protocolVersion", q.protocol_version}};
}

json to_json(const StatusResponse& r) {
    return {{"allowed", r.allowed}, {"ttlSeconds", r.ttl_seconds}, {"reason", to_string(r.reason)}};
}

json to_json(const Invalidation& inv) {
    json j{{"linkId", inv.link_id}, {"pageUrl", inv.page_url}, {"resourceUrl", inv.resource_url}};
    if (inv.resource_pattern) j["resourcePattern"] = *inv.resource_pattern;
    return j;
}

json to_json(const HeartbeatResponse& h) {
    json inv = json::array();
    for (const auto& i : h.invalidations) inv.push_back(to_json(i));
    return {{"mode", to_string(h.mode)},
            {"pollIntervalSeconds", h.poll_interval_seconds},
            {"failureThreshold", h.failure_threshold},
            {"invalidations", inv},
            {"configEpoch", h.config_epoch}};
}

StatusQuery status_query_from_json(const json& j) {
    StatusQuery q;
    q.page_url = j.at("pageUrl").get<std::string>();
    q.resource_url = j.at("resourceUrl").get<std::string>();
    q.client_id = j.value("clientId", std::string{});
    q.protocol_version = j.value("protocolVersion", 1);
    return q;
}

StatusResponse status_response_from_json(const json& j) {
    StatusResponse r;
    r.allowed = j.at("allowed").get<bool>();
    r.ttl_seconds = j.at("ttlSeconds").get<std::int64_t>();
    const auto reason = j.value("reason", std::string("policy"));
    if (reason == "default") r.reason = ResponseReason::default_decision;
    else if (reason == "mode_override") r.reason = ResponseReason::mode_override;
    else r.reason = ResponseReason::policy;
    return r;
}

HeartbeatResponse heartbeat_from_json(const json& j) {
    HeartbeatResponse h;
    const auto mode = parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw ConfigError("unknown mode in heartbeat");
    h.mode = *mode;
    h.poll_interval_seconds = j.at("pollIntervalSeconds").get<std::int64_t>();
    h.failure_threshold = j.value("failureThreshold", std::int64_t{3});
    h.config_epoch = j.at("configEpoch").get<std::uint64_t>();
    for (const auto& i : j.value("invalidations", json::array())) {
        Invalidation inv;
        inv.link_id = i.value("linkId", std::string{});
        inv.page_url = i.value("pageUrl", std::string{});
        inv.resource_url = i.value("resourceUrl", std::string{});
        if (i.contains("resourcePattern")) inv.resource_pattern = i.at("resourcePattern").get<std::string>();
        h.invalidations.push_back(std::move(inv));
    }
    return h;
}

ApiServer::ApiServer(ServerConfig config, PolicyConfig policy, std::shared_ptr<LinkStore> store,
                     Providers providers, std::shared_ptr<const Clock> clock, VerifierOptions verifier_options,
                     std::shared_ptr<const ConditionEngine> engine)
    : config_(config),
      policy_(std::make_shared<ConfigHandle>(std::move(policy))),
      store_(std::move(store)),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()) {
    config_.validate();
    validate_policy_config(*policy_->load());
    verifier_ = std::make_unique<Verifier>(store_, policy_, std::move(providers), clock_, std::move(engine),
                                           verifier_options);
    workers_ = verifier_options.workers;
}

StatusResponse ApiServer::respond(bool allowed, ResponseReason reason) const {
    std::lock_guard lock(mutex_);
    return StatusResponse{allowed, config_.client_cache_ttl_seconds, reason};
}

void ApiServer::record_report_only(const LinkRecord& link, std::string_view condition, std::string detail,
                                   Timestamp now) {
    ViolationReport r;
    r.link_id = link.link_id;
    r.condition_name = std::string(condition);
    r.detail = std::move(detail);
    r.evidence = {{"mode", "report_only"}, {"pageUrl", link.page_url}, {"resourceUrl", link.resource_url}};
    r.reported_at = now;
    store_->append_violation(r);
}

StatusResponse ApiServer::handle_query_status(const StatusQuery& q, Timestamp now) {
    const NormalizedUrl page = parse_normalized(q.page_url);
    const NormalizedUrl resource = parse_normalized(q.resource_url);
    const LinkRecord link = store_->upsert_link(page.text(), resource.text(), resource.query, now);

    ServerConfig cfg;
    {
        std::lock_guard lock(mutex_);
        ++queries_;
        cfg = config_;
    }

    const auto policy = policy_->load();
    const RuleResolution resolution = policy->resolve(link.page_url, link.resource_url);

    if (cfg.mode == DeploymentMode::discovery) return respond(true, ResponseReason::mode_override);

    if (resolution.unconditional_deny) {
        if (cfg.mode == DeploymentMode::report_only) {
            record_report_only(link, "deny", "denied by rule " + std::to_string(*resolution.deny_rule_id), now);
            return respond(true, ResponseReason::policy);
        }
        return respond(false, ResponseReason::policy);
    }

    const auto& conditions = resolution.conditions;
    auto live = store_->live_decisions(link.link_id, now);
    LinkStatus status = aggregate_status(live, conditions);

    if (status == LinkStatus::unverified) {
        VerificationTask task;
        task.link_id = link.link_id;
        task.origin = TaskOrigin::on_demand;
        task.enqueued_at = now;
        for (const auto& name : conditions) {
            const bool has_live = std::any_of(live.begin(), live.end(), [&](const VerificationDecision& d) {
                return d.condition_name == name && d.success;
            });
            if (!has_live) task.condition_names.push_back(name);
        }
        Completion done = verifier_->enqueue_on_demand(std::move(task));
        if (workers_ == 0) verifier_->run_pending();
        const auto ready = done.wait_for(std::chrono::milliseconds(cfg.on_demand_timeout_ms));
        if (ready == std::future_status::ready && done.get() == TaskOutcome::completed) {
            live = store_->live_decisions(link.link_id, now);
            status = aggregate_status(live, conditions);
        }
    }

    switch (status) {
        case LinkStatus::allowed:
            return respond(true, ResponseReason::policy);
        case LinkStatus::blocked:
            if (cfg.mode == DeploymentMode::report_only) {
                for (const auto& d : live) {
                    if (!d.success) record_report_only(link, d.condition_name, d.verdict_detail, now);
                }
                return respond(true, ResponseReason::policy);
            }
            return respond(false, ResponseReason::policy);
        case LinkStatus::unverified:
            break;
    }
    return respond(cfg.default_decision == DefaultDecision::allow, ResponseReason::default_decision);
}

HeartbeatResponse ApiServer::handle_heartbeat(std::string_view client_id, std::uint64_t last_epoch) const {
    std::lock_guard lock(mutex_);
    HeartbeatResponse h;
    h.mode = config_.mode;
    h.poll_interval_seconds = config_.client_poll_interval_seconds;
    h.failure_threshold = config_.client_failure_threshold;
    h.config_epoch = epoch_;
    if (last_epoch == 0) return h;
    std::set<LinkId> seen;
    for (const auto& [epoch, inv] : invalidation_log_) {
        if (epoch > last_epoch && seen.insert(inv.link_id).second) h.invalidations.push_back(inv);
    }
    spdlog::debug("heartbeat from {} at epoch {}: {} invalidation(s)", client_id, last_epoch, h.invalidations.size());
    return h;
}

void ApiServer::set_mode(DeploymentMode mode) {
    std::lock_guard lock(mutex_);
    config_.mode = mode;
    ++epoch_;
    spdlog::info("deployment mode set to {} (epoch {})", to_string(mode), epoch_);
}

void ApiServer::update_policy(std::string_view policy_text, std::string_view bindings_json) {
    update_policy(make_policy_config(policy_text, bindings_json));
}

void ApiServer::update_policy(PolicyConfig next) {
    validate_policy_config(next);
    std::lock_guard lock(mutex_);
    const auto before = policy_->load();
    const auto changed = changed_conditions(*before, next);
    policy_->store(std::make_shared<const PolicyConfig>(std::move(next)));
    ++epoch_;
    std::set<LinkId> queued;
    for (const auto& name : changed) {
        for (const auto& id : store_->invalidate_condition(name)) {
            if (!queued.insert(id).second) continue;
            Invalidation inv;
            inv.link_id = id;
            if (const auto link = store_->find_link(id)) {
                inv.page_url = link->page_url;
                inv.resource_url = link->resource_url;
            }
            invalidation_log_.emplace_back(epoch_, std::move(inv));
        }
    }
    spdlog::info("policy updated (epoch {}): {} condition(s) changed, {} link(s) invalidated", epoch_,
                 changed.size(), queued.size());
}

ServerConfig ApiServer::config() const {
    std::lock_guard lock(mutex_);
    return config_;
}

std::uint64_t ApiServer::config_epoch() const {
    std::lock_guard lock(mutex_);
    return epoch_;
}

std::size_t ApiServer::queries_handled() const {
    std::lock_guard lock(mutex_);
    return queries_;
}

} // namespace lims
