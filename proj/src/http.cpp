#include "lims/http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lims/error.hpp"

namespace lims {

using nlohmann::json;

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view message) {
    reply_json(res, status, json{{"error", message}});
}

} // namespace

HttpService::HttpService(ApiServer& server, std::string admin_token)
    : server_(server), admin_token_(std::move(admin_token)), http_(std::make_unique<httplib::Server>()) {
    install_routes();
}

HttpService::~HttpService() {
    stop();
}

void HttpService::install_routes() {
    auto& http = *http_;

    http.Post("/v1/query-status", [this](const httplib::Request& req, httplib::Response& res) {
        StatusQuery q;
        try {
            q = status_query_from_json(json::parse(req.body));
        } catch (const json::exception& e) {
            return reply_error(res, 400, std::string("bad request: ") + e.what());
        }
        try {
            reply_json(res, 200, to_json(server_.handle_query_status(q, server_.clock().now())));
        } catch (const MalformedUrl& e) {
            reply_error(res, 400, e.what());
        } catch (const std::exception& e) {
            spdlog::error("query-status failed: {}", e.what());
            reply_error(res, 500, "internal error");
        }
    });

    http.Get("/v1/heartbeat", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t epoch = 0;
        if (req.has_param("epoch")) {
            try {
                epoch = std::stoull(req.get_param_value("epoch"));
            } catch (const std::exception&) {
                return reply_error(res, 400, "epoch must be a non-negative integer");
            }
        }
        reply_json(res, 200, to_json(server_.handle_heartbeat(req.get_param_value("clientId"), epoch)));
    });

    auto authorized = [this](const httplib::Request& req, httplib::Response& res) {
        if (admin_token_.empty() || req.get_header_value("Authorization") != "Bearer " + admin_token_) {
            reply_error(res, 401, "unauthorized");
            return false;
        }
        return true;
    };

    http.Post("/v1/admin/mode", [this, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req, res)) return;
        std::optional<DeploymentMode> mode;
        try {
            const auto body = json::parse(req.body);
            mode = parse_mode(body.at("mode").get<std::string>());
        } catch (const json::exception&) {
        }
        if (!mode) return reply_error(res, 400, "expected {\"mode\": \"discovery|report_only|enforce\"}");
        server_.set_mode(*mode);
        reply_json(res, 200, json{{"mode", to_string(*mode)}, {"configEpoch", server_.config_epoch()}});
    });

    http.Post("/v1/admin/policy", [this, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req, res)) return;
        std::string policy_text;
        std::string bindings;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("policy")) return reply_error(res, 400, "missing 'policy' part");
            policy_text = req.get_file_value("policy").content;
            if (req.has_file("bindings")) bindings = req.get_file_value("bindings").content;
        } else {
            try {
                const auto body = json::parse(req.body);
                policy_text = body.at("policy").get<std::string>();
                if (body.contains("bindings")) {
                    const auto& b = body.at("bindings");
                    bindings = b.is_string() ? b.get<std::string>() : b.dump();
                }
            } catch (const json::exception& e) {
                return reply_error(res, 400, std::string("bad request: ") + e.what());
            }
        }
        try {
            server_.update_policy(policy_text, bindings);
        } catch (const SyntaxError& e) {
            return reply_json(res, 422, json{{"error", e.what()}, {"line", e.line()}, {"column", e.column()},
                                             {"expected", e.expected()}});
        } catch (const Error& e) {
            return reply_error(res, 422, e.what());
        }
        reply_json(res, 200, json{{"configEpoch", server_.config_epoch()},
                                  {"rules", server_.policy()->document.rules.size()}});
    });

    http.Get("/v1/admin/links", [this, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req, res)) return;
        const auto policy = server_.policy();
        const auto now = server_.clock().now();
        json out = json::array();
        for (const auto& link : server_.store().links()) {
            json j = to_json(link);
            const auto resolution = policy->resolve(link.page_url, link.resource_url);
            if (resolution.unconditional_deny) {
                j["status"] = to_string(LinkStatus::blocked);
            } else {
                j["status"] = to_string(get_link_status(server_.store(), link.link_id, resolution.conditions, now));
            }
            out.push_back(std::move(j));
        }
        reply_json(res, 200, out);
    });

    http.Get("/v1/admin/violations", [this, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req, res)) return;
        json out = json::array();
        for (const auto& v : server_.store().violations()) out.push_back(to_json(v));
        reply_json(res, 200, out);
    });
}

int HttpService::start(const std::string& host, int port) {
    if (port == 0) {
        port_ = http_->bind_to_any_port(host);
    } else {
        port_ = http_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    return port_;
}

bool HttpService::listen(const std::string& host, int port) {
    port_ = port;
    return http_->listen(host, port);
}

void HttpService::stop() {
    if (http_) http_->stop();
    if (thread_.joinable()) thread_.join();
}

HttpTransport::HttpTransport(std::string host, int port, int timeout_ms)
    : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}

namespace {

httplib::Client make_client(const std::string& host, int port, int timeout_ms) {
    httplib::Client cli(host, port);
    const auto t = std::chrono::milliseconds(timeout_ms);
    cli.set_connection_timeout(t);
    cli.set_read_timeout(t);
    cli.set_write_timeout(t);
    return cli;
}

} // namespace

std::optional<StatusResponse> HttpTransport::query_status(const StatusQuery& q) {
    auto cli = make_client(host_, port_, timeout_ms_);
    const auto res = cli.Post("/v1/query-status", to_json(q).dump(), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    try {
        return status_response_from_json(json::parse(res->body));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<HeartbeatResponse> HttpTransport::heartbeat(std::string_view client_id, std::uint64_t epoch) {
    auto cli = make_client(host_, port_, timeout_ms_);
    const httplib::Params params{{"clientId", std::string(client_id)}, {"epoch", std::to_string(epoch)}};
    const auto res = cli.Get("/v1/heartbeat", params, httplib::Headers{});
    if (!res || res->status != 200) return std::nullopt;
    try {
        return heartbeat_from_json(json::parse(res->body));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

AdminClient::AdminClient(std::string base_url, std::string token)
    : base_url_(std::move(base_url)), token_(std::move(token)) {}

namespace {

json checked(const httplib::Result& res, std::string_view what) {
    if (!res) throw Error(std::string(what) + ": " + httplib::to_string(res.error()));
    json body = json::parse(res->body, nullptr, false);
    if (res->status != 200) {
        const std::string msg = body.is_object() && body.contains("error") ? body["error"].get<std::string>()
                                                                           : res->body;
        throw Error(std::string(what) + " failed (HTTP " + std::to_string(res->status) + "): " + msg);
    }
    return body;
}

} // namespace

void AdminClient::set_mode(DeploymentMode mode) {
    httplib::Client cli(base_url_);
    cli.set_bearer_token_auth(token_);
    checked(cli.Post("/v1/admin/mode", json{{"mode", to_string(mode)}}.dump(), "application/json"), "set mode");
}

json AdminClient::apply_policy(std::string_view policy_text, std::string_view bindings_json) {
    httplib::Client cli(base_url_);
    cli.set_bearer_token_auth(token_);
    const httplib::MultipartFormDataItems items{
        {"policy", std::string(policy_text), "policy.lims", "text/plain"},
        {"bindings", std::string(bindings_json), "bindings.json", "application/json"},
    };
    return checked(cli.Post("/v1/admin/policy", items), "apply policy");
}

json AdminClient::links() {
    httplib::Client cli(base_url_);
    cli.set_bearer_token_auth(token_);
    return checked(cli.Get("/v1/admin/links"), "list links");
}

json AdminClient::violations() {
    httplib::Client cli(base_url_);
    cli.set_bearer_token_auth(token_);
    return checked(cli.Get("/v1/admin/violations"), "list violations");
}

} // namespace lims
