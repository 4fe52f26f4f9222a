#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include <nlohmann/json.hpp>

#include "lims/client.hpp"
#include "lims/server.hpp"

namespace httplib {
class Server;
}

namespace lims {

// JSON-over-HTTP binding of ApiServer:
//   POST /v1/query-status           {pageUrl, resourceUrl, clientId}
//   GET  /v1/heartbeat?clientId=&epoch=
//   POST /v1/admin/mode             {"mode": "..."}
//   POST /v1/admin/policy           multipart (policy, bindings) or JSON
//   GET  /v1/admin/links
//   GET  /v1/admin/violations
// Admin routes require `Authorization: Bearer <token>`.
class HttpService {
public:
    HttpService(ApiServer& server, std::string admin_token);
    ~HttpService();

    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    // Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();
    int port() const noexcept { return port_; }

private:
    void install_routes();

    ApiServer& server_;
    std::string admin_token_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    int port_ = 0;
};

// ClientTransport over HTTP; any non-200 reply counts as a failure.
class HttpTransport final : public ClientTransport {
public:
    HttpTransport(std::string host, int port, int timeout_ms = 2000);

    std::optional<StatusResponse> query_status(const StatusQuery& q) override;
    std::optional<HeartbeatResponse> heartbeat(std::string_view client_id, std::uint64_t epoch) override;

private:
    std::string host_;
    int port_;
    int timeout_ms_;
};

// Admin endpoint client used by the CLI. Throws Error on transport or
// HTTP failures.
class AdminClient {
public:
    AdminClient(std::string base_url, std::string token);

    void set_mode(DeploymentMode mode);
    nlohmann::json apply_policy(std::string_view policy_text, std::string_view bindings_json);
    nlohmann::json links();
    nlohmann::json violations();

private:
    std::string base_url_;
    std::string token_;
};

} // namespace lims
