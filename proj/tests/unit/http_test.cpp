#include <gtest/gtest.h>

#include <httplib.h>

#include "lims/error.hpp"
#include "lims/http.hpp"
#include "lims/sim.hpp"
#include "lims/url.hpp"

using namespace lims;
using nlohmann::json;

namespace {

const std::string kToken = "s3cret";
const std::string kPage = "https://example.com/articles/1";

class HttpTest : public ::testing::Test {
protected:
    DefaultPolicyFixture fixture = default_policy_fixture();
    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>(fixture.now);
    std::shared_ptr<MemoryLinkStore> store = std::make_shared<MemoryLinkStore>();
    std::unique_ptr<ApiServer> server;
    std::unique_ptr<HttpService> service;
    int port = 0;

    void SetUp() override {
        ServerConfig cfg;
        cfg.mode = DeploymentMode::discovery;
        cfg.on_demand_timeout_ms = 2000;
        server = std::make_unique<ApiServer>(cfg, fixture.policy, store, fixture.providers, clock,
                                             VerifierOptions{0});
        service = std::make_unique<HttpService>(*server, kToken);
        port = service->start("127.0.0.1", 0);
        ASSERT_GT(port, 0);
    }

    void TearDown() override { service->stop(); }

    std::string base() const { return "http://127.0.0.1:" + std::to_string(port); }
    httplib::Client raw() const { return httplib::Client("127.0.0.1", port); }
    AdminClient admin(const std::string& token = kToken) const { return AdminClient(base(), token); }
};

} // namespace

TEST_F(HttpTest, ModeMatrixOverViolatingFixture) {
    HttpTransport transport("127.0.0.1", port);
    const auto& bad = fixture.violating_resources;
    const std::string clean = fixture.clean_resources.front();

    // Discovery: all allowed, nothing reported.
    for (const auto& r : bad) {
        const auto s = transport.query_status({kPage, r, "c", 1});
        ASSERT_TRUE(s);
        EXPECT_TRUE(s->allowed);
        EXPECT_EQ(s->reason, ResponseReason::mode_override);
    }
    EXPECT_EQ(admin().violations().size(), 0u);

    // Report-only: all allowed, every violating resource reported.
    admin().set_mode(DeploymentMode::report_only);
    for (const auto& r : bad) {
        const auto s = transport.query_status({kPage, r, "c", 1});
        ASSERT_TRUE(s);
        EXPECT_TRUE(s->allowed) << r;
    }
    const auto reports = admin().violations();
    std::set<std::string> reported;
    for (const auto& v : reports) reported.insert(v.at("linkId").get<std::string>());
    for (const auto& r : bad) {
        const auto page = parse_normalized(kPage).text();
        const auto res = parse_normalized(r).text();
        EXPECT_TRUE(reported.contains(make_link_id(page, res))) << r;
    }

    // Enforce: violating blocked, clean allowed.
    admin().set_mode(DeploymentMode::enforce);
    for (const auto& r : bad) {
        const auto s = transport.query_status({kPage, r, "c", 1});
        ASSERT_TRUE(s);
        EXPECT_FALSE(s->allowed) << r;
        EXPECT_EQ(s->reason, ResponseReason::policy);
    }
    const auto ok = transport.query_status({kPage, clean, "c", 1});
    ASSERT_TRUE(ok);
    EXPECT_TRUE(ok->allowed);
}

TEST_F(HttpTest, HeartbeatCarriesEpochAndMode) {
    HttpTransport transport("127.0.0.1", port);
    const auto first = transport.heartbeat("c", 0);
    ASSERT_TRUE(first);
    EXPECT_EQ(first->mode, DeploymentMode::discovery);
    admin().set_mode(DeploymentMode::enforce);
    const auto second = transport.heartbeat("c", first->config_epoch);
    ASSERT_TRUE(second);
    EXPECT_EQ(second->config_epoch, first->config_epoch + 1);
    EXPECT_EQ(second->mode, DeploymentMode::enforce);
}

TEST_F(HttpTest, AdminRoutesRequireToken) {
    auto c = raw();
    EXPECT_EQ(c.Get("/v1/admin/links")->status, 401);
    EXPECT_EQ(c.Get("/v1/admin/links", {{"Authorization", "Bearer wrong"}})->status, 401);
    EXPECT_EQ(c.Get("/v1/admin/links", {{"Authorization", "Bearer " + kToken}})->status, 200);
    EXPECT_EQ(c.Post("/v1/admin/mode", R"({"mode": "enforce"})", "application/json")->status, 401);
    EXPECT_EQ(server->config().mode, DeploymentMode::discovery);
    EXPECT_THROW(admin("wrong").links(), Error);
}

TEST_F(HttpTest, EmptyTokenLocksAdminRoutes) {
    HttpService locked(*server, "");
    const int p = locked.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", p);
    EXPECT_EQ(c.Get("/v1/admin/links", {{"Authorization", "Bearer "}})->status, 401);
    locked.stop();
}

TEST_F(HttpTest, QueryStatusRejectsBadInput) {
    auto c = raw();
    EXPECT_EQ(c.Post("/v1/query-status", "{not json", "application/json")->status, 400);
    EXPECT_EQ(c.Post("/v1/query-status", R"({"pageUrl": "https://a.com/"})", "application/json")->status, 400);
    EXPECT_EQ(c.Post("/v1/query-status", R"({"pageUrl": "https://a.com/", "resourceUrl": "::bad::"})",
                     "application/json")
                  ->status,
              400);
    const auto ok = c.Post("/v1/query-status",
                           json{{"pageUrl", kPage}, {"resourceUrl", "https://cdn.x.com/a.js"}, {"clientId", "c"}}.dump(),
                           "application/json");
    ASSERT_EQ(ok->status, 200);
    const auto body = json::parse(ok->body);
    EXPECT_EQ(body.at("allowed"), true);
    EXPECT_EQ(body.at("ttlSeconds"), 300);
    EXPECT_EQ(body.at("reason"), "mode_override");
}

TEST_F(HttpTest, ModeRouteRejectsUnknownMode) {
    auto c = raw();
    const auto res =
        c.Post("/v1/admin/mode", {{"Authorization", "Bearer " + kToken}}, R"({"mode": "sideways"})", "application/json");
    EXPECT_EQ(res->status, 400);
}

TEST_F(HttpTest, PolicyApplyValidatesAndBumpsEpoch) {
    const auto epoch = server->config_epoch();
    const auto bindings = to_json(fixture.policy.bindings).dump();
    try {
        admin().apply_policy("deny \"*\" \"*\" if", bindings);
        FAIL() << "expected rejection";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("422"), std::string::npos);
    }
    EXPECT_EQ(server->config_epoch(), epoch);

    auto c = raw();
    const auto res = c.Post("/v1/admin/policy", {{"Authorization", "Bearer " + kToken}},
                            json{{"policy", "deny \"*\" \"*\" if"}, {"bindings", bindings}}.dump(), "application/json");
    ASSERT_EQ(res->status, 422);
    const auto err = json::parse(res->body);
    EXPECT_EQ(err.at("line"), 1);
    EXPECT_TRUE(err.contains("column"));

    const auto applied = admin().apply_policy(serialize_policy(fixture.policy.document), bindings);
    EXPECT_EQ(applied.at("configEpoch"), epoch + 1);
    EXPECT_EQ(applied.at("rules"), 5);
}

TEST_F(HttpTest, LinksListingIncludesStatus) {
    admin().set_mode(DeploymentMode::enforce);
    HttpTransport transport("127.0.0.1", port);
    transport.query_status({kPage, fixture.violating_resources.front(), "c", 1});
    transport.query_status({kPage, fixture.clean_resources.front(), "c", 1});
    const auto links = admin().links();
    ASSERT_EQ(links.size(), 2u);
    std::set<std::string> statuses;
    for (const auto& l : links) {
        EXPECT_EQ(l.at("hitCount"), 1);
        statuses.insert(l.at("status").get<std::string>());
    }
    EXPECT_EQ(statuses, (std::set<std::string>{"allowed", "blocked"}));
}

TEST_F(HttpTest, TransportReportsOutageAsFailure) {
    HttpTransport transport("127.0.0.1", port, 200);
    service->stop();
    EXPECT_FALSE(transport.query_status({kPage, "https://cdn.x.com/a.js", "c", 1}));
    EXPECT_FALSE(transport.heartbeat("c", 0));
}

TEST_F(HttpTest, ClientOverHttpFailsOpen) {
    HttpTransport transport("127.0.0.1", port, 200);
    admin().set_mode(DeploymentMode::enforce);
    ClientCore client(ClientOptions{"c", 2, 60});
    const auto bad = fixture.violating_resources.front();
    EXPECT_EQ(client.intercept({kPage, bad}, clock->now(), transport), InterceptAction::blocked_404);
    service->stop();
    client.clear_cache();
    EXPECT_EQ(client.intercept({kPage, bad}, clock->now(), transport), InterceptAction::pass_through);
    EXPECT_EQ(client.intercept({kPage, bad}, clock->now(), transport), InterceptAction::pass_through);
    EXPECT_EQ(client.mode(), ClientMode::no_op);
}
