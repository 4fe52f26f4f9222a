#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "lims/client.hpp"
#include "lims/sim.hpp"

using namespace lims;

namespace {

const Timestamp kNow = parse_timestamp("2024-08-12T00:00:00Z");
const std::string kPage = "https://example.com/";

class FakeTransport final : public ClientTransport {
public:
    bool up = true;
    bool allow = true;
    std::int64_t ttl = 300;
    std::size_t status_calls = 0;
    std::size_t heartbeat_calls = 0;
    HeartbeatResponse next_heartbeat;

    std::optional<StatusResponse> query_status(const StatusQuery&) override {
        ++status_calls;
        if (!up) return std::nullopt;
        return StatusResponse{allow, ttl, ResponseReason::policy};
    }
    std::optional<HeartbeatResponse> heartbeat(std::string_view, std::uint64_t) override {
        ++heartbeat_calls;
        if (!up) return std::nullopt;
        return next_heartbeat;
    }
};

ClientRequest req(const std::string& resource) { return {kPage, resource}; }

} // namespace

TEST(ClientCore, CacheHitMakesNoQuery) {
    ClientCore c;
    FakeTransport t;
    EXPECT_EQ(c.intercept(req("https://cdn.x.com/a.js"), kNow, t), InterceptAction::pass_through);
    EXPECT_EQ(t.status_calls, 1u);
    EXPECT_EQ(c.intercept(req("https://cdn.x.com/a.js"), kNow + Seconds{10}, t), InterceptAction::pass_through);
    EXPECT_EQ(t.status_calls, 1u);
}

TEST(ClientCore, DeniedMissIsBlockedAndCached) {
    ClientCore c;
    FakeTransport t;
    t.allow = false;
    EXPECT_EQ(c.intercept(req("https://cdn.x.com/a.js"), kNow, t), InterceptAction::blocked_404);
    EXPECT_EQ(c.cache_size(), 1u);
    t.allow = true;
    EXPECT_EQ(c.intercept(req("https://cdn.x.com/a.js"), kNow + Seconds{299}, t), InterceptAction::blocked_404);
    EXPECT_EQ(t.status_calls, 1u);
}

TEST(ClientCore, EntryExpiresAfterServerTtl) {
    ClientCore c;
    FakeTransport t;
    t.ttl = 60;
    c.intercept(req("https://cdn.x.com/a.js"), kNow, t);
    c.intercept(req("https://cdn.x.com/a.js"), kNow + Seconds{59}, t);
    EXPECT_EQ(t.status_calls, 1u);
    c.intercept(req("https://cdn.x.com/a.js"), kNow + Seconds{60}, t);
    EXPECT_EQ(t.status_calls, 2u);
}

TEST(ClientCore, CacheIsPageScoped) {
    ClientCore c;
    FakeTransport t;
    c.intercept({"https://example.com/a", "https://cdn.x.com/a.js"}, kNow, t);
    c.intercept({"https://example.com/b", "https://cdn.x.com/a.js"}, kNow, t);
    c.intercept({"https://EXAMPLE.com/a#frag", "https://cdn.x.com/a.js"}, kNow, t);
    EXPECT_EQ(t.status_calls, 2u);
}

TEST(ClientCore, ThresholdTripsNoOpMode) {
    ClientCore c(ClientOptions{"c", 3, 60});
    FakeTransport t;
    t.up = false;
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(c.intercept(req("https://cdn.x.com/" + std::to_string(i)), kNow, t), InterceptAction::pass_through);
    }
    EXPECT_EQ(c.mode(), ClientMode::no_op);
    EXPECT_EQ(t.status_calls, 3u);
    EXPECT_EQ(c.intercept(req("https://cdn.x.com/4"), kNow, t), InterceptAction::pass_through);
    EXPECT_EQ(t.status_calls, 3u);
}

TEST(ClientCore, SuccessResetsFailureCount) {
    ClientCore c(ClientOptions{"c", 3, 60});
    FakeTransport t;
    t.up = false;
    c.intercept(req("https://cdn.x.com/1"), kNow, t);
    c.intercept(req("https://cdn.x.com/2"), kNow, t);
    EXPECT_EQ(c.consecutive_failures(), 2);
    t.up = true;
    c.intercept(req("https://cdn.x.com/3"), kNow, t);
    EXPECT_EQ(c.consecutive_failures(), 0);
    EXPECT_EQ(c.mode(), ClientMode::active);
}

TEST(ClientCore, HeartbeatRestoresActiveMode) {
    ClientCore c(ClientOptions{"c", 1, 60});
    FakeTransport t;
    t.up = false;
    c.intercept(req("https://cdn.x.com/1"), kNow, t);
    ASSERT_EQ(c.mode(), ClientMode::no_op);
    t.up = true;
    EXPECT_TRUE(c.heartbeat_tick(kNow + Seconds{60}, t));
    EXPECT_EQ(c.mode(), ClientMode::active);
    t.allow = false;
    EXPECT_EQ(c.intercept(req("https://cdn.x.com/1"), kNow + Seconds{61}, t), InterceptAction::blocked_404);
}

TEST(ClientCore, FailedHeartbeatCountsTowardThreshold) {
    ClientCore c(ClientOptions{"c", 2, 60});
    FakeTransport t;
    t.up = false;
    EXPECT_FALSE(c.heartbeat_tick(kNow, t));
    EXPECT_FALSE(c.heartbeat_tick(kNow + Seconds{60}, t));
    EXPECT_EQ(c.mode(), ClientMode::no_op);
}

TEST(ClientCore, HeartbeatPurgesInvalidatedEntries) {
    ClientCore c;
    FakeTransport t;
    c.intercept(req("https://cdn.x.com/a.js"), kNow, t);
    c.intercept(req("https://cdn.x.com/b.js"), kNow, t);
    c.intercept(req("https://other.org/c.js"), kNow, t);
    ASSERT_EQ(c.cache_size(), 3u);

    t.next_heartbeat.config_epoch = 2;
    EXPECT_TRUE(c.heartbeat_tick(kNow, t));
    EXPECT_EQ(c.cache_size(), 3u);

    t.next_heartbeat.config_epoch = 3;
    t.next_heartbeat.invalidations = {
        {make_link_id("example.com/", "cdn.x.com/a.js"), "example.com/", "cdn.x.com/a.js", std::nullopt},
        {"", "", "", std::string("other.org/*")},
    };
    EXPECT_TRUE(c.heartbeat_tick(kNow + Seconds{60}, t));
    EXPECT_EQ(c.cache_size(), 1u);
    EXPECT_EQ(c.config_epoch(), 3u);

    const auto calls = t.status_calls;
    c.intercept(req("https://cdn.x.com/a.js"), kNow + Seconds{61}, t);
    c.intercept(req("https://cdn.x.com/b.js"), kNow + Seconds{61}, t);
    EXPECT_EQ(t.status_calls, calls + 1);
}

TEST(ClientCore, HeartbeatAdoptsServerSettings) {
    ClientCore c;
    FakeTransport t;
    t.next_heartbeat.mode = DeploymentMode::report_only;
    t.next_heartbeat.poll_interval_seconds = 5;
    t.next_heartbeat.failure_threshold = 7;
    t.next_heartbeat.config_epoch = 4;
    EXPECT_TRUE(c.heartbeat_due(kNow));
    c.heartbeat_tick(kNow, t);
    EXPECT_EQ(c.server_mode(), DeploymentMode::report_only);
    EXPECT_EQ(c.failure_threshold(), 7);
    EXPECT_FALSE(c.heartbeat_due(kNow + Seconds{4}));
    EXPECT_TRUE(c.heartbeat_due(kNow + Seconds{5}));
}

TEST(ClientCore, MalformedUrlPassesThroughWithoutQuery) {
    ClientCore c;
    FakeTransport t;
    EXPECT_EQ(c.intercept(req("::::"), kNow, t), InterceptAction::pass_through);
    EXPECT_EQ(t.status_calls, 0u);
}

TEST(ClientCore, PostInstallRefreshOncePerVersion) {
    ClientCore c;
    EXPECT_TRUE(c.post_install_refresh_needed("v1"));
    EXPECT_FALSE(c.post_install_refresh_needed("v1"));
    EXPECT_TRUE(c.post_install_refresh_needed("v2"));
    EXPECT_TRUE(c.on_registration_message());
    EXPECT_FALSE(c.on_registration_message());
    EXPECT_FALSE(c.on_registration_message());
    EXPECT_EQ(c.ignored_messages(), 2u);
}

TEST(ClientCore, MatchesStateMachineOracle) {
    // Random interleavings of successes and failures against a reference model.
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> coin(0, 3), threshold(1, 5);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = threshold(rng);
        ClientCore c(ClientOptions{"c", k, 60});
        FakeTransport t;
        t.next_heartbeat.failure_threshold = k;
        int failures = 0;
        bool no_op = false;
        std::size_t expected_calls = 0;
        for (int step = 0; step < 40; ++step) {
            const bool heartbeat = coin(rng) == 0;
            t.up = coin(rng) != 0;
            const Timestamp at = kNow + Seconds{step};
            if (heartbeat) {
                c.heartbeat_tick(at, t);
            } else {
                // Unique resource each step so the cache never answers.
                const auto action = c.intercept(req("https://cdn.x.com/" + std::to_string(step)), at, t);
                EXPECT_EQ(action, InterceptAction::pass_through);
                if (no_op) continue;
                ++expected_calls;
            }
            if (t.up) {
                failures = 0;
                no_op = false;
            } else if (++failures >= k) {
                no_op = true;
            }
            EXPECT_EQ(c.mode() == ClientMode::no_op, no_op) << trial << ":" << step;
            EXPECT_EQ(c.consecutive_failures(), failures);
        }
        EXPECT_EQ(t.status_calls, expected_calls);
    }
}

TEST(ClientCore, SecondVisitIsSilentAgainstRealServer) {
    const auto fixture = default_policy_fixture();
    const auto clock = std::make_shared<ManualClock>(fixture.now);
    ServerConfig cfg;
    cfg.mode = DeploymentMode::enforce;
    ApiServer server(cfg, fixture.policy, std::make_shared<MemoryLinkStore>(), fixture.providers, clock,
                     VerifierOptions{0});
    InProcessTransport transport(server, *clock);
    ClientCore c;
    const auto trace = generate_traces(fixture, 1, 9).at(0);
    std::vector<InterceptAction> first;
    for (const auto& r : trace.resources) first.push_back(c.intercept({trace.page_url, r.url}, clock->now(), transport));
    const auto calls = transport.status_calls();
    EXPECT_EQ(calls, trace.resources.size());
    clock->advance(Seconds{60});
    for (std::size_t i = 0; i < trace.resources.size(); ++i) {
        EXPECT_EQ(c.intercept({trace.page_url, trace.resources[i].url}, clock->now(), transport), first[i]);
    }
    EXPECT_EQ(transport.status_calls(), calls);
}

TEST(ClientCore, NoOpIsIndistinguishableFromUninstalled) {
    ClientCore c(ClientOptions{"c", 1, 60});
    FakeTransport t;
    t.up = false;
    c.intercept(req("https://cdn.x.com/0"), kNow, t);
    ASSERT_EQ(c.mode(), ClientMode::no_op);
    t.up = true;
    t.allow = false;
    const auto calls = t.status_calls;
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(c.intercept(req("https://cdn.x.com/" + std::to_string(i)), kNow, t), InterceptAction::pass_through);
    }
    EXPECT_EQ(t.status_calls, calls);
}
