#include <gtest/gtest.h>

#include <barrier>
#include <thread>

#include "fixtures.hpp"
#include "lims/error.hpp"
#include "lims/verifier.hpp"

using namespace lims;
using nlohmann::json;

namespace {

const Timestamp kNow = parse_timestamp("2024-08-12T00:00:00Z");

struct Counters {
    std::atomic<int> calls{0};
    std::atomic<int> running{0};
    std::atomic<int> max_running{0};
    std::atomic<int> sleep_ms{0};
};

class VerifierTest : public ::testing::Test {
protected:
    std::shared_ptr<MemoryLinkStore> store = std::make_shared<MemoryLinkStore>();
    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>(kNow);
    std::shared_ptr<ConditionEngine> engine = std::make_shared<ConditionEngine>();
    std::shared_ptr<Counters> counters = std::make_shared<Counters>();
    std::shared_ptr<ConfigHandle> config;

    VerifierTest() {
        // pass_c never fires, fail_c always fires, broken_c is inconclusive.
        engine->register_custom("pass", [c = counters](const ConditionBinding&, const LinkRecord&, const EvalContext&) {
            const int now_running = ++c->running;
            int prev = c->max_running.load();
            while (now_running > prev && !c->max_running.compare_exchange_weak(prev, now_running)) {
            }
            ++c->calls;
            if (const int ms = c->sleep_ms.load()) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
            --c->running;
            return Verdict{false, "fine", {}};
        });
        engine->register_custom("fail", [](const ConditionBinding&, const LinkRecord&, const EvalContext&) {
            return Verdict{true, "always fires", {{"why", "test"}}};
        });
        engine->register_custom("broken", [](const ConditionBinding&, const LinkRecord&, const EvalContext&) -> Verdict {
            throw ProviderUnavailable("feed offline");
        });
        config = std::make_shared<ConfigHandle>(make_policy_config(
            R"(deny "*" "*" if pass_c; deny "*" "*" if fail_c; deny "*" "*" if broken_c;)", bindings_json(3600)));
    }

    static std::string bindings_json(std::int64_t ttl) {
        json out = json::array();
        for (const auto* fn : {"pass", "fail", "broken"}) {
            out.push_back({{"name", std::string(fn) + "_c"},
                           {"kind", "custom"},
                           {"params", {{"function", fn}}},
                           {"ttlSeconds", ttl}});
        }
        return out.dump();
    }

    std::unique_ptr<Verifier> make(std::size_t workers, std::size_t capacity = 1024) {
        VerifierOptions opts;
        opts.workers = workers;
        opts.queue_capacity = capacity;
        return std::make_unique<Verifier>(store, config, Providers{}, clock, engine, opts);
    }

    const ConditionBinding& binding(const std::string& name) const { return config->load()->bindings.at(name); }

    LinkRecord link(int i = 0) {
        return store->upsert_link("example.com/", "cdn.x.com/" + std::to_string(i) + ".js", std::nullopt, kNow);
    }
};

} // namespace

TEST_F(VerifierTest, PassAndFailWriteDecisionsAndOneReport) {
    auto v = make(0);
    const auto l = link();
    const std::vector<ConditionBinding> bs{binding("pass_c"), binding("fail_c")};
    const auto written = v->verify_link(l, bs, kNow);
    ASSERT_EQ(written.size(), 2u);
    EXPECT_TRUE(written[0].success);
    EXPECT_FALSE(written[1].success);
    EXPECT_EQ(written[1].verdict_detail, "always fires");
    EXPECT_EQ(store->live_decisions(l.link_id, kNow).size(), 2u);
    const auto reports = store->violations();
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].condition_name, "fail_c");
    EXPECT_EQ(reports[0].evidence.at("why"), "test");
}

TEST_F(VerifierTest, NoConditionsWritesNothing) {
    auto v = make(0);
    EXPECT_TRUE(v->verify_link(link(), {}, kNow).empty());
    EXPECT_TRUE(store->current_decisions().empty());
}

TEST_F(VerifierTest, InconclusiveConditionWritesNoDecision) {
    auto v = make(0);
    const auto l = link();
    const std::vector<ConditionBinding> bs{binding("broken_c"), binding("pass_c")};
    const auto written = v->verify_link(l, bs, kNow);
    ASSERT_EQ(written.size(), 1u);
    EXPECT_EQ(written[0].condition_name, "pass_c");
    EXPECT_EQ(store->current_decisions().size(), 1u);
    EXPECT_TRUE(store->violations().empty());
}

TEST_F(VerifierTest, VerifyLinkIsIdempotent) {
    auto v = make(0);
    const auto l = link();
    const std::vector<ConditionBinding> bs{binding("pass_c"), binding("fail_c")};
    const auto a = v->verify_link(l, bs, kNow);
    const auto b = v->verify_link(l, bs, kNow);
    EXPECT_EQ(a, b);
    EXPECT_EQ(store->current_decisions().size(), 2u);
}

TEST_F(VerifierTest, OnDemandTaskRunsAndSignals) {
    auto v = make(0);
    const auto l = link();
    auto done = v->enqueue_on_demand({l.link_id, {"pass_c", "fail_c"}, TaskOrigin::on_demand, kNow});
    EXPECT_EQ(v->queued(), 1u);
    EXPECT_EQ(v->run_pending(), 1u);
    ASSERT_EQ(done.wait_for(std::chrono::seconds(0)), std::future_status::ready);
    EXPECT_EQ(done.get(), TaskOutcome::completed);
    EXPECT_EQ(store->live_decisions(l.link_id, kNow).size(), 2u);
}

TEST_F(VerifierTest, DuplicateEnqueueExecutesOnce) {
    auto v = make(0);
    const auto l = link();
    auto first = v->enqueue_on_demand({l.link_id, {"pass_c"}, TaskOrigin::on_demand, kNow});
    auto second = v->enqueue_on_demand({l.link_id, {"pass_c"}, TaskOrigin::on_demand, kNow});
    EXPECT_EQ(v->queued(), 1u);
    v->run_pending();
    EXPECT_EQ(counters->calls.load(), 1);
    EXPECT_EQ(first.get(), TaskOutcome::completed);
    EXPECT_EQ(second.get(), TaskOutcome::completed);
}

TEST_F(VerifierTest, FullQueueDefers) {
    auto v = make(0, 1);
    auto first = v->enqueue_on_demand({link(1).link_id, {"pass_c"}, TaskOrigin::on_demand, kNow});
    auto second = v->enqueue_on_demand({link(2).link_id, {"pass_c"}, TaskOrigin::on_demand, kNow});
    ASSERT_EQ(second.wait_for(std::chrono::seconds(0)), std::future_status::ready);
    EXPECT_EQ(second.get(), TaskOutcome::deferred);
    v->run_pending();
    EXPECT_EQ(first.get(), TaskOutcome::completed);
    EXPECT_EQ(counters->calls.load(), 1);
}

TEST_F(VerifierTest, ConcurrentEnqueuesNeverOverlapPerPair) {
    counters->sleep_ms = 5;
    auto v = make(4);
    std::vector<LinkId> ids;
    for (int i = 0; i < 3; ++i) ids.push_back(link(i).link_id);

    constexpr int kThreads = 8;
    constexpr int kPerThread = 40;
    std::barrier start(kThreads);
    std::vector<std::vector<Completion>> signals(kThreads);
    std::vector<std::thread> threads;
    for (int t = 0; t < kThreads; ++t) {
        threads.emplace_back([&, t] {
            start.arrive_and_wait();
            for (int i = 0; i < kPerThread; ++i) {
                signals[t].push_back(v->enqueue_on_demand(
                    {ids[static_cast<std::size_t>(i) % ids.size()], {"pass_c"}, TaskOrigin::on_demand, kNow}));
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& per : signals) {
        for (auto& s : per) {
            ASSERT_EQ(s.wait_for(std::chrono::seconds(10)), std::future_status::ready);
            EXPECT_EQ(s.get(), TaskOutcome::completed);
        }
    }
    // At most one evaluation per pair at a time, so never more than one per link.
    EXPECT_LE(counters->max_running.load(), static_cast<int>(ids.size()));
    EXPECT_LE(counters->calls.load(), kThreads * kPerThread);
    EXPECT_GE(counters->calls.load(), static_cast<int>(ids.size()));
}

TEST_F(VerifierTest, ConcurrentEnqueuesOfOnePairDeduplicate) {
    counters->sleep_ms = 2;
    auto v = make(4);
    const auto id = link().link_id;
    std::atomic<bool> stop{false};
    std::vector<std::thread> threads;
    std::atomic<int> enqueued{0};
    for (int t = 0; t < 6; ++t) {
        threads.emplace_back([&] {
            while (!stop) {
                auto s = v->enqueue_on_demand({id, {"pass_c"}, TaskOrigin::on_demand, kNow});
                ++enqueued;
                s.wait();
            }
        });
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    stop = true;
    for (auto& t : threads) t.join();
    EXPECT_EQ(counters->max_running.load(), 1);
    EXPECT_LT(counters->calls.load(), enqueued.load());
}

TEST_F(VerifierTest, PeriodicRefreshOnlyTouchesDueDecisions) {
    config->store(std::make_shared<const PolicyConfig>(
        make_policy_config(R"(deny "*" "*" if pass_c;)", bindings_json(3600))));
    auto v = make(0);
    ASSERT_EQ(v->refresh_lead(), Seconds{30});
    const auto a = link(1);
    const auto b = link(2);
    v->verify_link(a, std::span(&binding("pass_c"), 1), kNow);
    v->verify_link(b, std::span(&binding("pass_c"), 1), kNow);

    clock->set(kNow + Seconds{60});
    EXPECT_EQ(v->run_periodic_refresh(clock->now()), 0u);

    // Decision for b now expires within L/2.
    store->put_decision({b.link_id, "pass_c", true, "ok", kNow - Seconds{3600 - 15} + Seconds{60}, 3600, false});
    const auto before = store->live_decisions(b.link_id, clock->now()).at(0).verified_at;
    EXPECT_EQ(v->run_periodic_refresh(clock->now()), 1u);
    const auto after = store->live_decisions(b.link_id, clock->now()).at(0).verified_at;
    EXPECT_GT(after, before);
    EXPECT_EQ(after, clock->now());

    // Nothing live expires within the lead afterwards.
    for (const auto& d : store->current_decisions()) {
        EXPECT_GT(d.expires_at(), clock->now() + v->refresh_lead());
    }
}

TEST_F(VerifierTest, PeriodicRefreshCatchesUpExpiredAndInvalidated) {
    config->store(std::make_shared<const PolicyConfig>(
        make_policy_config(R"(deny "*" "*" if pass_c;)", bindings_json(3600))));
    auto v = make(0);
    const auto a = link(1);
    const auto b = link(2);
    const auto c = link(3);
    v->verify_link(a, std::span(&binding("pass_c"), 1), kNow);
    v->verify_link(b, std::span(&binding("pass_c"), 1), kNow);
    clock->set(kNow + std::chrono::hours{2});
    store->put_decision({b.link_id, "pass_c", true, "ok", clock->now(), 3600, false});
    store->put_decision({c.link_id, "pass_c", true, "ok", clock->now(), 3600, false});
    store->invalidate_condition("pass_c");
    // a expired, b and c invalidated.
    EXPECT_EQ(v->run_periodic_refresh(clock->now()), 3u);
    for (const auto& l : {a, b, c}) {
        EXPECT_EQ(store->live_decisions(l.link_id, clock->now()).size(), 1u);
    }
}

TEST_F(VerifierTest, PeriodicRefreshCoversNeverVerifiedPairs) {
    config->store(std::make_shared<const PolicyConfig>(
        make_policy_config(R"(deny "*" "*" if pass_c;)", bindings_json(3600))));
    auto v = make(0);
    link(1);
    link(2);
    EXPECT_EQ(v->run_periodic_refresh(kNow), 2u);
    EXPECT_EQ(v->run_periodic_refresh(kNow), 0u);
}

TEST_F(VerifierTest, RefreshLeadTracksSlowestEvaluation) {
    counters->sleep_ms = 20;
    VerifierOptions opts;
    opts.workers = 0;
    opts.refresh_lead_floor = Seconds{0};
    Verifier v(store, config, Providers{}, clock, engine, opts);
    v.verify_link(link(), std::span(&binding("pass_c"), 1), kNow);
    EXPECT_GE(v.refresh_lead(), Seconds{1});
    EXPECT_EQ(v.executions(), 1u);
}

TEST_F(VerifierTest, PeriodicLoopRunsInBackground) {
    config->store(std::make_shared<const PolicyConfig>(
        make_policy_config(R"(deny "*" "*" if pass_c;)", bindings_json(3600))));
    auto v = make(1);
    const auto l = link();
    v->start_periodic(Seconds{1});
    for (int i = 0; i < 200 && store->live_decisions(l.link_id, kNow).empty(); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    v->stop_periodic();
    EXPECT_EQ(store->live_decisions(l.link_id, kNow).size(), 1u);
}

TEST_F(VerifierTest, DestructionReleasesWaiters) {
    Completion pending;
    {
        auto v = make(0);
        pending = v->enqueue_on_demand({link().link_id, {"pass_c"}, TaskOrigin::on_demand, kNow});
    }
    ASSERT_EQ(pending.wait_for(std::chrono::seconds(0)), std::future_status::ready);
    EXPECT_EQ(pending.get(), TaskOutcome::deferred);
}
