#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lims/conditions.hpp"
#include "lims/policy_config.hpp"
#include "lims/store.hpp"
#include "lims/time.hpp"

namespace lims {

enum class TaskOrigin { on_demand, periodic, admin };

struct VerificationTask {
    LinkId link_id;
    std::vector<std::string> condition_names;
    TaskOrigin origin = TaskOrigin::on_demand;
    Timestamp enqueued_at{};
};

enum class TaskOutcome { completed, deferred };

using Completion = std::shared_future<TaskOutcome>;

struct VerifierOptions {
    std::size_t workers = 2;           // 0: tasks run only via run_pending()
    std::size_t queue_capacity = 1024; // queued jobs, not counting running ones
    Seconds refresh_lead_floor{30};
};

// Executes condition logic for (link, condition) pairs and writes decisions
// to the store. At most one execution per pair is in flight at any time.
class Verifier {
public:
    Verifier(std::shared_ptr<LinkStore> store, std::shared_ptr<const ConfigHandle> config, Providers providers,
             std::shared_ptr<const Clock> clock, std::shared_ptr<const ConditionEngine> engine = nullptr,
             VerifierOptions options = {});
    ~Verifier();

    Verifier(const Verifier&) = delete;
    Verifier& operator=(const Verifier&) = delete;

    // Synchronous: evaluates each binding, caches success = !violation, and
    // appends a ViolationReport per violation. Inconclusive conditions write
    // nothing.
    std::vector<VerificationDecision> verify_link(const LinkRecord& link,
                                                  std::span<const ConditionBinding> bindings, Timestamp now);

    // Re-verifies every current decision expiring within the lead time,
    // including ones already expired or invalidated.
    std::size_t run_periodic_refresh(Timestamp now);

    // Deduplicated against in-flight pairs. A full queue completes the
    // signal immediately with `deferred`.
    Completion enqueue_on_demand(VerificationTask task);

    // Runs queued jobs on the calling thread; returns jobs executed.
    std::size_t run_pending();

    void start_periodic(Seconds interval);
    void stop_periodic();

    // Lead time in effect: max(floor, 2 * slowest evaluation observed).
    Seconds refresh_lead() const;

    // Condition evaluations performed so far.
    std::size_t executions() const noexcept { return executions_.load(); }
    std::size_t queued() const;

private:
    struct Waiter {
        std::size_t remaining = 0;
        std::promise<TaskOutcome> promise;
    };
    struct Job {
        LinkId link_id;
        std::vector<std::string> condition_names;
    };
    using PairKey = std::pair<LinkId, std::string>;

    void worker_loop(std::stop_token stop);
    void execute(const Job& job);
    std::optional<Job> pop_job();

    std::shared_ptr<LinkStore> store_;
    std::shared_ptr<const ConfigHandle> config_;
    Providers providers_;
    std::shared_ptr<const Clock> clock_;
    std::shared_ptr<const ConditionEngine> engine_;
    VerifierOptions options_;

    mutable std::mutex mutex_;
    std::condition_variable_any work_available_;
    std::deque<Job> queue_;
    std::map<PairKey, std::vector<std::shared_ptr<Waiter>>> in_flight_;

    std::atomic<std::size_t> executions_{0};
    std::atomic<std::int64_t> slowest_eval_ms_{0};

    std::vector<std::jthread> workers_;
    std::jthread periodic_;
    std::mutex periodic_mutex_;
    std::condition_variable_any periodic_wake_;
};

} // namespace lims
