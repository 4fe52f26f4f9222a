#include "lims/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <spdlog/spdlog.h>

#include "lims/error.hpp"

namespace lims {

Verifier::Verifier(std::shared_ptr<LinkStore> store, std::shared_ptr<const ConfigHandle> config, Providers providers,
                   std::shared_ptr<const Clock> clock, std::shared_ptr<const ConditionEngine> engine,
                   VerifierOptions options)
    : store_(std::move(store)),
      config_(std::move(config)),
      providers_(std::move(providers)),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      engine_(engine ? std::move(engine) : std::make_shared<ConditionEngine>()),
      options_(options) {
    for (std::size_t i = 0; i < options_.workers; ++i) {
        workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
    }
}

Verifier::~Verifier() {
    stop_periodic();
    for (auto& w : workers_) w.request_stop();
    work_available_.notify_all();
    workers_.clear();
    std::lock_guard lock(mutex_);
    for (auto& [_, waiters] : in_flight_) {
        for (auto& w : waiters) {
            if (w->remaining > 0) {
                w->remaining = 0;
                w->promise.set_value(TaskOutcome::deferred);
            }
        }
    }
}

std::vector<VerificationDecision> Verifier::verify_link(const LinkRecord& link,
                                                        std::span<const ConditionBinding> bindings, Timestamp now) {
    std::vector<VerificationDecision> written;
    const EvalContext ctx{now, providers_};
    for (const auto& binding : bindings) {
        const auto started = std::chrono::steady_clock::now();
        Verdict verdict;
        bool conclusive = true;
        try {
            verdict = engine_->evaluate(binding, link, ctx);
        } catch (const VerificationError& e) {
            conclusive = false;
            spdlog::warn("verification of {} for {} inconclusive: {}", binding.name, link.resource_url, e.what());
        } catch (const UnknownCondition& e) {
            conclusive = false;
            spdlog::error("condition {} cannot run: {}", binding.name, e.what());
        }
        ++executions_;
        const auto elapsed_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        std::int64_t prev = slowest_eval_ms_.load();
        while (elapsed_ms > prev && !slowest_eval_ms_.compare_exchange_weak(prev, elapsed_ms)) {
        }
        if (!conclusive) continue;

        VerificationDecision d;
        d.link_id = link.link_id;
        d.condition_name = binding.name;
        d.success = !verdict.violation;
        d.verdict_detail = verdict.detail;
        d.verified_at = now;
        d.ttl_seconds = binding.ttl_seconds;
        store_->put_decision(d);
        if (verdict.violation) {
            ViolationReport r;
            r.link_id = link.link_id;
            r.condition_name = binding.name;
            r.detail = verdict.detail;
            r.evidence = verdict.evidence;
            r.reported_at = now;
            store_->append_violation(r);
            spdlog::info("violation: {} on {} -> {}: {}", binding.name, link.page_url, link.resource_url,
                         verdict.detail);
        }
        written.push_back(std::move(d));
    }
    return written;
}

std::size_t Verifier::run_periodic_refresh(Timestamp now) {
    const auto config = config_->load();
    const Seconds lead = refresh_lead();

    std::map<LinkId, std::map<std::string, VerificationDecision>> current;
    for (auto& d : store_->current_decisions()) current[d.link_id][d.condition_name] = d;

    std::size_t refreshed = 0;
    for (const auto& link : store_->links()) {
        const auto resolution = config->resolve(link.page_url, link.resource_url);
        std::vector<std::string> due;
        const auto& have = current[link.link_id];
        for (const auto& name : resolution.conditions) {
            if (!config->bindings.contains(name)) continue;
            const auto it = have.find(name);
            if (it == have.end() || it->second.invalidated || it->second.expires_at() - lead <= now) {
                due.push_back(name);
            }
        }
        if (due.empty()) continue;

        // Claim pairs not already in flight; on-demand callers may attach.
        std::vector<std::string> claimed;
        {
            std::lock_guard lock(mutex_);
            for (const auto& name : due) {
                auto [it, inserted] = in_flight_.try_emplace(PairKey{link.link_id, name});
                if (inserted) claimed.push_back(name);
            }
        }
        if (claimed.empty()) continue;
        refreshed += claimed.size();
        execute(Job{link.link_id, std::move(claimed)});
    }
    return refreshed;
}

Completion Verifier::enqueue_on_demand(VerificationTask task) {
    auto waiter = std::make_shared<Waiter>();
    Completion done = waiter->promise.get_future().share();
    {
        std::lock_guard lock(mutex_);
        std::vector<std::string> fresh;
        std::vector<std::string> attached;
        for (const auto& name : task.condition_names) {
            if (std::find(fresh.begin(), fresh.end(), name) != fresh.end() ||
                std::find(attached.begin(), attached.end(), name) != attached.end()) {
                continue;
            }
            if (in_flight_.contains(PairKey{task.link_id, name})) {
                attached.push_back(name);
            } else {
                fresh.push_back(name);
            }
        }
        if (!fresh.empty() && queue_.size() >= options_.queue_capacity) {
            spdlog::warn("verification queue full; deferring {}", task.link_id);
            waiter->promise.set_value(TaskOutcome::deferred);
            return done;
        }
        waiter->remaining = fresh.size() + attached.size();
        if (waiter->remaining == 0) {
            waiter->promise.set_value(TaskOutcome::completed);
            return done;
        }
        for (const auto& name : attached) in_flight_[PairKey{task.link_id, name}].push_back(waiter);
        for (const auto& name : fresh) in_flight_[PairKey{task.link_id, name}].push_back(waiter);
        if (!fresh.empty()) queue_.push_back(Job{task.link_id, std::move(fresh)});
    }
    work_available_.notify_one();
    return done;
}

std::optional<Verifier::Job> Verifier::pop_job() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    Job job = std::move(queue_.front());
    queue_.pop_front();
    return job;
}

std::size_t Verifier::run_pending() {
    std::size_t n = 0;
    while (auto job = pop_job()) {
        execute(*job);
        ++n;
    }
    return n;
}

void Verifier::worker_loop(std::stop_token stop) {
    while (!stop.stop_requested()) {
        std::optional<Job> job;
        {
            std::unique_lock lock(mutex_);
            if (!work_available_.wait(lock, stop, [this] { return !queue_.empty(); })) return;
            job = std::move(queue_.front());
            queue_.pop_front();
        }
        execute(*job);
    }
}

void Verifier::execute(const Job& job) {
    const auto config = config_->load();
    const auto link = store_->find_link(job.link_id);
    const Timestamp now = clock_->now();
    for (const auto& name : job.condition_names) {
        if (link) {
            if (const auto it = config->bindings.find(name); it != config->bindings.end()) {
                try {
                    verify_link(*link, std::span(&it->second, 1), now);
                } catch (const std::exception& e) {
                    spdlog::error("verification of {} for {} failed: {}", name, job.link_id, e.what());
                }
            }
        }
        std::vector<std::shared_ptr<Waiter>> waiters;
        {
            std::lock_guard lock(mutex_);
            if (auto it = in_flight_.find(PairKey{job.link_id, name}); it != in_flight_.end()) {
                waiters = std::move(it->second);
                in_flight_.erase(it);
            }
            for (auto& w : waiters) {
                if (w->remaining > 0 && --w->remaining == 0) w->promise.set_value(TaskOutcome::completed);
            }
        }
    }
}

void Verifier::start_periodic(Seconds interval) {
    stop_periodic();
    periodic_ = std::jthread([this, interval](std::stop_token st) {
        while (!st.stop_requested()) {
            try {
                const auto n = run_periodic_refresh(clock_->now());
                if (n > 0) spdlog::info("periodic refresh re-verified {} decision(s)", n);
            } catch (const std::exception& e) {
                spdlog::error("periodic refresh failed: {}", e.what());
            }
            std::unique_lock lock(periodic_mutex_);
            periodic_wake_.wait_for(lock, st, interval, [] { return false; });
        }
    });
}

void Verifier::stop_periodic() {
    if (!periodic_.joinable()) return;
    periodic_.request_stop();
    periodic_wake_.notify_all();
    periodic_.join();
}

Seconds Verifier::refresh_lead() const {
    const auto slow_ms = slowest_eval_ms_.load();
    const Seconds twice{(2 * slow_ms + 999) / 1000};
    return std::max(options_.refresh_lead_floor, twice);
}

std::size_t Verifier::queued() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
}

} // namespace lims
