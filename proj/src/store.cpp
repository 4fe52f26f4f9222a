#include "lims/store.hpp"

#include <algorithm>
#include <map>
#include <mutex>

#include "lims/error.hpp"

namespace lims {

LinkStatus aggregate_status(std::span<const VerificationDecision> live,
                            std::span<const std::string> applicable_conditions) {
    for (const auto& d : live) {
        if (!d.success) return LinkStatus::blocked;
    }
    for (const auto& condition : applicable_conditions) {
        const bool verified = std::any_of(live.begin(), live.end(), [&](const VerificationDecision& d) {
            return d.condition_name == condition && d.success;
        });
        if (!verified) return LinkStatus::unverified;
    }
    return LinkStatus::allowed;
}

LinkStatus get_link_status(const LinkStore& store, const LinkId& id, std::span<const std::string> applicable_conditions,
                           Timestamp now) {
    if (!store.find_link(id)) {
        throw UnknownLink("unknown link " + id);
    }
    const auto live = store.live_decisions(id, now);
    return aggregate_status(live, applicable_conditions);
}

std::vector<Contradiction> detect_contradictions(std::span<const VerificationDecision> history, Timestamp now,
                                                 Seconds window) {
    struct Tally {
        std::size_t passes = 0;
        std::size_t failures = 0;
    };
    std::map<LinkId, std::map<std::string, Tally>> tallies;
    const Timestamp since = now - window;
    for (const auto& d : history) {
        if (d.verified_at < since || d.verified_at > now) continue;
        auto& t = tallies[d.link_id][d.condition_name];
        (d.success ? t.passes : t.failures) += 1;
    }

    std::vector<Contradiction> out;
    for (const auto& [link, conditions] : tallies) {
        for (const auto& [pass_name, p] : conditions) {
            if (p.passes < 2 || p.failures != 0) continue;
            for (const auto& [fail_name, f] : conditions) {
                if (f.failures < 2 || f.passes != 0) continue;
                out.push_back(Contradiction{link, pass_name, fail_name});
            }
        }
    }
    return out;
}

std::vector<Contradiction> detect_contradictions(const LinkStore& store, Timestamp now, Seconds window) {
    const auto history = store.history_since(now - window);
    return detect_contradictions(history, now, window);
}

void export_jsonl(const LinkStore& store, std::ostream& out) {
    for (const auto& l : store.links()) {
        auto j = to_json(l);
        j["type"] = "link";
        out << j.dump() << '\n';
    }
    for (const auto& d : store.current_decisions()) {
        auto j = to_json(d);
        j["type"] = "decision";
        out << j.dump() << '\n';
    }
    for (const auto& v : store.violations()) {
        auto j = to_json(v);
        j["type"] = "violation";
        out << j.dump() << '\n';
    }
}

MemoryLinkStore::MemoryLinkStore(Seconds retention) : retention_(retention) {}

LinkRecord MemoryLinkStore::upsert_link(std::string_view page_url, std::string_view resource_url,
                                        std::optional<std::string> query, Timestamp now) {
    const LinkId id = make_link_id(page_url, resource_url);
    std::unique_lock lock(mutex_);
    auto it = links_.find(id);
    if (it == links_.end()) {
        LinkRecord rec = make_link_record(page_url, resource_url, std::move(query), now);
        link_order_.push_back(id);
        return links_.emplace(id, std::move(rec)).first->second;
    }
    LinkRecord& rec = it->second;
    rec.last_seen = std::max(rec.last_seen, now);
    rec.hit_count += 1;
    rec.query = std::move(query);
    return rec;
}

std::optional<LinkRecord> MemoryLinkStore::find_link(const LinkId& id) const {
    std::shared_lock lock(mutex_);
    if (auto it = links_.find(id); it != links_.end()) return it->second;
    return std::nullopt;
}

std::vector<LinkRecord> MemoryLinkStore::links() const {
    std::shared_lock lock(mutex_);
    std::vector<LinkRecord> out;
    out.reserve(link_order_.size());
    for (const auto& id : link_order_) out.push_back(links_.at(id));
    return out;
}

void MemoryLinkStore::put_decision(const VerificationDecision& decision) {
    std::unique_lock lock(mutex_);
    VerificationDecision d = decision;
    d.invalidated = false;
    current_[d.link_id][d.condition_name] = d;
    history_.push_back(d);
    const Timestamp horizon = d.verified_at - retention_;
    std::erase_if(history_, [&](const VerificationDecision& h) { return h.verified_at < horizon; });
}

std::vector<VerificationDecision> MemoryLinkStore::live_decisions(const LinkId& id, Timestamp now) const {
    std::shared_lock lock(mutex_);
    std::vector<VerificationDecision> out;
    if (auto it = current_.find(id); it != current_.end()) {
        for (const auto& [_, d] : it->second) {
            if (d.live_at(now)) out.push_back(d);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.condition_name < b.condition_name; });
    return out;
}

std::vector<VerificationDecision> MemoryLinkStore::current_decisions() const {
    std::shared_lock lock(mutex_);
    std::vector<VerificationDecision> out;
    for (const auto& id : link_order_) {
        auto it = current_.find(id);
        if (it == current_.end()) continue;
        const auto first = out.size();
        for (const auto& [_, d] : it->second) out.push_back(d);
        std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                  [](const auto& a, const auto& b) { return a.condition_name < b.condition_name; });
    }
    return out;
}

std::vector<VerificationDecision> MemoryLinkStore::history_since(Timestamp since) const {
    std::shared_lock lock(mutex_);
    std::vector<VerificationDecision> out;
    for (const auto& d : history_) {
        if (d.verified_at >= since) out.push_back(d);
    }
    return out;
}

std::vector<LinkId> MemoryLinkStore::invalidate_condition(std::string_view condition_name) {
    std::unique_lock lock(mutex_);
    std::vector<LinkId> affected;
    for (const auto& id : link_order_) {
        auto it = current_.find(id);
        if (it == current_.end()) continue;
        auto d = it->second.find(std::string(condition_name));
        if (d == it->second.end() || d->second.invalidated) continue;
        d->second.invalidated = true;
        affected.push_back(id);
    }
    return affected;
}

void MemoryLinkStore::append_violation(const ViolationReport& report) {
    std::unique_lock lock(mutex_);
    violations_.push_back(report);
}

std::vector<ViolationReport> MemoryLinkStore::violations() const {
    std::shared_lock lock(mutex_);
    return violations_;
}

} // namespace lims
