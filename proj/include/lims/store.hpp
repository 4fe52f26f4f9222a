#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lims/store_types.hpp"

namespace lims {

// Persistence for links, verification decisions (with history) and
// violation reports. Implementations serialize writes internally; readers see
// either the old or the new decision, never a partial one.
class LinkStore {
public:
    virtual ~LinkStore() = default;

    virtual LinkRecord upsert_link(std::string_view page_url, std::string_view resource_url,
                                   std::optional<std::string> query, Timestamp now) = 0;
    virtual std::optional<LinkRecord> find_link(const LinkId& id) const = 0;
    virtual std::vector<LinkRecord> links() const = 0;

    // Replaces the current decision for (linkId, conditionName) and appends
    // it to history.
    virtual void put_decision(const VerificationDecision& decision) = 0;
    virtual std::vector<VerificationDecision> live_decisions(const LinkId& id, Timestamp now) const = 0;
    // Current decision per (link, condition), live or not.
    virtual std::vector<VerificationDecision> current_decisions() const = 0;
    virtual std::vector<VerificationDecision> history_since(Timestamp since) const = 0;

    // Expires every current decision of the condition. Returns the links
    // whose decision was live-eligible before the call; a repeat call
    // returns nothing.
    virtual std::vector<LinkId> invalidate_condition(std::string_view condition_name) = 0;

    virtual void append_violation(const ViolationReport& report) = 0;
    virtual std::vector<ViolationReport> violations() const = 0;
};

// Aggregates live decisions into the link's status. A live failure blocks;
// otherwise every applicable condition needs a live success.
LinkStatus aggregate_status(std::span<const VerificationDecision> live,
                            std::span<const std::string> applicable_conditions);

// Throws UnknownLink.
LinkStatus get_link_status(const LinkStore& store, const LinkId& id,
                           std::span<const std::string> applicable_conditions, Timestamp now);

struct Contradiction {
    LinkId link_id;
    std::string passing_condition;
    std::string failing_condition;

    bool operator==(const Contradiction&) const = default;
};

// Links where, inside [now - window, now], one condition succeeded in every
// one of >= 2 rounds while another failed in every one of >= 2 rounds.
std::vector<Contradiction> detect_contradictions(std::span<const VerificationDecision> history, Timestamp now,
                                                 Seconds window);
std::vector<Contradiction> detect_contradictions(const LinkStore& store, Timestamp now, Seconds window);

// JSON lines: {"type":"link"|"decision"|"violation", ...}
void export_jsonl(const LinkStore& store, std::ostream& out);

class MemoryLinkStore final : public LinkStore {
public:
    // History older than `retention` (relative to the newest put) is dropped.
    explicit MemoryLinkStore(Seconds retention = std::chrono::hours{24 * 30});

    LinkRecord upsert_link(std::string_view page_url, std::string_view resource_url,
                           std::optional<std::string> query, Timestamp now) override;
    std::optional<LinkRecord> find_link(const LinkId& id) const override;
    std::vector<LinkRecord> links() const override;

    void put_decision(const VerificationDecision& decision) override;
    std::vector<VerificationDecision> live_decisions(const LinkId& id, Timestamp now) const override;
    std::vector<VerificationDecision> current_decisions() const override;
    std::vector<VerificationDecision> history_since(Timestamp since) const override;
    std::vector<LinkId> invalidate_condition(std::string_view condition_name) override;

    void append_violation(const ViolationReport& report) override;
    std::vector<ViolationReport> violations() const override;

private:
    Seconds retention_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<LinkId, LinkRecord> links_;
    std::vector<LinkId> link_order_;
    // link -> condition -> current decision
    std::unordered_map<LinkId, std::unordered_map<std::string, VerificationDecision>> current_;
    std::vector<VerificationDecision> history_;
    std::vector<ViolationReport> violations_;
};

// SQLite-backed store; the file may be shared between a server and a
// separate verifier process.
class SqliteLinkStore final : public LinkStore {
public:
    explicit SqliteLinkStore(const std::filesystem::path& db_path,
                             Seconds retention = std::chrono::hours{24 * 30});
    ~SqliteLinkStore() override;

    SqliteLinkStore(const SqliteLinkStore&) = delete;
    SqliteLinkStore& operator=(const SqliteLinkStore&) = delete;

    LinkRecord upsert_link(std::string_view page_url, std::string_view resource_url,
                           std::optional<std::string> query, Timestamp now) override;
    std::optional<LinkRecord> find_link(const LinkId& id) const override;
    std::vector<LinkRecord> links() const override;

    void put_decision(const VerificationDecision& decision) override;
    std::vector<VerificationDecision> live_decisions(const LinkId& id, Timestamp now) const override;
    std::vector<VerificationDecision> current_decisions() const override;
    std::vector<VerificationDecision> history_since(Timestamp since) const override;
    std::vector<LinkId> invalidate_condition(std::string_view condition_name) override;

    void append_violation(const ViolationReport& report) override;
    std::vector<ViolationReport> violations() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace lims
