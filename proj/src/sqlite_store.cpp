#include <mutex>

#include <sqlite3.h>

#include "lims/error.hpp"
#include "lims/store.hpp"

namespace lims {

namespace {

constexpr const char* schema = R"sql(
PRAGMA journal_mode = WAL;
CREATE TABLE IF NOT EXISTS links (
    seq           INTEGER PRIMARY KEY AUTOINCREMENT,
    link_id       TEXT NOT NULL UNIQUE,
    page_url      TEXT NOT NULL,
    resource_url  TEXT NOT NULL,
    query         TEXT,
    etld1         TEXT NOT NULL,
    first_seen    INTEGER NOT NULL,
    last_seen     INTEGER NOT NULL,
    hit_count     INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS decisions (
    link_id         TEXT NOT NULL,
    condition_name  TEXT NOT NULL,
    success         INTEGER NOT NULL,
    detail          TEXT NOT NULL,
    verified_at     INTEGER NOT NULL,
    ttl_seconds     INTEGER NOT NULL,
    invalidated     INTEGER NOT NULL DEFAULT 0,
    PRIMARY KEY (link_id, condition_name)
);
CREATE TABLE IF NOT EXISTS decision_history (
    id              INTEGER PRIMARY KEY AUTOINCREMENT,
    link_id         TEXT NOT NULL,
    condition_name  TEXT NOT NULL,
    success         INTEGER NOT NULL,
    detail          TEXT NOT NULL,
    verified_at     INTEGER NOT NULL,
    ttl_seconds     INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS decision_history_time ON decision_history (verified_at);
CREATE TABLE IF NOT EXISTS violations (
    id              INTEGER PRIMARY KEY AUTOINCREMENT,
    link_id         TEXT NOT NULL,
    condition_name  TEXT NOT NULL,
    detail          TEXT NOT NULL,
    evidence        TEXT NOT NULL,
    reported_at     INTEGER NOT NULL
);
)sql";

std::int64_t secs(Timestamp t) {
    return t.time_since_epoch().count();
}

Timestamp at(std::int64_t s) {
    return Timestamp{Seconds{s}};
}

class Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            throw StoreError(std::string("prepare failed: ") + sqlite3_errmsg(db));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, std::string_view v) {
        check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int i, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }
    Statement& bind_optional(int i, const std::optional<std::string>& v) {
        if (v) return bind(i, std::string_view(*v));
        check(sqlite3_bind_null(stmt_, i));
        return *this;
    }

    // True while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError(std::string("step failed: ") + sqlite3_errmsg(db_));
    }
    void run() {
        while (step()) {
        }
    }

    std::string text(int col) const {
        const auto* p = sqlite3_column_text(stmt_, col);
        return p ? std::string(reinterpret_cast<const char*>(p)) : std::string{};
    }
    std::optional<std::string> opt_text(int col) const {
        if (sqlite3_column_type(stmt_, col) == SQLITE_NULL) return std::nullopt;
        return text(col);
    }
    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) throw StoreError(std::string("bind failed: ") + sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

LinkRecord read_link(const Statement& s) {
    LinkRecord r;
    r.link_id = s.text(0);
    r.page_url = s.text(1);
    r.resource_url = s.text(2);
    r.query = s.opt_text(3);
    r.etld1 = s.text(4);
    r.first_seen = at(s.integer(5));
    r.last_seen = at(s.integer(6));
    r.hit_count = s.integer(7);
    return r;
}

VerificationDecision read_decision(const Statement& s) {
    VerificationDecision d;
    d.link_id = s.text(0);
    d.condition_name = s.text(1);
    d.success = s.integer(2) != 0;
    d.verdict_detail = s.text(3);
    d.verified_at = at(s.integer(4));
    d.ttl_seconds = s.integer(5);
    d.invalidated = s.integer(6) != 0;
    return d;
}

constexpr const char* link_columns =
    "link_id, page_url, resource_url, query, etld1, first_seen, last_seen, hit_count";

} // namespace

struct SqliteLinkStore::Impl {
    sqlite3* db = nullptr;
    Seconds retention;
    std::mutex mutex;

    void exec(const char* sql) {
        char* err = nullptr;
        if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown error";
            sqlite3_free(err);
            throw StoreError("sqlite: " + msg);
        }
    }

    // Commits on scope exit unless an exception is in flight.
    class Transaction {
    public:
        explicit Transaction(Impl& impl) : impl_(impl) { impl_.exec("BEGIN IMMEDIATE"); }
        ~Transaction() {
            if (!committed_) sqlite3_exec(impl_.db, "ROLLBACK", nullptr, nullptr, nullptr);
        }
        void commit() {
            impl_.exec("COMMIT");
            committed_ = true;
        }

    private:
        Impl& impl_;
        bool committed_ = false;
    };
};

SqliteLinkStore::SqliteLinkStore(const std::filesystem::path& db_path, Seconds retention)
    : impl_(std::make_unique<Impl>()) {
    impl_->retention = retention;
    if (sqlite3_open(db_path.string().c_str(), &impl_->db) != SQLITE_OK) {
        const std::string msg = impl_->db ? sqlite3_errmsg(impl_->db) : "out of memory";
        sqlite3_close(impl_->db);
        throw StoreError("cannot open store " + db_path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(impl_->db, 5000);
    impl_->exec(schema);
}

SqliteLinkStore::~SqliteLinkStore() {
    if (impl_ && impl_->db) sqlite3_close(impl_->db);
}

LinkRecord SqliteLinkStore::upsert_link(std::string_view page_url, std::string_view resource_url,
                                        std::optional<std::string> query, Timestamp now) {
    const LinkRecord fresh = make_link_record(page_url, resource_url, query, now);
    std::lock_guard lock(impl_->mutex);
    Impl::Transaction tx(*impl_);
    {
        Statement s(impl_->db,
                    "INSERT INTO links (link_id, page_url, resource_url, query, etld1, first_seen, last_seen, hit_count) "
                    "VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?6, 1) "
                    "ON CONFLICT(link_id) DO UPDATE SET last_seen = MAX(last_seen, ?6), hit_count = hit_count + 1, "
                    "query = ?4");
        s.bind(1, fresh.link_id).bind(2, fresh.page_url).bind(3, fresh.resource_url).bind_optional(4, fresh.query);
        s.bind(5, fresh.etld1).bind(6, secs(now)).run();
    }
    Statement q(impl_->db, (std::string("SELECT ") + link_columns + " FROM links WHERE link_id = ?1").c_str());
    q.bind(1, fresh.link_id);
    if (!q.step()) throw StoreError("upserted link vanished");
    LinkRecord out = read_link(q);
    tx.commit();
    return out;
}

std::optional<LinkRecord> SqliteLinkStore::find_link(const LinkId& id) const {
    std::lock_guard lock(impl_->mutex);
    Statement q(impl_->db, (std::string("SELECT ") + link_columns + " FROM links WHERE link_id = ?1").c_str());
    q.bind(1, id);
    if (!q.step()) return std::nullopt;
    return read_link(q);
}

std::vector<LinkRecord> SqliteLinkStore::links() const {
    std::lock_guard lock(impl_->mutex);
    Statement q(impl_->db, (std::string("SELECT ") + link_columns + " FROM links ORDER BY seq").c_str());
    std::vector<LinkRecord> out;
    while (q.step()) out.push_back(read_link(q));
    return out;
}

void SqliteLinkStore::put_decision(const VerificationDecision& d) {
    std::lock_guard lock(impl_->mutex);
    Impl::Transaction tx(*impl_);
    {
        Statement s(impl_->db,
                    "INSERT INTO decisions (link_id, condition_name, success, detail, verified_at, ttl_seconds, "
                    "invalidated) VALUES (?1, ?2, ?3, ?4, ?5, ?6, 0) "
                    "ON CONFLICT(link_id, condition_name) DO UPDATE SET success = ?3, detail = ?4, "
                    "verified_at = ?5, ttl_seconds = ?6, invalidated = 0");
        s.bind(1, d.link_id).bind(2, d.condition_name).bind(3, std::int64_t{d.success}).bind(4, d.verdict_detail);
        s.bind(5, secs(d.verified_at)).bind(6, d.ttl_seconds).run();
    }
    {
        Statement s(impl_->db,
                    "INSERT INTO decision_history (link_id, condition_name, success, detail, verified_at, ttl_seconds) "
                    "VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
        s.bind(1, d.link_id).bind(2, d.condition_name).bind(3, std::int64_t{d.success}).bind(4, d.verdict_detail);
        s.bind(5, secs(d.verified_at)).bind(6, d.ttl_seconds).run();
    }
    {
        Statement s(impl_->db, "DELETE FROM decision_history WHERE verified_at < ?1");
        s.bind(1, secs(d.verified_at - impl_->retention)).run();
    }
    tx.commit();
}

std::vector<VerificationDecision> SqliteLinkStore::live_decisions(const LinkId& id, Timestamp now) const {
    std::lock_guard lock(impl_->mutex);
    Statement q(impl_->db,
                "SELECT link_id, condition_name, success, detail, verified_at, ttl_seconds, invalidated "
                "FROM decisions WHERE link_id = ?1 AND invalidated = 0 AND verified_at + ttl_seconds >= ?2 "
                "ORDER BY condition_name");
    q.bind(1, id).bind(2, secs(now));
    std::vector<VerificationDecision> out;
    while (q.step()) out.push_back(read_decision(q));
    return out;
}

std::vector<VerificationDecision> SqliteLinkStore::current_decisions() const {
    std::lock_guard lock(impl_->mutex);
    Statement q(impl_->db,
                "SELECT d.link_id, d.condition_name, d.success, d.detail, d.verified_at, d.ttl_seconds, d.invalidated "
                "FROM decisions d LEFT JOIN links l ON l.link_id = d.link_id ORDER BY l.seq, d.condition_name");
    std::vector<VerificationDecision> out;
    while (q.step()) out.push_back(read_decision(q));
    return out;
}

std::vector<VerificationDecision> SqliteLinkStore::history_since(Timestamp since) const {
    std::lock_guard lock(impl_->mutex);
    Statement q(impl_->db,
                "SELECT link_id, condition_name, success, detail, verified_at, ttl_seconds, 0 "
                "FROM decision_history WHERE verified_at >= ?1 ORDER BY id");
    q.bind(1, secs(since));
    std::vector<VerificationDecision> out;
    while (q.step()) out.push_back(read_decision(q));
    return out;
}

std::vector<LinkId> SqliteLinkStore::invalidate_condition(std::string_view condition_name) {
    std::lock_guard lock(impl_->mutex);
    Impl::Transaction tx(*impl_);
    std::vector<LinkId> affected;
    {
        Statement q(impl_->db,
                    "SELECT d.link_id FROM decisions d LEFT JOIN links l ON l.link_id = d.link_id "
                    "WHERE d.condition_name = ?1 AND d.invalidated = 0 ORDER BY l.seq");
        q.bind(1, condition_name);
        while (q.step()) affected.push_back(q.text(0));
    }
    {
        Statement s(impl_->db, "UPDATE decisions SET invalidated = 1 WHERE condition_name = ?1");
        s.bind(1, condition_name).run();
    }
    tx.commit();
    return affected;
}

void SqliteLinkStore::append_violation(const ViolationReport& v) {
    std::lock_guard lock(impl_->mutex);
    Statement s(impl_->db,
                "INSERT INTO violations (link_id, condition_name, detail, evidence, reported_at) "
                "VALUES (?1, ?2, ?3, ?4, ?5)");
    s.bind(1, v.link_id).bind(2, v.condition_name).bind(3, v.detail).bind(4, v.evidence.dump());
    s.bind(5, secs(v.reported_at)).run();
}

std::vector<ViolationReport> SqliteLinkStore::violations() const {
    std::lock_guard lock(impl_->mutex);
    Statement q(impl_->db,
                "SELECT link_id, condition_name, detail, evidence, reported_at FROM violations ORDER BY id");
    std::vector<ViolationReport> out;
    while (q.step()) {
        ViolationReport v;
        v.link_id = q.text(0);
        v.condition_name = q.text(1);
        v.detail = q.text(2);
        v.evidence = nlohmann::json::parse(q.text(3), nullptr, false);
        v.reported_at = at(q.integer(4));
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace lims
