#include "lims/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "lims/client.hpp"
#include "lims/error.hpp"
#include "lims/server.hpp"
#include "lims/store.hpp"
#include "lims/url.hpp"

namespace lims {

using nlohmann::json;

void NetworkProfile::validate() const {
    if (!(download_mbps > 0) || !(upload_mbps > 0)) throw ConfigError("profile '" + name + "': rates must be positive");
    if (rtt_ms < 0) throw ConfigError("profile '" + name + "': rttMs must be >= 0");
}

std::vector<NetworkProfile> builtin_profiles() {
    return {
        {"unthrottled", 82, 44, 12},
        {"wifi", 30, 15, 28},
        {"5g-lowband", 50, 10, 45},
    };
}

NetworkProfile builtin_profile(std::string_view name) {
    for (auto& p : builtin_profiles()) {
        if (p.name == name) return p;
    }
    throw ConfigError("unknown network profile '" + std::string(name) + "'");
}

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::no_sw: return "no_sw";
        case Stage::noop_sw: return "noop_sw";
        case Stage::noop_api: return "noop_api";
        case Stage::full: return "full";
    }
    return "no_sw";
}

std::string_view to_string(Visit v) {
    return v == Visit::first ? "first" : "second";
}

Stage parse_stage(std::string_view text) {
    for (Stage s : Simulation::all_stages()) {
        if (to_string(s) == text) return s;
    }
    throw ConfigError("unknown stage '" + std::string(text) + "'");
}

namespace {

constexpr std::string_view site_policy = R"(deny "example.com/*" "*" if registration_age;
deny "example.com/*" "*" if domain_expiry;
deny "example.com/*" "*" if domain_rank;
deny "example.com/*" "*" if stable_dependencies;
deny "example.com/*" "*" if tls_health;)";

constexpr std::string_view site_bindings = R"([
  {"name": "registration_age", "kind": "domain_lifecycle_registration", "params": {"thresholdDays": 7}, "ttlSeconds": 86400},
  {"name": "domain_expiry", "kind": "domain_lifecycle_expiry", "params": {"horizonDays": 7}, "ttlSeconds": 86400},
  {"name": "domain_rank", "kind": "domain_ranking", "params": {"maxRank": 1000000, "listDate": "latest"}, "ttlSeconds": 86400},
  {"name": "stable_dependencies", "kind": "dependencies", "params": {"granularity": "full_url"}, "ttlSeconds": 86400},
  {"name": "tls_health", "kind": "tls_status", "params": {}, "ttlSeconds": 86400}
])";

struct Origin {
    std::string host;
    std::string etld1;
    std::int64_t rank;
};

const Origin clean_origins[] = {
    {"cdn.jsdelivr.net", "jsdelivr.net", 1820},
    {"www.google-analytics.com", "google-analytics.com", 35},
    {"fonts.googleapis.com", "googleapis.com", 7},
    {"code.jquery.com", "jquery.com", 2950},
    {"cdnjs.cloudflare.com", "cloudflare.com", 4},
    {"static.doubleclick.net", "doubleclick.net", 40},
    {"connect.facebook.net", "facebook.net", 96},
    {"www.gstatic.com", "gstatic.com", 12},
};

constexpr int paths_per_origin = 30;

std::int64_t resource_size(std::size_t origin, int k) {
    return 2048 + static_cast<std::int64_t>((origin * 7919 + static_cast<std::size_t>(k) * 104729) % 118000);
}

} // namespace

DefaultPolicyFixture default_policy_fixture() {
    DefaultPolicyFixture f;
    f.now = parse_timestamp("2024-08-12T00:00:00Z");
    f.policy = make_policy_config(site_policy, site_bindings);

    const Date today = std::chrono::floor<std::chrono::days>(f.now);
    const Date list_date = today;
    auto registrations = std::make_shared<RegistrationProvider>();
    auto rankings = std::make_shared<RankingProvider>();
    auto observer = std::make_shared<DependencyObserver>();
    auto baselines = std::make_shared<DependencySnapshotStore>();
    auto tls = std::make_shared<TlsStatusProvider>();

    const Date old_registration = parse_date("2009-03-01");
    const Date far_expiry = parse_date("2031-03-01");

    auto add_resource = [&](const std::string& host, const std::string& path, std::int64_t size,
                            bool baseline_matches) {
        const std::string url = "https://" + host + path;
        const std::string normalized = host + path;
        const std::set<std::string> contacted{host + "/collect", host + "/config.json"};
        observer->set_current(normalized, contacted);
        if (baseline_matches) {
            baselines->store_snapshot(DependencySnapshot{normalized, contacted, f.now - std::chrono::hours{24 * 30}});
        } else {
            baselines->store_snapshot(
                DependencySnapshot{normalized, {host + "/collect"}, f.now - std::chrono::hours{24 * 30}});
        }
        tls->set(host, "ok");
        f.catalog.push_back(TraceResource{url, size, {}});
        return url;
    };

    for (std::size_t o = 0; o < std::size(clean_origins); ++o) {
        const auto& origin = clean_origins[o];
        registrations->upsert({origin.etld1, old_registration, far_expiry});
        rankings->add_rank(list_date, origin.etld1, origin.rank);
        for (int k = 0; k < paths_per_origin; ++k) {
            const auto url = add_resource(origin.host, fmt::format("/lib/v{}/module-{}.js", o, k),
                                          resource_size(o, k), true);
            f.clean_resources.push_back(url);
        }
    }

    // One failing domain per condition; each violates exactly one.
    registrations->upsert({"adroll.com", parse_date("2008-06-15"), today + std::chrono::days{3}});
    rankings->add_rank(list_date, "adroll.com", 2210);
    f.violating_resources.push_back(add_resource("s.adroll.com", "/j/roundtrip.js", 41000, true));

    registrations->upsert({"obscure-widgets.net", parse_date("2016-02-02"), far_expiry});
    f.violating_resources.push_back(add_resource("cdn.obscure-widgets.net", "/widget.js", 18000, true));

    registrations->upsert({"fresh-promo.com", today - std::chrono::days{3}, far_expiry});
    rankings->add_rank(list_date, "fresh-promo.com", 640000);
    f.violating_resources.push_back(add_resource("cdn.fresh-promo.com", "/promo.js", 9000, true));

    registrations->upsert({"shifting-deps.com", parse_date("2012-09-09"), far_expiry});
    rankings->add_rank(list_date, "shifting-deps.com", 87000);
    f.violating_resources.push_back(add_resource("tags.shifting-deps.com", "/loader.js", 27000, false));

    registrations->upsert({"stale-cert.org", parse_date("2011-01-20"), far_expiry});
    rankings->add_rank(list_date, "stale-cert.org", 301000);
    f.violating_resources.push_back(add_resource("assets.stale-cert.org", "/app.js", 64000, true));
    tls->set("assets.stale-cert.org", "cert_expired");

    f.providers.registrations = registrations;
    f.providers.rankings = rankings;
    f.providers.dependency_observer = observer;
    f.providers.dependency_baselines = baselines;
    f.providers.tls = tls;
    return f;
}

std::vector<PageTrace> generate_traces(const DefaultPolicyFixture& fixture, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TraceResource> clean;
    std::vector<TraceResource> violating;
    for (const auto& r : fixture.catalog) {
        const bool bad = std::find(fixture.violating_resources.begin(), fixture.violating_resources.end(), r.url) !=
                         fixture.violating_resources.end();
        (bad ? violating : clean).push_back(r);
    }
    const std::size_t lo = std::min<std::size_t>(120, clean.size());
    const std::size_t hi = clean.size();
    std::vector<PageTrace> traces;
    for (std::size_t i = 0; i < count; ++i) {
        PageTrace t;
        t.page_url = fmt::format("https://{}/articles/{}", fixture.site, i);
        std::vector<TraceResource> pool = clean;
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t n = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
        pool.resize(n);
        for (const auto& v : violating) {
            if (std::bernoulli_distribution(0.25)(rng)) pool.push_back(v);
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t k = 0; k < pool.size(); ++k) {
            pool[k].depends_on.clear();
            if (k > 0 && std::bernoulli_distribution(0.3)(rng)) {
                pool[k].depends_on.push_back(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng));
            }
        }
        t.resources = std::move(pool);
        traces.push_back(std::move(t));
    }
    return traces;
}

PageTrace trace_from_json(const json& j) {
    PageTrace t;
    t.page_url = j.at("pageUrl").get<std::string>();
    for (const auto& r : j.at("resources")) {
        TraceResource res;
        if (r.is_string()) {
            res.url = r.get<std::string>();
        } else {
            res.url = r.at("url").get<std::string>();
            res.size_bytes = r.value("sizeBytes", std::int64_t{0});
            res.depends_on = r.value("dependsOn", std::vector<std::size_t>{});
        }
        for (auto d : res.depends_on) {
            if (d >= t.resources.size()) throw ConfigError("dependsOn must reference an earlier resource: " + res.url);
        }
        t.resources.push_back(std::move(res));
    }
    return t;
}

json to_json(const PageTrace& t) {
    json resources = json::array();
    for (const auto& r : t.resources) {
        resources.push_back({{"url", r.url}, {"sizeBytes", r.size_bytes}, {"dependsOn", r.depends_on}});
    }
    return {{"pageUrl", t.page_url}, {"resources", resources}};
}

NetworkProfile profile_from_json(const json& j) {
    NetworkProfile p;
    p.name = j.at("name").get<std::string>();
    p.download_mbps = j.at("downloadMbps").get<double>();
    p.upload_mbps = j.at("uploadMbps").get<double>();
    p.rtt_ms = j.value("rttMs", 0.0);
    p.validate();
    return p;
}

const CellStats& MatrixReport::cell(std::string_view profile, Stage stage, Visit visit) const {
    for (const auto& c : cells) {
        if (c.profile == profile && c.stage == stage && c.visit == visit) return c;
    }
    throw ConfigError(fmt::format("no cell for {}/{}/{}", profile, to_string(stage), to_string(visit)));
}

json MatrixReport::to_json() const {
    json out{{"traces", traces}, {"trialsPerCell", trials_per_cell}, {"seed", seed}, {"cells", json::array()}};
    for (const auto& c : cells) {
        out["cells"].push_back({{"profile", c.profile},
                                {"stage", to_string(c.stage)},
                                {"visit", to_string(c.visit)},
                                {"medianMs", c.median_ms},
                                {"p90Ms", c.p90_ms},
                                {"p99Ms", c.p99_ms},
                                {"medianQueries", c.median_queries},
                                {"verifierExecutions", c.verifier_executions}});
    }
    return out;
}

std::string MatrixReport::to_csv() const {
    std::ostringstream out;
    out << "profile,stage,visit,median_ms,p90_ms,p99_ms,median_queries,verifier_executions\n";
    for (const auto& c : cells) {
        out << fmt::format("{},{},{},{:.3f},{:.3f},{:.3f},{:.1f},{}\n", c.profile, to_string(c.stage),
                           to_string(c.visit), c.median_ms, c.p90_ms, c.p99_ms, c.median_queries,
                           c.verifier_executions);
    }
    return out.str();
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
    q = std::clamp(q, 0.0, 1.0);
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

namespace {

// Always-allow API: the noop_api stage.
class NoopApiTransport final : public ClientTransport {
public:
    explicit NoopApiTransport(std::int64_t ttl) : ttl_(ttl) {}
    std::optional<StatusResponse> query_status(const StatusQuery&) override {
        return StatusResponse{true, ttl_, ResponseReason::policy};
    }
    std::optional<HeartbeatResponse> heartbeat(std::string_view, std::uint64_t) override {
        return HeartbeatResponse{};
    }

private:
    std::int64_t ttl_;
};

// Which resources missed the client cache on each visit.
struct ClientPass {
    std::vector<bool> queried_first;
    std::vector<bool> queried_second;
    std::size_t blocked_first = 0;
    std::size_t blocked_second = 0;
    std::size_t verifier_executions = 0;
};

void run_visit(ClientCore& client, const PageTrace& trace, Timestamp at, ClientTransport& transport,
               std::vector<bool>& queried, std::size_t& blocked) {
    queried.assign(trace.resources.size(), false);
    for (std::size_t i = 0; i < trace.resources.size(); ++i) {
        const auto before = client.queries_sent();
        const auto action = client.intercept({trace.page_url, trace.resources[i].url}, at, transport);
        queried[i] = client.queries_sent() != before;
        if (action == InterceptAction::blocked_404) ++blocked;
    }
}

ClientPass client_pass(const PageTrace& trace, Stage stage, const DefaultPolicyFixture& fixture,
                       const SimParams& params) {
    ClientPass out;
    const std::size_t n = trace.resources.size();
    if (stage == Stage::no_sw || stage == Stage::noop_sw) {
        out.queried_first.assign(n, false);
        out.queried_second.assign(n, false);
        return out;
    }
    const Timestamp t0 = fixture.now;
    const Timestamp t1 = fixture.now + params.revisit_after;
    ServerConfig cfg;
    cfg.mode = DeploymentMode::report_only;
    ClientCore client(ClientOptions{"sim", cfg.client_failure_threshold, cfg.client_poll_interval_seconds});

    if (stage == Stage::noop_api) {
        NoopApiTransport transport(cfg.client_cache_ttl_seconds);
        run_visit(client, trace, t0, transport, out.queried_first, out.blocked_first);
        run_visit(client, trace, t1, transport, out.queried_second, out.blocked_second);
        return out;
    }

    auto clock = std::make_shared<ManualClock>(t0);
    auto store = std::make_shared<MemoryLinkStore>();
    VerifierOptions vopts;
    vopts.workers = 0;
    ApiServer server(cfg, fixture.policy, store, fixture.providers, clock, vopts);

    // Pre-bootstrap verifications so the measured visits hit a warm store.
    const auto policy = server.policy();
    for (const auto& r : trace.resources) {
        const std::string page = parse_normalized(trace.page_url).text();
        const NormalizedUrl res = parse_normalized(r.url);
        const LinkRecord link = make_link_record(page, res.text(), res.query, t0);
        std::vector<ConditionBinding> bindings;
        for (const auto& name : policy->resolve(link.page_url, link.resource_url).conditions) {
            bindings.push_back(policy->bindings.at(name));
        }
        server.verifier().verify_link(link, bindings, t0 - std::chrono::minutes{5});
    }
    const std::size_t bootstrapped = server.verifier().executions();

    InProcessTransport transport(server, *clock);
    run_visit(client, trace, t0, transport, out.queried_first, out.blocked_first);
    clock->set(t1);
    run_visit(client, trace, t1, transport, out.queried_second, out.blocked_second);
    out.verifier_executions = server.verifier().executions() - bootstrapped;
    return out;
}

double visit_load_ms(const PageTrace& trace, const NetworkProfile& profile, Stage stage,
                     const std::vector<bool>& queried, const std::vector<double>& jitter, const SimParams& params) {
    const double down_bytes_per_ms = profile.download_mbps * 1e6 / 8.0 / 1000.0;
    const double up_bytes_per_ms = profile.upload_mbps * 1e6 / 8.0 / 1000.0;
    const double query_ms = params.api_rtt_ms + static_cast<double>(params.query_bytes) / up_bytes_per_ms +
                            static_cast<double>(params.response_bytes) / down_bytes_per_ms;
    double total = 0;
    for (std::size_t i = 0; i < trace.resources.size(); ++i) {
        const double transfer = static_cast<double>(trace.resources[i].size_bytes) / down_bytes_per_ms;
        total += transfer * (1.0 + jitter[i]) + profile.rtt_ms;
        if (stage != Stage::no_sw) total += params.intercept_cost_ms;
        if (queried[i]) {
            total += query_ms;
            if (stage == Stage::full) total += params.server_lookup_cost_ms;
        }
    }
    return total;
}

// Per-resource jitter for both visits; identical across stages for a seed.
std::pair<std::vector<double>, std::vector<double>> draw_jitter(std::size_t n, std::uint64_t seed,
                                                                double fraction) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-fraction, fraction);
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    return {a, b};
}

StageRunPair cost_pair(const PageTrace& trace, const NetworkProfile& profile, Stage stage, const ClientPass& pass,
                       std::uint64_t seed, const SimParams& params) {
    const auto [j1, j2] = draw_jitter(trace.resources.size(), seed, params.jitter_fraction);
    StageRunPair out;
    out.first = StageRun{stage, Visit::first, visit_load_ms(trace, profile, stage, pass.queried_first, j1, params),
                         static_cast<std::size_t>(
                             std::count(pass.queried_first.begin(), pass.queried_first.end(), true)),
                         pass.verifier_executions, pass.blocked_first};
    out.second = StageRun{stage, Visit::second,
                          visit_load_ms(trace, profile, stage, pass.queried_second, j2, params),
                          static_cast<std::size_t>(
                              std::count(pass.queried_second.begin(), pass.queried_second.end(), true)),
                          0, pass.blocked_second};
    return out;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trace, std::size_t trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trace), static_cast<std::uint32_t>(trial)};
    std::uint32_t words[2];
    seq.generate(std::begin(words), std::end(words));
    return (std::uint64_t{words[0]} << 32) | words[1];
}

} // namespace

Simulation::Simulation(SimParams params) : Simulation(params, default_policy_fixture()) {}

Simulation::Simulation(SimParams params, DefaultPolicyFixture fixture)
    : params_(params), fixture_(std::move(fixture)) {}

std::span<const Stage> Simulation::all_stages() {
    static constexpr Stage stages[] = {Stage::no_sw, Stage::noop_sw, Stage::noop_api, Stage::full};
    return stages;
}

StageRunPair Simulation::run_stage(const PageTrace& trace, const NetworkProfile& profile, Stage stage,
                                   std::uint64_t seed) const {
    profile.validate();
    if (stage == Stage::full && fixture_.policy.document.rules.empty()) {
        throw ConfigError("the full stage needs a policy fixture");
    }
    const ClientPass pass = client_pass(trace, stage, fixture_, params_);
    return cost_pair(trace, profile, stage, pass, seed, params_);
}

MatrixReport Simulation::run_matrix(std::span<const PageTrace> traces, std::span<const NetworkProfile> profiles,
                                    std::size_t trials_per_cell, std::uint64_t seed,
                                    std::span<const Stage> stages) const {
    if (trials_per_cell == 0) throw ConfigError("trialsPerCell must be >= 1");
    for (const auto& p : profiles) p.validate();
    MatrixReport report;
    report.traces = traces.size();
    report.trials_per_cell = trials_per_cell;
    report.seed = seed;

    for (Stage stage : stages) {
        std::vector<ClientPass> passes;
        passes.reserve(traces.size());
        for (const auto& t : traces) passes.push_back(client_pass(t, stage, fixture_, params_));

        for (const auto& profile : profiles) {
            for (Visit visit : {Visit::first, Visit::second}) {
                std::vector<double> per_trace;
                std::vector<double> queries;
                std::size_t executions = 0;
                for (std::size_t i = 0; i < traces.size(); ++i) {
                    std::vector<double> trials;
                    StageRun last;
                    for (std::size_t k = 0; k < trials_per_cell; ++k) {
                        const auto pair =
                            cost_pair(traces[i], profile, stage, passes[i], trial_seed(seed, i, k), params_);
                        last = visit == Visit::first ? pair.first : pair.second;
                        trials.push_back(last.simulated_load_ms);
                    }
                    per_trace.push_back(quantile(trials, 0.5));
                    queries.push_back(static_cast<double>(last.query_round_trips));
                    executions += last.verifier_executions;
                }
                CellStats c;
                c.profile = profile.name;
                c.stage = stage;
                c.visit = visit;
                if (!per_trace.empty()) {
                    c.median_ms = quantile(per_trace, 0.5);
                    c.p90_ms = quantile(per_trace, 0.9);
                    c.p99_ms = quantile(per_trace, 0.99);
                    c.median_queries = quantile(queries, 0.5);
                }
                c.verifier_executions = executions;
                report.cells.push_back(std::move(c));
            }
        }
    }
    return report;
}

} // namespace lims
