#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lims/policy_config.hpp"
#include "lims/providers.hpp"
#include "lims/time.hpp"

namespace lims {

struct TraceResource {
    std::string url;
    std::int64_t size_bytes = 0;
    std::vector<std::size_t> depends_on;  // indexes of earlier resources
};

struct PageTrace {
    std::string page_url;
    std::vector<TraceResource> resources;
};

struct NetworkProfile {
    std::string name;
    double download_mbps = 0;
    double upload_mbps = 0;
    double rtt_ms = 0;

    void validate() const;
};

// unthrottled (82/44), wifi (30/15), 5g-lowband (50/10).
std::vector<NetworkProfile> builtin_profiles();
NetworkProfile builtin_profile(std::string_view name);

enum class Stage { no_sw, noop_sw, noop_api, full };
enum class Visit { first, second };

std::string_view to_string(Stage s);
std::string_view to_string(Visit v);
Stage parse_stage(std::string_view text);

struct StageRun {
    Stage stage = Stage::no_sw;
    Visit visit = Visit::first;
    double simulated_load_ms = 0;
    std::size_t query_round_trips = 0;
    std::size_t verifier_executions = 0;
    std::size_t blocked = 0;
};

struct StageRunPair {
    StageRun first;
    StageRun second;
};

// Costs that have no measured counterpart here; defaults only need to keep
// stage deltas positive and distinct.
struct SimParams {
    double intercept_cost_ms = 0.5;      // per intercepted request
    double api_rtt_ms = 5.8;             // client <-> API server
    double server_lookup_cost_ms = 0.8;  // store reads in the full stage
    double jitter_fraction = 0.1;        // per-resource transfer jitter, shared across stages
    std::int64_t query_bytes = 320;
    std::int64_t response_bytes = 96;
    Seconds revisit_after{60};
};

// The five-policy default deployment plus fixture data that exercises one
// passing and at least one failing domain per condition.
struct DefaultPolicyFixture {
    PolicyConfig policy;
    Providers providers;
    Timestamp now{};
    std::string site = "example.com";
    std::vector<TraceResource> catalog;        // every resource with complete fixture data
    std::vector<std::string> clean_resources;  // subset that violates nothing
    std::vector<std::string> violating_resources;
};

DefaultPolicyFixture default_policy_fixture();

// Synthetic workloads drawn from the fixture catalog; deterministic in seed.
std::vector<PageTrace> generate_traces(const DefaultPolicyFixture& fixture, std::size_t count, std::uint64_t seed);

PageTrace trace_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PageTrace& t);
NetworkProfile profile_from_json(const nlohmann::json& j);

struct CellStats {
    std::string profile;
    Stage stage = Stage::no_sw;
    Visit visit = Visit::first;
    double median_ms = 0;
    double p90_ms = 0;
    double p99_ms = 0;
    double median_queries = 0;
    std::size_t verifier_executions = 0;
};

struct MatrixReport {
    std::vector<CellStats> cells;
    std::size_t traces = 0;
    std::size_t trials_per_cell = 0;
    std::uint64_t seed = 0;

    const CellStats& cell(std::string_view profile, Stage stage, Visit visit) const;
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// Linear interpolation between closest ranks; q in [0, 1].
double quantile(std::vector<double> values, double q);

class Simulation {
public:
    explicit Simulation(SimParams params = {});
    Simulation(SimParams params, DefaultPolicyFixture fixture);

    // First visit cold, second visit with the client cache warmed by the
    // first. The full stage runs against an in-process server in
    // report-only mode whose verifications are bootstrapped beforehand.
    StageRunPair run_stage(const PageTrace& trace, const NetworkProfile& profile, Stage stage,
                           std::uint64_t seed) const;

    MatrixReport run_matrix(std::span<const PageTrace> traces, std::span<const NetworkProfile> profiles,
                            std::size_t trials_per_cell, std::uint64_t seed,
                            std::span<const Stage> stages = all_stages()) const;

    static std::span<const Stage> all_stages();
    const DefaultPolicyFixture& fixture() const { return fixture_; }

private:
    SimParams params_;
    DefaultPolicyFixture fixture_;
};

} // namespace lims
