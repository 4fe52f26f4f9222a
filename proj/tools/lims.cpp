#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lims/error.hpp"
#include "lims/http.hpp"
#include "lims/insights.hpp"
#include "lims/policy_config.hpp"
#include "lims/server.hpp"
#include "lims/sim.hpp"
#include "lims/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> stop_requested{false};

void on_signal(int) {
    stop_requested = true;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw lims::ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Settings from the JSON config file, with flag overrides applied on top.
struct Settings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string server_url;
    std::string admin_token;
    fs::path store = "lims.db";
    fs::path fixtures;
    fs::path policy;
    fs::path bindings;
    lims::ServerConfig server;
    lims::VerifierOptions verifier;
    fs::path base;  // directory of the config file; relative paths resolve here

    fs::path resolve(const fs::path& p) const { return p.empty() || p.is_absolute() ? p : base / p; }
    std::string url() const { return server_url.empty() ? fmt::format("http://{}:{}", host, port) : server_url; }
};

Settings load_settings(const std::string& config_path) {
    Settings s;
    if (config_path.empty()) return s;
    json j;
    try {
        j = json::parse(read_file(config_path));
    } catch (const json::parse_error& e) {
        throw lims::ConfigError(config_path + ": " + e.what());
    }
    s.base = fs::path(config_path).parent_path();
    if (j.contains("listen")) {
        s.host = j["listen"].value("host", s.host);
        s.port = j["listen"].value("port", s.port);
    }
    s.server_url = j.value("serverUrl", s.server_url);
    s.admin_token = j.value("adminToken", s.admin_token);
    s.store = j.value("store", s.store.string());
    s.fixtures = j.value("fixtures", std::string{});
    s.policy = j.value("policy", std::string{});
    s.bindings = j.value("bindings", std::string{});
    if (j.contains("server")) s.server = lims::server_config_from_json(j["server"]);
    if (j.contains("verifier")) {
        s.verifier.workers = j["verifier"].value("workers", s.verifier.workers);
        s.verifier.queue_capacity = j["verifier"].value("queueCapacity", s.verifier.queue_capacity);
    }
    return s;
}

lims::PolicyConfig load_policy(const fs::path& policy, const fs::path& bindings) {
    if (policy.empty()) throw lims::ConfigError("no policy file configured");
    return lims::make_policy_config(read_file(policy), bindings.empty() ? std::string{} : read_file(bindings));
}

lims::Providers load_fixture_providers(const Settings& s) {
    if (s.fixtures.empty()) return lims::Providers{};
    return lims::load_providers(lims::ProviderPaths::under(s.resolve(s.fixtures)));
}

void print_table(const json& rows, const std::vector<std::string>& columns) {
    std::vector<std::size_t> width(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
    auto cell = [](const json& row, const std::string& key) {
        if (!row.contains(key) || row[key].is_null()) return std::string("-");
        return row[key].is_string() ? row[key].get<std::string>() : row[key].dump();
    };
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < columns.size(); ++c) width[c] = std::max(width[c], cell(row, columns[c]).size());
    }
    for (std::size_t c = 0; c < columns.size(); ++c) std::cout << fmt::format("{:<{}}  ", columns[c], width[c]);
    std::cout << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            std::cout << fmt::format("{:<{}}  ", cell(row, columns[c]), width[c]);
        }
        std::cout << '\n';
    }
}

void emit(const json& doc, const std::string& output, const std::vector<std::string>& columns = {}) {
    if (output == "table" && doc.is_array() && !columns.empty()) {
        print_table(doc, columns);
    } else if (output == "table") {
        std::cout << doc.dump(2) << '\n';
    } else {
        std::cout << doc.dump() << '\n';
    }
}

void wait_for_signal() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Link integrity monitoring: policy server, verifier and analysis tools"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    if (const char* env = std::getenv("LIMS_CONFIG")) config_path = env;
    std::string output = "json";
    std::string log_level = "info";
    std::string store_flag, token_flag, url_flag, fixtures_flag, host_flag;
    int port_flag = 0;
    app.add_option("-c,--config", config_path, "JSON config file (default: $LIMS_CONFIG)");
    app.add_option("--output", output, "Output format")->check(CLI::IsMember({"json", "table"}));
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");
    app.add_option("--store", store_flag, "SQLite store path");
    app.add_option("--token", token_flag, "Admin bearer token");
    app.add_option("--server-url", url_flag, "API server base URL for admin commands");
    app.add_option("--fixtures", fixtures_flag, "Provider fixture directory");
    app.add_option("--host", host_flag, "Listen host");
    app.add_option("--port", port_flag, "Listen port");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the API server");
    std::string serve_policy, serve_bindings;
    std::int64_t serve_refresh = 0;
    serve->add_option("--policy", serve_policy, "Policy file");
    serve->add_option("--bindings", serve_bindings, "Condition bindings JSON");
    serve->add_option("--periodic-interval", serve_refresh, "In-process refresh interval in seconds (0: off)");

    // verify
    auto* verify = app.add_subcommand("verify", "Run the verifier against the shared store");
    std::int64_t verify_interval = 60;
    bool verify_once = false;
    std::string verify_policy, verify_bindings;
    verify->add_option("--periodic-interval", verify_interval, "Refresh interval in seconds")
        ->check(CLI::PositiveNumber);
    verify->add_flag("--once", verify_once, "Run one refresh pass and exit");
    verify->add_option("--policy", verify_policy, "Policy file");
    verify->add_option("--bindings", verify_bindings, "Condition bindings JSON");

    // policy
    auto* policy = app.add_subcommand("policy", "Validate or apply a policy");
    policy->require_subcommand(1);
    std::string policy_file, bindings_file;
    auto* validate = policy->add_subcommand("validate", "Parse and check without applying");
    validate->add_option("policy", policy_file, "Policy file")->required()->check(CLI::ExistingFile);
    validate->add_option("bindings", bindings_file, "Bindings JSON")->check(CLI::ExistingFile);
    auto* apply = policy->add_subcommand("apply", "Apply through the admin endpoint");
    apply->add_option("policy", policy_file, "Policy file")->required()->check(CLI::ExistingFile);
    apply->add_option("bindings", bindings_file, "Bindings JSON")->check(CLI::ExistingFile);

    // mode
    auto* mode = app.add_subcommand("mode", "Deployment mode");
    mode->require_subcommand(1);
    std::string mode_value;
    auto* mode_set = mode->add_subcommand("set", "Switch the server's deployment mode");
    mode_set->add_option("mode", mode_value, "discovery|report-only|enforce")
        ->required()
        ->check(CLI::IsMember({"discovery", "report-only", "report_only", "enforce"}));

    // links / violations
    auto* links = app.add_subcommand("links", "Discovered links");
    links->require_subcommand(1);
    auto* links_list = links->add_subcommand("list", "List links and their status");
    auto* violations = app.add_subcommand("violations", "Violation reports");
    violations->require_subcommand(1);
    auto* violations_list = violations->add_subcommand("list", "List violation reports");

    // sim
    auto* sim = app.add_subcommand("sim", "Overhead simulation");
    sim->require_subcommand(1);
    auto* sim_run = sim->add_subcommand("run", "Run the stage x profile matrix");
    std::vector<std::string> sim_stages, sim_profiles;
    std::string sim_traces, sim_profile_file, sim_csv;
    std::size_t sim_count = 100, sim_trials = 3;
    std::uint64_t sim_seed = 42;
    sim_run->add_option("--stage", sim_stages, "Stage(s): no_sw, noop_sw, noop_api, full (default: all)");
    sim_run->add_option("--profile", sim_profiles, "Built-in profile(s): unthrottled, wifi, 5g-lowband");
    sim_run->add_option("--profile-file", sim_profile_file, "JSON array of profiles")->check(CLI::ExistingFile);
    sim_run->add_option("--traces", sim_traces, "Trace file (JSON array)")->check(CLI::ExistingFile);
    sim_run->add_option("--count", sim_count, "Synthetic traces when --traces is absent");
    sim_run->add_option("--trials", sim_trials, "Trials per cell")->check(CLI::PositiveNumber);
    sim_run->add_option("--seed", sim_seed, "Seed");
    sim_run->add_option("--csv", sim_csv, "Also write the report as CSV");

    // insights
    auto* insights = app.add_subcommand("insights", "Longitudinal link analytics");
    insights->require_subcommand(1);
    auto* insights_run = insights->add_subcommand("run", "Age/rank series and stability per site");
    std::string in_snapshots, in_registrations, in_rankings, in_csv, in_requests;
    long in_age_margin = 0;
    std::int64_t in_rank_margin = 0;
    insights_run->add_option("--snapshots", in_snapshots, "Snapshot JSON lines")->required()->check(
        CLI::ExistingFile);
    insights_run->add_option("--registrations", in_registrations, "Registration records JSON")
        ->required()
        ->check(CLI::ExistingFile);
    insights_run->add_option("--rankings", in_rankings, "Directory of <date>.csv ranking lists")
        ->required()
        ->check(CLI::ExistingDirectory);
    insights_run->add_option("--requests", in_requests, "Request log JSON {site: [urls]}")->check(CLI::ExistingFile);
    insights_run->add_option("--csv", in_csv, "Write per-site series CSV");
    insights_run->add_option("--age-margin", in_age_margin, "Margin subtracted from the suggested minimum age");
    insights_run->add_option("--rank-margin", in_rank_margin, "Margin added to the suggested maximum rank");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    // Machine output owns stdout.
    spdlog::set_default_logger(spdlog::stderr_color_mt("lims"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        Settings s = load_settings(config_path);
        if (!store_flag.empty()) s.store = store_flag;
        if (!token_flag.empty()) s.admin_token = token_flag;
        if (!url_flag.empty()) s.server_url = url_flag;
        if (!fixtures_flag.empty()) s.fixtures = fixtures_flag;
        if (!host_flag.empty()) s.host = host_flag;
        if (port_flag != 0) s.port = port_flag;

        if (*serve) {
            const auto policy_cfg = load_policy(serve_policy.empty() ? s.resolve(s.policy) : fs::path(serve_policy),
                                                serve_bindings.empty() ? s.resolve(s.bindings)
                                                                       : fs::path(serve_bindings));
            auto store = std::make_shared<lims::SqliteLinkStore>(s.resolve(s.store));
            lims::ApiServer server(s.server, policy_cfg, store, load_fixture_providers(s),
                                   std::make_shared<lims::SystemClock>(), s.verifier);
            if (serve_refresh > 0) server.verifier().start_periodic(lims::Seconds{serve_refresh});
            lims::HttpService http(server, s.admin_token);
            const int port = http.start(s.host, s.port);
            spdlog::info("serving on {}:{} in {} mode", s.host, port, lims::to_string(s.server.mode));
            wait_for_signal();
            spdlog::info("shutting down");
            http.stop();
            server.verifier().stop_periodic();
            return 0;
        }

        if (*verify) {
            const auto policy_cfg =
                load_policy(verify_policy.empty() ? s.resolve(s.policy) : fs::path(verify_policy),
                            verify_bindings.empty() ? s.resolve(s.bindings) : fs::path(verify_bindings));
            auto store = std::make_shared<lims::SqliteLinkStore>(s.resolve(s.store));
            auto handle = std::make_shared<lims::ConfigHandle>(policy_cfg);
            lims::VerifierOptions opts = s.verifier;
            opts.workers = 0;
            lims::Verifier verifier(store, handle, load_fixture_providers(s), std::make_shared<lims::SystemClock>(),
                                    nullptr, opts);
            if (verify_once) {
                const auto n = verifier.run_periodic_refresh(lims::SystemClock{}.now());
                emit(json{{"refreshed", n}}, output);
                return 0;
            }
            verifier.start_periodic(lims::Seconds{verify_interval});
            wait_for_signal();
            verifier.stop_periodic();
            return 0;
        }

        if (*validate) {
            try {
                const auto cfg = load_policy(policy_file, bindings_file);
                emit(json{{"valid", true},
                          {"rules", cfg.document.rules.size()},
                          {"bindings", cfg.bindings.size()}},
                     output);
                return 0;
            } catch (const lims::SyntaxError& e) {
                emit(json{{"valid", false}, {"error", e.what()}, {"line", e.line()}, {"column", e.column()}},
                     output);
                return 1;
            } catch (const lims::Error& e) {
                emit(json{{"valid", false}, {"error", e.what()}}, output);
                return 1;
            }
        }

        lims::AdminClient admin(s.url(), s.admin_token);
        if (*apply) {
            const auto result =
                admin.apply_policy(read_file(policy_file), bindings_file.empty() ? "" : read_file(bindings_file));
            emit(result, output);
            return 0;
        }
        if (*mode_set) {
            const auto m = lims::parse_mode(mode_value);
            admin.set_mode(*m);
            emit(json{{"mode", lims::to_string(*m)}}, output);
            return 0;
        }
        if (*links_list) {
            emit(admin.links(), output, {"linkId", "pageUrl", "resourceUrl", "status", "hitCount", "lastSeen"});
            return 0;
        }
        if (*violations_list) {
            emit(admin.violations(), output, {"reportedAt", "linkId", "conditionName", "detail"});
            return 0;
        }

        if (*sim_run) {
            lims::Simulation simulation;
            std::vector<lims::PageTrace> traces;
            if (!sim_traces.empty()) {
                for (const auto& t : json::parse(read_file(sim_traces))) traces.push_back(lims::trace_from_json(t));
            } else {
                traces = lims::generate_traces(simulation.fixture(), sim_count, sim_seed);
            }
            std::vector<lims::NetworkProfile> profiles;
            if (!sim_profile_file.empty()) {
                for (const auto& p : json::parse(read_file(sim_profile_file))) {
                    profiles.push_back(lims::profile_from_json(p));
                }
            }
            for (const auto& name : sim_profiles) profiles.push_back(lims::builtin_profile(name));
            if (profiles.empty()) profiles = lims::builtin_profiles();
            std::vector<lims::Stage> stages;
            for (const auto& st : sim_stages) stages.push_back(lims::parse_stage(st));
            const auto all = lims::Simulation::all_stages();
            if (stages.empty()) stages.assign(all.begin(), all.end());

            const auto report = simulation.run_matrix(traces, profiles, sim_trials, sim_seed, stages);
            if (!sim_csv.empty()) {
                std::ofstream(sim_csv) << report.to_csv();
            }
            if (output == "table") {
                std::cout << report.to_csv();
            } else {
                emit(report.to_json(), output);
            }
            return 0;
        }

        if (*insights_run) {
            std::ifstream snapshots(in_snapshots);
            const auto series = lims::load_snapshots(snapshots);
            const auto registrations = lims::RegistrationProvider::from_file(in_registrations);
            const auto rankings = lims::RankingProvider::from_directory(in_rankings);
            if (!registrations.available()) throw lims::ConfigError(*registrations.load_error());
            if (!rankings.available()) throw lims::ConfigError(*rankings.load_error());
            std::vector<lims::SiteInsights> sites;
            for (const auto& s1 : series) {
                sites.push_back(lims::analyze_site(s1, registrations, rankings, in_age_margin, in_rank_margin));
            }
            json summary = lims::summary_json(sites);
            if (!in_requests.empty()) {
                lims::RequestLog log = json::parse(read_file(in_requests)).get<lims::RequestLog>();
                summary["inclusion"] = lims::to_json(lims::inclusion_summary(log));
            }
            if (!in_csv.empty()) std::ofstream(in_csv) << lims::series_csv(sites);
            emit(summary, output);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << app.help();
    return 2;
}
