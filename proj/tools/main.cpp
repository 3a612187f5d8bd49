// offkit — command-line front end.
//
//   offkit run <script> [options]   replay a scenario script, print a report
//   offkit serve-stub [options]     run the remote processing-stage HTTP stub
//   offkit catalogue list           show the demo chain's function records
//
// Exit status: 0 success, 1 scenario/check failures or service faults,
// 2 bad usage (CLI or script parse errors).

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "offkit/catalogue.hpp"
#include "offkit/chain.hpp"
#include "offkit/runtime.hpp"
#include "offkit/scenario.hpp"
#include "offkit/stub_service.hpp"
#include "offkit/transforms.hpp"

namespace {

using namespace offkit;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open script file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// "addr=url" pairs from repeated --remote-map flags.
std::map<std::string, std::string> parse_remote_map(
    const std::vector<std::string>& pairs) {
    std::map<std::string, std::string> map;
    for (const auto& pair : pairs) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == pair.size()) {
            throw CLI::ValidationError("--remote-map",
                                       "expected <address>=<url>, got '" + pair + "'");
        }
        map[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    return map;
}

int run_command(const std::string& script_path, const ScenarioOptions& options) {
    ScenarioScript script;
    try {
        script = parse_scenario(read_file(script_path));
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 2;
    }

    const auto report = run_scenario(script, options);

    for (const auto& failure : report.failures) {
        std::cout << "FAIL  " << failure << "\n";
    }

    std::cout << "scenario:    " << script_path << "\n"
              << "chain:       " << to_string(script.chain.transform) << " "
              << script.chain.geometry.width << "x" << script.chain.geometry.height
              << "\n"
              << "frames:      " << report.frames_ok << "/" << report.frames_sent
              << " ok\n"
              << "checks:      " << report.checks_passed << " passed, "
              << report.failures.size() << " failed\n"
              << "dispatched:  " << report.engine.dispatched_local << " local, "
              << report.engine.dispatched_remote << " remote\n"
              << "completed:   " << report.engine.completed << " ("
              << report.engine.failed << " failed)\n"
              << "heap:        peak " << report.heap_peak_used << " bytes in "
              << report.heap_peak_blocks << " blocks, final "
              << report.heap_final.used_bytes << " bytes used\n"
              << "bus:         " << report.bus.deliveries << " deliveries, "
              << report.bus.bytes_copied << " bytes copied\n";

    if (!report.transitions.empty()) {
        std::cout << "transitions:";
        for (const auto& action : report.transitions) {
            std::cout << " " << to_string(action.kind) << "("
                      << action.function_address << ")";
        }
        std::cout << "\n";
    }
    if (!options.metrics_csv.empty()) {
        std::cout << "metrics:     " << report.metrics.size() << " rows -> "
                  << options.metrics_csv << "\n";
    }

    std::cout << (report.ok() ? "RESULT: PASS" : "RESULT: FAIL") << "\n";
    return report.ok() ? 0 : 1;
}

int serve_stub_command(const StubService::Options& options) {
    try {
        StubService stub(options);
        std::cout << "stub listening on " << stub.base_url() << "\n"
                  << "  POST /process?effect=<id>&w=<int>&h=<int>  (default effect: "
                  << to_string(options.default_transform) << ")\n"
                  << "  GET  /healthz\n"
                  << std::flush;
        stub.run();  // blocks until stopped or the process is signalled
        return 0;
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    }
}

int catalogue_list_command() {
    // The records the demo chain registers, shown with the remote URL each
    // address resolves to when its placement flips.
    Catalogue catalogue;
    const ChainConfig chain;
    for (const auto& address : {chain.control, chain.process, chain.display}) {
        catalogue.register_function(
            {address, {kHeapRefStackId, kCopyStackId}, Scope::kLocalApp});
    }

    std::printf("%-32s %-10s %-18s %s\n", "ADDRESS", "SCOPE", "COMM METHODS",
                "REMOTE URL");
    for (const auto& record : catalogue.list()) {
        std::string methods;
        for (const auto& method : record.comm_methods) {
            if (!methods.empty()) methods += ",";
            methods += method;
        }
        std::printf("%-32s %-10s %-18s %s\n", record.address.c_str(),
                    to_string(record.scope).c_str(), methods.c_str(),
                    to_remote_url(record.address).c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offkit — microservice offloading runtime"};
    app.require_subcommand(1);

    // ── run ──
    auto* run = app.add_subcommand("run", "replay a scenario script");
    std::string script_path;
    run->add_option("script", script_path, "scenario script file")->required();

    ScenarioOptions scenario;
    run->add_option("--heap-capacity", scenario.runtime.heap_capacity,
                    "arena size in bytes")
        ->capture_default_str();
    std::string mode = kHeapRefStackId;
    run->add_option("--mode", mode, "payload delivery mode")
        ->check(CLI::IsMember({std::string(kCopyStackId), std::string(kHeapRefStackId)}))
        ->capture_default_str();
    std::string merge = "on";
    run->add_option("--merge", merge, "merge freed neighbour blocks")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    run->add_option("--metrics", scenario.metrics_csv, "write metrics CSV here");
    std::vector<std::string> remote_pairs;
    run->add_option("--remote-map", remote_pairs,
                    "<address>=<url> remote override (repeatable)");
    run->add_option("--seed", scenario.seed, "frame generator seed")
        ->capture_default_str();
    std::uint64_t tick_ms = 100;
    run->add_option("--tick", tick_ms, "metrics sampling period in ms")
        ->capture_default_str();
    std::uint64_t timeout_ms = 30000;
    run->add_option("--timeout", timeout_ms, "per-request timeout in ms")
        ->capture_default_str();

    // ── serve-stub ──
    auto* serve = app.add_subcommand("serve-stub", "run the processing-stage stub");
    StubService::Options stub;
    serve->add_option("--port", stub.port, "listen port (0 picks any)")
        ->capture_default_str();
    serve->add_option("--host", stub.host, "bind address")->capture_default_str();
    std::string transform_name = to_string(stub.default_transform);
    serve->add_option("--transform", transform_name, "default effect")
        ->check(CLI::IsMember(transform_names()))
        ->capture_default_str();

    // ── catalogue ──
    auto* catalogue = app.add_subcommand("catalogue", "function registry tools");
    catalogue->require_subcommand(1);
    catalogue->add_subcommand("list", "show the demo chain's records");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& error) {
        return app.exit(error) ? 2 : 0;  // --help and --version exit 0
    }

    if (run->parsed()) {
        scenario.runtime.default_comm_method = mode;
        scenario.runtime.heap_auto_merge = (merge == "on");
        try {
            scenario.runtime.remote_map = parse_remote_map(remote_pairs);
        } catch (const CLI::Error& error) {
            return app.exit(error) ? 2 : 0;
        }
        scenario.runtime.request_timeout = std::chrono::milliseconds(timeout_ms);
        scenario.tick = std::chrono::milliseconds(tick_ms);
        return run_command(script_path, scenario);
    }
    if (serve->parsed()) {
        stub.default_transform = *transform_from_name(transform_name);
        return serve_stub_command(stub);
    }
    return catalogue_list_command();
}
