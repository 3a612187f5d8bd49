#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "offkit/chain.hpp"
#include "offkit/metrics.hpp"
#include "offkit/runtime.hpp"

namespace offkit {

// A deterministic replay script. Line-oriented grammar, one directive per
// line, comments start with '#':
//
//   chain effect=<name> width=<int> height=<int>
//   rule <address> REMOTE|LOCAL [dwell=<ms>] if <predicate>
//   at <ms> context [<field>=<value> ...]
//   at <ms> frames <count> [size=<bytes> | sizes<=<bytes>]
//   at <ms> inject <method> <address> [size=<bytes>] [expect=<status>]
//   at <ms> expect placement <address> LOCAL|REMOTE
//   at <ms> expect running <address> true|false
//
// `at` timestamps are the scenario's logical clock: they order entries and
// stamp context snapshots, but replay runs as fast as the work allows.
// Context lines build a complete fresh snapshot; unset fields keep their
// defaults. `frames` drives the Control→Process→Display chain; `inject`
// sends one raw request to any address.
struct ScenarioScript {
    ChainConfig chain;
    std::vector<PlacementRule> rules;

    struct ContextEntry {
        ContextSnapshot snapshot;  // timestamp_ms filled from the entry time
    };
    struct FramesEntry {
        int count = 0;
        std::optional<std::size_t> fixed_size;  // size=<bytes>
        std::optional<std::size_t> random_max;  // sizes<=<bytes>, uniform in [1, max]
    };
    struct InjectEntry {
        std::string method;
        std::string address;
        std::size_t size = 0;  // 0 = no body
        std::optional<int> expect_status;
    };
    struct ExpectPlacementEntry {
        std::string address;
        Placement placement = Placement::kLocal;
    };
    struct ExpectRunningEntry {
        std::string address;
        bool running = false;
    };

    using Action = std::variant<ContextEntry, FramesEntry, InjectEntry,
                                ExpectPlacementEntry, ExpectRunningEntry>;
    struct Entry {
        std::int64_t at_ms = 0;
        Action action;
    };
    std::vector<Entry> entries;  // non-decreasing at_ms
};

// Throws std::invalid_argument naming the offending line.
ScenarioScript parse_scenario(const std::string& text);

struct ScenarioOptions {
    RuntimeOptions runtime;
    std::uint64_t seed = 1;
    std::string metrics_csv;  // write sampled metrics here when non-empty
    std::chrono::milliseconds tick{100};
};

struct ScenarioReport {
    int checks_passed = 0;
    std::vector<std::string> failures;  // embedded expectations that failed

    int frames_sent = 0;
    int frames_ok = 0;  // status 200 and, where verifiable, digest match

    RuntimeCounters engine;
    HeapStats heap_final{};
    std::size_t heap_peak_used = 0;
    std::size_t heap_peak_blocks = 0;
    BusCounters bus;
    std::vector<TransitionAction> transitions;
    std::vector<MetricsRow> metrics;

    bool ok() const { return failures.empty(); }
};

// Replays the script against a fresh runtime wired with the script's chain
// and rules. Identical script + seed give identical assertion outcomes and
// dispatch counts.
ScenarioReport run_scenario(const ScenarioScript& script,
                            const ScenarioOptions& options);

}  // namespace offkit
