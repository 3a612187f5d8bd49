#include "offkit/scenario.hpp"

#include <charconv>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace offkit {

namespace {

// ── parsing helpers ──

[[noreturn]] void fail(int line, const std::string& message) {
    throw std::invalid_argument("scenario line " + std::to_string(line) + ": " +
                                message);
}

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
}

template <typename T>
T parse_number(const std::string& text, int line, const std::string& what) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto result = std::from_chars(text.data(), end, value);
    if (result.ec != std::errc{} || result.ptr != end) {
        fail(line, "expected " + what + ", got '" + text + "'");
    }
    return value;
}

// "key=value" → value, or nullopt when the token has a different key.
std::optional<std::string> key_value(const std::string& token,
                                     const std::string& key) {
    if (token.size() > key.size() + 1 && token.compare(0, key.size(), key) == 0 &&
        token[key.size()] == '=') {
        return token.substr(key.size() + 1);
    }
    return std::nullopt;
}

void parse_chain_line(const std::vector<std::string>& tokens, int line,
                      ChainConfig& chain) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (const auto effect = key_value(tokens[i], "effect")) {
            const auto transform = transform_from_name(*effect);
            if (!transform) fail(line, "unknown effect '" + *effect + "'");
            chain.transform = *transform;
        } else if (const auto width = key_value(tokens[i], "width")) {
            chain.geometry.width = parse_number<int>(*width, line, "width");
        } else if (const auto height = key_value(tokens[i], "height")) {
            chain.geometry.height = parse_number<int>(*height, line, "height");
        } else {
            fail(line, "unknown chain token '" + tokens[i] + "'");
        }
    }
    if (chain.geometry.width <= 0 || chain.geometry.height <= 0) {
        fail(line, "chain geometry must be positive");
    }
}

void parse_rule_line(const std::string& raw, int line,
                     std::vector<PlacementRule>& rules) {
    // rule <address> REMOTE|LOCAL [dwell=<ms>] if <predicate>
    const auto if_pos = raw.find(" if ");
    if (if_pos == std::string::npos) fail(line, "rule needs an 'if <predicate>'");
    const auto head = split_tokens(raw.substr(0, if_pos));
    const auto predicate_text = raw.substr(if_pos + 4);

    if (head.size() < 3) fail(line, "rule needs '<address> REMOTE|LOCAL'");
    PlacementRule rule;
    rule.function_address = head[1];
    if (head[2] == "REMOTE") {
        rule.placement_if_true = Placement::kRemote;
    } else if (head[2] == "LOCAL") {
        rule.placement_if_true = Placement::kLocal;
    } else {
        fail(line, "placement must be REMOTE or LOCAL, got '" + head[2] + "'");
    }
    for (std::size_t i = 3; i < head.size(); ++i) {
        if (const auto dwell = key_value(head[i], "dwell")) {
            rule.min_dwell_ms = parse_number<std::int64_t>(*dwell, line, "dwell ms");
        } else {
            fail(line, "unknown rule token '" + head[i] + "'");
        }
    }
    try {
        rule.predicate = parse_predicate(predicate_text);
    } catch (const std::invalid_argument& error) {
        fail(line, error.what());
    }
    rules.push_back(std::move(rule));
}

ScenarioScript::Action parse_action(const std::vector<std::string>& tokens,
                                    int line) {
    // tokens start at the directive after "at <ms>".
    const auto& directive = tokens[2];

    if (directive == "context") {
        ScenarioScript::ContextEntry entry;
        for (std::size_t i = 3; i < tokens.size(); ++i) {
            const auto eq = tokens[i].find('=');
            if (eq == std::string::npos || eq == 0) {
                fail(line, "context expects field=value, got '" + tokens[i] + "'");
            }
            try {
                set_snapshot_field(entry.snapshot, tokens[i].substr(0, eq),
                                   tokens[i].substr(eq + 1));
            } catch (const std::invalid_argument& error) {
                fail(line, error.what());
            }
        }
        return entry;
    }

    if (directive == "frames") {
        if (tokens.size() < 4) fail(line, "frames needs a count");
        ScenarioScript::FramesEntry entry;
        entry.count = parse_number<int>(tokens[3], line, "frame count");
        if (entry.count <= 0) fail(line, "frame count must be positive");
        for (std::size_t i = 4; i < tokens.size(); ++i) {
            if (const auto size = key_value(tokens[i], "size")) {
                entry.fixed_size =
                    parse_number<std::size_t>(*size, line, "frame size");
            } else if (const auto max = key_value(tokens[i], "sizes<")) {
                // token form: sizes<=N; the '<' sits inside the key
                entry.random_max = parse_number<std::size_t>(*max, line, "max size");
                if (*entry.random_max == 0) fail(line, "max size must be positive");
            } else {
                fail(line, "unknown frames token '" + tokens[i] + "'");
            }
        }
        if (entry.fixed_size && entry.random_max) {
            fail(line, "frames takes size= or sizes<=, not both");
        }
        return entry;
    }

    if (directive == "inject") {
        if (tokens.size() < 5) fail(line, "inject needs <method> <address>");
        ScenarioScript::InjectEntry entry;
        entry.method = tokens[3];
        if (!is_supported_verb(entry.method)) {
            fail(line, "unsupported method '" + entry.method + "'");
        }
        entry.address = tokens[4];
        for (std::size_t i = 5; i < tokens.size(); ++i) {
            if (const auto size = key_value(tokens[i], "size")) {
                entry.size = parse_number<std::size_t>(*size, line, "body size");
            } else if (const auto expect = key_value(tokens[i], "expect")) {
                entry.expect_status = parse_number<int>(*expect, line, "status");
            } else {
                fail(line, "unknown inject token '" + tokens[i] + "'");
            }
        }
        return entry;
    }

    if (directive == "expect") {
        if (tokens.size() == 6 && tokens[3] == "placement") {
            ScenarioScript::ExpectPlacementEntry entry;
            entry.address = tokens[4];
            if (tokens[5] == "LOCAL") {
                entry.placement = Placement::kLocal;
            } else if (tokens[5] == "REMOTE") {
                entry.placement = Placement::kRemote;
            } else {
                fail(line, "expect placement takes LOCAL or REMOTE");
            }
            return entry;
        }
        if (tokens.size() == 6 && tokens[3] == "running") {
            ScenarioScript::ExpectRunningEntry entry;
            entry.address = tokens[4];
            if (tokens[5] == "true") {
                entry.running = true;
            } else if (tokens[5] == "false") {
                entry.running = false;
            } else {
                fail(line, "expect running takes true or false");
            }
            return entry;
        }
        fail(line, "expect takes 'placement <address> LOCAL|REMOTE' or 'running "
                   "<address> true|false'");
    }

    fail(line, "unknown directive '" + directive + "'");
}

// ── replay helpers ──

std::vector<std::uint8_t> random_body(std::size_t size, std::uint64_t seed) {
    std::vector<std::uint8_t> body(size);
    std::mt19937_64 rng(seed);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < size; ++i) {
        if (i % 8 == 0) word = rng();
        body[i] = static_cast<std::uint8_t>(word >> ((i % 8) * 8));
    }
    return body;
}

std::uint64_t frame_seed(std::uint64_t base, std::uint64_t index) {
    return base ^ (0x9E3779B97F4A7C15ull * (index + 1));
}

std::string text_of(const std::optional<std::vector<std::uint8_t>>& payload) {
    if (!payload) return {};
    return {payload->begin(), payload->end()};
}

}  // namespace

ScenarioScript parse_scenario(const std::string& text) {
    ScenarioScript script;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool chain_seen = false;
    std::int64_t previous_ms = 0;

    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const auto effective = hash == std::string::npos ? raw : raw.substr(0, hash);
        const auto tokens = split_tokens(effective);
        if (tokens.empty()) continue;

        if (tokens[0] == "chain") {
            if (chain_seen) fail(line, "only one chain line is allowed");
            chain_seen = true;
            parse_chain_line(tokens, line, script.chain);
            continue;
        }
        if (tokens[0] == "rule") {
            parse_rule_line(effective, line, script.rules);
            continue;
        }
        if (tokens[0] == "at") {
            if (tokens.size() < 3) fail(line, "at needs '<ms> <directive>'");
            ScenarioScript::Entry entry;
            entry.at_ms = parse_number<std::int64_t>(tokens[1], line, "timestamp");
            if (entry.at_ms < previous_ms) {
                fail(line, "timestamps must be non-decreasing");
            }
            previous_ms = entry.at_ms;
            entry.action = parse_action(tokens, line);
            script.entries.push_back(std::move(entry));
            continue;
        }
        fail(line, "unknown directive '" + tokens[0] + "'");
    }
    return script;
}

ScenarioReport run_scenario(const ScenarioScript& script,
                            const ScenarioOptions& options) {
    ScenarioReport report;
    Runtime runtime(options.runtime, script.rules);
    install_chain(runtime, script.chain);

    MetricsCollector collector(runtime, options.runtime.default_comm_method);
    collector.start(options.tick);

    const auto note_failure = [&report](std::string message) {
        if (report.failures.size() < 25) report.failures.push_back(std::move(message));
    };

    std::mt19937_64 size_rng(options.seed);
    std::uint64_t frame_index = 0;

    for (const auto& entry : script.entries) {
        const auto at_ms = entry.at_ms;

        if (const auto* context =
                std::get_if<ScenarioScript::ContextEntry>(&entry.action)) {
            auto snapshot = context->snapshot;
            snapshot.timestamp_ms = at_ms;
            runtime.ingest_context(snapshot);

        } else if (const auto* frames =
                       std::get_if<ScenarioScript::FramesEntry>(&entry.action)) {
            for (int i = 0; i < frames->count; ++i) {
                const auto seed = frame_seed(options.seed, frame_index++);
                std::vector<std::uint8_t> body;
                bool digestable = false;
                if (frames->fixed_size) {
                    body = random_body(*frames->fixed_size, seed);
                } else if (frames->random_max) {
                    const auto size = 1 + size_rng() % *frames->random_max;
                    body = random_body(size, seed);
                } else {
                    body = synthetic_frame(script.chain.geometry, seed);
                    digestable = true;
                }
                // The digest check needs a Display that answers digests,
                // i.e. the local one.
                const bool check_digest =
                    digestable && runtime.placement_for(script.chain.display) ==
                                      Placement::kLocal;
                const auto expected =
                    check_digest ? expected_chain_digest(script.chain, body)
                                 : std::string{};

                const auto response =
                    runtime.request("POST", script.chain.control, std::move(body));
                ++report.frames_sent;
                if (response.status != 200) {
                    note_failure("frame " + std::to_string(frame_index - 1) +
                                 ": status " + std::to_string(response.status));
                } else if (check_digest && text_of(response.payload) != expected) {
                    note_failure("frame " + std::to_string(frame_index - 1) +
                                 ": digest mismatch");
                } else {
                    ++report.frames_ok;
                }
            }

        } else if (const auto* inject =
                       std::get_if<ScenarioScript::InjectEntry>(&entry.action)) {
            std::optional<std::vector<std::uint8_t>> body;
            if (inject->size > 0) {
                body = random_body(inject->size, frame_seed(options.seed, frame_index++));
            }
            const auto response =
                runtime.request(inject->method, inject->address, std::move(body));
            if (inject->expect_status) {
                if (response.status == *inject->expect_status) {
                    ++report.checks_passed;
                } else {
                    note_failure("at " + std::to_string(at_ms) + ": inject " +
                                 inject->address + " expected status " +
                                 std::to_string(*inject->expect_status) + ", got " +
                                 std::to_string(response.status));
                }
            }

        } else if (const auto* placement =
                       std::get_if<ScenarioScript::ExpectPlacementEntry>(
                           &entry.action)) {
            const auto actual = runtime.placement_for(placement->address);
            if (actual == placement->placement) {
                ++report.checks_passed;
            } else {
                note_failure("at " + std::to_string(at_ms) + ": placement of " +
                             placement->address + " is " + to_string(actual) +
                             ", expected " + to_string(placement->placement));
            }

        } else if (const auto* running =
                       std::get_if<ScenarioScript::ExpectRunningEntry>(
                           &entry.action)) {
            const auto actual = runtime.function_running(running->address);
            if (actual == running->running) {
                ++report.checks_passed;
            } else {
                note_failure("at " + std::to_string(at_ms) + ": " + running->address +
                             (actual ? " is running" : " is not running") +
                             ", expected " +
                             (running->running ? "running" : "stopped"));
            }
        }
    }

    collector.stop();

    report.engine = runtime.counters();
    report.heap_final = runtime.heap().stats();
    report.heap_peak_used = runtime.heap().peak_used_bytes();
    report.heap_peak_blocks = runtime.heap().peak_block_count();
    report.bus = runtime.bus_counters();
    report.transitions = runtime.transition_log();
    report.metrics = collector.rows();

    if (!options.metrics_csv.empty()) {
        std::ofstream out(options.metrics_csv);
        if (!out) {
            note_failure("cannot write metrics to " + options.metrics_csv);
        } else {
            collector.write_csv(out);
        }
    }
    return report;
}

}  // namespace offkit
