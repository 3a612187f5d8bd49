#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace offkit {

// Immutable context sample. Timestamps are logical milliseconds supplied by
// the producer (the scenario clock in the harness), so replays are
// deterministic.
struct ContextSnapshot {
    struct Connectivity {
        std::optional<std::string> network_id;
        bool connected = false;
        friend bool operator==(const Connectivity&, const Connectivity&) = default;
    };
    struct Device {
        int battery_level = 100;        // 0..100
        bool plugged = false;
        double cpu_utilization = 0.0;   // 0..1
        double memory_utilization = 0.0;
        friend bool operator==(const Device&, const Device&) = default;
    };

    Connectivity connectivity;
    Device device;
    std::optional<std::string> location_tag;
    std::int64_t timestamp_ms = 0;

    friend bool operator==(const ContextSnapshot&, const ContextSnapshot&) = default;
};

// A field value as seen by predicates: none, bool, number, or string.
using FieldValue = std::variant<std::monostate, bool, double, std::string>;

// Named accessors the predicate grammar understands: network, connected,
// battery, plugged, cpu, memory, tag.
FieldValue snapshot_field(const ContextSnapshot& snapshot, const std::string& name);
bool is_snapshot_field(const std::string& name);

// Sets a field from its scenario-file string form ("network=HOME",
// "battery=80", "tag=none"). Throws std::invalid_argument on unknown names
// or unparsable values.
void set_snapshot_field(ContextSnapshot& snapshot, const std::string& name,
                        const std::string& value);

// ── predicates ──

enum class CompareOp : std::uint8_t { kEq, kNe, kLt, kGe };

struct Condition {
    std::string field;
    CompareOp op = CompareOp::kEq;
    FieldValue literal;

    friend bool operator==(const Condition&, const Condition&) = default;
};

// Conjunction of conditions; empty means always-true. Predicates are total:
// a comparison between mismatched types (or against an unset optional) is
// simply false, never an error.
struct Predicate {
    std::vector<Condition> conditions;

    friend bool operator==(const Predicate&, const Predicate&) = default;
};

// Grammar: `<field> <op> <literal> [and <field> <op> <literal>]*` with ops
// =, !=, <, >= and literals true/false, none, numbers, or bare strings.
// Throws std::invalid_argument on syntax errors or unknown fields.
Predicate parse_predicate(const std::string& text);

bool predicate_holds(const Predicate& predicate, const ContextSnapshot& snapshot);

// ── placement ──

enum class Placement : std::uint8_t { kLocal, kRemote };

std::string to_string(Placement placement);

struct PlacementRule {
    std::string function_address;
    Predicate predicate;
    Placement placement_if_true = Placement::kRemote;
    // When the predicate is false the complement applies.

    // Minimum-dwell per rule suppresses flapping: a placement that changed
    // less than this long ago (by snapshot time) keeps its value. Zero
    // disables the behavior.
    std::int64_t min_dwell_ms = 0;

    friend bool operator==(const PlacementRule&, const PlacementRule&) = default;
};

struct PlacementTable {
    std::map<std::string, Placement> entries;

    // Unknown addresses run locally.
    Placement placement_for(const std::string& address) const {
        const auto it = entries.find(address);
        return it == entries.end() ? Placement::kLocal : it->second;
    }

    friend bool operator==(const PlacementTable&, const PlacementTable&) = default;
};

// Pure evaluation: applies rules in order (the last rule for an address
// wins) with no dwell or other state. Identical inputs give identical
// tables.
PlacementTable evaluate(const ContextSnapshot& snapshot,
                        const std::vector<PlacementRule>& rules);

// ── transitions ──

enum class TransitionKind : std::uint8_t { kOffload, kInit };

std::string to_string(TransitionKind kind);

struct TransitionAction {
    TransitionKind kind = TransitionKind::kOffload;
    std::string function_address;

    friend bool operator==(const TransitionAction&, const TransitionAction&) = default;
};

// Diff of two tables in ascending address order: LOCAL→REMOTE emits an
// offload action, REMOTE→LOCAL an init action. Addresses missing from a
// table count as LOCAL. One action per changed address, nothing else.
std::vector<TransitionAction> placement_transitions(const PlacementTable& before,
                                                    const PlacementTable& after);

// ── stateful evaluator ──

// Serializes snapshot ingestion, re-evaluates the rules, applies per-rule
// dwell, and reports the resulting transition actions. When a listener is
// installed it is invoked inside the ingest critical section, so listeners
// always observe batches in ingest order.
class PolicyEngine {
public:
    explicit PolicyEngine(std::vector<PlacementRule> rules);

    using TransitionListener =
        std::function<void(const std::vector<TransitionAction>&)>;
    void set_listener(TransitionListener listener);

    // Stores the snapshot (latest timestamp wins; older samples are
    // ignored), re-evaluates, and returns the emitted actions.
    std::vector<TransitionAction> ingest(const ContextSnapshot& snapshot);

    PlacementTable table() const;
    std::optional<ContextSnapshot> current_snapshot() const;

private:
    const std::vector<PlacementRule> rules_;

    mutable std::mutex mutex_;
    TransitionListener listener_;
    std::optional<ContextSnapshot> current_;
    PlacementTable table_;
    std::map<std::string, std::int64_t> last_change_ms_;
};

}  // namespace offkit
