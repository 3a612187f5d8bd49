#include "offkit/policy.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace offkit {

namespace {

bool parse_bool(const std::string& text, bool& out) {
    if (text == "true") {
        out = true;
        return true;
    }
    if (text == "false") {
        out = false;
        return true;
    }
    return false;
}

bool parse_number(const std::string& text, double& out) {
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

// Literal typing: true/false → bool, none → unset, numeric → number,
// anything else → string.
FieldValue parse_literal(const std::string& token) {
    bool b = false;
    if (parse_bool(token, b)) return b;
    if (token == "none") return std::monostate{};
    double d = 0.0;
    if (parse_number(token, d)) return d;
    return token;
}

bool compare(const FieldValue& lhs, CompareOp op, const FieldValue& rhs) {
    // Equality first: it is defined across every pairing (mismatched types
    // are simply unequal).
    const bool equal = lhs == rhs;
    switch (op) {
        case CompareOp::kEq:
            return equal;
        case CompareOp::kNe:
            return !equal;
        case CompareOp::kLt:
        case CompareOp::kGe:
            break;
    }
    // Ordered comparisons need matching orderable types; anything else is
    // false (predicates stay total).
    if (std::holds_alternative<double>(lhs) && std::holds_alternative<double>(rhs)) {
        const bool lt = std::get<double>(lhs) < std::get<double>(rhs);
        return op == CompareOp::kLt ? lt : !lt;
    }
    if (std::holds_alternative<std::string>(lhs) &&
        std::holds_alternative<std::string>(rhs)) {
        const bool lt = std::get<std::string>(lhs) < std::get<std::string>(rhs);
        return op == CompareOp::kLt ? lt : !lt;
    }
    if (std::holds_alternative<bool>(lhs) && std::holds_alternative<bool>(rhs)) {
        const bool lt = !std::get<bool>(lhs) && std::get<bool>(rhs);
        return op == CompareOp::kLt ? lt : !lt;
    }
    return false;
}

}  // namespace

FieldValue snapshot_field(const ContextSnapshot& snapshot, const std::string& name) {
    if (name == "network") {
        if (snapshot.connectivity.network_id) return *snapshot.connectivity.network_id;
        return std::monostate{};
    }
    if (name == "connected") return snapshot.connectivity.connected;
    if (name == "battery") return static_cast<double>(snapshot.device.battery_level);
    if (name == "plugged") return snapshot.device.plugged;
    if (name == "cpu") return snapshot.device.cpu_utilization;
    if (name == "memory") return snapshot.device.memory_utilization;
    if (name == "tag") {
        if (snapshot.location_tag) return *snapshot.location_tag;
        return std::monostate{};
    }
    throw std::invalid_argument("unknown context field: " + name);
}

bool is_snapshot_field(const std::string& name) {
    return name == "network" || name == "connected" || name == "battery" ||
           name == "plugged" || name == "cpu" || name == "memory" || name == "tag";
}

void set_snapshot_field(ContextSnapshot& snapshot, const std::string& name,
                        const std::string& value) {
    const auto need_bool = [&](bool& target) {
        if (!parse_bool(value, target)) {
            throw std::invalid_argument("field " + name + " needs true/false, got: " + value);
        }
    };
    const auto need_number = [&](double& target) {
        if (!parse_number(value, target)) {
            throw std::invalid_argument("field " + name + " needs a number, got: " + value);
        }
    };

    if (name == "network") {
        if (value == "none") {
            snapshot.connectivity.network_id.reset();
        } else {
            snapshot.connectivity.network_id = value;
        }
    } else if (name == "connected") {
        need_bool(snapshot.connectivity.connected);
    } else if (name == "battery") {
        double level = 0;
        need_number(level);
        if (level < 0 || level > 100) {
            throw std::invalid_argument("battery out of range: " + value);
        }
        snapshot.device.battery_level = static_cast<int>(level);
    } else if (name == "plugged") {
        need_bool(snapshot.device.plugged);
    } else if (name == "cpu") {
        need_number(snapshot.device.cpu_utilization);
    } else if (name == "memory") {
        need_number(snapshot.device.memory_utilization);
    } else if (name == "tag") {
        if (value == "none") {
            snapshot.location_tag.reset();
        } else {
            snapshot.location_tag = value;
        }
    } else {
        throw std::invalid_argument("unknown context field: " + name);
    }
}

Predicate parse_predicate(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    if (tokens.empty()) {
        throw std::invalid_argument("empty predicate");
    }

    Predicate predicate;
    std::size_t pos = 0;
    while (true) {
        if (pos + 3 > tokens.size()) {
            throw std::invalid_argument("predicate needs <field> <op> <value>: " + text);
        }
        Condition c;
        c.field = tokens[pos];
        if (!is_snapshot_field(c.field)) {
            throw std::invalid_argument("unknown context field: " + c.field);
        }
        const std::string& op = tokens[pos + 1];
        if (op == "=") {
            c.op = CompareOp::kEq;
        } else if (op == "!=") {
            c.op = CompareOp::kNe;
        } else if (op == "<") {
            c.op = CompareOp::kLt;
        } else if (op == ">=") {
            c.op = CompareOp::kGe;
        } else {
            throw std::invalid_argument("unknown operator: " + op);
        }
        c.literal = parse_literal(tokens[pos + 2]);
        predicate.conditions.push_back(std::move(c));
        pos += 3;
        if (pos == tokens.size()) break;
        if (tokens[pos] != "and") {
            throw std::invalid_argument("expected 'and', got: " + tokens[pos]);
        }
        ++pos;
    }
    return predicate;
}

bool predicate_holds(const Predicate& predicate, const ContextSnapshot& snapshot) {
    for (const Condition& c : predicate.conditions) {
        if (!compare(snapshot_field(snapshot, c.field), c.op, c.literal)) {
            return false;
        }
    }
    return true;
}

std::string to_string(Placement placement) {
    return placement == Placement::kLocal ? "LOCAL" : "REMOTE";
}

std::string to_string(TransitionKind kind) {
    return kind == TransitionKind::kOffload ? "offload" : "init";
}

PlacementTable evaluate(const ContextSnapshot& snapshot,
                        const std::vector<PlacementRule>& rules) {
    PlacementTable table;
    for (const PlacementRule& rule : rules) {
        const bool holds = predicate_holds(rule.predicate, snapshot);
        const Placement if_false = rule.placement_if_true == Placement::kRemote
                                       ? Placement::kLocal
                                       : Placement::kRemote;
        table.entries[rule.function_address] =
            holds ? rule.placement_if_true : if_false;
    }
    return table;
}

std::vector<TransitionAction> placement_transitions(const PlacementTable& before,
                                                    const PlacementTable& after) {
    std::map<std::string, bool> addresses;  // ordered union of keys
    for (const auto& [addr, _] : before.entries) addresses.emplace(addr, true);
    for (const auto& [addr, _] : after.entries) addresses.emplace(addr, true);

    std::vector<TransitionAction> actions;
    for (const auto& [addr, _] : addresses) {
        const Placement old_p = before.placement_for(addr);
        const Placement new_p = after.placement_for(addr);
        if (old_p == new_p) continue;
        actions.push_back(TransitionAction{new_p == Placement::kRemote
                                               ? TransitionKind::kOffload
                                               : TransitionKind::kInit,
                                           addr});
    }
    return actions;
}

PolicyEngine::PolicyEngine(std::vector<PlacementRule> rules)
    : rules_(std::move(rules)) {}

void PolicyEngine::set_listener(TransitionListener listener) {
    std::lock_guard lock(mutex_);
    listener_ = std::move(listener);
}

std::vector<TransitionAction> PolicyEngine::ingest(const ContextSnapshot& snapshot) {
    std::lock_guard lock(mutex_);
    if (current_ && snapshot.timestamp_ms < current_->timestamp_ms) {
        return {};  // stale sample; the latest timestamp stays current
    }
    current_ = snapshot;

    PlacementTable proposed = evaluate(snapshot, rules_);

    // Per-rule dwell: a recently flipped address keeps its placement until
    // the window (measured in snapshot time) has elapsed. The dwell of the
    // last rule naming the address governs, matching last-rule-wins.
    for (const PlacementRule& rule : rules_) {
        if (rule.min_dwell_ms <= 0) continue;
        const auto& addr = rule.function_address;
        const auto changed_at = last_change_ms_.find(addr);
        if (changed_at == last_change_ms_.end()) continue;
        if (proposed.placement_for(addr) == table_.placement_for(addr)) continue;
        if (snapshot.timestamp_ms - changed_at->second < rule.min_dwell_ms) {
            proposed.entries[addr] = table_.placement_for(addr);
        }
    }

    auto actions = placement_transitions(table_, proposed);
    for (const TransitionAction& a : actions) {
        last_change_ms_[a.function_address] = snapshot.timestamp_ms;
    }
    table_ = std::move(proposed);

    if (listener_ && !actions.empty()) {
        listener_(actions);
    }
    return actions;
}

PlacementTable PolicyEngine::table() const {
    std::lock_guard lock(mutex_);
    return table_;
}

std::optional<ContextSnapshot> PolicyEngine::current_snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
}

}  // namespace offkit
