#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "offkit/catalogue.hpp"
#include "offkit/correlation.hpp"
#include "offkit/heap.hpp"
#include "offkit/message.hpp"
#include "offkit/policy.hpp"
#include "offkit/transport.hpp"

namespace offkit {

// Stack ids wired up by every Runtime; functions pick between them through
// their comm_methods priority list.
inline constexpr char kCopyStackId[] = "copy";
inline constexpr char kHeapRefStackId[] = "heap_ref";

struct RuntimeOptions {
    std::size_t heap_capacity = 256u << 20;
    bool heap_auto_merge = true;

    // Comm method assumed for functions started without an explicit list.
    std::string default_comm_method = kHeapRefStackId;

    std::chrono::milliseconds request_timeout{30000};

    // Full-URL overrides for remote routing; addresses not listed here are
    // resolved by label reversal (to_remote_url).
    std::map<std::string, std::string> remote_map;
    std::string remote_scheme = "http";

    // Placement LOCAL with no catalogue record normally fails with 404 so
    // misconfiguration stays visible; this flag retries such requests
    // remotely instead.
    bool fallback_remote = false;

    std::uint64_t copy_crash_cap_bytes = 0;  // 0 = uncapped
    HttpStack::Options http;
};

struct RuntimeCounters {
    std::uint64_t submitted = 0;
    std::uint64_t dispatched_local = 0;
    std::uint64_t dispatched_remote = 0;
    // Outcomes delivered to a waiter, synthesized timeouts included.
    std::uint64_t completed = 0;
    std::uint64_t failed = 0;  // delivered outcomes with status >= 400

    // Requests submitted but not yet resolved, and the high-water mark.
    std::uint64_t inflight = 0;
    std::uint64_t peak_inflight = 0;
};

// The execution engine: one FIFO queue, one dispatcher thread, and a routing
// table that decides per request — at dispatch, not enqueue — whether it runs
// on the in-process bus or over HTTP. Placement transitions stop and start
// local function instances so callers never observe the move.
class Runtime {
public:
    explicit Runtime(RuntimeOptions options = {},
                     std::vector<PlacementRule> rules = {});
    ~Runtime();

    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    // ── function lifecycle ──

    // Registers the address in the catalogue and attaches the handler to the
    // matching bus stack. Throws std::invalid_argument when already running
    // and propagates catalogue/stack faults (duplicate address, unknown comm
    // method). An empty comm_methods list means {default_comm_method}.
    void start_function(const std::string& address, Handler handler,
                        std::vector<std::string> comm_methods = {},
                        Scope scope = Scope::kLocalApp);

    // Deregisters the address and detaches its inbox; queued items are
    // answered 503, the in-flight call (if any) completes normally. Throws
    // std::invalid_argument when not running.
    void stop_function(const std::string& address);

    bool function_running(const std::string& address) const;

    // ── request path ──

    // Enqueues a REQUEST and returns the future carrying its single outcome:
    // the handler's response, a transport status (404/503/504), or a 499
    // cancellation at shutdown. The timeout only sets the bookkeeping
    // deadline; expiry itself is driven by the waiter (request()) or by an
    // expire_due sweep.
    std::future<Message> submit(
        Message request,
        std::optional<std::chrono::milliseconds> timeout = std::nullopt);

    // Blocking convenience: builds the request, submits, waits, and expires
    // the entry itself on timeout (so the caller always gets a message, 504
    // at worst).
    Message request(const std::string& method, const std::string& address,
                    std::optional<std::vector<std::uint8_t>> body = std::nullopt,
                    std::optional<std::chrono::milliseconds> timeout = std::nullopt);

    RequestIdGenerator& ids() { return ids_; }

    // ── placement & transitions ──

    void ingest_context(const ContextSnapshot& snapshot);

    Placement placement_for(const std::string& address) const;

    // Applies policy actions to the routing table and the local lifecycle.
    // Offload: flip to REMOTE first (new requests leave immediately), then
    // drain the inbox gracefully and deregister. Init: start the local
    // instance first, flip to LOCAL only once it is live. Actions for
    // addresses never started still flip the routing table but skip the
    // lifecycle step and are recorded as skipped.
    void apply_transitions(const std::vector<TransitionAction>& actions);

    std::vector<TransitionAction> transition_log() const;
    std::vector<TransitionAction> skipped_transitions() const;

    // ── introspection ──

    ContiguousHeap& heap() { return heap_; }
    Catalogue& catalogue() { return catalogue_; }
    CorrelationTable& correlation() { return correlation_; }

    BusCounters bus_counters() const;  // the default comm method's stack
    BusCounters bus_counters(const std::string& stack_id) const;
    RuntimeCounters counters() const;

    // FIFO evidence: ids in arrival order and in dispatch order.
    std::vector<std::uint64_t> enqueue_order() const;
    std::vector<std::uint64_t> dispatch_order() const;

    std::vector<double> latency_samples_ms() const;
    std::size_t queue_depth() const;
    bool transport_crashed() const;

private:
    struct FunctionEntry {
        Handler handler;
        std::vector<std::string> comm_methods;
        Scope scope = Scope::kLocalApp;
        std::string attached_stack;
        bool running = false;
    };

    struct QueueItem {
        Message request;
        std::chrono::steady_clock::time_point enqueued_at;
    };

    void run_dispatcher();
    void route(QueueItem item);
    Completion make_completion(std::chrono::steady_clock::time_point enqueued_at);
    std::string resolve_remote_url(const std::string& address) const;

    // Lifecycle helpers; callers hold functions_mutex_.
    void start_locked(const std::string& address, FunctionEntry& entry);

    const RuntimeOptions options_;
    RequestIdGenerator ids_;

    // Destroyed after the stacks (declared before them): completions touch
    // these from stack worker threads during teardown.
    ContiguousHeap heap_;
    Catalogue catalogue_;
    CorrelationTable correlation_;
    PolicyEngine policy_;

    mutable std::mutex stats_mutex_;
    RuntimeCounters counters_;
    std::vector<TransitionAction> transition_log_;
    std::vector<TransitionAction> skipped_;
    std::vector<double> latency_ms_;
    bool crashed_ = false;

    mutable std::mutex route_mutex_;  // serializes placement reads+local sends vs flips
    PlacementTable routing_;

    mutable std::mutex functions_mutex_;
    std::map<std::string, FunctionEntry> functions_;

    StackRegistry registry_;
    std::shared_ptr<BusStack> copy_stack_;
    std::shared_ptr<BusStack> heap_ref_stack_;
    HttpStack http_;

    mutable std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<QueueItem> queue_;
    std::vector<std::uint64_t> enqueue_order_;
    std::vector<std::uint64_t> dispatch_order_;
    bool stopping_ = false;
    std::thread dispatcher_;
};

}  // namespace offkit
