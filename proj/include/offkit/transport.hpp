#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "offkit/catalogue.hpp"
#include "offkit/heap.hpp"
#include "offkit/message.hpp"

namespace offkit {

// Transport fault statuses reuse HTTP codes so both transports look the same
// to the engine.
inline constexpr int kStatusNoHandler = 404;
inline constexpr int kStatusExhausted = 503;
inline constexpr int kStatusUnreachable = 504;

// A handler consumes the request body as a borrowed view — valid only for
// the duration of the call — and returns the response envelope with an owned
// payload (or none). The view points into the transport's buffer in copy
// mode and straight into the heap block in heap-reference mode.
using Handler =
    std::function<Message(const Message& request, std::span<const std::uint8_t> body)>;

// Completions receive the response the same way: the envelope plus a
// borrowed body view that dies when the callback returns. Callers that need
// the bytes must copy them out (that final consumer copy is identical across
// transports and is not part of the transport's own accounting).
using Completion =
    std::function<void(Message response, std::span<const std::uint8_t> body)>;

enum class BusMode : std::uint8_t { kCopy, kHeapRef };

std::string to_string(BusMode mode);

// Thrown when the copy-mode cumulative byte cap is exceeded — emulates the
// hard out-of-memory failure that value-copy transports run into under
// sustained payload traffic. Off unless a cap is configured.
class TransportCrash : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Counter semantics:
//   bytes_copied           — payload bytes stored into transport-owned
//                            buffers. Copy mode stores each body twice per
//                            delivery (marshal into the inbox record +
//                            unmarshal into the delivery buffer); heap mode
//                            stores it once (the heap block) and delivers a
//                            view of it in place.
//   resident_payload_bytes — gauge of payload bytes currently held in
//                            copy-mode transport buffers.
//   deliveries/responses   — envelope counts, monotone.
struct BusCounters {
    std::uint64_t bytes_copied = 0;
    std::uint64_t resident_payload_bytes = 0;
    std::uint64_t peak_resident_payload_bytes = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t responses = 0;
};

// In-process asynchronous bus: one inbox and one worker per attached
// address, so handlers for distinct addresses run concurrently while each
// address sees its messages in sent order. Responses travel back over the
// same stack mechanics as their requests.
class BusStack {
public:
    struct Options {
        BusMode mode = BusMode::kCopy;
        ContiguousHeap* heap = nullptr;          // required in kHeapRef mode
        std::uint64_t copy_crash_cap_bytes = 0;  // 0 = uncapped
    };

    BusStack(std::string id, Options options);
    ~BusStack();

    BusStack(const BusStack&) = delete;
    BusStack& operator=(const BusStack&) = delete;

    const std::string& id() const { return id_; }
    BusMode mode() const { return options_.mode; }

    // Throws std::logic_error if the address already has a handler.
    void attach(const std::string& address, Handler handler);

    enum class Drain : std::uint8_t {
        kAnswer503,    // queued items are answered 503 immediately
        kFinishQueue,  // worker finishes everything already queued
    };

    // Stops the address's worker. The in-flight handler call, if any, always
    // completes and its response is delivered normally. No-op if the address
    // has no handler.
    void detach(const std::string& address, Drain drain);

    bool has_handler(const std::string& address) const;

    // Non-blocking: enqueues the request for the address named by its url.
    // No handler → immediate 404 completion. Heap exhaustion (heap mode) →
    // immediate 503 completion, request not delivered. Copy-mode crash cap
    // exceeded → throws TransportCrash.
    void send(Message request, Completion done);

    BusCounters counters() const;

private:
    struct Pending {
        Message message;                    // heap mode (and metadata in both)
        std::vector<std::uint8_t> record;   // copy mode: the marshalled form
        Completion done;
    };

    struct Inbox {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<Pending> queue;
        bool closing = false;
        Handler handler;
        std::thread worker;
    };

    void run_worker(const std::shared_ptr<Inbox>& inbox);
    void deliver(Inbox& inbox, Pending item);
    void reply(Message response, const Completion& done);
    void add_copied(std::uint64_t n);
    void add_resident(std::uint64_t n);
    void sub_resident(std::uint64_t n);

    const std::string id_;
    const Options options_;

    mutable std::mutex mutex_;  // guards inboxes_ and counters_
    std::map<std::string, std::shared_ptr<Inbox>> inboxes_;
    BusCounters counters_;
};

// The Local Communication Manager's stack table: stacks register by id, and
// a record selects the first of its comm_methods that has a registered
// stack (the developer-set priority order).
class StackRegistry {
public:
    // Throws std::logic_error on a duplicate id.
    void register_stack(std::shared_ptr<BusStack> stack);

    // Throws std::invalid_argument when none of the record's comm_methods
    // matches a registered stack.
    std::shared_ptr<BusStack> select_stack(const FunctionRecord& record) const;

    std::shared_ptr<BusStack> find(const std::string& id) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<BusStack>> stacks_;
};

// HTTP side: a small worker pool performing one exchange per request
// message. Connection failures and timeouts surface as synthesized 504
// responses; genuine HTTP statuses (including 5xx) pass through untouched.
class HttpStack {
public:
    struct Options {
        std::chrono::milliseconds connect_timeout{2000};
        std::chrono::milliseconds exchange_timeout{30000};
        int workers = 4;
    };

    HttpStack();
    explicit HttpStack(Options options);
    ~HttpStack();

    HttpStack(const HttpStack&) = delete;
    HttpStack& operator=(const HttpStack&) = delete;

    // `url` is the full target (scheme://host[:port][/path][?query]).
    // Throws std::logic_error if the request carries a payload_ref: heap
    // references are meaningless outside the process and must be
    // materialized before reaching the network boundary.
    void send(Message request, const std::string& url, Completion done);

    std::uint64_t exchanges() const { return exchanges_.load(); }

private:
    struct Job {
        Message request;
        std::string url;
        Completion done;
    };

    void run_worker();

    const Options options_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Job> jobs_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
    std::atomic<std::uint64_t> exchanges_{0};
};

}  // namespace offkit
